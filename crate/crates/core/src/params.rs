//! System parameters shared by every layer of the coordinator.
//!
//! All speeds are in m/s, accelerations in m/s², lengths in m and times in s.
//! The km/h figures commonly quoted for urban roads are converted exactly
//! (60 km/h = 50/3 m/s, 48 km/h = 40/3 m/s).

use std::fmt;

use serde::{Deserialize, Serialize};

/// Physical and algorithmic parameters of one intersection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// Vehicle length.
    #[serde(alias = "L")]
    pub vehicle_length: f64,
    /// Length of the intersection box.
    #[serde(alias = "Delta")]
    pub intersection_length: f64,
    #[serde(alias = "L_s")]
    pub staging_len: f64,
    #[serde(alias = "L_m")]
    pub mid_len: f64,
    #[serde(alias = "L_e")]
    pub exit_len: f64,
    /// Speed limit.
    pub v_max: f64,
    /// Maximum acceleration (≥ 0).
    pub u_max: f64,
    /// Maximum deceleration (≤ 0).
    pub u_min: f64,
    /// Nominal speed at which vehicles enter the intersection.
    pub nu_nom: f64,
    /// Upper edge of the coupling set's safety-ratio band.
    pub sigma0: f64,
    /// Period of clustering and scheduling.
    #[serde(alias = "T_cs")]
    pub t_cs: f64,
    /// Maximum number of bubbles handed to the scheduler per instance.
    #[serde(alias = "Nbar")]
    pub nbar: usize,
    /// Maximum number of new bubbles per branch per instance.
    #[serde(alias = "Nbar_k")]
    pub nbar_k: usize,
    /// Weight of travel time against control effort in the cost.
    #[serde(alias = "W_T")]
    pub w_t: f64,
    /// Traffic density knob: spawn safety ratios are 1 + Exp(mean mu).
    pub mu: f64,
    /// Green phase duration of the signal baseline.
    #[serde(alias = "W_green")]
    pub green_time: f64,
    /// Integration / control step.
    pub dt: f64,
    /// Replaces the computed inter-approach bound when set.
    #[serde(alias = "T_iat_override")]
    pub t_iat_override: Option<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Self::table1()
    }
}

impl Params {
    /// The reference parameter set, with the inter-approach bound computed
    /// from the closed-form expression.
    pub fn table1() -> Self {
        Params {
            vehicle_length: 4.0,
            intersection_length: 12.0,
            staging_len: 70.0,
            mid_len: 70.0,
            exit_len: 70.0,
            v_max: 50.0 / 3.0,
            u_max: 3.0,
            u_min: -4.0,
            nu_nom: 40.0 / 3.0,
            sigma0: 1.2,
            t_cs: 3.77,
            nbar: 8,
            nbar_k: 2,
            w_t: 1.0,
            mu: 0.5,
            green_time: 10.0,
            dt: 0.01,
            t_iat_override: None,
        }
    }

    /// Reference parameters with the inter-approach bound pinned to 1.58 s,
    /// the setting used for throughput and cost comparisons.
    pub fn comparison() -> Self {
        Params {
            t_iat_override: Some(1.58),
            ..Self::table1()
        }
    }

    /// Magnitude of the maximum deceleration, `-u_min`.
    #[inline]
    pub fn brake(&self) -> f64 {
        -self.u_min
    }

    /// Position of the upstream edge of the staging zone.
    pub fn domain_start(&self) -> f64 {
        -(self.exit_len + self.mid_len + self.staging_len)
    }

    /// Position of the boundary between staging and mid zones.
    pub fn staging_end(&self) -> f64 {
        -(self.exit_len + self.mid_len)
    }

    /// Position at which a vehicle's front has fully cleared the box.
    pub fn clear_pos(&self) -> f64 {
        self.intersection_length + self.vehicle_length
    }

    /// Right-hand side of the exit-zone feasibility condition: the distance
    /// needed to stop from the speed limit and re-accelerate to `nu_nom`.
    pub fn exit_zone_requirement(&self) -> f64 {
        self.v_max * self.v_max / (2.0 * self.brake()) + self.nu_nom * self.nu_nom / (2.0 * self.u_max)
    }
}

/// A failed parameter inequality with both sides evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated: lhs = {:.6}, rhs = {:.6}", self.check, self.lhs, self.rhs)
    }
}

/// Checks every parameter invariant. An empty result means the parameters
/// are usable; violations are returned as data.
pub fn validate_params(p: &Params) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut need = |ok: bool, check: &'static str, lhs: f64, rhs: f64| {
        // NaN fails every comparison, so it lands here too.
        if !ok {
            out.push(Violation { check, lhs, rhs });
        }
    };

    need(p.u_min <= 0.0, "u_min <= 0", p.u_min, 0.0);
    need(p.u_max >= 0.0, "u_max >= 0", p.u_max, 0.0);
    need(p.nu_nom > 0.0, "nu_nom > 0", p.nu_nom, 0.0);
    need(p.nu_nom <= p.v_max, "nu_nom <= v_max", p.nu_nom, p.v_max);
    need(p.sigma0 > 1.0, "sigma0 > 1", p.sigma0, 1.0);
    need(p.vehicle_length > 0.0, "L > 0", p.vehicle_length, 0.0);
    need(p.intersection_length > 0.0, "Delta > 0", p.intersection_length, 0.0);
    need(p.staging_len > 0.0, "L_s > 0", p.staging_len, 0.0);
    need(p.mid_len > 0.0, "L_m > 0", p.mid_len, 0.0);
    need(p.exit_len > 0.0, "L_e > 0", p.exit_len, 0.0);
    need(p.dt > 0.0, "dt > 0", p.dt, 0.0);
    need(p.t_cs > 0.0, "T_cs > 0", p.t_cs, 0.0);
    need(p.mu > 0.0, "mu > 0", p.mu, 0.0);
    need(p.green_time > 0.0, "W_green > 0", p.green_time, 0.0);
    need(p.nbar_k >= 1, "Nbar_k >= 1", p.nbar_k as f64, 1.0);
    need(
        p.nbar >= 4 * p.nbar_k,
        "Nbar >= 4 * Nbar_k",
        p.nbar as f64,
        4.0 * p.nbar_k as f64,
    );
    if let Some(t) = p.t_iat_override {
        need(t > 0.0, "T_iat_override > 0", t, 0.0);
    }
    // Strictly negative deceleration is needed for the braking distances.
    need(p.u_min < 0.0, "u_min < 0", p.u_min, 0.0);
    need(p.u_max > 0.0, "u_max > 0", p.u_max, 0.0);

    if p.v_max > 0.0 {
        let bound = p.staging_len / p.v_max;
        need(p.t_cs < bound, "T_cs < L_s / v_max", p.t_cs, bound);
    } else {
        need(false, "v_max > 0", p.v_max, 0.0);
    }
    if p.u_min < 0.0 && p.u_max > 0.0 {
        let rhs = p.exit_zone_requirement();
        need(
            p.exit_len >= rhs,
            "L_e >= v_max^2/(-2 u_min) + nu_nom^2/(2 u_max)",
            p.exit_len,
            rhs,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_is_valid() {
        let p = Params::table1();
        assert!(validate_params(&p).is_empty(), "{:?}", validate_params(&p));
        // 34.722 + 29.630
        assert!((p.exit_zone_requirement() - 64.351_851_851).abs() < 1e-6);
        assert!((p.staging_len / p.v_max - 4.2).abs() < 1e-12);
    }

    #[test]
    fn short_exit_zone_is_one_violation() {
        let p = Params { exit_len: 50.0, ..Params::table1() };
        let v = validate_params(&p);
        assert_eq!(v.len(), 1);
        assert!(v[0].check.starts_with("L_e"));
        assert_eq!(v[0].lhs, 50.0);
        assert!((v[0].rhs - 64.3518).abs() < 1e-3);
    }

    #[test]
    fn slow_clustering_period_is_flagged() {
        let p = Params { t_cs: 4.5, ..Params::table1() };
        let v = validate_params(&p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].check, "T_cs < L_s / v_max");
    }

    #[test]
    fn several_violations_reported_together() {
        let p = Params { sigma0: 0.9, nu_nom: 20.0, ..Params::table1() };
        let checks: Vec<_> = validate_params(&p).into_iter().map(|v| v.check).collect();
        assert!(checks.contains(&"sigma0 > 1"));
        assert!(checks.contains(&"nu_nom <= v_max"));
    }

    #[test]
    fn validation_is_pure() {
        let p = Params { exit_len: 10.0, t_cs: 9.0, ..Params::table1() };
        assert_eq!(validate_params(&p), validate_params(&p));
    }

    #[test]
    fn config_aliases_parse() {
        let p: Params = serde_json::from_str(r#"{"L_e": 80.0, "W_T": 2.0, "T_iat_override": 1.58}"#).unwrap();
        assert_eq!(p.exit_len, 80.0);
        assert_eq!(p.w_t, 2.0);
        assert_eq!(p.t_iat_override, Some(1.58));
        assert_eq!(p.v_max, 50.0 / 3.0);
    }
}
