use crate::error::{Error, Result};
use crate::kinematics::{earliest_vehicle_approach, latest_vehicle_approach, nominal_quantities, safe_following_distance};
use crate::model::{Bubble, VehicleState};
use crate::params::Params;

/// Upper bound on the spacing between consecutive approaches inside a
/// bubble. Returns the override when one is configured.
pub fn inter_approach_bound(p: &Params) -> f64 {
    if let Some(t) = p.t_iat_override {
        return t;
    }
    let (_, t_nom) = nominal_quantities(p);
    let base = p.sigma0 * t_nom;
    let v_low = p.brake() * p.v_max / (p.brake() + p.sigma0 * p.u_max);
    if v_low >= p.nu_nom {
        return base;
    }
    base.max(following_time(v_low, p))
}

/// Time for a follower to reach the stop line after its leader when the
/// pair recovers from speed `v` to the nominal crossing speed.
pub fn following_time(v: f64, p: &Params) -> f64 {
    (p.nu_nom * p.nu_nom - v * v) / (2.0 * p.u_max * p.v_max)
        + p.sigma0 * safe_following_distance(v, p.v_max, p) / p.v_max
        + (p.nu_nom - v) / p.u_max
}

/// Guaranteed upper bound on how long a bubble of `size` vehicles occupies
/// the intersection.
pub fn occupancy_bound(size: usize, p: &Params) -> f64 {
    let t_iat = inter_approach_bound(p);
    let first = ((p.vehicle_length + p.intersection_length) / p.nu_nom).max(t_iat);
    size.saturating_sub(1) as f64 * t_iat + first
}

/// `(c_qi, b_qi)` turning `τ_i ≥ τ_q + τ̄occ_q` into a bound on `v̄_i`.
#[inline]
pub fn coupling_coeffs(d_q: f64, d_i: f64, tau_occ_q: f64) -> (f64, f64) {
    (d_q / d_i, tau_occ_q / d_i)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityWindow {
    /// Absolute earliest approach time.
    pub tau_e: f64,
    /// Absolute latest approach time, +∞ if every member can stop.
    pub tau_l: f64,
    pub vbar_max: f64,
    pub vbar_min: f64,
}

/// Earliest and latest approach times of a bubble and the resulting band of
/// average lead velocities, with `tau_min` folded into the upper end.
pub fn bubble_velocity_window(
    bubble: &Bubble,
    members: &[&VehicleState],
    t_s: f64,
    tau_min: f64,
    p: &Params,
) -> Result<VelocityWindow> {
    let (_, t_nom) = nominal_quantities(p);
    let mut early = f64::NEG_INFINITY;
    let mut late = f64::INFINITY;
    for (j, v) in members.iter().enumerate() {
        let shift = j as f64 * t_nom;
        early = early.max(earliest_vehicle_approach(v.pos, v.vel, p) - shift);
        late = late.min(latest_vehicle_approach(v.pos, v.vel, p) - shift);
    }
    let d = -members[0].pos;
    let mut vbar_max = (d / early).min(p.v_max);
    if tau_min > t_s {
        vbar_max = vbar_max.min(d / (tau_min - t_s));
    }
    let vbar_min = if late.is_infinite() { 0.0 } else { d / late };
    if vbar_max < vbar_min {
        return Err(Error::InfeasibleWindow { bubble: bubble.id, vbar_min, vbar_max });
    }
    Ok(VelocityWindow {
        tau_e: t_s + early,
        tau_l: t_s + late,
        vbar_max,
        vbar_min,
    })
}
