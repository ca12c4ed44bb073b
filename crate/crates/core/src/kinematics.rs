//! Closed-form motion primitives for the double integrator with a speed
//! band `[0, v_max]`.

use crate::error::{Error, Result};
use crate::model::VehicleState;
use crate::params::Params;

/// Inputs of a safe-following check for a leader/follower pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyPair {
    /// Front-to-front distance, leader minus follower.
    pub gap: f64,
    pub v_lead: f64,
    pub v_follow: f64,
}

pub fn saturate(u: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::InvertedBounds { lo, hi });
    }
    Ok(u.clamp(lo, hi))
}

/// Minimum front-to-front gap such that both vehicles braking at `u_min`
/// until rest never overlap.
#[inline]
pub fn safe_following_distance(v_lead: f64, v_follow: f64, p: &Params) -> f64 {
    p.vehicle_length + ((v_follow * v_follow - v_lead * v_lead) / (2.0 * p.brake())).max(0.0)
}

/// Nominal safe gap (leader at `nu_nom`, follower at the speed limit) and the
/// corresponding inter-vehicle approach time.
pub fn nominal_quantities(p: &Params) -> (f64, f64) {
    let d_nom = safe_following_distance(p.nu_nom, p.v_max, p);
    (d_nom, d_nom / p.nu_nom)
}

#[inline]
pub fn safety_ratio(pair: SafetyPair, p: &Params) -> f64 {
    pair.gap / safe_following_distance(pair.v_lead, pair.v_follow, p)
}

/// Duration for the front to reach 0 accelerating at `u_max` up to the
/// speed limit and cruising thereafter.
pub fn earliest_vehicle_approach(pos: f64, vel: f64, p: &Params) -> f64 {
    let dist = -pos;
    if dist <= 0.0 {
        return 0.0;
    }
    let (a, vm) = (p.u_max, p.v_max);
    let d_ramp = (vm * vm - vel * vel) / (2.0 * a);
    if d_ramp >= dist {
        ((vel * vel + 2.0 * a * dist).sqrt() - vel) / a
    } else {
        (vm - vel) / a + (dist - d_ramp) / vm
    }
}

/// Duration to reach 0 under constant maximum braking, or +∞ when the
/// vehicle can stop strictly before the line.
pub fn latest_vehicle_approach(pos: f64, vel: f64, p: &Params) -> f64 {
    let dist = -pos;
    if dist <= 0.0 {
        return 0.0;
    }
    let b = p.brake();
    let stop = vel * vel / (2.0 * b);
    if stop < dist {
        return f64::INFINITY;
    }
    // dist = vel t - b t²/2, first root
    let disc = (vel * vel - 2.0 * b * dist).max(0.0);
    (vel - disc.sqrt()) / b
}

/// Result of holding a constant acceleration command over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advance {
    pub dx: f64,
    pub vel: f64,
    /// Time after which the speed sits on a clamp boundary (== dt if never).
    pub t_active: f64,
}

/// Exact motion over `dt` under command `u`, with the speed held at the
/// clamp boundary once it is reached.
#[inline]
pub fn advance(vel: f64, u: f64, dt: f64, v_max: f64) -> Advance {
    let v_end = vel + u * dt;
    let t_active = if u > 0.0 && v_end > v_max {
        ((v_max - vel) / u).clamp(0.0, dt)
    } else if u < 0.0 && v_end < 0.0 {
        (-vel / u).clamp(0.0, dt)
    } else {
        dt
    };
    let v_hit = if t_active < dt {
        if u > 0.0 {
            v_max
        } else {
            0.0
        }
    } else {
        v_end
    };
    let dx = vel * t_active + 0.5 * u * t_active * t_active + v_hit * (dt - t_active);
    Advance { dx, vel: v_hit, t_active }
}

/// Offset and speed `tau` seconds into a held command.
#[inline]
pub fn advance_partial(vel: f64, u: f64, tau: f64, v_max: f64) -> (f64, f64) {
    let a = advance(vel, u, tau, v_max);
    (a.dx, a.vel)
}

/// First time in `[0, dt]` at which the front reaches `target` under a held
/// command, with the speed at that instant.
pub fn first_reach(pos: f64, vel: f64, u: f64, dt: f64, target: f64, v_max: f64) -> Option<(f64, f64)> {
    if pos >= target {
        return Some((0.0, vel));
    }
    let full = advance(vel, u, dt, v_max);
    if pos + full.dx < target {
        return None;
    }
    let need = target - pos;
    // Accelerating phase [0, t_active]: need = vel t + u t²/2.
    let ta = full.t_active;
    let d_active = vel * ta + 0.5 * u * ta * ta;
    if d_active >= need {
        let t = if u.abs() < 1e-300 {
            need / vel
        } else {
            let disc = (vel * vel + 2.0 * u * need).max(0.0);
            // Numerically stable form of (-vel + sqrt(disc)) / u.
            2.0 * need / (vel + disc.sqrt())
        };
        let t = t.clamp(0.0, ta);
        return Some((t, vel + u * t));
    }
    let v_hold = full.vel;
    if v_hold <= 0.0 {
        return None;
    }
    let t = ta + (need - d_active) / v_hold;
    Some((t.min(dt), v_hold))
}

/// Exact zero-order-hold update of one vehicle, accumulating
/// ∫(W_T + |u_applied|) dt. `|u|` stops counting once the speed clamps.
pub fn step_integrate(state: &VehicleState, u: f64, dt: f64, p: &Params) -> Result<VehicleState> {
    if !(p.u_min..=p.u_max).contains(&u) {
        return Err(Error::AccelOutOfRange { u, lo: p.u_min, hi: p.u_max });
    }
    let adv = advance(state.vel, u, dt, p.v_max);
    let mut next = state.clone();
    next.pos += adv.dx;
    next.vel = adv.vel;
    next.accel = u;
    next.cost_accum += p.w_t * dt + u.abs() * adv.t_active;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Branch, VehicleId};
    use proptest::prelude::*;

    fn p() -> Params {
        Params::table1()
    }

    fn veh(pos: f64, vel: f64) -> VehicleState {
        VehicleState::new(VehicleId(1), Branch::new(1).unwrap(), pos, vel, 0.0)
    }

    #[test]
    fn saturate_cases() {
        assert_eq!(saturate(5.0, -4.0, 3.0), Ok(3.0));
        assert_eq!(saturate(-10.0, -4.0, 3.0), Ok(-4.0));
        assert_eq!(saturate(1.0, -4.0, 3.0), Ok(1.0));
        assert!(saturate(0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn safe_distance_examples() {
        let p = p();
        assert!((safe_following_distance(50.0 / 3.0, 50.0 / 3.0, &p) - 4.0).abs() < 1e-12);
        assert!((safe_following_distance(40.0 / 3.0, 50.0 / 3.0, &p) - 16.5).abs() < 1e-12);
        assert!((safe_following_distance(50.0 / 3.0, 40.0 / 3.0, &p) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn nominal_table1() {
        let (d, t) = nominal_quantities(&p());
        assert!((d - 16.5).abs() < 1e-12);
        assert!((t - 1.2375).abs() < 1e-12);
        let q = Params { nu_nom: 50.0 / 3.0, ..p() };
        let (d, t) = nominal_quantities(&q);
        assert_eq!(d, 4.0);
        assert!((t - 4.0 / q.v_max).abs() < 1e-12);
    }

    #[test]
    fn ratio_examples() {
        let p = p();
        let r = |gap, v_lead, v_follow| safety_ratio(SafetyPair { gap, v_lead, v_follow }, &p);
        assert!((r(33.0, 40.0 / 3.0, 50.0 / 3.0) - 2.0).abs() < 1e-12);
        assert!((r(4.0, 10.0, 10.0) - 1.0).abs() < 1e-12);
        assert!((r(8.0, 0.0, 0.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn earliest_examples() {
        let p = p();
        // 20/9 s ramp covering 2400/81 m, then cruise.
        let expect = 20.0 / 9.0 + (100.0 - 2400.0 / 81.0) / (50.0 / 3.0);
        assert!((earliest_vehicle_approach(-100.0, 10.0, &p) - expect).abs() < 1e-12);
        assert!((expect - 6.444).abs() < 1e-3);
        assert!((earliest_vehicle_approach(-37.0, p.v_max, &p) - 37.0 / p.v_max).abs() < 1e-12);
        assert!((earliest_vehicle_approach(-1.0, 0.0, &p) - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn latest_examples() {
        let p = p();
        assert!(latest_vehicle_approach(-100.0, 10.0, &p).is_infinite());
        assert!((latest_vehicle_approach(-12.5, 10.0, &p) - 2.5).abs() < 1e-9);
        let t = latest_vehicle_approach(-5.0, 50.0 / 3.0, &p);
        assert!((50.0 / 3.0 * t - 2.0 * t * t - 5.0).abs() < 1e-9);
        assert!((t - 0.312).abs() < 1e-3);
    }

    #[test]
    fn integrate_examples() {
        let p = p();
        let s = step_integrate(&veh(-50.0, 10.0), 3.0, 1.0, &p).unwrap();
        assert!((s.vel - 13.0).abs() < 1e-12);
        assert!((s.pos + 50.0 - 11.5).abs() < 1e-12);
        assert!((s.cost_accum - (1.0 + 3.0)).abs() < 1e-12);

        let s = step_integrate(&veh(-50.0, 16.0), 3.0, 1.0, &p).unwrap();
        let ts = 2.0 / 9.0;
        let dx = 16.0 * ts + 1.5 * ts * ts + (50.0 / 3.0) * (1.0 - ts);
        assert!((s.pos + 50.0 - dx).abs() < 1e-12);
        assert!((dx - 16.593).abs() < 1e-3);
        assert_eq!(s.vel, 50.0 / 3.0);
        assert!((s.cost_accum - (1.0 + 3.0 * ts)).abs() < 1e-12);

        let s = step_integrate(&veh(-50.0, 0.0), -4.0, 1.0, &p).unwrap();
        assert_eq!(s.vel, 0.0);
        assert_eq!(s.pos, -50.0);
        assert_eq!(s.cost_accum, 1.0);

        assert!(step_integrate(&veh(-50.0, 0.0), 3.5, 1.0, &p).is_err());
    }

    #[test]
    fn first_reach_interpolates() {
        let p = p();
        let (t, v) = first_reach(-1.0, 10.0, 0.0, 0.5, 0.0, p.v_max).unwrap();
        assert!((t - 0.1).abs() < 1e-12 && v == 10.0);
        assert!(first_reach(-10.0, 10.0, 0.0, 0.5, 0.0, p.v_max).is_none());
        // Crossing after the clamp.
        let (t, v) = first_reach(-16.0, 16.0, 3.0, 1.0, 0.0, p.v_max).unwrap();
        assert_eq!(v, p.v_max);
        let ts = 2.0 / 9.0;
        let d1 = 16.0 * ts + 1.5 * ts * ts;
        assert!((t - (ts + (16.0 - d1) / p.v_max)).abs() < 1e-12);
    }

    /// Both vehicles braking at u_min from a safe configuration never close
    /// the gap below one vehicle length.
    fn mbm_keeps_clear(x_l: f64, v_l: f64, v_f: f64, slack: f64) -> bool {
        let p = p();
        let gap = safe_following_distance(v_l, v_f, &p) * slack;
        let (mut xl, mut vl, mut xf, mut vf) = (x_l, v_l, x_l - gap, v_f);
        let h = 1e-3;
        while vl > 0.0 || vf > 0.0 {
            let a = advance(vl, p.u_min, h, p.v_max);
            let b = advance(vf, p.u_min, h, p.v_max);
            xl += a.dx;
            vl = a.vel;
            xf += b.dx;
            vf = b.vel;
            if xl - xf - p.vehicle_length < -1e-9 {
                return false;
            }
        }
        true
    }

    proptest! {
        #[test]
        fn safe_distance_at_least_length(a in 0.0..50.0/3.0, b in 0.0..50.0/3.0) {
            let p = p();
            prop_assert!(safe_following_distance(a, b, &p) >= p.vehicle_length);
            prop_assert_eq!(safe_following_distance(a, a, &p), p.vehicle_length);
        }

        #[test]
        fn mbm_property(v_l in 0.0..50.0/3.0, v_f in 0.0..50.0/3.0, slack in 1.0..2.0) {
            prop_assert!(mbm_keeps_clear(0.0, v_l, v_f, slack));
        }

        #[test]
        fn unclamped_step_matches_parabola(v in 2.0..14.0f64, u in -1.0..1.0f64, dt in 0.0..1.0f64) {
            let p = p();
            let s = step_integrate(&veh(-80.0, v), u, dt, &p).unwrap();
            prop_assert!((s.pos - (-80.0 + v * dt + 0.5 * u * dt * dt)).abs() < 1e-12);
            prop_assert!((s.vel - (v + u * dt)).abs() < 1e-12);
        }

        #[test]
        fn substeps_agree(v in 0.0..50.0/3.0, u in -4.0..3.0f64, n in 2usize..50) {
            let p = p();
            let whole = step_integrate(&veh(-100.0, v), u, 1.0, &p).unwrap();
            let mut s = veh(-100.0, v);
            for _ in 0..n {
                s = step_integrate(&s, u, 1.0 / n as f64, &p).unwrap();
            }
            prop_assert!((s.pos - whole.pos).abs() < 1e-9);
            prop_assert!((s.vel - whole.vel).abs() < 1e-9);
            prop_assert!((s.cost_accum - whole.cost_accum).abs() < 1e-9);
        }

        #[test]
        fn earliest_monotone(d in 1.0..300.0f64, extra in 0.0..50.0f64, v in 0.0..50.0/3.0, dv in 0.0..5.0f64) {
            let p = p();
            let base = earliest_vehicle_approach(-d, v, &p);
            prop_assert!(earliest_vehicle_approach(-(d + extra), v, &p) >= base - 1e-12);
            let slower = (v - dv).max(0.0);
            prop_assert!(earliest_vehicle_approach(-d, slower, &p) >= base - 1e-12);
        }
    }
}
