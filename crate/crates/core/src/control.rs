//! Local vehicle control: the uncoupled arrival controller, the follower
//! law, and the switching rule between them.

use serde::{Deserialize, Serialize};

use crate::kinematics::{advance, safe_following_distance};
use crate::model::{Leader, VehicleState};
use crate::params::Params;

/// Leader/follower state seen by one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingState {
    pub v_lead: f64,
    pub v_self: f64,
    pub sigma: f64,
    pub u_lead: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub accel: f64,
}

/// Piecewise constant-acceleration velocity profile ending at the stop line
/// exactly at the deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalProfile {
    pub segments: Vec<Segment>,
    pub arrival_speed: f64,
    /// ∫|u| dt, equal to the total variation of the speed.
    pub total_effort: f64,
}

impl ArrivalProfile {
    fn new(v0: f64, segments: Vec<Segment>) -> Self {
        let segments: Vec<Segment> = segments.into_iter().filter(|s| s.duration > 0.0).collect();
        let arrival_speed = v0 + segments.iter().map(|s| s.accel * s.duration).sum::<f64>();
        let total_effort = segments.iter().map(|s| s.accel.abs() * s.duration).sum();
        ArrivalProfile { segments, arrival_speed, total_effort }
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Distance covered and speed reached `t` seconds into the profile,
    /// holding the final speed past its end.
    pub fn state_at(&self, v0: f64, t: f64) -> (f64, f64) {
        let (mut x, mut v, mut left) = (0.0, v0, t.max(0.0));
        for s in &self.segments {
            let h = s.duration.min(left);
            x += v * h + 0.5 * s.accel * h * h;
            v += s.accel * h;
            left -= h;
            if left <= 0.0 {
                return (x, v);
            }
        }
        (x + v * left, v)
    }

    /// Acceleration of the first segment, 0 for an empty profile.
    pub fn first_accel(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.accel)
    }
}

/// Minimum-effort profile taking the front from `pos` to the stop line in
/// exactly `time_to_deadline` and arriving at a speed in `[nu_nom, v_max]`.
/// `None` when no such profile exists.
///
/// Candidates, in order of effort: a single monotone speed change to the
/// nominal speed (or hold the current one when faster); a monotone rise to
/// the lowest arrival speed that covers a long distance; a monotone slow-down
/// to no less than the nominal speed; a dip to some speed `w` followed by a
/// full-rate rise to the nominal speed.
pub fn solve_arrival_profile(pos: f64, vel: f64, time_to_deadline: f64, p: &Params) -> Option<ArrivalProfile> {
    let d = -pos;
    let t = time_to_deadline;
    if !(d > 0.0) || !(t > 0.0) {
        return None;
    }
    let (a, b, rp, rm) = (p.nu_nom, p.v_max, p.u_max, p.brake());
    let v0 = vel.clamp(0.0, b);
    let vc = v0.max(a);
    let eps = 1e-9 * (1.0 + d);
    if (vc - v0) / rp > t * (1.0 + 1e-12) {
        return None;
    }
    let fmax = |vf: f64| vf * t - (vf - v0) * (vf - v0) / (2.0 * rp);
    let fmin = |vf: f64| v0 * t + (vf - v0) * (vf - v0) / (2.0 * rp);
    let seg = |duration: f64, accel: f64| Segment { duration, accel };

    if d > fmax(vc) + eps {
        let vtop = b.min(v0 + rp * t);
        if d > fmax(vtop) + eps {
            return None;
        }
        let excess = d - v0 * t;
        let root = (t * t - 2.0 * excess / rp).max(0.0).sqrt();
        let y = (2.0 * excess / (t + root)).min(vtop - v0);
        let t1 = y / rp;
        return Some(ArrivalProfile::new(v0, vec![seg(t1, rp), seg(t - t1, 0.0)]));
    }

    if d >= fmin(vc) - eps {
        let dv = vc - v0;
        if dv <= 0.0 {
            return Some(ArrivalProfile::new(v0, vec![seg(t, 0.0)]));
        }
        let t3 = 2.0 * (d - v0 * t) / dv;
        if t3 <= t {
            let t3 = t3.max(dv / rp);
            return Some(ArrivalProfile::new(v0, vec![seg(t - t3, 0.0), seg(t3, dv / t3)]));
        }
        let t1 = (2.0 * (vc * t - d) / dv).clamp(dv / rp, t);
        return Some(ArrivalProfile::new(v0, vec![seg(t1, dv / t1), seg(t - t1, 0.0)]));
    }

    if v0 > a {
        let short = v0 * t - d;
        let disc = t * t - 2.0 * short / rm;
        if disc >= 0.0 {
            let y = 2.0 * short / (t + disc.sqrt());
            if y <= v0 - a + 1e-12 {
                let t1 = y / rm;
                return Some(ArrivalProfile::new(v0, vec![seg(t1, -rm), seg(t - t1, 0.0)]));
            }
        }
    }

    // w T + (v0 - w)²/(2 rm) + (a - w)²/(2 rp) = d, larger root.
    let qa = 0.5 / rm + 0.5 / rp;
    let qb = t - v0 / rm - a / rp;
    let qc = v0 * v0 / (2.0 * rm) + a * a / (2.0 * rp) - d;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let w = (-qb + disc.sqrt()) / (2.0 * qa);
    let tol = 1e-9 * (1.0 + v0);
    if w < -tol {
        return None;
    }
    let w = w.clamp(0.0, v0.min(a));
    let t1 = (v0 - w) / rm;
    let t3 = (a - w) / rp;
    if t1 + t3 > t * (1.0 + 1e-12) {
        return None;
    }
    let t2 = (t - t1 - t3).max(0.0);
    Some(ArrivalProfile::new(v0, vec![seg(t1, -rm), seg(t2, 0.0), seg(t3, rp)]))
}

/// Uncoupled arrival controller: the first-segment acceleration of the
/// optimal profile, or `u_max` when no profile exists, the deadline has
/// passed or the front is already past the stop line.
pub fn g_uc(pos: f64, vel: f64, deadline_abs: f64, now: f64, p: &Params) -> f64 {
    if pos >= 0.0 || now > deadline_abs {
        return p.u_max;
    }
    solve_arrival_profile(pos, vel, deadline_abs - now, p).map_or(p.u_max, |prof| prof.first_accel())
}

/// Speed added to the nominal arrival speed by [`g_uc_held`] so that
/// sub-step timing errors at the stop line cannot leave a vehicle just
/// under the nominal speed.
pub const ARRIVAL_MARGIN: f64 = 1e-3;

/// Sampled-data form of [`g_uc`]: the mean acceleration of the optimal
/// profile over the next hold interval, so a held command reproduces the
/// profile's speed at the end of the step. Plans for an arrival speed of at
/// least `nu_nom + ARRIVAL_MARGIN` when that is still feasible.
pub fn g_uc_held(pos: f64, vel: f64, deadline_abs: f64, now: f64, dt: f64, p: &Params) -> f64 {
    if pos >= 0.0 || now > deadline_abs {
        return p.u_max;
    }
    let left = deadline_abs - now;
    let padded = Params { nu_nom: (p.nu_nom + ARRIVAL_MARGIN).min(p.v_max), ..*p };
    let prof = solve_arrival_profile(pos, vel, left, &padded).or_else(|| solve_arrival_profile(pos, vel, left, p));
    match prof {
        None => p.u_max,
        Some(prof) => {
            let h = dt.min(left);
            if h <= 0.0 {
                return prof.first_accel();
            }
            let (_, v) = prof.state_at(vel.clamp(0.0, p.v_max), h);
            ((v - vel) / h).clamp(p.u_min, p.u_max)
        }
    }
}

/// Follower law that keeps the safety ratio constant in continuous time.
pub fn g_us(z: CouplingState, p: &Params) -> f64 {
    if z.v_self == 0.0 {
        return z.u_lead;
    }
    let rm = p.brake();
    ((z.v_lead / z.v_self) * (1.0 + z.sigma * z.u_lead / rm) - 1.0) * (rm / z.sigma)
}

/// Safety ratio after one held step of both vehicles.
pub fn sigma_after(self_state: (f64, f64), u: f64, lead: (f64, f64), u_lead: f64, dt: f64, p: &Params) -> f64 {
    let f = advance(self_state.1, u, dt, p.v_max);
    let l = advance(lead.1, u_lead, dt, p.v_max);
    let gap = (lead.0 + l.dx) - (self_state.0 + f.dx);
    gap / safe_following_distance(l.vel, f.vel, p)
}

/// Largest acceleration in `[u_min, u_max]` whose held step leaves the
/// safety ratio at least `target`; `u_min` if none does.
pub fn max_accel_keeping(self_state: (f64, f64), lead: (f64, f64), u_lead: f64, dt: f64, target: f64, p: &Params) -> f64 {
    let ok = |u: f64| sigma_after(self_state, u, lead, u_lead, dt, p) >= target;
    if ok(p.u_max) {
        return p.u_max;
    }
    if !ok(p.u_min) {
        return p.u_min;
    }
    let (mut lo, mut hi) = (p.u_min, p.u_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Sampled-data follower law: the largest held acceleration over `dt` that
/// does not decrease the safety ratio.
pub fn g_us_sampled(self_state: (f64, f64), lead: (f64, f64), u_lead: f64, dt: f64, p: &Params) -> f64 {
    let gap = lead.0 - self_state.0;
    let sigma = gap / safe_following_distance(lead.1, self_state.1, p);
    max_accel_keeping(self_state, lead, u_lead, dt, sigma, p)
}

/// Safe-following controller: never more aggressive than either law.
pub fn g_sf(z: CouplingState, pos: f64, vel: f64, deadline_abs: f64, now: f64, p: &Params) -> f64 {
    g_uc(pos, vel, deadline_abs, now, p).min(g_us(z, p))
}

pub fn in_coupling_set(z: CouplingState, p: &Params) -> bool {
    z.v_self >= z.v_lead && (1.0..=p.sigma0).contains(&z.sigma)
}

/// Coupling state of `me` behind `lead`; `None` for the sentinel leader,
/// whose infinite gap never couples.
pub fn coupling_state(me: &VehicleState, lead: Leader, p: &Params) -> Option<CouplingState> {
    match lead {
        Leader::Sentinel => None,
        Leader::Vehicle { pos, vel, accel } => Some(CouplingState {
            v_lead: vel,
            v_self: me.vel,
            sigma: (pos - me.pos) / safe_following_distance(vel, me.vel, p),
            u_lead: accel,
        }),
    }
}

/// Applies the top-speed saturation of the switching law and the actuator
/// limits.
fn finish(u: f64, vel: f64, p: &Params) -> f64 {
    let hi = if vel >= p.v_max { 0.0 } else { p.u_max };
    u.clamp(p.u_min, hi)
}

/// Switching law: arrival control outside the coupling set, safe following
/// inside it. A vehicle without a deadline holds its speed.
pub fn vehicle_control(me: &VehicleState, lead: Leader, now: f64, p: &Params) -> f64 {
    let uc = match me.deadline {
        Some(tau) => g_uc(me.pos, me.vel, tau, now, p),
        None => 0.0,
    };
    let u = match coupling_state(me, lead, p) {
        Some(z) if in_coupling_set(z, p) => uc.min(g_us(z, p)),
        _ => uc,
    };
    finish(u, me.vel, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlDecision {
    pub u: f64,
    pub coupled: bool,
}

/// Form of [`vehicle_control`] used by the simulator. The arrival law is
/// averaged over the hold step, the follower law is its sampled-data
/// counterpart, and the result is capped so the held step cannot take a
/// safe pair below a safety ratio of 1.
pub fn vehicle_control_sampled(me: &VehicleState, lead: Leader, now: f64, dt: f64, p: &Params) -> ControlDecision {
    let uc = match me.deadline {
        Some(tau) => g_uc_held(me.pos, me.vel, tau, now, dt, p),
        None => 0.0,
    };
    follower_guard(me, lead, uc, dt, p)
}

/// Combines a free-road command with the follower law and the discrete
/// safety cap.
pub fn follower_guard(me: &VehicleState, lead: Leader, free: f64, dt: f64, p: &Params) -> ControlDecision {
    let Leader::Vehicle { pos, vel, accel } = lead else {
        return ControlDecision { u: finish(free, me.vel, p), coupled: false };
    };
    let z = coupling_state(me, lead, p).expect("vehicle leader");
    let coupled = in_coupling_set(z, p);
    let me_s = (me.pos, me.vel);
    let mut u = free;
    if coupled {
        u = u.min(g_us_sampled(me_s, (pos, vel), accel, dt, p));
    }
    let u = finish(u, me.vel, p);
    let cap = max_accel_keeping(me_s, (pos, vel), accel, dt, z.sigma.min(1.0), p);
    ControlDecision { u: u.min(cap).max(p.u_min), coupled }
}
