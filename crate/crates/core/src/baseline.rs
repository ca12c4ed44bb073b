//! Fixed-time round-robin signal used as the comparison baseline.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::control::{coupling_state, follower_guard, g_us, in_coupling_set, ControlDecision};
use crate::model::{Branch, Leader, VehicleId, VehicleState};
use crate::params::Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Green,
    Yellow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalState {
    pub active_branch: Branch,
    pub phase: Phase,
    pub phase_start: f64,
    /// Vehicles of the yellow branch that cannot stop and proceed.
    pub committed: BTreeSet<VehicleId>,
    /// Whether a stopped virtual vehicle guards the branch's stop line.
    pub virtual_active: [bool; 4],
}

impl SignalState {
    /// Branch 1 green from `t0`, every other branch red.
    pub fn new(t0: f64) -> Self {
        SignalState {
            active_branch: Branch::ALL[0],
            phase: Phase::Green,
            phase_start: t0,
            committed: BTreeSet::new(),
            virtual_active: [false, true, true, true],
        }
    }

    /// The virtual vehicle for a vehicle of `branch`, if it must respect one.
    pub fn virtual_leader(&self, v: &VehicleState, p: &Params) -> Option<Leader> {
        (self.virtual_active[v.branch.index()] && !self.committed.contains(&v.id)).then_some(Leader::Vehicle {
            pos: p.vehicle_length,
            vel: 0.0,
            accel: 0.0,
        })
    }
}

/// True if the vehicle can brake to rest with its front at or before the
/// stop line.
pub fn can_stop(v: &VehicleState, p: &Params) -> bool {
    v.pos < 0.0 && v.vel * v.vel / (2.0 * p.brake()) <= -v.pos
}

/// Advances the signal by one evaluation at time `now`. `vehicles` holds
/// every vehicle still in the system.
pub fn signal_step(state: &SignalState, vehicles: &[VehicleState], now: f64, p: &Params) -> SignalState {
    let mut s = state.clone();
    let active = s.active_branch;
    if s.phase == Phase::Green && now - s.phase_start >= p.green_time - 1e-9 {
        s.phase = Phase::Yellow;
        s.phase_start = now;
        s.committed = vehicles
            .iter()
            .filter(|v| v.branch == active && v.pos < p.clear_pos() && !can_stop(v, p))
            .map(|v| v.id)
            .collect();
        s.virtual_active[active.index()] = true;
    }
    if s.phase == Phase::Yellow {
        for v in vehicles {
            // Late arrivals get the same stopping test.
            if v.branch == active && v.t_spawn > s.phase_start && !can_stop(v, p) && v.pos < p.clear_pos() {
                s.committed.insert(v.id);
            }
        }
        let pending = vehicles
            .iter()
            .any(|v| s.committed.contains(&v.id) && v.pos < p.clear_pos());
        if !pending {
            let next = active.next();
            s.active_branch = next;
            s.phase = Phase::Green;
            s.phase_start = now;
            s.committed.clear();
            s.virtual_active = [true; 4];
            s.virtual_active[next.index()] = false;
        }
    }
    s
}

/// Switching law with the arrival controller replaced by full throttle,
/// evaluated against the real leader and, when present, the virtual one.
pub fn baseline_vehicle_control(me: &VehicleState, lead: Leader, virtual_lead: Option<Leader>, p: &Params) -> f64 {
    let law = |l: Leader| {
        let mut u = p.u_max;
        if let Some(z) = coupling_state(me, l, p) {
            if in_coupling_set(z, p) {
                u = u.min(g_us(z, p));
            }
        }
        let hi = if me.vel >= p.v_max { 0.0 } else { p.u_max };
        u.clamp(p.u_min, hi)
    };
    let u = law(lead);
    virtual_lead.map_or(u, |v| u.min(law(v)))
}

/// Sampled-data form of [`baseline_vehicle_control`] used by the simulator.
pub fn baseline_control_sampled(
    me: &VehicleState,
    lead: Leader,
    virtual_lead: Option<Leader>,
    dt: f64,
    p: &Params,
) -> ControlDecision {
    let a = follower_guard(me, lead, p.u_max, dt, p);
    match virtual_lead {
        None => a,
        Some(v) => {
            let b = follower_guard(me, v, p.u_max, dt, p);
            ControlDecision { u: a.u.min(b.u), coupled: a.coupled || b.coupled }
        }
    }
}
