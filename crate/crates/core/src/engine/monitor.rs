use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kinematics::{safety_ratio, SafetyPair};
use crate::model::{Bubble, BubbleId, VehicleId, VehicleState};
use crate::params::Params;

/// Slack on the safety ratio and crossing speed checks.
pub const SIGMA_TOL: f64 = 1e-6;
pub const SPEED_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorKind {
    /// Safety ratio of a following pair below 1.
    Safety,
    /// Vehicles of two bubbles (or, under the signal, two branches) inside
    /// the intersection at once.
    Exclusion,
    /// Lead vehicle reached the stop line away from its approach time.
    Approach,
    /// A member used the intersection outside its bubble's interval.
    Occupancy,
    /// A vehicle inside the intersection slower than the nominal speed.
    CrossingSpeed,
    /// A schedule that could not be built or a deadline outside a member's
    /// reachable window.
    Feasibility,
    /// Spawned ≠ in system + crossed.
    Conservation,
}

impl fmt::Display for MonitorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MonitorKind::Safety => "safety",
            MonitorKind::Exclusion => "exclusion",
            MonitorKind::Approach => "approach",
            MonitorKind::Occupancy => "occupancy",
            MonitorKind::CrossingSpeed => "crossing_speed",
            MonitorKind::Feasibility => "feasibility",
            MonitorKind::Conservation => "conservation",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorEntry {
    pub kind: MonitorKind,
    pub time: f64,
    pub vehicle: Option<VehicleId>,
    pub bubble: Option<BubbleId>,
    /// Observed quantity (σ, |T^a − τ|, speed, ...).
    pub value: f64,
    /// The limit it broke.
    pub bound: f64,
}

impl fmt::Display for MonitorEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={:.3} {}", self.time, self.kind)?;
        if let Some(v) = self.vehicle {
            write!(f, " vehicle={}", v.0)?;
        }
        if let Some(b) = self.bubble {
            write!(f, " bubble={}", b.0)?;
        }
        write!(f, " value={:.9} bound={:.9}", self.value, self.bound)
    }
}

/// Violations found during a run. Repeated failures of the same check on
/// the same subject are counted but stored once.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub entries: Vec<MonitorEntry>,
    pub failed_checks: usize,
    #[serde(skip)]
    seen: HashSet<(MonitorKind, Option<VehicleId>, Option<BubbleId>)>,
}

impl MonitorReport {
    pub fn push(&mut self, e: MonitorEntry) {
        self.failed_checks += 1;
        if self.seen.insert((e.kind, e.vehicle, e.bubble)) {
            self.entries.push(e);
        }
    }

    pub fn extend(&mut self, es: impl IntoIterator<Item = MonitorEntry>) {
        for e in es {
            self.push(e);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn count(&self, kind: MonitorKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }
}

fn entry(kind: MonitorKind, time: f64, vehicle: Option<VehicleId>, bubble: Option<BubbleId>, value: f64, bound: f64) -> MonitorEntry {
    MonitorEntry { kind, time, vehicle, bubble, value, bound }
}

/// Per-step checks on a snapshot. `lanes` holds each branch's vehicles,
/// front first. With `bubbles` empty the intersection is shared per branch
/// instead of per bubble and schedule checks are skipped.
pub fn check_snapshot(
    lanes: &[Vec<VehicleState>],
    bubbles: &BTreeMap<BubbleId, Bubble>,
    now: f64,
    p: &Params,
) -> Vec<MonitorEntry> {
    let mut out = Vec::new();
    let scheduled = !bubbles.is_empty();
    for lane in lanes {
        for w in lane.windows(2) {
            let (lead, me) = (&w[0], &w[1]);
            let s = safety_ratio(SafetyPair { gap: lead.pos - me.pos, v_lead: lead.vel, v_follow: me.vel }, p);
            if s < 1.0 - SIGMA_TOL {
                out.push(entry(MonitorKind::Safety, now, Some(me.id), me.bubble, s, 1.0));
            }
        }
    }

    let inside: Vec<&VehicleState> = lanes
        .iter()
        .flatten()
        .filter(|v| v.pos >= 0.0 && v.pos < p.clear_pos())
        .collect();
    if let Some(first) = inside.first() {
        let clash = inside.iter().find(|v| {
            if scheduled {
                v.bubble != first.bubble
            } else {
                v.branch != first.branch
            }
        });
        if let Some(v) = clash {
            out.push(entry(MonitorKind::Exclusion, now, Some(v.id), v.bubble, 2.0, 1.0));
        }
    }
    if scheduled {
        for v in &inside {
            if v.vel < p.nu_nom - SPEED_TOL {
                out.push(entry(MonitorKind::CrossingSpeed, now, Some(v.id), v.bubble, v.vel, p.nu_nom));
            }
            if let Some(b) = v.bubble.and_then(|id| bubbles.get(&id)) {
                if let Some(e) = occupancy_check(v, b, now, p) {
                    out.push(e);
                }
            }
        }
    }
    out
}

/// Whether a member may be inside the intersection at `t`.
pub fn occupancy_check(v: &VehicleState, b: &Bubble, t: f64, p: &Params) -> Option<MonitorEntry> {
    let tau = b.tau?;
    let (lo, hi) = (tau - 2.0 * p.dt, tau + b.tau_occ_bar + 2.0 * p.dt);
    if t < lo {
        Some(entry(MonitorKind::Occupancy, t, Some(v.id), Some(b.id), t, lo))
    } else if t > hi {
        Some(entry(MonitorKind::Occupancy, t, Some(v.id), Some(b.id), t, hi))
    } else {
        None
    }
}

/// Checks made when a member's front reaches the stop line at `t_a` with
/// speed `v_a`.
pub fn check_approach(v: &VehicleState, b: &Bubble, t_a: f64, v_a: f64, p: &Params) -> Vec<MonitorEntry> {
    let mut out = Vec::new();
    if let Some(tau) = b.tau {
        if b.members.first() == Some(&v.id) {
            let err = (t_a - tau).abs();
            if err > 2.0 * p.dt {
                out.push(entry(MonitorKind::Approach, t_a, Some(v.id), Some(b.id), err, 2.0 * p.dt));
            }
        }
    }
    out.extend(occupancy_check(v, b, t_a, p));
    if v_a < p.nu_nom - SPEED_TOL {
        out.push(entry(MonitorKind::CrossingSpeed, t_a, Some(v.id), Some(b.id), v_a, p.nu_nom));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Branch;

    fn veh(id: u64, branch: u8, pos: f64, vel: f64, bubble: u64) -> VehicleState {
        let mut v = VehicleState::new(VehicleId(id), Branch::new(branch).unwrap(), pos, vel, 0.0);
        v.bubble = Some(BubbleId(bubble));
        v
    }

    fn bubble(id: u64, members: &[u64], tau: f64) -> Bubble {
        Bubble {
            id: BubbleId(id),
            branch: Branch::new(1).unwrap(),
            members: members.iter().map(|&m| VehicleId(m)).collect(),
            lead_pos: 0.0,
            lead_vel: 0.0,
            tau_occ_bar: 3.16,
            tau: Some(tau),
            tau_e: 0.0,
            tau_l: f64::INFINITY,
            vbar_min: 0.0,
            vbar_max: 10.0,
            scheduled_at: Some(0.0),
        }
    }

    #[test]
    fn unsafe_gap_is_one_entry() {
        let p = Params::comparison();
        let lanes = vec![vec![veh(1, 1, -50.0, 10.0, 1), veh(2, 1, -53.0, 10.0, 1)], vec![], vec![], vec![]];
        let es = check_snapshot(&lanes, &BTreeMap::new(), 1.0, &p);
        assert_eq!(es.len(), 1);
        assert_eq!(es[0].kind, MonitorKind::Safety);
        assert!((es[0].value - 0.75).abs() < 1e-12);
    }

    #[test]
    fn safe_snapshot_is_clean() {
        let p = Params::comparison();
        let lanes = vec![vec![veh(1, 1, -50.0, 10.0, 1), veh(2, 1, -54.0, 10.0, 1)], vec![], vec![], vec![]];
        assert!(check_snapshot(&lanes, &BTreeMap::new(), 1.0, &p).is_empty());
    }

    #[test]
    fn early_entry_is_flagged() {
        let p = Params::comparison();
        let b = bubble(1, &[1], 10.0);
        let v = veh(1, 1, 0.0, 14.0, 1);
        let es = check_approach(&v, &b, 10.0 - 10.0 * p.dt, 14.0, &p);
        assert!(es.iter().any(|e| e.kind == MonitorKind::Approach));
        assert!(es.iter().any(|e| e.kind == MonitorKind::Occupancy));
        assert!(check_approach(&v, &b, 10.0 + p.dt, 14.0, &p).is_empty());
    }

    #[test]
    fn two_bubbles_inside_clash() {
        let p = Params::comparison();
        let mut bs = BTreeMap::new();
        bs.insert(BubbleId(1), bubble(1, &[1], 0.0));
        bs.insert(BubbleId(2), bubble(2, &[2], 0.0));
        let lanes = vec![vec![veh(1, 1, 3.0, 14.0, 1)], vec![veh(2, 2, 1.0, 14.0, 2)], vec![], vec![]];
        let es = check_snapshot(&lanes, &bs, 0.1, &p);
        assert_eq!(es.iter().filter(|e| e.kind == MonitorKind::Exclusion).count(), 1);
    }

    #[test]
    fn report_dedupes() {
        let mut r = MonitorReport::default();
        let e = entry(MonitorKind::Safety, 0.0, Some(VehicleId(1)), None, 0.9, 1.0);
        r.push(e.clone());
        r.push(MonitorEntry { time: 1.0, ..e });
        assert_eq!((r.len(), r.failed_checks), (1, 2));
    }
}
