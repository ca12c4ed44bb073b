//! Vehicle and bubble records.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BubbleId(pub u64);

/// One of the four incoming branches, labelled 1..=4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Branch(u8);

impl Branch {
    pub const ALL: [Branch; 4] = [Branch(1), Branch(2), Branch(3), Branch(4)];

    pub fn new(label: u8) -> Option<Branch> {
        (1..=4).contains(&label).then_some(Branch(label))
    }

    pub fn label(self) -> u8 {
        self.0
    }

    /// Zero-based index for array storage.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    /// Round-robin successor (4 wraps to 1).
    pub fn next(self) -> Branch {
        Branch(self.0 % 4 + 1)
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Kinematic state and bookkeeping of one vehicle. `pos` is the front of the
/// vehicle, negative before the stop line and 0 at the stop line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub branch: Branch,
    pub pos: f64,
    pub vel: f64,
    pub accel: f64,
    /// Absolute time at which the front should reach the stop line.
    pub deadline: Option<f64>,
    pub bubble: Option<BubbleId>,
    pub t_spawn: f64,
    pub t_approach: Option<f64>,
    pub t_exit: Option<f64>,
    /// Accumulated ∫(W_T + |u|) dt.
    pub cost_accum: f64,
}

impl VehicleState {
    pub fn new(id: VehicleId, branch: Branch, pos: f64, vel: f64, t_spawn: f64) -> Self {
        VehicleState {
            id,
            branch,
            pos,
            vel,
            accel: 0.0,
            deadline: None,
            bubble: None,
            t_spawn,
            t_approach: None,
            t_exit: None,
            cost_accum: 0.0,
        }
    }
}

/// Cluster of consecutive vehicles on one branch that crosses the
/// intersection as a unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub id: BubbleId,
    pub branch: Branch,
    /// Front vehicle first.
    pub members: Vec<VehicleId>,
    pub lead_pos: f64,
    pub lead_vel: f64,
    pub tau_occ_bar: f64,
    pub tau: Option<f64>,
    pub tau_e: f64,
    pub tau_l: f64,
    pub vbar_min: f64,
    pub vbar_max: f64,
    pub scheduled_at: Option<f64>,
}

impl Bubble {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// The vehicle directly ahead of another on the same branch. A vehicle with
/// no predecessor follows an imaginary one at +∞ moving at the speed limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Leader {
    Sentinel,
    Vehicle {
        pos: f64,
        vel: f64,
        /// The leader's applied acceleration for the current step.
        accel: f64,
    },
}

impl Leader {
    pub fn pos(&self) -> f64 {
        match *self {
            Leader::Sentinel => f64::INFINITY,
            Leader::Vehicle { pos, .. } => pos,
        }
    }
}

/// True iff `q` is the immediate follower of `i`: same branch, `q` behind
/// `i`, and no bubble strictly between them.
pub fn follower_relation(bubbles: &[Bubble], i: BubbleId, q: BubbleId) -> Result<bool> {
    let find = |id| bubbles.iter().find(|b| b.id == id).ok_or(Error::UnknownBubble(id));
    let bi = find(i)?;
    let bq = find(q)?;
    if bi.branch != bq.branch || !(bq.lead_pos < bi.lead_pos) {
        return Ok(false);
    }
    let between = bubbles.iter().any(|b| {
        b.branch == bi.branch && b.lead_pos > bq.lead_pos && b.lead_pos < bi.lead_pos
    });
    Ok(!between)
}
