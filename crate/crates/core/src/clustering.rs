//! Bubble formation and the per-instance schedule list.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Branch, Bubble, BubbleId, VehicleId, VehicleState};
use crate::params::Params;
use crate::scheduler::occupancy_bound;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    /// Upstream of the staging zone. Vehicles are never spawned here.
    Upstream,
    Staging,
    Mid,
    Exit,
    Intersection,
    Past,
}

/// Zone containing a front position. Boundaries belong to the zone nearer
/// the intersection.
pub fn zone_of(pos: f64, p: &Params) -> Zone {
    if pos < p.domain_start() {
        Zone::Upstream
    } else if pos < p.staging_end() {
        Zone::Staging
    } else if pos < -p.exit_len {
        Zone::Mid
    } else if pos < 0.0 {
        Zone::Exit
    } else if pos < p.clear_pos() {
        Zone::Intersection
    } else {
        Zone::Past
    }
}

/// Unclustered vehicles picked up by an instance. The staging interval is
/// closed here so a vehicle spawned exactly on the mid boundary still joins
/// a bubble.
pub fn clusterable(pos: f64, p: &Params) -> bool {
    pos >= p.domain_start() && pos <= p.staging_end()
}

/// Optimal contiguous split of `xs` (already sorted) into `m` groups.
/// Returns index ranges in input order.
pub fn kmeans_1d_sorted(xs: &[f64], m: usize) -> Result<Vec<Range<usize>>> {
    let n = xs.len();
    if n == 0 {
        return Err(Error::EmptyClusterInput);
    }
    if m == 0 || m > n {
        return Err(Error::TooManyClusters { clusters: m, points: n });
    }
    // Center on the mean so the prefix-sum SSE formula stays well conditioned.
    let mean = xs.iter().sum::<f64>() / n as f64;
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, &x) in xs.iter().enumerate() {
        let y = x - mean;
        s1[i + 1] = s1[i] + y;
        s2[i + 1] = s2[i] + y * y;
    }
    let sse = |a: usize, b: usize| {
        let k = (b - a) as f64;
        let s = s1[b] - s1[a];
        (s2[b] - s2[a] - s * s / k).max(0.0)
    };

    // cost[c][j]: best SSE of the first j points in c+1 groups.
    let mut cost = vec![vec![f64::INFINITY; n + 1]; m];
    let mut cut = vec![vec![0usize; n + 1]; m];
    for j in 1..=n {
        cost[0][j] = sse(0, j);
    }
    for c in 1..m {
        for j in (c + 1)..=n {
            for s in c..j {
                let v = cost[c - 1][s] + sse(s, j);
                if v < cost[c][j] {
                    cost[c][j] = v;
                    cut[c][j] = s;
                }
            }
        }
    }
    let mut out = Vec::with_capacity(m);
    let mut end = n;
    for c in (0..m).rev() {
        let start = if c == 0 { 0 } else { cut[c][end] };
        out.push(start..end);
        end = start;
    }
    out.reverse();
    Ok(out)
}

/// Partition positions into `m` contiguous clusters minimizing the total
/// within-cluster squared deviation, front-most cluster first.
pub fn kmeans_1d(positions: &[f64], m: usize) -> Result<Vec<Vec<f64>>> {
    let mut xs = positions.to_vec();
    xs.sort_by(|a, b| b.total_cmp(a));
    let ranges = kmeans_1d_sorted(&xs, m)?;
    Ok(ranges.into_iter().map(|r| xs[r].to_vec()).collect())
}

#[derive(Debug, Clone)]
pub struct ClusterInstanceInput<'a> {
    pub t_s: f64,
    /// Schedule list of the previous instance, in order.
    pub prev_list: &'a [BubbleId],
    pub prev_tau_min: f64,
    pub vehicles: &'a [VehicleState],
    /// Every bubble still referenced by `prev_list` or by a vehicle.
    pub bubbles: &'a [Bubble],
    /// First id available for new bubbles.
    pub next_bubble_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterInstanceOutput {
    pub list: Vec<BubbleId>,
    pub tau_min: f64,
    pub new_bubbles: Vec<Bubble>,
    /// Members of `prev_list` that left the list this instance.
    pub dropped: Vec<BubbleId>,
    pub next_bubble_id: u64,
}

fn fresh_bubble(id: BubbleId, branch: Branch, members: &[&VehicleState], p: &Params) -> Bubble {
    Bubble {
        id,
        branch,
        members: members.iter().map(|v| v.id).collect(),
        lead_pos: members[0].pos,
        lead_vel: members[0].vel,
        tau_occ_bar: occupancy_bound(members.len(), p),
        tau: None,
        tau_e: f64::NEG_INFINITY,
        tau_l: f64::INFINITY,
        vbar_min: 0.0,
        vbar_max: p.v_max,
        scheduled_at: None,
    }
}

/// One clustering instance: prune the previous list, cluster the staging
/// zone, cap the list and carry the earliest admissible approach time.
pub fn cluster_and_select(inp: &ClusterInstanceInput<'_>, p: &Params) -> Result<ClusterInstanceOutput> {
    let by_vehicle: HashMap<VehicleId, &VehicleState> = inp.vehicles.iter().map(|v| (v.id, v)).collect();
    let by_bubble: HashMap<BubbleId, &Bubble> = inp.bubbles.iter().map(|b| (b.id, b)).collect();

    let inside = |b: &Bubble| {
        b.members.iter().all(|id| {
            by_vehicle
                .get(id)
                .is_some_and(|v| matches!(zone_of(v.pos, p), Zone::Staging | Zone::Mid))
        })
    };
    let mut retained = Vec::with_capacity(inp.prev_list.len());
    for &id in inp.prev_list {
        let b = by_bubble.get(&id).ok_or(Error::UnknownBubble(id))?;
        if inside(b) {
            retained.push(id);
        }
    }

    let mut next_id = inp.next_bubble_id;
    let mut new_bubbles = Vec::new();
    for branch in Branch::ALL {
        let mut fresh: Vec<&VehicleState> = inp
            .vehicles
            .iter()
            .filter(|v| v.branch == branch && v.bubble.is_none() && clusterable(v.pos, p))
            .collect();
        if fresh.is_empty() {
            continue;
        }
        fresh.sort_by(|a, b| b.pos.total_cmp(&a.pos).then(a.id.cmp(&b.id)));
        let xs: Vec<f64> = fresh.iter().map(|v| v.pos).collect();
        let m = fresh.len().min(p.nbar_k);
        for r in kmeans_1d_sorted(&xs, m)? {
            new_bubbles.push(fresh_bubble(BubbleId(next_id), branch, &fresh[r], p));
            next_id += 1;
        }
    }

    if new_bubbles.len() > p.nbar {
        return Err(Error::ScheduleCapacity { new: new_bubbles.len(), capacity: p.nbar });
    }
    let room = p.nbar - new_bubbles.len();
    if retained.len() > room {
        retained.drain(..retained.len() - room);
    }

    let mut tau_min = inp.prev_tau_min;
    let mut dropped = Vec::new();
    for &id in inp.prev_list {
        if retained.contains(&id) {
            continue;
        }
        let b = by_bubble[&id];
        let tau = b.tau.ok_or(Error::UnscheduledDrop(id))?;
        tau_min = tau_min.max(tau + b.tau_occ_bar);
        dropped.push(id);
    }

    let mut list = retained;
    list.extend(new_bubbles.iter().map(|b| b.id));
    Ok(ClusterInstanceOutput {
        list,
        tau_min,
        new_bubbles,
        dropped,
        next_bubble_id: next_id,
    })
}
