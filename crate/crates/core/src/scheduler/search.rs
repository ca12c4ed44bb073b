use serde::Serialize;

use super::problem::{ScheduleProblem, ScheduleSolution};
use crate::error::{Error, Result};

/// Largest instance the exhaustive oracle accepts.
pub const ORACLE_LIMIT: usize = 8;

#[inline]
fn below_window(v: f64, vmin: f64) -> bool {
    v < vmin - 1e-12 * vmin.max(1.0)
}

fn check_order(problem: &ScheduleProblem, order: &[usize]) -> Result<()> {
    let n = problem.len();
    if order.len() != n {
        return Err(Error::InvalidOrder);
    }
    let mut seen = vec![false; n];
    let mut last = [None::<usize>; 4];
    for &i in order {
        if i >= n || seen[i] {
            return Err(Error::InvalidOrder);
        }
        seen[i] = true;
        let k = problem.bubbles[i].branch.index();
        // Within a branch, indices increase with distance.
        if last[k].is_some_and(|j| j > i) {
            return Err(Error::InvalidOrder);
        }
        last[k] = Some(i);
    }
    Ok(())
}

/// Optimal average velocities for a fixed order: every bubble goes as fast
/// as its own cap and its predecessor's occupancy allow.
pub fn velopt(problem: &ScheduleProblem, order: &[usize]) -> Result<ScheduleSolution> {
    check_order(problem, order)?;
    let mut vbar = Vec::with_capacity(order.len());
    let mut feasible = true;
    let mut cost = 0.0;
    for (h, &i) in order.iter().enumerate() {
        let v = if h == 0 {
            problem.bubbles[i].vbar_max
        } else {
            problem.chain(order[h - 1], vbar[h - 1], i)
        };
        if below_window(v, problem.bubbles[i].vbar_min) || !(v > 0.0) {
            feasible = false;
        }
        cost += problem.phi(i, v);
        vbar.push(v);
    }
    let tau = order
        .iter()
        .zip(&vbar)
        .map(|(&i, &v)| problem.t_s + problem.bubbles[i].d / v)
        .collect();
    Ok(ScheduleSolution {
        order: order.iter().map(|&i| problem.bubbles[i].id).collect(),
        vbar,
        tau,
        cost: if feasible { cost } else { f64::INFINITY },
        feasible,
    })
}

/// Same as [`velopt`] with the order given as bubble ids.
pub fn velopt_ids(problem: &ScheduleProblem, ids: &[crate::model::BubbleId]) -> Result<ScheduleSolution> {
    let order = ids
        .iter()
        .map(|&id| problem.index_of(id).ok_or(Error::UnknownBubble(id)))
        .collect::<Result<Vec<_>>>()?;
    velopt(problem, &order)
}

/// A partial order in the search tree. Bubbles are referred to by their
/// index in `ScheduleProblem::bubbles`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BnbNode {
    pub prefix: Vec<usize>,
    /// Velocities of the prefix, aligned with it.
    pub committed: Vec<f64>,
    /// Unscheduled bubbles per branch, front first.
    pub queues: [Vec<usize>; 4],
    /// Optimistic velocities of the unscheduled bubbles.
    pub bound_velocities: Vec<(usize, f64)>,
    pub lower_bound: f64,
}

impl BnbNode {
    pub fn root(problem: &ScheduleProblem) -> Self {
        let mut node = BnbNode {
            prefix: Vec::new(),
            committed: Vec::new(),
            queues: problem.queues.clone(),
            bound_velocities: Vec::new(),
            lower_bound: 0.0,
        };
        node.bound_velocities = velbound(&node, problem);
        node.lower_bound = subtree_lower_bound(&node, problem);
        node
    }

    /// Builds a node from an explicit prefix, or `None` if the prefix breaks
    /// the per-branch order.
    pub fn from_prefix(problem: &ScheduleProblem, prefix: &[usize]) -> Option<Self> {
        let mut node = Self::root(problem);
        for &i in prefix {
            let k = problem.bubbles.get(i)?.branch.index();
            if node.queues[k].first() != Some(&i) {
                return None;
            }
            node = node.child(problem, k);
        }
        Some(node)
    }

    /// Appends the head of branch queue `k`. An infeasible extension gets
    /// an infinite bound.
    pub fn child(&self, problem: &ScheduleProblem, k: usize) -> Self {
        let mut queues = self.queues.clone();
        let i = queues[k].remove(0);
        let v = match (self.prefix.last(), self.committed.last()) {
            (Some(&l), Some(&vl)) => problem.chain(l, vl, i),
            _ => problem.bubbles[i].vbar_max,
        };
        let mut prefix = self.prefix.clone();
        prefix.push(i);
        let mut committed = self.committed.clone();
        committed.push(v);
        let mut node = BnbNode {
            prefix,
            committed,
            queues,
            bound_velocities: Vec::new(),
            lower_bound: f64::INFINITY,
        };
        if self.lower_bound.is_finite() && !below_window(v, problem.bubbles[i].vbar_min) && v > 0.0 {
            node.bound_velocities = velbound(&node, problem);
            node.lower_bound = subtree_lower_bound(&node, problem);
        }
        node
    }

    pub fn is_leaf(&self) -> bool {
        self.queues.iter().all(Vec::is_empty)
    }
}

/// Optimistic velocities of every unscheduled bubble given the prefix: each
/// branch head chains from the last scheduled bubble, the rest of the queue
/// chains from its predecessor in the queue.
pub fn velbound(node: &BnbNode, problem: &ScheduleProblem) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let last = node.prefix.last().copied().zip(node.committed.last().copied());
    for q in &node.queues {
        let mut prev = last;
        for &i in q {
            let v = match prev {
                Some((l, vl)) => problem.chain(l, vl, i),
                None => problem.bubbles[i].vbar_max,
            };
            out.push((i, v));
            // With an empty prefix the queues are not coupled yet.
            if last.is_some() {
                prev = Some((i, v));
            }
        }
    }
    out
}

/// Cost of the prefix at its committed velocities plus every unscheduled
/// bubble at its optimistic velocity.
pub fn subtree_lower_bound(node: &BnbNode, problem: &ScheduleProblem) -> f64 {
    let mut c = 0.0;
    for (&i, &v) in node.prefix.iter().zip(&node.committed) {
        c += problem.phi(i, v);
    }
    for &(i, v) in &node.bound_velocities {
        c += problem.phi(i, v);
    }
    c
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub visited: usize,
    pub pruned: usize,
    pub leaves: usize,
}

/// Optimal order by depth-first branch and bound.
pub fn branch_and_bound(problem: &ScheduleProblem) -> Result<ScheduleSolution> {
    branch_and_bound_traced(problem, |_| {}).map(|(s, _)| s)
}

/// As [`branch_and_bound`], reporting every visited node to `observe`.
pub fn branch_and_bound_traced(
    problem: &ScheduleProblem,
    mut observe: impl FnMut(&BnbNode),
) -> Result<(ScheduleSolution, SearchStats)> {
    if problem.is_empty() {
        return Err(Error::EmptyProblem);
    }
    let mut greedy: Vec<usize> = (0..problem.len()).collect();
    greedy.sort_by(|&a, &b| {
        let (x, y) = (&problem.bubbles[a], &problem.bubbles[b]);
        x.d.total_cmp(&y.d).then(x.branch.cmp(&y.branch)).then(x.id.cmp(&y.id))
    });
    let mut best = velopt(problem, &greedy)?;
    let mut best_order = greedy;
    let mut stats = SearchStats::default();

    fn dfs(
        node: BnbNode,
        problem: &ScheduleProblem,
        best_cost: &mut f64,
        best_order: &mut Vec<usize>,
        stats: &mut SearchStats,
        observe: &mut dyn FnMut(&BnbNode),
    ) {
        stats.visited += 1;
        observe(&node);
        if node.is_leaf() {
            stats.leaves += 1;
            if node.lower_bound < *best_cost {
                *best_cost = node.lower_bound;
                *best_order = node.prefix.clone();
            }
            return;
        }
        let mut children: Vec<BnbNode> = (0..4)
            .filter(|&k| !node.queues[k].is_empty())
            .map(|k| node.child(problem, k))
            .collect();
        children.sort_by(|a, b| {
            let ia = problem.bubbles[*a.prefix.last().unwrap()].id;
            let ib = problem.bubbles[*b.prefix.last().unwrap()].id;
            a.lower_bound.total_cmp(&b.lower_bound).then(ia.cmp(&ib))
        });
        for c in children {
            if c.lower_bound >= *best_cost {
                stats.pruned += 1;
                continue;
            }
            dfs(c, problem, best_cost, best_order, stats, observe);
        }
    }

    let mut best_cost = best.cost;
    let root = BnbNode::root(problem);
    dfs(root, problem, &mut best_cost, &mut best_order, &mut stats, &mut observe);
    if !best_cost.is_finite() {
        return Err(Error::ScheduleInfeasible(problem.len()));
    }
    if best_cost < best.cost {
        best = velopt(problem, &best_order)?;
    }
    Ok((best, stats))
}

/// Every completion of `prefix` that respects the per-branch order.
pub fn enumerate_orders(problem: &ScheduleProblem, prefix: &[usize]) -> Vec<Vec<usize>> {
    let Some(start) = BnbNode::from_prefix(problem, prefix) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    fn rec(queues: &mut [Vec<usize>; 4], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if queues.iter().all(Vec::is_empty) {
            out.push(cur.clone());
            return;
        }
        for k in 0..4 {
            if queues[k].is_empty() {
                continue;
            }
            let i = queues[k].remove(0);
            cur.push(i);
            rec(queues, cur, out);
            cur.pop();
            queues[k].insert(0, i);
        }
    }
    let mut queues = start.queues.clone();
    let mut cur = prefix.to_vec();
    rec(&mut queues, &mut cur, &mut out);
    out
}

/// Exhaustive oracle: evaluates every admissible order. Refuses more than
/// [`ORACLE_LIMIT`] bubbles.
pub fn brute_force_schedule(problem: &ScheduleProblem) -> Result<ScheduleSolution> {
    brute_force_counted(problem).map(|(s, _)| s)
}

/// As [`brute_force_schedule`], also returning the number of orders tried.
pub fn brute_force_counted(problem: &ScheduleProblem) -> Result<(ScheduleSolution, usize)> {
    if problem.is_empty() {
        return Err(Error::EmptyProblem);
    }
    if problem.len() > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge(problem.len(), ORACLE_LIMIT));
    }
    let orders = enumerate_orders(problem, &[]);
    let mut best: Option<ScheduleSolution> = None;
    for o in &orders {
        let s = velopt(problem, o)?;
        if best.as_ref().is_none_or(|b| s.cost < b.cost) {
            best = Some(s);
        }
    }
    let best = best.expect("at least one order");
    if !best.feasible {
        return Err(Error::ScheduleInfeasible(problem.len()));
    }
    Ok((best, orders.len()))
}
