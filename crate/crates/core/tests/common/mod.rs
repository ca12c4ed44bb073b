//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use bubbleflow::control::ArrivalProfile;
use bubbleflow::model::{Branch, BubbleId};
use bubbleflow::scheduler::{occupancy_bound, ScheduleEntry, ScheduleProblem, ScheduleSolution};
use bubbleflow::Params;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Least effort |w − v0| + |vf − w| over two-ramp profiles that start at
/// `v0`, ramp to `w`, cruise, then ramp to an arrival speed `vf`, covering
/// `d` in exactly `t`. Ramps may be slower than the acceleration limits.
/// Searched on a 0.01 m/s grid, then twice refined around the best cell.
pub fn profile_effort_oracle(d: f64, v0: f64, t: f64, p: &Params) -> Option<f64> {
    let (a, b, rp, rm) = (p.nu_nom, p.v_max, p.u_max, -p.u_min);
    let ramp = |from: f64, to: f64| if to >= from { (to - from) / rp } else { (from - to) / rm };
    let reach = |w: f64, vf: f64| -> bool {
        let (m1, m3) = (ramp(v0, w), ramp(w, vf));
        if m1 + m3 > t {
            return false;
        }
        let dist = |t1: f64, t3: f64| w * t + t1 * (v0 - w) / 2.0 + t3 * (vf - w) / 2.0;
        let xs = [dist(m1, m3), dist(t - m3, m3), dist(m1, t - m1)];
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        d >= lo - 1e-12 && d <= hi + 1e-12
    };
    let effort = |w: f64, vf: f64| (w - v0).abs() + (vf - w).abs();

    let scan = |w_lo: f64, w_hi: f64, f_lo: f64, f_hi: f64, h: f64| -> Option<(f64, f64, f64)> {
        let mut best: Option<(f64, f64, f64)> = None;
        let nw = ((w_hi - w_lo) / h).ceil() as usize;
        let nf = ((f_hi - f_lo) / h).ceil() as usize;
        for i in 0..=nw {
            let w = (w_lo + i as f64 * h).min(w_hi);
            for j in 0..=nf {
                let vf = (f_lo + j as f64 * h).min(f_hi);
                let e = effort(w, vf);
                if best.is_some_and(|(be, _, _)| e >= be) {
                    continue;
                }
                if reach(w, vf) {
                    best = Some((e, w, vf));
                }
            }
        }
        best
    };

    let mut best = scan(0.0, b, a, b, 0.01)?;
    for (span, h) in [(0.02, 1e-4), (2e-4, 1e-6)] {
        let (_, w, vf) = best;
        if let Some(fine) = scan((w - span).max(0.0), (w + span).min(b), (vf - span).max(a), (vf + span).min(b), h) {
            if fine.0 < best.0 {
                best = fine;
            }
        }
    }
    Some(best.0)
}

/// Re-integrates a profile and lists every broken invariant.
pub fn profile_violations(prof: &ArrivalProfile, d: f64, v0: f64, t: f64, p: &Params) -> Vec<String> {
    const TOL: f64 = 1e-9;
    let mut out = Vec::new();
    let (mut x, mut v, mut dur, mut eff) = (0.0, v0, 0.0, 0.0);
    for s in &prof.segments {
        if s.accel < p.u_min - TOL || s.accel > p.u_max + TOL {
            out.push(format!("acceleration {} outside limits", s.accel));
        }
        if s.duration < 0.0 {
            out.push(format!("negative duration {}", s.duration));
        }
        x += v * s.duration + 0.5 * s.accel * s.duration * s.duration;
        v += s.accel * s.duration;
        dur += s.duration;
        eff += s.accel.abs() * s.duration;
        if v < -TOL || v > p.v_max + TOL {
            out.push(format!("speed {v} leaves [0, v_max]"));
        }
    }
    if (x - d).abs() > TOL * d.max(1.0) {
        out.push(format!("distance {x} != {d}"));
    }
    if (dur - t).abs() > TOL * t.max(1.0) {
        out.push(format!("duration {dur} != {t}"));
    }
    if (v - prof.arrival_speed).abs() > TOL {
        out.push(format!("arrival speed {} != integrated {v}", prof.arrival_speed));
    }
    if v < p.nu_nom - TOL || v > p.v_max + TOL {
        out.push(format!("arrival speed {v} outside [nu_nom, v_max]"));
    }
    if (eff - prof.total_effort).abs() > TOL {
        out.push(format!("effort {} != integrated {eff}", prof.total_effort));
    }
    out
}

/// Random scheduler instance in the criterion ranges: up to `max_n`
/// bubbles on 1 to 4 branches, distances in [70, 300] m.
pub fn random_instance(r: &mut ChaCha8Rng, max_n: usize, p: &Params) -> Vec<ScheduleEntry> {
    let n = r.random_range(1..=max_n);
    let nb = r.random_range(1..=4u8);
    let branches: Vec<u8> = {
        let mut all = vec![1u8, 2, 3, 4];
        for i in (1..4).rev() {
            all.swap(i, r.random_range(0..=i));
        }
        all.truncate(nb as usize);
        all
    };
    (0..n)
        .map(|i| {
            let size = r.random_range(1..=5usize);
            let vbar_max = r.random_range(6.0..p.v_max);
            let vbar_min = if r.random_bool(0.5) { 0.0 } else { r.random_range(0.0..0.7 * vbar_max) };
            ScheduleEntry {
                id: BubbleId(i as u64),
                branch: Branch::new(branches[r.random_range(0..branches.len())]).unwrap(),
                d: r.random_range(70.0..300.0),
                vbar_min,
                vbar_max,
                tau_occ: occupancy_bound(size, p),
                size,
            }
        })
        .collect()
}

/// Independent check of a returned schedule against the raw entries:
/// windows, the earliest allowed time, per-branch order and occupancy
/// separation. Returns the recomputed cost.
pub fn check_solution(
    entries: &[ScheduleEntry],
    t_s: f64,
    tau_min: f64,
    sol: &ScheduleSolution,
    problem: &ScheduleProblem,
) -> Result<f64, String> {
    const EPS: f64 = 1e-9;
    if sol.order.len() != entries.len() {
        return Err("order is not a permutation".into());
    }
    let mut cost = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let mut last_d = [f64::NEG_INFINITY; 4];
    for (h, id) in sol.order.iter().enumerate() {
        let e = entries.iter().find(|e| e.id == *id).ok_or("unknown id")?;
        let v = sol.vbar[h];
        let tau = t_s + e.d / v;
        if (tau - sol.tau[h]).abs() > EPS * tau.abs().max(1.0) {
            return Err(format!("tau of {id:?} inconsistent"));
        }
        if v > e.vbar_max * (1.0 + EPS) || v < e.vbar_min * (1.0 - EPS) {
            return Err(format!("velocity of {id:?} outside its window"));
        }
        if tau < tau_min - EPS {
            return Err(format!("{id:?} before tau_min"));
        }
        let k = e.branch.index();
        if e.d < last_d[k] {
            return Err(format!("{id:?} overtakes on its branch"));
        }
        last_d[k] = e.d;
        if let Some((pt, pocc)) = prev {
            if tau < pt + pocc - EPS {
                return Err(format!("{id:?} overlaps its predecessor"));
            }
        }
        prev = Some((tau, e.tau_occ));
        cost += e.size as f64 * (problem.w_t * e.d / v + problem.fuel.f0 + problem.fuel.f1 * (problem.v_max - v));
    }
    Ok(cost)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Minimum cost over constraint-satisfying velocity tuples for a fixed
/// order, on a grid of step `h` over each window. `None` if no grid point
/// is feasible.
pub fn grid_velocity_min(problem: &ScheduleProblem, order: &[usize], h: f64) -> Option<f64> {
    let bs: Vec<_> = order.iter().map(|&i| &problem.bubbles[i]).collect();
    let grids: Vec<Vec<f64>> = bs
        .iter()
        .map(|b| {
            let lo = b.vbar_min.max(h);
            let n = ((b.vbar_max - lo) / h).floor() as usize;
            let mut g: Vec<f64> = (0..=n).map(|k| lo + k as f64 * h).collect();
            g.push(b.vbar_max);
            g
        })
        .collect();
    let phi = |b: &ScheduleEntry, v: f64| {
        b.size as f64 * (problem.w_t * b.d / v + problem.fuel.f0 + problem.fuel.f1 * (problem.v_max - v))
    };
    let mut best = f64::INFINITY;
    fn rec(
        h: usize,
        bs: &[&ScheduleEntry],
        grids: &[Vec<f64>],
        t_s: f64,
        prev: Option<(f64, f64)>,
        acc: f64,
        phi: &dyn Fn(&ScheduleEntry, f64) -> f64,
        best: &mut f64,
    ) {
        if h == bs.len() {
            *best = best.min(acc);
            return;
        }
        for &v in &grids[h] {
            let tau = t_s + bs[h].d / v;
            if prev.is_some_and(|(pt, pocc)| tau < pt + pocc) {
                continue;
            }
            rec(h + 1, bs, grids, t_s, Some((tau, bs[h].tau_occ)), acc + phi(bs[h], v), phi, best);
        }
    }
    rec(0, &bs, &grids, problem.t_s, None, 0.0, &phi, &mut best);
    best.is_finite().then_some(best)
}

/// Uniform random order respecting each branch's front-to-back order.
pub fn random_order(r: &mut ChaCha8Rng, problem: &ScheduleProblem) -> Vec<usize> {
    let mut queues = problem.queues.clone();
    let mut out = Vec::with_capacity(problem.len());
    while out.len() < problem.len() {
        let open: Vec<usize> = (0..4).filter(|&k| !queues[k].is_empty()).collect();
        let k = open[r.random_range(0..open.len())];
        out.push(queues[k].remove(0));
    }
    out
}
