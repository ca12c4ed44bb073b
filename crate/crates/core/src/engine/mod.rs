//! Closed-loop simulation of one intersection.

mod monitor;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use monitor::{
    check_approach, check_snapshot, occupancy_check, MonitorEntry, MonitorKind, MonitorReport, SIGMA_TOL, SPEED_TOL,
};

use crate::baseline::{baseline_control_sampled, signal_step, SignalState};
use crate::clustering::{cluster_and_select, ClusterInstanceInput};
use crate::control::vehicle_control_sampled;
use crate::error::{Error, Result};
use crate::kinematics::{
    earliest_vehicle_approach, first_reach, latest_vehicle_approach, nominal_quantities, step_integrate,
};
use crate::model::{Branch, Bubble, BubbleId, Leader, VehicleId, VehicleState};
use crate::params::{validate_params, Params};
use crate::scheduler::{branch_and_bound, bubble_velocity_window, FuelModel, ScheduleEntry, ScheduleProblem};
use crate::trafficgen::{spawn_wave, SpawnStreams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Clustering, scheduling and local control.
    Hd,
    /// Fixed-time signal baseline.
    Signal,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Hd => "hd",
            Mode::Signal => "signal",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hd" => Ok(Mode::Hd),
            "signal" => Ok(Mode::Signal),
            _ => Err(format!("unknown mode '{s}' (expected hd or signal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Run for a fixed simulated duration (s).
    Time(f64),
    /// Run until this many vehicles have cleared the intersection.
    Cars(usize),
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopRule::Time(t) => write!(f, "time:{t}"),
            StopRule::Cars(n) => write!(f, "cars:{n}"),
        }
    }
}

impl std::str::FromStr for StopRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("bad stop rule '{s}' (expected time:<seconds> or cars:<count>)");
        match s.split_once(':') {
            Some(("time", v)) => v.parse::<f64>().ok().filter(|t| *t > 0.0).map(StopRule::Time).ok_or_else(bad),
            Some(("cars", v)) => v.parse::<usize>().ok().filter(|n| *n > 0).map(StopRule::Cars).ok_or_else(bad),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    Off,
    /// Only the SHA-256 of the trace lines.
    Hash,
    /// Keep every line and the hash.
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: Params,
    pub mode: Mode,
    pub seed: u64,
    pub stop: StopRule,
    /// Hard horizon for car-cap runs (s).
    pub max_time: f64,
    /// Abort at the first monitor violation.
    pub strict: bool,
    pub trace: TraceMode,
    pub fuel: FuelModel,
}

impl SimConfig {
    pub fn new(params: Params, mode: Mode, seed: u64, stop: StopRule) -> Self {
        SimConfig {
            params,
            mode,
            seed,
            stop,
            max_time: 1200.0,
            strict: false,
            trace: TraceMode::Off,
            fuel: FuelModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: VehicleId,
    pub branch: Branch,
    pub bubble: Option<BubbleId>,
    pub t_spawn: f64,
    pub t_approach: Option<f64>,
    pub t_exit: Option<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub spawned: usize,
    pub crossed: usize,
    /// Vehicles that cleared the intersection within the first 60 s.
    pub cpm: usize,
    /// Time at which the car cap was reached, for car-cap runs.
    pub tcc: Option<f64>,
    /// Mean cost of the vehicles that cleared the intersection.
    pub cpc: Option<f64>,
    pub sim_time: f64,
    pub schedule_instances: usize,
    /// Crossed vehicles in order of clearing.
    pub records: Vec<VehicleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub id: u64,
    pub branch: u8,
    pub pos: f64,
    pub vel: f64,
    pub accel: f64,
    pub bubble: Option<u64>,
    pub mode: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimOutput {
    pub metrics: Metrics,
    pub report: MonitorReport,
    /// SHA-256 of the trace lines, when tracing was on.
    pub trace_hash: Option<String>,
    pub trace: Option<Vec<String>>,
    /// Time of the violation that ended a strict run.
    pub aborted_at: Option<f64>,
}

struct Tracer {
    mode: TraceMode,
    hasher: Sha256,
    lines: Vec<String>,
    buf: Vec<u8>,
}

impl Tracer {
    fn new(mode: TraceMode) -> Self {
        Tracer { mode, hasher: Sha256::new(), lines: Vec::new(), buf: Vec::new() }
    }

    fn record(&mut self, r: &TraceRecord) {
        if self.mode == TraceMode::Off {
            return;
        }
        self.buf.clear();
        serde_json::to_writer(&mut self.buf, r).expect("trace record serializes");
        self.buf.push(b'\n');
        self.hasher.update(&self.buf);
        if self.mode == TraceMode::Record {
            self.lines.push(String::from_utf8_lossy(&self.buf[..self.buf.len() - 1]).into_owned());
        }
    }

    fn finish(self) -> (Option<String>, Option<Vec<String>>) {
        match self.mode {
            TraceMode::Off => (None, None),
            TraceMode::Hash => (Some(hex(&self.hasher.finalize())), None),
            TraceMode::Record => (Some(hex(&self.hasher.finalize())), Some(self.lines)),
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes trace lines as JSON lines.
pub fn write_trace(lines: &[String], mut w: impl Write) -> std::io::Result<()> {
    for l in lines {
        writeln!(w, "{l}")?;
    }
    Ok(())
}

/// Mutable state of one run.
struct World {
    p: Params,
    lanes: [Vec<VehicleState>; 4],
    bubbles: BTreeMap<BubbleId, Bubble>,
    list: Vec<BubbleId>,
    tau_min: f64,
    next_vehicle: u64,
    next_bubble: u64,
    streams: SpawnStreams,
    signal: SignalState,
    spawned: usize,
    crossed: Vec<VehicleRecord>,
    report: MonitorReport,
    schedule_instances: usize,
    t_nom: f64,
}

impl World {
    fn all_vehicles(&self) -> Vec<VehicleState> {
        self.lanes.iter().flatten().cloned().collect()
    }

    fn spawn(&mut self, t_s: f64) {
        for b in Branch::ALL {
            let last = self.lanes[b.index()].last().map(|v| (v.pos, v.vel));
            let wave = spawn_wave(b, last, t_s, self.streams.branch(b), &mut self.next_vehicle, &self.p);
            self.spawned += wave.len();
            self.lanes[b.index()].extend(wave);
        }
    }

    fn feasibility(&mut self, t: f64, bubble: Option<BubbleId>, vehicle: Option<VehicleId>, value: f64, bound: f64) {
        self.report.push(MonitorEntry { kind: MonitorKind::Feasibility, time: t, vehicle, bubble, value, bound });
    }

    fn member_states(&self, b: &Bubble) -> Vec<VehicleState> {
        let lane = &self.lanes[b.branch.index()];
        b.members
            .iter()
            .filter_map(|id| lane.iter().find(|v| v.id == *id).cloned())
            .collect()
    }

    /// Clustering and scheduling instance at `t_s`.
    fn schedule(&mut self, t_s: f64, fuel: FuelModel) -> Result<()> {
        let p = self.p;
        let vehicles = self.all_vehicles();
        let prev: Vec<Bubble> = self.list.iter().map(|id| self.bubbles[id].clone()).collect();
        let out = cluster_and_select(
            &ClusterInstanceInput {
                t_s,
                prev_list: &self.list,
                prev_tau_min: self.tau_min,
                vehicles: &vehicles,
                bubbles: &prev,
                next_bubble_id: self.next_bubble,
            },
            &p,
        )?;
        self.next_bubble = out.next_bubble_id;
        self.tau_min = out.tau_min;
        for b in out.new_bubbles {
            let lane = &mut self.lanes[b.branch.index()];
            for v in lane.iter_mut().filter(|v| b.members.contains(&v.id)) {
                v.bubble = Some(b.id);
            }
            self.bubbles.insert(b.id, b);
        }
        self.list = out.list;
        if self.list.is_empty() {
            return Ok(());
        }
        self.schedule_instances += 1;

        let mut entries = Vec::with_capacity(self.list.len());
        for id in self.list.clone() {
            let mut b = self.bubbles[&id].clone();
            let members = self.member_states(&b);
            let refs: Vec<&VehicleState> = members.iter().collect();
            b.lead_pos = members[0].pos;
            b.lead_vel = members[0].vel;
            let w = match bubble_velocity_window(&b, &refs, t_s, self.tau_min, &p) {
                Ok(w) => w,
                Err(Error::InfeasibleWindow { vbar_min, vbar_max, .. }) => {
                    self.feasibility(t_s, Some(id), None, vbar_min, vbar_max);
                    let w = bubble_velocity_window(&b, &refs, t_s, f64::NEG_INFINITY, &p)?;
                    crate::scheduler::VelocityWindow { vbar_min: vbar_max.min(w.vbar_min), vbar_max, ..w }
                }
                Err(e) => return Err(e),
            };
            b.tau_e = w.tau_e;
            b.tau_l = w.tau_l;
            b.vbar_min = w.vbar_min;
            b.vbar_max = w.vbar_max;
            entries.push(ScheduleEntry {
                id,
                branch: b.branch,
                d: -b.lead_pos,
                vbar_min: w.vbar_min,
                vbar_max: w.vbar_max,
                tau_occ: b.tau_occ_bar,
                size: b.size(),
            });
            self.bubbles.insert(id, b);
        }
        let problem = ScheduleProblem::new(t_s, self.tau_min, entries, fuel, p.w_t, p.v_max)?;
        let sol = match branch_and_bound(&problem) {
            Ok(s) => s,
            Err(Error::ScheduleInfeasible(n)) => {
                self.feasibility(t_s, None, None, n as f64, 0.0);
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        // The next instance drops from the front, so keep the list in
        // approach order.
        self.list = sol.order.clone();
        for (h, &id) in sol.order.iter().enumerate() {
            let tau = sol.tau[h];
            let b = self.bubbles.get_mut(&id).expect("scheduled bubble exists");
            b.tau = Some(tau);
            b.scheduled_at = Some(t_s);
            let b = b.clone();
            let lane = &mut self.lanes[b.branch.index()];
            let mut bad = Vec::new();
            for (j, mid) in b.members.iter().enumerate() {
                let Some(v) = lane.iter_mut().find(|v| v.id == *mid) else { continue };
                let deadline = tau + j as f64 * self.t_nom;
                v.deadline = Some(deadline);
                let lo = t_s + earliest_vehicle_approach(v.pos, v.vel, &p);
                let hi = t_s + latest_vehicle_approach(v.pos, v.vel, &p);
                if deadline < lo - 1e-9 || deadline > hi + 1e-9 {
                    bad.push((v.id, deadline, if deadline < lo { lo } else { hi }));
                }
            }
            for (vid, dl, bound) in bad {
                self.feasibility(t_s, Some(id), Some(vid), dl, bound);
            }
        }
        Ok(())
    }
}

/// Runs one trial.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimOutput> {
    run_inner(cfg, None)
}

/// Runs a hand-built scenario: the given vehicles start on the road and the
/// traffic generator stays off. The seed is unused.
pub fn run_scenario(cfg: &SimConfig, vehicles: &[VehicleState]) -> Result<SimOutput> {
    run_inner(cfg, Some(vehicles))
}

fn run_inner(cfg: &SimConfig, scenario: Option<&[VehicleState]>) -> Result<SimOutput> {
    let p = cfg.params;
    let violations = validate_params(&p);
    if !violations.is_empty() {
        let msg: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidParams(msg.join("; ")));
    }
    let (_, t_nom) = nominal_quantities(&p);
    let mut w = World {
        p,
        lanes: Default::default(),
        bubbles: BTreeMap::new(),
        list: Vec::new(),
        tau_min: f64::NEG_INFINITY,
        next_vehicle: 0,
        next_bubble: 0,
        streams: SpawnStreams::new(cfg.seed),
        signal: SignalState::new(0.0),
        spawned: 0,
        crossed: Vec::new(),
        report: MonitorReport::default(),
        schedule_instances: 0,
        t_nom,
    };
    if let Some(vs) = scenario {
        for v in vs {
            w.lanes[v.branch.index()].push(v.clone());
            w.next_vehicle = w.next_vehicle.max(v.id.0 + 1);
        }
        for lane in &mut w.lanes {
            lane.sort_by(|a, b| b.pos.total_cmp(&a.pos));
        }
        w.spawned = vs.len();
    }
    let mut tracer = Tracer::new(cfg.trace);
    let dt = p.dt;
    let end_time = match cfg.stop {
        StopRule::Time(t) => t,
        StopRule::Cars(_) => cfg.max_time,
    };
    let mut tcc = None;
    let mut aborted_at = None;
    let mut instance = 0u64;
    let mut k = 0u64;
    let empty = BTreeMap::new();

    loop {
        let t = k as f64 * dt;
        if t >= end_time - 1e-9 {
            break;
        }
        if let StopRule::Cars(n) = cfg.stop {
            if w.crossed.len() >= n {
                break;
            }
        }
        let before = w.report.failed_checks;

        if t >= instance as f64 * p.t_cs - 1e-9 {
            if scenario.is_none() {
                w.spawn(t);
            }
            if cfg.mode == Mode::Hd {
                w.schedule(t, cfg.fuel)?;
            }
            instance += 1;
        }
        if cfg.mode == Mode::Signal {
            let all = w.all_vehicles();
            w.signal = signal_step(&w.signal, &all, t, &p);
        }

        // Control front to back, then integrate.
        let t_end = t + dt;
        for lane_idx in 0..4 {
            let mut lead = Leader::Sentinel;
            let mut exited = 0usize;
            let lane = std::mem::take(&mut w.lanes[lane_idx]);
            let mut next_lane = Vec::with_capacity(lane.len());
            for v in lane {
                let d = match cfg.mode {
                    Mode::Hd => vehicle_control_sampled(&v, lead, t, dt, &p),
                    Mode::Signal => baseline_control_sampled(&v, lead, w.signal.virtual_leader(&v, &p), dt, &p),
                };
                tracer.record(&TraceRecord {
                    t,
                    id: v.id.0,
                    branch: v.branch.label(),
                    pos: v.pos,
                    vel: v.vel,
                    accel: d.u,
                    bubble: v.bubble.map(|b| b.0),
                    mode: if d.coupled { "coupled" } else { "uncoupled" },
                });
                lead = Leader::Vehicle { pos: v.pos, vel: v.vel, accel: d.u };
                let mut nv = step_integrate(&v, d.u, dt, &p)?;
                if nv.t_approach.is_none() {
                    if let Some((tau, v_a)) = first_reach(v.pos, v.vel, d.u, dt, 0.0, p.v_max) {
                        let t_a = t + tau;
                        nv.t_approach = Some(t_a);
                        if let Some(b) = nv.bubble.and_then(|id| w.bubbles.get(&id)) {
                            w.report.extend(check_approach(&nv, b, t_a, v_a, &p));
                        }
                    }
                }
                if nv.pos >= p.clear_pos() {
                    let (tau, _) = first_reach(v.pos, v.vel, d.u, dt, p.clear_pos(), p.v_max).unwrap_or((dt, 0.0));
                    let partial = step_integrate(&v, d.u, tau, &p)?;
                    let t_x = t + tau;
                    if let Some(b) = nv.bubble.and_then(|id| w.bubbles.get(&id)) {
                        w.report.extend(occupancy_check(&nv, b, t_x, &p));
                    }
                    w.crossed.push(VehicleRecord {
                        id: nv.id,
                        branch: nv.branch,
                        bubble: nv.bubble,
                        t_spawn: nv.t_spawn,
                        t_approach: nv.t_approach,
                        t_exit: Some(t_x),
                        cost: partial.cost_accum,
                    });
                    exited += 1;
                    if let StopRule::Cars(n) = cfg.stop {
                        if w.crossed.len() == n {
                            tcc = Some(t_x);
                        }
                    }
                } else {
                    next_lane.push(nv);
                }
            }
            debug_assert!(exited == 0 || next_lane.first().is_none_or(|v| v.pos < p.clear_pos()));
            w.lanes[lane_idx] = next_lane;
        }

        let bubbles = if cfg.mode == Mode::Hd { &w.bubbles } else { &empty };
        let snap = check_snapshot(&w.lanes, bubbles, t_end, &p);
        w.report.extend(snap);
        let in_system: usize = w.lanes.iter().map(Vec::len).sum();
        if w.spawned != in_system + w.crossed.len() {
            w.report.push(MonitorEntry {
                kind: MonitorKind::Conservation,
                time: t_end,
                vehicle: None,
                bubble: None,
                value: w.spawned as f64,
                bound: (in_system + w.crossed.len()) as f64,
            });
        }
        prune_bubbles(&mut w);
        k += 1;
        if cfg.strict && w.report.failed_checks > before {
            aborted_at = Some(t_end);
            break;
        }
    }

    let sim_time = k as f64 * dt;
    let crossed = w.crossed.len();
    let cpm = w.crossed.iter().filter(|r| r.t_exit.is_some_and(|x| x <= 60.0)).count();
    let cpc = (crossed > 0).then(|| w.crossed.iter().map(|r| r.cost).sum::<f64>() / crossed as f64);
    let (trace_hash, trace) = tracer.finish();
    Ok(SimOutput {
        metrics: Metrics {
            spawned: w.spawned,
            crossed,
            cpm,
            tcc,
            cpc,
            sim_time,
            schedule_instances: w.schedule_instances,
            records: w.crossed,
        },
        report: w.report,
        trace_hash,
        trace,
        aborted_at,
    })
}

/// Forgets bubbles that are off the schedule list and have no member left.
fn prune_bubbles(w: &mut World) {
    if w.bubbles.len() < 64 {
        return;
    }
    let live: std::collections::HashSet<BubbleId> = w.lanes.iter().flatten().filter_map(|v| v.bubble).collect();
    let list = &w.list;
    w.bubbles.retain(|id, _| live.contains(id) || list.contains(id));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_rule_parse() {
        assert_eq!("time:60".parse::<StopRule>(), Ok(StopRule::Time(60.0)));
        assert_eq!("cars:50".parse::<StopRule>(), Ok(StopRule::Cars(50)));
        assert!("cars:0".parse::<StopRule>().is_err());
        assert!("laps:3".parse::<StopRule>().is_err());
        assert_eq!("signal".parse::<Mode>(), Ok(Mode::Signal));
    }

    #[test]
    fn refuses_invalid_params() {
        let p = Params { exit_len: 50.0, ..Params::comparison() };
        let cfg = SimConfig::new(p, Mode::Hd, 1, StopRule::Time(1.0));
        assert!(matches!(run_simulation(&cfg), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn short_run_is_clean() {
        let cfg = SimConfig::new(Params::comparison(), Mode::Hd, 1, StopRule::Time(20.0));
        let out = run_simulation(&cfg).unwrap();
        assert!(out.report.is_empty(), "{:#?}", out.report.entries);
        assert!(out.metrics.spawned > 0);
    }
}
