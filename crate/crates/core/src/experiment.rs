//! Seeded trial sweeps and their CSV summaries.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{run_simulation, Mode, SimConfig, SimOutput, StopRule, TraceMode};
use crate::error::Result;
use crate::params::Params;
use crate::scheduler::FuelModel;

pub const CSV_HEADER: [&str; 10] = ["mode", "mu", "W_T", "seed", "stop_mode", "CPM", "TCC", "CPC", "crossed", "violations"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialSpec {
    pub mode: Mode,
    pub mu: f64,
    pub w_t: f64,
    pub seed: u64,
    pub stop: StopRule,
}

impl TrialSpec {
    /// Sort key: mode, mu, W_T, seed.
    fn key(&self) -> (Mode, u64, u64, u64) {
        (self.mode, self.mu.to_bits(), self.w_t.to_bits(), self.seed)
    }
}

/// Knobs shared by every trial of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub strict: bool,
    pub trace: TraceMode,
    pub max_time: f64,
    pub fuel: FuelModel,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { strict: false, trace: TraceMode::Off, max_time: 1200.0, fuel: FuelModel::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub spec: TrialSpec,
    pub output: SimOutput,
}

/// Full factorial sweep.
pub fn grid(modes: &[Mode], mus: &[f64], wts: &[f64], seeds: &[u64], stop: StopRule) -> Vec<TrialSpec> {
    let mut out = Vec::new();
    for &mode in modes {
        for &mu in mus {
            for &w_t in wts {
                for &seed in seeds {
                    out.push(TrialSpec { mode, mu, w_t, seed, stop });
                }
            }
        }
    }
    out
}

pub fn config_for(base: &Params, spec: &TrialSpec, opts: &SweepOptions) -> SimConfig {
    let params = Params { mu: spec.mu, w_t: spec.w_t, ..*base };
    SimConfig {
        params,
        mode: spec.mode,
        seed: spec.seed,
        stop: spec.stop,
        max_time: opts.max_time,
        strict: opts.strict,
        trace: opts.trace,
        fuel: opts.fuel,
    }
}

/// Runs every trial in parallel. Results come back sorted by
/// (mode, mu, W_T, seed), independent of scheduling.
pub fn run_trials(base: &Params, specs: &[TrialSpec], opts: &SweepOptions) -> Result<Vec<TrialResult>> {
    let mut out = specs
        .par_iter()
        .map(|spec| {
            run_simulation(&config_for(base, spec, opts)).map(|output| TrialResult { spec: *spec, output })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.spec.key().cmp(&b.spec.key()));
    Ok(out)
}

fn num(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v}"))
}

/// One CSV row per trial.
pub fn trial_row(r: &TrialResult) -> Vec<String> {
    let m = &r.output.metrics;
    vec![
        r.spec.mode.to_string(),
        format!("{}", r.spec.mu),
        format!("{}", r.spec.w_t),
        r.spec.seed.to_string(),
        r.spec.stop.to_string(),
        m.cpm.to_string(),
        num(m.tcc),
        num(m.cpc),
        m.crossed.to_string(),
        r.output.report.len().to_string(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub std: f64,
    pub n: usize,
}

pub fn stats(xs: &[f64]) -> Option<Stats> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    Some(Stats { mean, std: var.sqrt(), n })
}

fn cell(s: Option<Stats>) -> String {
    s.map_or_else(String::new, |s| format!("{};{}", s.mean, s.std))
}

/// Per-group summary over seeds.
#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub mode: Mode,
    pub mu: f64,
    pub w_t: f64,
    pub stop: StopRule,
    pub cpm: Option<Stats>,
    pub tcc: Option<Stats>,
    pub cpc: Option<Stats>,
    pub crossed: Option<Stats>,
    pub violations: Option<Stats>,
}

pub fn summarize(results: &[TrialResult]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(Mode, u64, u64), Vec<&TrialResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.spec.mode, r.spec.mu.to_bits(), r.spec.w_t.to_bits())).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let s = rs[0].spec;
            let pick = |f: &dyn Fn(&TrialResult) -> Option<f64>| {
                let xs: Vec<f64> = rs.iter().filter_map(|r| f(r)).collect();
                stats(&xs)
            };
            GroupSummary {
                mode: s.mode,
                mu: s.mu,
                w_t: s.w_t,
                stop: s.stop,
                cpm: pick(&|r| Some(r.output.metrics.cpm as f64)),
                tcc: pick(&|r| r.output.metrics.tcc),
                cpc: pick(&|r| r.output.metrics.cpc),
                crossed: pick(&|r| Some(r.output.metrics.crossed as f64)),
                violations: pick(&|r| Some(r.output.report.len() as f64)),
            }
        })
        .collect()
}

pub fn aggregate_row(g: &GroupSummary) -> Vec<String> {
    vec![
        g.mode.to_string(),
        format!("{}", g.mu),
        format!("{}", g.w_t),
        "aggregate".into(),
        g.stop.to_string(),
        cell(g.cpm),
        cell(g.tcc),
        cell(g.cpc),
        cell(g.crossed),
        cell(g.violations),
    ]
}

/// Trial rows followed by one aggregate row per (mode, mu, W_T).
pub fn write_summary_csv(results: &[TrialResult], w: impl Write) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in results {
        out.write_record(trial_row(r))?;
    }
    for g in summarize(results) {
        out.write_record(aggregate_row(&g))?;
    }
    out.flush()?;
    Ok(())
}

/// Signal-to-HD ratios of mean TCC and mean CPC for every (mu, W_T) that
/// has both modes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub mu: f64,
    pub w_t: f64,
    pub tcc_ratio: Option<f64>,
    pub cpc_ratio: Option<f64>,
}

pub fn ratio_rows(summaries: &[GroupSummary]) -> Vec<RatioRow> {
    let find = |mode, mu: f64, w_t: f64| summaries.iter().find(|g| g.mode == mode && g.mu == mu && g.w_t == w_t);
    let ratio = |a: Option<Stats>, b: Option<Stats>| match (a, b) {
        (Some(a), Some(b)) if b.mean != 0.0 => Some(a.mean / b.mean),
        _ => None,
    };
    summaries
        .iter()
        .filter(|g| g.mode == Mode::Hd)
        .filter_map(|hd| {
            let sig = find(Mode::Signal, hd.mu, hd.w_t)?;
            Some(RatioRow {
                mu: hd.mu,
                w_t: hd.w_t,
                tcc_ratio: ratio(sig.tcc, hd.tcc),
                cpc_ratio: ratio(sig.cpc, hd.cpc),
            })
        })
        .collect()
}

pub fn write_ratio_csv(rows: &[RatioRow], w: impl Write) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["mu", "W_T", "TCC_signal_over_hd", "CPC_signal_over_hd"])?;
    for r in rows {
        out.write_record([format!("{}", r.mu), format!("{}", r.w_t), num(r.tcc_ratio), num(r.cpc_ratio)])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_basic() {
        let s = stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.n), (2.0, 1.0, 3));
        assert_eq!(stats(&[4.0]).unwrap().std, 0.0);
        assert!(stats(&[]).is_none());
    }

    #[test]
    fn grid_size() {
        let g = grid(&[Mode::Hd, Mode::Signal], &[0.2, 0.5, 1.0], &[0.1, 1.0, 10.0], &[1, 2], StopRule::Time(60.0));
        assert_eq!(g.len(), 36);
    }
}
