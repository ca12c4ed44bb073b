mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bubbleflow::engine::{write_trace, Mode, StopRule, TraceMode};
use bubbleflow::experiment::{grid, ratio_rows, run_trials, summarize, write_ratio_csv, write_summary_csv, SweepOptions};
use bubbleflow::kinematics::nominal_quantities;
use bubbleflow::scheduler::{
    branch_and_bound_traced, brute_force_counted, inter_approach_bound, ScheduleProblem, ScheduleSolution,
    ORACLE_LIMIT,
};
use bubbleflow::validate_params;
use clap::{Parser, Subcommand};

use config::Experiment;

// Aliases keep clap from treating the parsed lists as repeated flags.
type Modes = Vec<Mode>;
type Floats = Vec<f64>;
type Seeds = Vec<u64>;

#[derive(Parser)]
#[command(name = "bubbleflow", version, about = "Intersection coordination experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Sweep {
    /// Flat TOML config; defaults to the paper-table1 preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// hd, signal or both.
    #[arg(long, value_parser = config::parse_modes)]
    mode: Option<Modes>,
    /// Comma-separated traffic densities.
    #[arg(long, value_parser = config::parse_floats)]
    mu: Option<Floats>,
    /// Comma-separated travel-time weights.
    #[arg(long, value_parser = config::parse_floats)]
    wt: Option<Floats>,
    /// Seed range "1-10" or list "1,4,9".
    #[arg(long, value_parser = config::parse_seeds)]
    seeds: Option<Seeds>,
    /// time:<seconds> or cars:<count>.
    #[arg(long)]
    stop: Option<StopRule>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run seeded trials and write summary.csv and ratios.csv.
    Run {
        #[command(flatten)]
        sweep: Sweep,
        /// Write one JSON-lines trace per trial under <out>/traces.
        #[arg(long)]
        trace: bool,
        /// Abort a trial at its first monitor violation and exit nonzero.
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve a schedule instance with branch and bound and brute force.
    VerifySchedule {
        instance: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the effective parameters and derived quantities.
    PrintParams {
        #[command(flatten)]
        sweep: Sweep,
    },
}

fn resolve(s: Sweep) -> Result<Experiment> {
    let mut e = config::load(s.config.as_deref())?;
    if let Some(m) = s.mode {
        e.modes = m;
    }
    if let Some(m) = s.mu {
        e.mus = m;
    }
    if let Some(w) = s.wt {
        e.wts = w;
    }
    if let Some(x) = s.seeds {
        e.seeds = x;
    }
    if let Some(x) = s.stop {
        e.stop = x;
    }
    Ok(e)
}

fn check_params(e: &Experiment) -> Result<()> {
    let mut bad = Vec::new();
    for &mu in &e.mus {
        for &w_t in &e.wts {
            let p = bubbleflow::Params { mu, w_t, ..e.params };
            bad.extend(validate_params(&p).into_iter().map(|v| v.to_string()));
        }
    }
    bad.dedup();
    if !bad.is_empty() {
        bail!("refusing to run with invalid parameters:\n  {}", bad.join("\n  "));
    }
    Ok(())
}

fn trace_name(mode: Mode, mu: f64, w_t: f64, seed: u64) -> String {
    format!("{mode}_mu{mu}_wt{w_t}_seed{seed}.jsonl")
}

fn cmd_run(mut e: Experiment, trace: bool, strict: bool, out: &Path) -> Result<ExitCode> {
    e.trace |= trace;
    e.strict |= strict;
    check_params(&e)?;
    let specs = grid(&e.modes, &e.mus, &e.wts, &e.seeds, e.stop);
    let opts = SweepOptions {
        strict: e.strict,
        trace: if e.trace { TraceMode::Record } else { TraceMode::Off },
        max_time: e.max_time,
        ..SweepOptions::default()
    };
    eprintln!("running {} trials", specs.len());
    let results = run_trials(&e.params, &specs, &opts)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let summary = out.join("summary.csv");
    write_summary_csv(&results, BufWriter::new(File::create(&summary)?))?;
    let ratios = ratio_rows(&summarize(&results));
    if !ratios.is_empty() {
        write_ratio_csv(&ratios, BufWriter::new(File::create(out.join("ratios.csv"))?))?;
    }
    if e.trace {
        let dir = out.join("traces");
        fs::create_dir_all(&dir)?;
        for r in &results {
            let s = r.spec;
            if let Some(lines) = &r.output.trace {
                write_trace(lines, BufWriter::new(File::create(dir.join(trace_name(s.mode, s.mu, s.w_t, s.seed)))?))?;
            }
        }
    }

    let mut violations = 0;
    for r in &results {
        let n = r.output.report.len();
        if n > 0 {
            violations += n;
            let s = r.spec;
            eprintln!("{} mu={} W_T={} seed={}: {n} monitor violation(s)", s.mode, s.mu, s.w_t, s.seed);
            for entry in r.output.report.entries.iter().take(5) {
                eprintln!("  {entry}");
            }
        }
    }
    for g in summarize(&results) {
        let cell = |s: Option<bubbleflow::experiment::Stats>| s.map_or("-".into(), |s| format!("{:.2} ± {:.2}", s.mean, s.std));
        println!(
            "{:<6} mu={:<5} W_T={:<5} CPM {:<16} TCC {:<16} CPC {}",
            g.mode.to_string(),
            g.mu,
            g.w_t,
            cell(g.cpm),
            cell(g.tcc),
            cell(g.cpc)
        );
    }
    println!("wrote {}", summary.display());
    if e.strict && violations > 0 {
        eprintln!("strict mode: {violations} violation(s)");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn describe(label: &str, s: &ScheduleSolution) {
    println!("{label}: cost {:.9}", s.cost);
    for ((id, v), tau) in s.order.iter().zip(&s.vbar).zip(&s.tau) {
        println!("  bubble {:<4} vbar {:>10.6}  tau {:>10.6}", id.0, v, tau);
    }
}

fn cmd_verify(instance: &Path, cfg: Option<&Path>) -> Result<ExitCode> {
    let e = config::load(cfg)?;
    let text = fs::read_to_string(instance).with_context(|| format!("reading {}", instance.display()))?;
    let problem = ScheduleProblem::parse(&text, &e.params).with_context(|| format!("in {}", instance.display()))?;
    if problem.len() > ORACLE_LIMIT {
        bail!("instance has {} bubbles; brute force is limited to {ORACLE_LIMIT}", problem.len());
    }
    let (bnb, stats) = branch_and_bound_traced(&problem, |_| {}).context("branch and bound")?;
    let (brute, orders) = brute_force_counted(&problem).context("brute force")?;
    describe("branch and bound", &bnb);
    describe("brute force", &brute);
    let rel = (bnb.cost - brute.cost).abs() / bnb.cost.abs().max(brute.cost.abs()).max(1.0);
    let ok = rel <= 1e-9;
    println!("nodes: visited {} pruned {} leaves {}; brute force orders {orders}", stats.visited, stats.pruned, stats.leaves);
    println!("verdict: {}", if ok { "match" } else { "MISMATCH" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_print(e: &Experiment) -> Result<ExitCode> {
    print!("{}", toml::to_string(&e.params)?);
    let (d_nom, t_nom) = nominal_quantities(&e.params);
    println!();
    println!("# derived");
    println!("# D_nom = {d_nom:.6} m");
    println!("# T_nom = {t_nom:.6} s");
    println!("# T_iat = {:.6} s", inter_approach_bound(&e.params));
    println!("# exit zone needs {:.4} m", e.params.exit_zone_requirement());
    let modes: Vec<String> = e.modes.iter().map(Mode::to_string).collect();
    println!("# sweep: modes {} mus {:?} W_T {:?} seeds {:?} stop {}", modes.join(","), e.mus, e.wts, e.seeds, e.stop);
    let bad = validate_params(&e.params);
    if bad.is_empty() {
        println!("# parameters valid");
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &bad {
            println!("# {v}");
        }
        Ok(ExitCode::from(2))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { sweep, trace, strict, out } => resolve(sweep).and_then(|e| cmd_run(e, trace, strict, &out)),
        Cmd::VerifySchedule { instance, config } => cmd_verify(&instance, config.as_deref()),
        Cmd::PrintParams { sweep } => resolve(sweep).and_then(|e| cmd_print(&e)),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
