use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bubbleflow")).args(args).current_dir(cwd).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn run_writes_trial_and_aggregate_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["run", "--mode", "both", "--mu", "0.5", "--seeds", "1-10", "--stop", "time:60", "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("res/summary.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "mode,mu,W_T,seed,stop_mode,CPM,TCC,CPC,crossed,violations");
    assert_eq!(lines.len(), 1 + 20 + 2);
    assert_eq!(lines.iter().filter(|l| l.contains(",aggregate,")).count(), 2);
    assert!(dir.path().join("res/ratios.csv").exists());
}

#[test]
fn car_cap_fills_tcc() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["run", "--mode", "hd", "--seeds", "1-2", "--stop", "cars:10", "--out", "."], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    for row in csv.lines().skip(1) {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[4], "cars:10");
        assert!(!cells[6].is_empty(), "{row}");
    }
    // One mode only: nothing to compare.
    assert!(!dir.path().join("ratios.csv").exists());
}

#[test]
fn sweep_over_weights_and_densities_gives_ratio_table() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run", "--mu", "0.5,1", "--wt", "0.1,10", "--seeds", "1-2", "--stop", "time:20", "--out", "."];
    let out = bin(&args, dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let ratios = fs::read_to_string(dir.path().join("ratios.csv")).unwrap();
    assert_eq!(ratios.lines().count(), 1 + 4);
}

#[test]
fn trace_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["run", "--mode", "hd", "--seeds", "3", "--stop", "time:10", "--trace", "--out", "."], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("traces/hd_mu0.5_wt1_seed3.jsonl")).unwrap();
    let first = trace.lines().next().unwrap();
    for key in ["\"t\"", "\"id\"", "\"pos\"", "\"mode\""] {
        assert!(first.contains(key), "{first}");
    }
}

#[test]
fn strict_run_with_violations_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tight.toml"), "T_iat_override = 0.3\nmodes = \"hd\"\nseeds = [1]\n").unwrap();
    let out = bin(&["run", "--config", "tight.toml", "--strict", "--out", "."], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("violation"));
    // Without --strict the same run is only reported.
    let out = bin(&["run", "--config", "tight.toml", "--stop", "time:20", "--out", "."], dir.path());
    assert!(out.status.success());
}

#[test]
fn invalid_parameters_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("short.toml"), "L_e = 50\n").unwrap();
    let out = bin(&["run", "--config", "short.toml", "--out", "."], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("L_e >="));
    assert!(!dir.path().join("summary.csv").exists());
}

#[test]
fn bad_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "u_max = 3.0\nsigma0 = \"high\"\n").unwrap();
    let out = bin(&["print-params", "--config", "c.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("'sigma0'"), "{}", text(&out.stderr));
}

#[test]
fn print_params_shows_derived_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["print-params"], dir.path());
    assert!(out.status.success());
    let s = text(&out.stdout);
    assert!(s.contains("T_nom = 1.237500 s"));
    assert!(s.contains("t_iat_override = 1.58"));
    assert!(s.contains("parameters valid"));
}

const INSTANCE: &str = "\
# t_s tau_min
0 0
1 1 120 0 13 1.58 1
2 2 90 0 14 3.16 2
3 1 160 0 12 1.58 1
4 3 100 4 15 1.58 1
";

#[test]
fn verify_schedule_matches() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("i.txt"), INSTANCE).unwrap();
    let out = bin(&["verify-schedule", "i.txt"], dir.path());
    let s = text(&out.stdout);
    assert!(out.status.success(), "{s}{}", text(&out.stderr));
    assert!(s.contains("verdict: match"));
    assert!(s.contains("brute force orders"));
}

#[test]
fn verify_single_bubble_runs_at_its_limit() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("one.txt"), "0 0\n7 2 100 0 12.5 1.58 1\n").unwrap();
    let out = bin(&["verify-schedule", "one.txt"], dir.path());
    let s = text(&out.stdout);
    assert!(s.contains("verdict: match"));
    assert!(s.contains("bubble 7    vbar  12.500000"), "{s}");
}

#[test]
fn verify_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "0 0\n1 1 100 0 12 1.58 1\n2 1 abc 0 12 1.58 1\n").unwrap();
    let out = bin(&["verify-schedule", "bad.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("line 3"), "{}", text(&out.stderr));

    let mut big = String::from("0 0\n");
    for i in 0..9 {
        big.push_str(&format!("{i} {} {} 0 12 1.58 1\n", i % 4 + 1, 80 + 10 * i));
    }
    fs::write(dir.path().join("big.txt"), big).unwrap();
    let out = bin(&["verify-schedule", "big.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("limited to 8"));
}
