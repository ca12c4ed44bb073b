//! Flat TOML experiment config. Parameter keys use the `Params` field names
//! or their short aliases; the remaining keys describe the sweep.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use bubbleflow::engine::{Mode, StopRule};
use bubbleflow::Params;
use serde_json::{Map, Value};

pub const PRESETS: &[&str] = &["paper-table1", "table1-formula"];

const ALIASES: &[(&str, &str)] = &[
    ("L", "vehicle_length"),
    ("Delta", "intersection_length"),
    ("L_s", "staging_len"),
    ("L_m", "mid_len"),
    ("L_e", "exit_len"),
    ("T_cs", "t_cs"),
    ("Nbar", "nbar"),
    ("Nbar_k", "nbar_k"),
    ("W_T", "w_t"),
    ("W_green", "green_time"),
    ("T_iat_override", "t_iat_override"),
];

const SWEEP_KEYS: &[&str] = &["preset", "modes", "mus", "wts", "seeds", "stop", "max_time", "strict", "trace"];

/// Reference parameter sets. `paper-table1` pins the inter-approach bound to the
/// tabulated 1.58 s; `table1-formula` computes it.
pub fn preset(name: &str) -> Result<Params> {
    match name {
        "paper-table1" => Ok(Params::comparison()),
        "table1-formula" => Ok(Params::table1()),
        _ => bail!("unknown preset '{name}' (expected one of {})", PRESETS.join(", ")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub params: Params,
    pub modes: Vec<Mode>,
    pub mus: Vec<f64>,
    pub wts: Vec<f64>,
    pub seeds: Vec<u64>,
    pub stop: StopRule,
    pub max_time: f64,
    pub strict: bool,
    pub trace: bool,
}

impl Experiment {
    pub fn from_params(params: Params) -> Self {
        Experiment {
            params,
            modes: vec![Mode::Hd, Mode::Signal],
            mus: vec![params.mu],
            wts: vec![params.w_t],
            seeds: (1..=10).collect(),
            stop: StopRule::Time(60.0),
            max_time: 1200.0,
            strict: false,
            trace: false,
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<Experiment> {
    match path {
        None => Ok(Experiment::from_params(preset("paper-table1")?)),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse(&text).with_context(|| format!("in config {}", p.display()))
        }
    }
}

fn canonical(key: &str) -> &str {
    ALIASES.iter().find(|(a, _)| *a == key).map_or(key, |(_, c)| c)
}

fn params_from(base: &Params, overrides: &Map<String, Value>) -> std::result::Result<Params, serde_json::Error> {
    let Value::Object(mut map) = serde_json::to_value(base)? else {
        unreachable!("Params serializes to a map")
    };
    map.extend(overrides.clone());
    serde_json::from_value(Value::Object(map))
}

pub fn parse(text: &str) -> Result<Experiment> {
    let table: toml::Table = text.parse().context("not valid TOML")?;
    let base = match table.get("preset") {
        None => preset("paper-table1")?,
        Some(v) => preset(v.as_str().ok_or_else(|| anyhow!("key 'preset': expected a string"))?)
            .context("key 'preset'")?,
    };

    let mut overrides = Map::new();
    for (key, value) in &table {
        if SWEEP_KEYS.contains(&key.as_str()) {
            continue;
        }
        let name = canonical(key);
        if overrides.contains_key(name) {
            bail!("key '{key}': '{name}' is already set under another name");
        }
        let v = match (name, value) {
            ("t_iat_override", toml::Value::String(s)) if s == "none" => Value::Null,
            _ => serde_json::to_value(value)?,
        };
        let one = Map::from_iter([(name.to_string(), v.clone())]);
        params_from(&base, &one).map_err(|e| anyhow!("key '{key}': {e}"))?;
        overrides.insert(name.to_string(), v);
    }
    let params = params_from(&base, &overrides)?;
    let mut exp = Experiment::from_params(params);

    for (key, value) in &table {
        let bad = |what: &str| anyhow!("key '{key}': expected {what}");
        match key.as_str() {
            "modes" => exp.modes = parse_modes(value.as_str().ok_or_else(|| bad("a string"))?)
                .map_err(|e| anyhow!("key 'modes': {e}"))?,
            "mus" => exp.mus = float_list(value).ok_or_else(|| bad("a list of positive numbers"))?,
            "wts" => exp.wts = float_list(value).ok_or_else(|| bad("a list of positive numbers"))?,
            "seeds" => {
                exp.seeds = match value {
                    toml::Value::String(s) => parse_seeds(s).map_err(|e| anyhow!("key 'seeds': {e}"))?,
                    toml::Value::Array(a) => a
                        .iter()
                        .map(|v| v.as_integer().and_then(|i| u64::try_from(i).ok()))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| bad("a list of non-negative integers or a range like \"1-10\""))?,
                    _ => return Err(bad("a list of non-negative integers or a range like \"1-10\"")),
                }
            }
            "stop" => {
                exp.stop = value
                    .as_str()
                    .ok_or_else(|| bad("a string"))?
                    .parse()
                    .map_err(|e| anyhow!("key 'stop': {e}"))?
            }
            "max_time" => {
                exp.max_time = number(value).filter(|t| *t > 0.0).ok_or_else(|| bad("a positive number"))?
            }
            "strict" => exp.strict = value.as_bool().ok_or_else(|| bad("true or false"))?,
            "trace" => exp.trace = value.as_bool().ok_or_else(|| bad("true or false"))?,
            _ => {}
        }
    }
    if !table.contains_key("mus") {
        exp.mus = vec![exp.params.mu];
    }
    if !table.contains_key("wts") {
        exp.wts = vec![exp.params.w_t];
    }
    Ok(exp)
}

fn number(v: &toml::Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

fn float_list(v: &toml::Value) -> Option<Vec<f64>> {
    let xs = match v {
        toml::Value::Array(a) => a.iter().map(number).collect::<Option<Vec<_>>>()?,
        other => vec![number(other)?],
    };
    (!xs.is_empty() && xs.iter().all(|x| *x > 0.0 && x.is_finite())).then_some(xs)
}

pub fn parse_modes(s: &str) -> Result<Vec<Mode>, String> {
    if s == "both" {
        return Ok(vec![Mode::Hd, Mode::Signal]);
    }
    s.split(',').map(|m| m.trim().parse()).collect()
}

pub fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    let xs: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<Result<_, _>>()?;
    if xs.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err("values must be positive".into());
    }
    Ok(xs)
}

/// `"1-10"`, `"3"` or `"1,4,9"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("'{t}' is not a seed"));
    if let Some((a, b)) = s.split_once('-') {
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(format!("empty seed range {s}"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(num).collect()
}
