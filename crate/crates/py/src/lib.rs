//! Python bindings: parameters, the arrival-profile solver, the bubble
//! scheduler and whole simulations.

use bubbleflow::control;
use bubbleflow::engine::{self, Mode, SimConfig, StopRule, TraceMode};
use bubbleflow::kinematics::nominal_quantities;
use bubbleflow::scheduler::{self, occupancy_bound, ScheduleEntry, ScheduleProblem, ScheduleSolution};
use bubbleflow::{validate_params, Branch, BubbleId, Params};
use pyo3::exceptions::{PyAttributeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

const FIELDS: &[&str] = &[
    "vehicle_length",
    "intersection_length",
    "staging_len",
    "mid_len",
    "exit_len",
    "v_max",
    "u_max",
    "u_min",
    "nu_nom",
    "sigma0",
    "t_cs",
    "nbar",
    "nbar_k",
    "w_t",
    "mu",
    "green_time",
    "dt",
    "t_iat_override",
];

fn float_field<'a>(p: &'a mut Params, name: &str) -> Option<&'a mut f64> {
    Some(match name {
        "vehicle_length" => &mut p.vehicle_length,
        "intersection_length" => &mut p.intersection_length,
        "staging_len" => &mut p.staging_len,
        "mid_len" => &mut p.mid_len,
        "exit_len" => &mut p.exit_len,
        "v_max" => &mut p.v_max,
        "u_max" => &mut p.u_max,
        "u_min" => &mut p.u_min,
        "nu_nom" => &mut p.nu_nom,
        "sigma0" => &mut p.sigma0,
        "t_cs" => &mut p.t_cs,
        "w_t" => &mut p.w_t,
        "mu" => &mut p.mu,
        "green_time" => &mut p.green_time,
        "dt" => &mut p.dt,
        _ => return None,
    })
}

/// Intersection parameters. `PyParams("paper-table1", mu=0.2)` starts from
/// a preset and overrides fields by name.
#[pyclass(name = "Params", module = "bubbleflow_py", from_py_object)]
#[derive(Clone, Copy)]
pub struct PyParams {
    inner: Params,
}

impl PyParams {
    fn set(&mut self, name: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let p = &mut self.inner;
        match name {
            "nbar" => p.nbar = value.extract()?,
            "nbar_k" => p.nbar_k = value.extract()?,
            "t_iat_override" => p.t_iat_override = value.extract()?,
            _ => {
                let f = float_field(p, name).ok_or_else(|| PyAttributeError::new_err(format!("no parameter '{name}'")))?;
                *f = value.extract()?;
            }
        }
        Ok(())
    }
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (preset = "paper-table1", **overrides))]
    fn new(preset: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let inner = match preset {
            "paper-table1" => Params::comparison(),
            "table1-formula" => Params::table1(),
            _ => return Err(value_err(format!("unknown preset '{preset}'"))),
        };
        let mut out = PyParams { inner };
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                out.set(&k.extract::<String>()?, &v)?;
            }
        }
        Ok(out)
    }

    fn __getattr__(&self, py: Python<'_>, name: &str) -> PyResult<Py<PyAny>> {
        let mut p = self.inner;
        Ok(match name {
            "nbar" => p.nbar.into_pyobject(py)?.into_any().unbind(),
            "nbar_k" => p.nbar_k.into_pyobject(py)?.into_any().unbind(),
            "t_iat_override" => p.t_iat_override.into_pyobject(py)?.into_any().unbind(),
            _ => {
                let f = float_field(&mut p, name).ok_or_else(|| PyAttributeError::new_err(format!("no parameter '{name}'")))?;
                f.into_pyobject(py)?.into_any().unbind()
            }
        })
    }

    fn __setattr__(&mut self, name: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        self.set(name, value)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for name in FIELDS {
            d.set_item(name, self.__getattr__(py, name)?)?;
        }
        Ok(d)
    }

    /// Failed parameter checks as strings; empty when usable.
    fn validate(&self) -> Vec<String> {
        validate_params(&self.inner).iter().map(ToString::to_string).collect()
    }

    /// `(D_nom, T_nom)`.
    fn nominal(&self) -> (f64, f64) {
        nominal_quantities(&self.inner)
    }

    fn inter_approach_bound(&self) -> f64 {
        scheduler::inter_approach_bound(&self.inner)
    }

    fn occupancy_bound(&self, size: usize) -> f64 {
        occupancy_bound(size, &self.inner)
    }

    fn exit_zone_requirement(&self) -> f64 {
        self.inner.exit_zone_requirement()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Minimum-effort profile to the stop line: a dict with `segments`
/// (duration, accel) pairs, `arrival_speed` and `total_effort`, or None.
#[pyfunction]
fn solve_arrival_profile<'py>(
    py: Python<'py>,
    pos: f64,
    vel: f64,
    time_to_deadline: f64,
    params: PyParams,
) -> PyResult<Option<Bound<'py, PyDict>>> {
    let Some(prof) = control::solve_arrival_profile(pos, vel, time_to_deadline, &params.inner) else {
        return Ok(None);
    };
    let d = PyDict::new(py);
    let segs: Vec<(f64, f64)> = prof.segments.iter().map(|s| (s.duration, s.accel)).collect();
    d.set_item("segments", segs)?;
    d.set_item("arrival_speed", prof.arrival_speed)?;
    d.set_item("total_effort", prof.total_effort)?;
    Ok(Some(d))
}

/// Entries are `(id, branch, d, vbar_min, vbar_max, size)`; the occupancy
/// bound comes from the size.
fn problem(entries: Vec<(u64, u8, f64, f64, f64, usize)>, t_s: f64, tau_min: f64, p: &Params) -> PyResult<ScheduleProblem> {
    let bubbles = entries
        .into_iter()
        .map(|(id, branch, d, vbar_min, vbar_max, size)| {
            Ok(ScheduleEntry {
                id: BubbleId(id),
                branch: Branch::new(branch).ok_or_else(|| value_err(format!("branch must be 1..=4, got {branch}")))?,
                d,
                vbar_min,
                vbar_max,
                tau_occ: occupancy_bound(size, p),
                size,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    ScheduleProblem::from_params(t_s, tau_min, bubbles, p).map_err(value_err)
}

fn solution<'py>(py: Python<'py>, s: &ScheduleSolution) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("order", s.order.iter().map(|b| b.0).collect::<Vec<_>>())?;
    d.set_item("vbar", s.vbar.clone())?;
    d.set_item("tau", s.tau.clone())?;
    d.set_item("cost", s.cost)?;
    Ok(d)
}

/// Optimal crossing order by branch and bound.
#[pyfunction]
#[pyo3(signature = (entries, params, t_s = 0.0, tau_min = 0.0))]
fn schedule<'py>(
    py: Python<'py>,
    entries: Vec<(u64, u8, f64, f64, f64, usize)>,
    params: PyParams,
    t_s: f64,
    tau_min: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let pr = problem(entries, t_s, tau_min, &params.inner)?;
    let s = scheduler::branch_and_bound(&pr).map_err(value_err)?;
    solution(py, &s)
}

/// Exhaustive reference for [`schedule`], at most 8 bubbles.
#[pyfunction]
#[pyo3(signature = (entries, params, t_s = 0.0, tau_min = 0.0))]
fn brute_force_schedule<'py>(
    py: Python<'py>,
    entries: Vec<(u64, u8, f64, f64, f64, usize)>,
    params: PyParams,
    t_s: f64,
    tau_min: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let pr = problem(entries, t_s, tau_min, &params.inner)?;
    let s = scheduler::brute_force_schedule(&pr).map_err(value_err)?;
    solution(py, &s)
}

/// Runs one seeded simulation. `stop` is `"time:<s>"` or `"cars:<n>"`;
/// `trace` is `"off"`, `"hash"` or `"record"`.
#[pyfunction]
#[pyo3(signature = (params, mode = "hd", seed = 1, stop = "time:60", trace = "off", strict = false))]
fn run_simulation<'py>(
    py: Python<'py>,
    params: PyParams,
    mode: &str,
    seed: u64,
    stop: &str,
    trace: &str,
    strict: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mode: Mode = mode.parse().map_err(value_err)?;
    let stop: StopRule = stop.parse().map_err(value_err)?;
    let bad = validate_params(&params.inner);
    if !bad.is_empty() {
        return Err(value_err(format!("invalid parameters: {}", bad[0])));
    }
    let mut cfg = SimConfig::new(params.inner, mode, seed, stop);
    cfg.strict = strict;
    cfg.trace = match trace {
        "off" => TraceMode::Off,
        "hash" => TraceMode::Hash,
        "record" => TraceMode::Record,
        _ => return Err(value_err(format!("unknown trace mode '{trace}'"))),
    };
    let out = py.detach(|| engine::run_simulation(&cfg)).map_err(value_err)?;
    let m = &out.metrics;
    let d = PyDict::new(py);
    d.set_item("spawned", m.spawned)?;
    d.set_item("crossed", m.crossed)?;
    d.set_item("cpm", m.cpm)?;
    d.set_item("tcc", m.tcc)?;
    d.set_item("cpc", m.cpc)?;
    d.set_item("sim_time", m.sim_time)?;
    d.set_item("schedule_instances", m.schedule_instances)?;
    let recs = PyList::empty(py);
    for r in &m.records {
        let rd = PyDict::new(py);
        rd.set_item("id", r.id.0)?;
        rd.set_item("branch", r.branch.label())?;
        rd.set_item("bubble", r.bubble.map(|b| b.0))?;
        rd.set_item("t_spawn", r.t_spawn)?;
        rd.set_item("t_approach", r.t_approach)?;
        rd.set_item("t_exit", r.t_exit)?;
        rd.set_item("cost", r.cost)?;
        recs.append(rd)?;
    }
    d.set_item("records", recs)?;
    d.set_item("violations", out.report.entries.iter().map(ToString::to_string).collect::<Vec<_>>())?;
    d.set_item("trace_hash", out.trace_hash)?;
    d.set_item("trace", out.trace)?;
    d.set_item("aborted_at", out.aborted_at)?;
    Ok(d)
}

#[pymodule]
fn bubbleflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(solve_arrival_profile, m)?)?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(run_simulation, m)?)?;
    Ok(())
}
