use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Branch, BubbleId};
use crate::params::Params;

/// Affine per-vehicle fuel proxy `F(v̄) = f0 + f1 (v_max − v̄)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelModel {
    pub f0: f64,
    pub f1: f64,
}

impl Default for FuelModel {
    fn default() -> Self {
        FuelModel { f0: 1.0, f1: 0.1 }
    }
}

/// One bubble as seen by the scheduler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub id: BubbleId,
    pub branch: Branch,
    /// Distance of the lead vehicle to the stop line at `t_s`.
    pub d: f64,
    pub vbar_min: f64,
    pub vbar_max: f64,
    pub tau_occ: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleProblem {
    pub t_s: f64,
    pub tau_min: f64,
    /// Grouped by branch and ordered by increasing `d` within each branch.
    pub bubbles: Vec<ScheduleEntry>,
    pub fuel: FuelModel,
    pub w_t: f64,
    pub v_max: f64,
    /// Indices into `bubbles`, one queue per branch, front first.
    pub queues: [Vec<usize>; 4],
}

impl ScheduleProblem {
    /// Sorts the entries, builds the branch queues and folds `tau_min` into
    /// every upper velocity bound.
    pub fn new(
        t_s: f64,
        tau_min: f64,
        mut bubbles: Vec<ScheduleEntry>,
        fuel: FuelModel,
        w_t: f64,
        v_max: f64,
    ) -> Result<Self> {
        if bubbles.is_empty() {
            return Err(Error::EmptyProblem);
        }
        bubbles.sort_by(|a, b| a.branch.cmp(&b.branch).then(a.d.total_cmp(&b.d)).then(a.id.cmp(&b.id)));
        for b in &mut bubbles {
            if !(b.d > 0.0) {
                return Err(Error::InvalidParams(format!("bubble {:?} has d = {} <= 0", b.id, b.d)));
            }
            if tau_min > t_s {
                b.vbar_max = b.vbar_max.min(b.d / (tau_min - t_s));
            }
        }
        let mut queues: [Vec<usize>; 4] = Default::default();
        for (i, b) in bubbles.iter().enumerate() {
            queues[b.branch.index()].push(i);
        }
        Ok(ScheduleProblem { t_s, tau_min, bubbles, fuel, w_t, v_max, queues })
    }

    pub fn from_params(t_s: f64, tau_min: f64, bubbles: Vec<ScheduleEntry>, p: &Params) -> Result<Self> {
        Self::new(t_s, tau_min, bubbles, FuelModel::default(), p.w_t, p.v_max)
    }

    pub fn len(&self) -> usize {
        self.bubbles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bubbles.is_empty()
    }

    /// Cost of bubble `i` crossing at average velocity `v`; decreasing in `v`.
    #[inline]
    pub fn phi(&self, i: usize, v: f64) -> f64 {
        let b = &self.bubbles[i];
        b.size as f64 * (self.w_t * b.d / v + self.fuel.f0 + self.fuel.f1 * (self.v_max - v))
    }

    /// Largest average velocity of `i` compatible with following `q` through
    /// the intersection when `q` travels at `vq`.
    #[inline]
    pub fn chain(&self, q: usize, vq: f64, i: usize) -> f64 {
        let (bq, bi) = (&self.bubbles[q], &self.bubbles[i]);
        let (c, b) = super::coupling_coeffs(bq.d, bi.d, bq.tau_occ);
        bi.vbar_max.min(vq / (c + b * vq))
    }

    pub fn index_of(&self, id: BubbleId) -> Option<usize> {
        self.bubbles.iter().position(|b| b.id == id)
    }

    /// Parses the line-oriented instance format. The header line holds
    /// `t_s tau_min`, every other line `id branch d vbar_min vbar_max tau_occ size`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str, p: &Params) -> Result<Self> {
        let mut header = None;
        let mut bubbles = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = s.split_whitespace().collect();
            let err = |msg: String| Error::Parse { line, msg };
            let num = |t: &str, what: &str| -> Result<f64> {
                t.parse::<f64>().map_err(|_| err(format!("{what}: cannot parse '{t}' as a number")))
            };
            if header.is_none() {
                if toks.len() != 2 {
                    return Err(err(format!("expected header 't_s tau_min', found {} fields", toks.len())));
                }
                header = Some((num(toks[0], "t_s")?, num(toks[1], "tau_min")?));
                continue;
            }
            if toks.len() != 7 {
                return Err(err(format!(
                    "expected 'id branch d vbar_min vbar_max tau_occ size', found {} fields",
                    toks.len()
                )));
            }
            let id = toks[0].parse::<u64>().map_err(|_| err(format!("id: cannot parse '{}'", toks[0])))?;
            let branch = toks[1]
                .parse::<u8>()
                .ok()
                .and_then(Branch::new)
                .ok_or_else(|| err(format!("branch must be 1..=4, found '{}'", toks[1])))?;
            let size = toks[6].parse::<usize>().ok().filter(|&m| m >= 1);
            let size = size.ok_or_else(|| err(format!("size must be a positive integer, found '{}'", toks[6])))?;
            let entry = ScheduleEntry {
                id: BubbleId(id),
                branch,
                d: num(toks[2], "d")?,
                vbar_min: num(toks[3], "vbar_min")?,
                vbar_max: num(toks[4], "vbar_max")?,
                tau_occ: num(toks[5], "tau_occ")?,
                size,
            };
            if !(entry.d > 0.0) {
                return Err(err(format!("d must be positive, found {}", entry.d)));
            }
            if !(entry.vbar_max > 0.0) || entry.vbar_min < 0.0 || entry.vbar_min > entry.vbar_max {
                return Err(err(format!(
                    "need 0 <= vbar_min <= vbar_max and vbar_max > 0, found {} and {}",
                    entry.vbar_min, entry.vbar_max
                )));
            }
            if bubbles.iter().any(|b: &ScheduleEntry| b.id == entry.id) {
                return Err(err(format!("duplicate bubble id {id}")));
            }
            bubbles.push(entry);
        }
        let (t_s, tau_min) = header.ok_or(Error::Parse { line: 0, msg: "missing header line".into() })?;
        Self::from_params(t_s, tau_min, bubbles, p)
    }

    /// Renders the problem in the format accepted by [`ScheduleProblem::parse`].
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.t_s, self.tau_min);
        for b in &self.bubbles {
            s.push_str(&format!(
                "{} {} {} {} {} {} {}\n",
                b.id.0,
                b.branch.label(),
                b.d,
                b.vbar_min,
                b.vbar_max,
                b.tau_occ,
                b.size
            ));
        }
        s
    }
}

/// An order of all bubbles with its velocities, approach times and cost.
/// `vbar` and `tau` are aligned with `order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    pub order: Vec<BubbleId>,
    pub vbar: Vec<f64>,
    pub tau: Vec<f64>,
    pub cost: f64,
    /// False when some chained velocity fell below its lower bound; `cost`
    /// is then +∞.
    pub feasible: bool,
}

impl ScheduleSolution {
    pub fn tau_of(&self, id: BubbleId) -> Option<f64> {
        self.order.iter().position(|&b| b == id).map(|h| self.tau[h])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let p = Params::comparison();
        let text = "# demo\n0 0\n\n1 1 100 0 15 5 2\n2 2 150 0 14 5 1\n";
        let prob = ScheduleProblem::parse(text, &p).unwrap();
        assert_eq!(prob.len(), 2);
        assert_eq!(prob.queues[0], vec![0]);
        assert_eq!(prob.queues[1], vec![1]);
        let again = ScheduleProblem::parse(&prob.to_text(), &p).unwrap();
        assert_eq!(prob, again);
    }

    #[test]
    fn parse_errors_name_line() {
        let p = Params::comparison();
        let err = ScheduleProblem::parse("0 0\n1 1 100 0 15 5 2\n2 9 150 0 14 5 1\n", &p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = ScheduleProblem::parse("0 0\n1 1 abc 0 15 5 2\n", &p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = ScheduleProblem::parse("0 0\n1 1 100 0 15\n", &p).unwrap_err();
        assert!(err.to_string().starts_with("line 2:"));
    }

    #[test]
    fn tau_min_folds_into_caps() {
        let p = Params::comparison();
        let prob = ScheduleProblem::parse("0 10\n1 1 100 0 15 5 1\n", &p).unwrap();
        assert_eq!(prob.bubbles[0].vbar_max, 10.0);
    }

    #[test]
    fn phi_is_decreasing() {
        let p = Params::comparison();
        let prob = ScheduleProblem::parse("0 0\n1 1 100 0 15 5 3\n", &p).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..=160 {
            let v = k as f64 * 0.1;
            let c = prob.phi(0, v);
            assert!(c < last);
            last = c;
        }
    }
}
