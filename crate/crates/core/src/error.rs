use thiserror::Error;

use crate::model::{BubbleId, VehicleId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("saturation bounds inverted: lo = {lo} > hi = {hi}")]
    InvertedBounds { lo: f64, hi: f64 },

    #[error("acceleration {u} outside [{lo}, {hi}]")]
    AccelOutOfRange { u: f64, lo: f64, hi: f64 },

    #[error("unknown bubble {0:?}")]
    UnknownBubble(BubbleId),

    #[error("unknown vehicle {0:?}")]
    UnknownVehicle(VehicleId),

    #[error("k-means on an empty set of positions")]
    EmptyClusterInput,

    #[error("k-means asked for {clusters} clusters from {points} points")]
    TooManyClusters { clusters: usize, points: usize },

    #[error("bubble {0:?} left the schedule list without an assigned approach time")]
    UnscheduledDrop(BubbleId),

    #[error("{new} new bubbles exceed the schedule capacity {capacity}")]
    ScheduleCapacity { new: usize, capacity: usize },

    #[error("bubble {bubble:?} has an empty velocity window: vbar_max {vbar_max} < vbar_min {vbar_min}")]
    InfeasibleWindow {
        bubble: BubbleId,
        vbar_min: f64,
        vbar_max: f64,
    },

    #[error("no order of the {0} bubbles satisfies the velocity windows")]
    ScheduleInfeasible(usize),

    #[error("order is not a permutation respecting per-branch order")]
    InvalidOrder,

    #[error("schedule problem is empty")]
    EmptyProblem,

    #[error("brute force refuses {0} bubbles (limit {1})")]
    OracleTooLarge(usize, usize),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("monitor violation at t = {time:.3} s: {what}")]
    Monitor { time: f64, what: String },

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
