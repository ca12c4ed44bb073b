//! Hierarchical-distributed coordination of automated vehicles at a
//! four-branch intersection.
//!
//! Vehicles entering the staging zone are clustered into bubbles, bubbles
//! are ordered through the intersection by a branch-and-bound scheduler, and
//! every vehicle tracks its assigned approach time with a local controller
//! that switches to safe following when it closes in on its predecessor.
//! A fixed-time signal is provided as a baseline.

pub mod baseline;
pub mod clustering;
pub mod control;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod kinematics;
pub mod model;
pub mod params;
pub mod scheduler;
pub mod trafficgen;

pub use error::{Error, Result};
pub use model::{Branch, Bubble, BubbleId, Leader, VehicleId, VehicleState};
pub use params::{validate_params, Params, Violation};
