//! Bubble-level scheduling: velocity windows, occupancy bounds, the
//! fixed-order optimum and branch and bound over orders.

mod bounds;
mod problem;
mod search;

pub use bounds::{
    bubble_velocity_window, coupling_coeffs, following_time, inter_approach_bound, occupancy_bound, VelocityWindow,
};
pub use problem::{FuelModel, ScheduleEntry, ScheduleProblem, ScheduleSolution};
pub use search::{
    branch_and_bound, branch_and_bound_traced, brute_force_counted, brute_force_schedule, enumerate_orders,
    subtree_lower_bound, velbound, velopt, velopt_ids, BnbNode, SearchStats, ORACLE_LIMIT,
};
