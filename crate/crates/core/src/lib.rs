//! Scheduling of freight trains on a single-track corridor with sidings, plus
//! allocation of freight consignments to the scheduled trains.
//!
//! The corridor is a single bidirectional track divided into `n` segments by
//! `n + 1` stations. Departing trains traverse segments `1..=n` forward,
//! returning trains traverse them in reverse, and all interaction rules
//! (same-direction headways, opposing-direction exclusivity, station stop
//! times) reduce to a system of difference constraints once the pairwise
//! precedence decisions are fixed.
//!
//! The crate provides:
//! - [`model`]: domain types, instance validation and the ground-truth
//!   schedule validator;
//! - [`timing`]: the fixed-precedence timing engine (earliest event times,
//!   departure tightening, objective evaluation);
//! - [`exact`]: branch-and-bound over the precedence decisions and an exact
//!   freight-allocation search;
//! - [`alloc`]: freight-allocation semantics (tardiness, objective,
//!   feasibility checks);
//! - [`heuristic`]: a population heuristic that improves train sequences by
//!   partial reordering toward randomly chosen reference solutions, with an
//!   adjacent-swap local search;
//! - [`gen`]: seeded random instance generation;
//! - [`gantt`]: train-time and train-location chart rendering (SVG and text).

pub mod alloc;
pub mod exact;
pub mod gantt;
pub mod gen;
pub mod heuristic;
pub mod model;
pub mod timing;

pub use model::{
    Corridor, Direction, Freight, Instance, InstanceDefect, ObjectiveKind, Ordering, Schedule,
    Train, Violation, ViolationFamily,
};

/// Absolute tolerance for all time comparisons, in hours.
pub const TIME_EPS: f64 = 1e-9;

/// Errors surfaced by the library. Constraint breaches are *data* (defect and
/// violation lists), not errors; this enum covers contract breaches only.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("ordering is incomplete: {0}")]
    IncompleteOrdering(String),
    #[error("malformed schedule: {0}")]
    MalformedSchedule(String),
    #[error("infeasible input: {0}")]
    InfeasibleInput(String),
    #[error("schedule fails validation ({} violation(s)); first: {}", .0.len(), .0[0])]
    InfeasibleSchedule(Vec<model::Violation>),
}

pub type Result<T> = std::result::Result<T, Error>;
