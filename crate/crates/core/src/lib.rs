//! Location-routing toolkit for mobile parcel lockers.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`instance`]: generate or load a problem instance and assign every
//!    customer to its nearest reachable parking space.
//! 2. [`taskgen`]: tighten each parking space's availability, slice it into
//!    service-time sub-intervals, and bundle customers into tasks.
//! 3. [`routing`]: turn a task allocation and execution order into timed
//!    locker routes (with back-to-depot or hold-at-space adjustments) and
//!    score them.
//! 4. [`hqm`] / [`ga`] / [`oracle`]: search the allocation/sequence space with
//!    hybrid Q-learning, a genetic baseline, or exhaustive enumeration.
//!
//! [`bench`] drives the experiment grid and factor sweeps on top of these.

pub mod bench;
pub mod error;
pub mod ga;
pub mod hqm;
pub mod instance;
pub mod oracle;
pub mod par;
pub mod routing;
pub mod state;
pub mod taskgen;

pub use error::{Error, Result};
pub use instance::{Instance, Position, TimeWindow};
pub use routing::{AdjustmentPolicy, CostBreakdown, Evaluator, RoutePlan};
pub use state::{RunHistory, SearchState, SolveOutcome};
pub use taskgen::TaskPool;
