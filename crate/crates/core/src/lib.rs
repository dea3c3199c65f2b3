//! Asynchronous LMO-based stochastic optimization with delay thresholding.
//!
//! The crate is organised bottom-up:
//!
//! * [`lmo`] – norm geometry: linear minimization oracles, dual norms and the
//!   norm-equivalence constant for blockwise parameter layouts.
//! * [`schedules`] – fixed and parameter-agnostic step-size / momentum /
//!   delay-threshold schedules and complexity reporters.
//! * [`optimizer`] – the server update rule with delay-threshold acceptance,
//!   plus the asynchronous baselines.
//! * [`problems`] – objective oracles (tridiagonal quadratic, matrix toy).
//! * [`sim`] – deterministic discrete-event simulator of the server/worker
//!   protocol under heterogeneous runtimes.
//! * [`timebounds`] – time-complexity calculators for the fixed and universal
//!   computation models and the simulator-vs-bound check.
//! * [`experiment`] – configuration, grids and run summaries shared with the CLI.

pub mod error;
pub mod experiment;
pub mod lmo;
pub mod optimizer;
pub mod problems;
pub mod schedules;
pub mod sim;
pub mod timebounds;
pub mod trace;

pub use error::{Error, Result};
pub use lmo::{BlockLayout, BlockShape, NormKind, NormSpec, ParamVector, SpectralBackend};
pub use optimizer::{MomentumRule, ServerState, UpdateDecision};
pub use problems::{MatrixToy, Problem, Quadratic};
pub use schedules::{AgnosticSchedule, AgnosticVariant, FixedSchedule, ProblemConstants, Schedule};
pub use sim::{Method, ProfileKind, Simulation, StopCondition, TraceRow, WorkerProfile};
pub use timebounds::{FixedTimes, RateFunctions};
