//! Randomized pairwise block coordinate descent for
//!
//! ```text
//! minimize f(x) + h(x)   subject to   Σ_i A_i x_i = 0
//! ```
//!
//! Blocks are updated two at a time along the edges of a communication graph,
//! so every iterate stays feasible. The crate provides a sequential engine, a
//! stochastic engine for finite sums, and a shared-memory asynchronous engine.

pub mod engine_async;
pub mod engine_seq;
pub mod engine_stoch;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod pairsolve;
pub mod problems;
pub mod reduction;

pub use engine_async::{run_async, AsyncConfig, AsyncOutcome, AsyncStop, LockMode, StalenessStats};
pub use engine_seq::{
    feasible_start, run_algorithm1, SolverConfig, StepSchedule, StopReason, StopRule, Trace,
    TraceRecord, TraceSummary,
};
pub use engine_stoch::{run_algorithm2, theorem4_schedule, StochConfig, StochOutcome};
pub use error::{Error, Result};
pub use graph::{build_topology, CommGraph, EdgeSampler, Topology, Weighting};
pub use model::{
    BlockPartition, BlockTerm, ConstraintKind, Iterate, LinearConstraints, Objective, Problem,
    SeparableNonsmooth,
};
pub use pairsolve::{box_pair_update, prox_pair_update, smooth_pair_update, GramCache, PairUpdate};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/sequential.md")]
    mod sequential {}
    #[doc = include_str!("../../../book/src/stochastic.md")]
    mod stochastic {}
    #[doc = include_str!("../../../book/src/async.md")]
    mod async_workers {}
    #[doc = include_str!("../../../book/src/svm.md")]
    mod svm {}
    #[doc = include_str!("../../../book/src/reduction.md")]
    mod reduction {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
