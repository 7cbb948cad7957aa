//! Feature selection as a quadratic unconstrained binary optimisation problem.
//!
//! The pipeline scores feature relevance and pairwise redundancy
//! ([`stats`]), turns them into a QUBO for a trade-off weight alpha
//! ([`qubo`]), minimises it with a pluggable backend ([`solver`]) and
//! bisects alpha until the minimiser selects the requested number of
//! features ([`alpha_search`]). [`selection`] puts this next to classical
//! top-k baselines and [`eval`] compares them with k-fold model evaluation.

// Index loops mirror the sums they implement; negated comparisons are
// deliberate so that NaN fails the check.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod eval;
pub mod qubo;
pub mod report;
pub mod seed;
pub mod solver;
pub mod stats;
pub mod alpha_search;
pub mod artifact;
pub mod cli;
pub mod selection;
pub mod synthetic;
