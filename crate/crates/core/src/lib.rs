//! Hierarchical credit attribution for routed multi-component systems.
//!
//! A tree of routers sends each request to one leaf component; the outcome
//! is propagated back up the path and each router shifts probability mass
//! toward children that keep succeeding. Path products of the learned
//! weights give a per-component attribution, which can be compared against
//! Shapley values and win-rate baselines.

pub mod attribution;
pub mod baselines;
pub mod dataio;
pub mod error;
pub mod hierarchy;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod scenarios;
pub mod substrate;

pub use attribution::{
    equilibrium_weights, leaf_attribution, level_attribution, property_suite, AttributionResult, EquilibriumResult,
    PropertyReport,
};
pub use error::{Error, Result};
pub use hierarchy::{HierarchySpec, NodeId, QualityVector, SpecNode, Step, Tree, WeightState};
pub use matrix::PassMatrix;
pub use metrics::{kendall_tau, CellDiagnostic, DiagnosticRow, PruningReport, RankComparison};
pub use substrate::{OutcomeProvider, RunOptions, RunOutput, SubstrateConfig, TraceRetention};
