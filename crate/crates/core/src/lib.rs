//! Finite Bayesian Markov decision processes at desk scale: exact minimum
//! Bayesian regret, exact Thompson sampling values, and numerical
//! verification of information-theoretic regret bounds.
//!
//! The commonly used types are re-exported at the crate root; the modules
//! group the functionality:
//!
//! - [`prob`]: finite distributions, joint tables, seeded sampling;
//! - [`env`]: environment descriptions and forward simulation;
//! - [`inference`]: exact posteriors, history-tree enumeration, conditional
//!   laws;
//! - [`planning`]: known-parameter, history-feedback, knowledge-channel,
//!   and processed-channel optima, plus Thompson sampling;
//! - [`info`]: entropy, divergences, mutual information, Wasserstein-1;
//! - [`bounds`]: the regret bounds evaluated cell-exactly;
//! - [`report`]: verdict assembly and JSON/CSV serialization;
//! - [`gen`] and [`suites`]: seeded instance generation and the randomized
//!   verification suites.

pub mod bounds;
pub mod env;
pub mod gen;
pub mod inference;
pub mod info;
pub mod instance;
pub mod planning;
pub mod prob;
pub mod report;
pub mod suites;

pub use bounds::{BoundConfig, BoundContext, BoundError, BoundValue, OptimalActionLaw};
pub use env::{
    BoundedRewardCertificate, EnvironmentSpec, History, Instance, PartialFeedbackSpec, StepRecord,
};
pub use inference::{HistoryNode, HistoryTree, LawQuery, Posterior, TreePolicy};
pub use info::{Coupling, FiniteMetric, KlValue};
pub use planning::{
    InfoKey, InformationKind, KnowledgeKernelSpec, PolicyTable, ProcessingKernelSpec, ValueReport,
};
pub use prob::{FiniteDistribution, JointTable, RandomSource};
pub use report::{BoundEntry, BoundReport};

#[cfg(test)]
pub(crate) mod testutil;
