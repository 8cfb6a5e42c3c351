//! Bayesian relevance determination: Dirichlet-process mixtures over the
//! prior variances of per-gene effects, used to group candidate genes by
//! relevance, rank them, and select relevant subsets.
//!
//! The crate also carries the point-mass baseline model, the simulation
//! designs used to compare the two, and an AUC-based evaluation harness.

pub mod bdp;
pub mod chain;
pub mod cli;
pub mod data;
pub mod dpm;
pub mod evaluation;
pub mod io;
pub mod manifest;
pub mod model;
pub mod relevance;
pub mod rng;
pub mod simulation;
pub mod stats;

pub use data::{
    lognormal_quantile, validate_expression, ChainConfig, ChainState, DataError, ExpressionDataset, Hyperparameters,
    Partition, ZScoreDataset,
};
