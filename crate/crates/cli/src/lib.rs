//! Experiment runner for the `unionclust` subspace-clustering library.

pub mod cli;
pub mod experiment;
