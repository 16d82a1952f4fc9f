//! Subspace clustering over a union of linear subspaces.
//!
//! The crate implements thresholding-based subspace clustering (TSC) in two
//! flavors, a fixed number of nearest neighbors per point and a per-point,
//! data-driven neighborhood size chosen by a projection-residual threshold,
//! plus an SSC-OMP baseline. All three feed the same graph and spectral
//! clustering backend.
//!
//! Module map:
//!
//! - [`numerics`]: pseudo-inverse, span residuals, principal angles, symmetric eigensolver.
//! - [`datagen`]: random subspace models and noisy point sets.
//! - [`neighbors`]: neighbor ranking and neighborhood-size selection.
//! - [`graph`]: adjacency assembly, components, diagnostics, kNN connectivity harness.
//! - [`spectral`]: normalized Laplacian, model-order estimation, embedding and k-means.
//! - [`baselines`]: orthogonal matching pursuit representations.
//! - [`eval`]: clustering error, subspace affinity, precondition reports.
//! - [`dataio`]: MNIST IDX parsing, digit sampling, result files.

pub mod baselines;
pub mod datagen;
pub mod dataio;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kmeans;
pub mod neighbors;
pub mod numerics;
pub mod rng;
pub mod spectral;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use numerics::RealMatrix;
