//! Semi-random union-of-subspaces model.
//!
//! Subspaces are fixed orthonormal bases that may share a common block of
//! columns, points are uniform on the unit sphere of their subspace, and
//! optional isotropic Gaussian noise is added before every point is
//! renormalized to unit length.

use log::warn;
use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{check_orthonormal, norm2, OrthoBasis, RealMatrix};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Ground-truth subspaces: one `m × d_ℓ` orthonormal basis per subspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceModel {
    pub ambient_dim: usize,
    pub bases: Vec<RealMatrix>,
    pub dims: Vec<usize>,
}

impl SubspaceModel {
    pub fn new(bases: Vec<RealMatrix>) -> Result<Self> {
        let ambient_dim = bases
            .first()
            .map(RealMatrix::rows)
            .ok_or_else(|| Error::invalid("a subspace model needs at least one basis"))?;
        for (l, b) in bases.iter().enumerate() {
            if b.rows() != ambient_dim {
                return Err(Error::invalid(format!(
                    "basis {l} has {} rows, expected {ambient_dim}",
                    b.rows()
                )));
            }
            if b.cols() > ambient_dim {
                return Err(Error::invalid(format!(
                    "basis {l} has more columns than rows"
                )));
            }
            check_orthonormal(b).map_err(|e| Error::invalid(format!("basis {l}: {e}")))?;
        }
        let dims = bases.iter().map(RealMatrix::cols).collect();
        Ok(SubspaceModel {
            ambient_dim,
            bases,
            dims,
        })
    }

    pub fn num_subspaces(&self) -> usize {
        self.bases.len()
    }
}

/// Parameters of the synthetic experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Ambient dimension.
    pub m: usize,
    /// Number of subspaces.
    pub num_subspaces: usize,
    /// Dimension of every subspace.
    pub d: usize,
    /// Leading basis columns shared by all subspaces.
    pub shared_dims: usize,
    pub n_per_subspace: usize,
    /// Total noise variance; each noise entry has variance `noise_var / m`.
    pub noise_var: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// Eight 30-dimensional subspaces of R^120 sharing a 10-dimensional block.
    fn default() -> Self {
        SynthConfig {
            m: 120,
            num_subspaces: 8,
            d: 30,
            shared_dims: 10,
            n_per_subspace: 105,
            noise_var: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_subspaces == 0 {
            return Err(Error::invalid("need at least one subspace"));
        }
        if self.d == 0 {
            return Err(Error::invalid("subspace dimension must be positive"));
        }
        if self.shared_dims > self.d {
            return Err(Error::invalid(format!(
                "shared dimension {} exceeds subspace dimension {}",
                self.shared_dims, self.d
            )));
        }
        if self.d > self.m {
            return Err(Error::invalid(format!(
                "subspace dimension {} exceeds ambient dimension {}",
                self.d, self.m
            )));
        }
        if !self.noise_var.is_finite() || self.noise_var < 0.0 {
            return Err(Error::invalid(format!(
                "noise variance {} is invalid",
                self.noise_var
            )));
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn fill_sphere(rng: &mut Rng, d: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(d * n);
    for _ in 0..n {
        loop {
            let g = gaussian_vec(rng, d);
            let norm = norm2(&g);
            if norm > 0.0 {
                out.extend(g.iter().map(|v| v / norm));
                break;
            }
        }
    }
    out
}

/// `n` i.i.d. points uniform on the unit sphere of R^d, as columns.
pub fn sample_uniform_sphere(d: usize, n: usize, seed: u64) -> Result<RealMatrix> {
    if d == 0 || n == 0 {
        return Err(Error::invalid(format!(
            "sphere sample needs d, n ≥ 1 (got d={d}, n={n})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    RealMatrix::from_column_major(d, n, fill_sphere(&mut rng, d, n))
}

/// Extend `basis` with Gram–Schmidt applied to Gaussian draws until it has
/// `target` columns.
fn extend_with_gaussians(basis: &mut OrthoBasis, rng: &mut Rng, m: usize, target: usize) {
    while basis.rank() < target {
        let g = gaussian_vec(rng, m);
        basis.push(&g);
    }
}

/// Random bases whose first `shared_dims` columns coincide.
pub fn make_subspaces(cfg: &SynthConfig) -> Result<SubspaceModel> {
    cfg.validate()?;
    let m = cfg.m;
    let mut shared_rng = rng_from_seed(derive_seed(cfg.seed, &[0]));
    let mut shared = OrthoBasis::new(m);
    extend_with_gaussians(&mut shared, &mut shared_rng, m, cfg.shared_dims);
    let shared = shared.to_matrix();

    let bases = (0..cfg.num_subspaces)
        .into_par_iter()
        .map(|l| {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, &[1, l as u64]));
            let mut basis = OrthoBasis::new(m);
            for k in 0..shared.cols() {
                basis.push_orthonormal(shared.column(k));
            }
            extend_with_gaussians(&mut basis, &mut rng, m, cfg.d);
            basis.to_matrix()
        })
        .collect();
    SubspaceModel::new(bases)
}

/// Draw `n_per[ℓ]` points from subspace ℓ, add `N(0, noise_var/m · I)`
/// noise and renormalize.
pub fn make_dataset(
    model: &SubspaceModel,
    n_per: &[usize],
    noise_var: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per.len() != model.num_subspaces() {
        return Err(Error::invalid(format!(
            "{} point counts for {} subspaces",
            n_per.len(),
            model.num_subspaces()
        )));
    }
    if let Some(l) = n_per.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("subspace {l} has no points")));
    }
    if !noise_var.is_finite() || noise_var < 0.0 {
        return Err(Error::invalid(format!(
            "noise variance {noise_var} is invalid"
        )));
    }
    let m = model.ambient_dim;
    let noise_sd = (noise_var / m as f64).sqrt();

    let blocks: Vec<Vec<f64>> = model
        .bases
        .par_iter()
        .zip(n_per.par_iter())
        .enumerate()
        .map(|(l, (basis, &n))| {
            let mut rng = rng_from_seed(derive_seed(seed, &[l as u64]));
            let d = basis.cols();
            let coeffs = DMatrix::from_vec(d, n, fill_sphere(&mut rng, d, n));
            let mut x = basis.as_dmatrix() * coeffs;
            if noise_var > 0.0 {
                for v in x.iter_mut() {
                    *v += noise_sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            x.as_slice().to_vec()
        })
        .collect();

    let total: usize = n_per.iter().sum();
    let data: Vec<f64> = blocks.into_iter().flatten().collect();
    let labels = n_per
        .iter()
        .enumerate()
        .flat_map(|(l, &n)| std::iter::repeat_n(l, n))
        .collect();
    let points = RealMatrix::from_column_major(m, total, data)?;
    let dataset = Dataset::new(points, Some(labels))?.normalized()?;
    if n_per.contains(&1) {
        warn!("a subspace has a single point; correct clustering is impossible for it");
    }
    dataset.warn_on_singletons();
    Ok(dataset)
}

/// Model and dataset for a full synthetic configuration, on independent
/// sub-seeds of `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> Result<(SubspaceModel, Dataset)> {
    let model = make_subspaces(&SynthConfig {
        seed: derive_seed(cfg.seed, &[0]),
        ..cfg.clone()
    })?;
    let n_per = vec![cfg.n_per_subspace; cfg.num_subspaces];
    let data = make_dataset(&model, &n_per, cfg.noise_var, derive_seed(cfg.seed, &[1]))?;
    Ok((model, data))
}
