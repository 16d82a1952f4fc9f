//! SSC-OMP: sparse self-representation by orthogonal matching pursuit.
//!
//! Each point is greedily represented by the other points; the resulting
//! coefficients feed the same adjacency and spectral backend as TSC.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::neighbors::NeighborhoodResult;
use crate::numerics::{dot, norm2, OrthoBasis};
use crate::spectral::{cluster_representations, ClusteringResult, SpectralConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmpConfig {
    pub max_iters: usize,
    /// Stop once the residual norm is at or below this value.
    pub residual_tol: f64,
}

impl Default for OmpConfig {
    fn default() -> Self {
        OmpConfig {
            max_iters: 20,
            residual_tol: 1e-6,
        }
    }
}

impl OmpConfig {
    pub fn with_max_iters(max_iters: usize) -> Self {
        OmpConfig {
            max_iters,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("OMP needs at least one iteration"));
        }
        if self.residual_tol.is_nan() || self.residual_tol < 0.0 {
            return Err(Error::invalid("residual_tol must be ≥ 0"));
        }
        Ok(())
    }
}

/// Inner products of every point with point `s`.
fn gram_column(x: &Dataset, s: usize) -> Vec<f64> {
    let xs = x.point(s);
    (0..x.len()).map(|i| dot(x.point(i), xs)).collect()
}

fn check(x: &Dataset, cfg: &OmpConfig) -> Result<()> {
    cfg.validate()?;
    if x.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 points, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// OMP representation of point `j` over all other points.
pub fn omp_represent(x: &Dataset, j: usize, cfg: &OmpConfig) -> Result<NeighborhoodResult> {
    check(x, cfg)?;
    if j >= x.len() {
        return Err(Error::invalid(format!(
            "point index {j} out of range for {} points",
            x.len()
        )));
    }
    omp_core(x, j, cfg, |s| Cow::Owned(gram_column(x, s)))
}

/// OMP representations of every point, sharing one Gram matrix.
pub fn omp_all(x: &Dataset, cfg: &OmpConfig) -> Result<Vec<NeighborhoodResult>> {
    check(x, cfg)?;
    let n = x.len();
    let gram: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| gram_column(x, s)).collect();
    (0..n)
        .into_par_iter()
        .map(|j| omp_core(x, j, cfg, |s| Cow::Borrowed(gram[s].as_slice())))
        .collect()
}

/// Run OMP on every point, then graph assembly and spectral clustering.
pub fn run_omp_pipeline(
    x: &Dataset,
    omp_cfg: &OmpConfig,
    spec_cfg: &SpectralConfig,
) -> Result<ClusteringResult> {
    spec_cfg.validate()?;
    let reps = omp_all(x, omp_cfg).map_err(|e| e.in_stage("omp"))?;
    cluster_representations(x, &reps, spec_cfg)
}

fn omp_core<'a, F>(
    x: &Dataset,
    j: usize,
    cfg: &OmpConfig,
    gram_col: F,
) -> Result<NeighborhoodResult>
where
    F: Fn(usize) -> Cow<'a, [f64]>,
{
    let n = x.len();
    let max_iters = cfg.max_iters.min(n - 1);
    let xj = x.point(j);
    let target = gram_col(j);

    let mut basis = OrthoBasis::new(x.dim());
    let mut residual = xj.to_vec();
    let mut selected: Vec<usize> = Vec::new();
    let mut selected_cols: Vec<Cow<[f64]>> = Vec::new();
    let mut coefficients: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut in_support = vec![false; n];
    in_support[j] = true;

    while selected.len() < max_iters {
        // ⟨x_i, r⟩ = ⟨x_i, x_j⟩ − Σ_s c_s ⟨x_i, x_s⟩
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !in_support[i]) {
            let fitted: f64 = selected_cols
                .iter()
                .zip(&coefficients)
                .map(|(col, c)| c * col[i])
                .sum();
            let corr = (target[i] - fitted).abs();
            if best.is_none_or(|(_, b)| corr > b) {
                best = Some((i, corr));
            }
        }
        let Some((i, _)) = best else { break };
        if !basis.push(x.point(i)) {
            // Atom already in the span: the residual cannot shrink further.
            break;
        }
        let q = basis.last().expect("basis just grew");
        let c = dot(q, &residual);
        residual.iter_mut().zip(q).for_each(|(r, qv)| *r -= c * qv);

        in_support[i] = true;
        selected.push(i);
        selected_cols.push(gram_col(i));
        coefficients = basis.solve(xj).expect("support columns are independent");
        let res_norm = norm2(&residual);
        trace.push(res_norm);
        if res_norm <= cfg.residual_tol {
            break;
        }
    }

    if selected.is_empty() {
        return Err(Error::Numerical(format!(
            "OMP could not select any atom for point {j}"
        )));
    }
    Ok(NeighborhoodResult {
        point_index: j,
        q: selected.len(),
        selected,
        coefficients,
        residual_trace: trace,
        truncated: false,
    })
}
