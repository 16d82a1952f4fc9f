//! Neighbor ranking and neighborhood selection.
//!
//! Neighbors of a point are ranked by absolute correlation, which orders them
//! by the spherical pseudo-distance `arccos |⟨x_j, x_i⟩|`. In modified mode
//! the neighborhood of `x_j` grows one neighbor at a time until the distance
//! from `x_j` to the span of its neighbors drops to the threshold τ; the
//! fixed mode takes the first `q` neighbors of every point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{dot, least_squares, norm2, OrthoBasis};

/// Default floor applied to τ; residuals at or below it count as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TscMode {
    /// Smallest neighborhood whose span approximates the point within `tau`.
    Modified { tau: f64 },
    /// The same number of neighbors for every point.
    FixedQ { q: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TscConfig {
    pub mode: TscMode,
    /// Largest neighborhood scanned in modified mode; defaults to `min(m, N − 1)`.
    pub q_max: Option<usize>,
    pub zero_tol: f64,
}

impl TscConfig {
    pub fn modified(tau: f64) -> Self {
        TscConfig {
            mode: TscMode::Modified { tau },
            q_max: None,
            zero_tol: DEFAULT_ZERO_TOL,
        }
    }

    pub fn fixed(q: usize) -> Self {
        TscConfig {
            mode: TscMode::FixedQ { q },
            q_max: None,
            zero_tol: DEFAULT_ZERO_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            TscMode::Modified { tau } if !tau.is_finite() || tau < 0.0 => Err(Error::invalid(
                format!("tau must be a finite value ≥ 0, got {tau}"),
            )),
            TscMode::FixedQ { q: 0 } => Err(Error::invalid("q must be at least 1")),
            _ if self.zero_tol.is_nan() || self.zero_tol < 0.0 => {
                Err(Error::invalid("zero_tol must be ≥ 0"))
            }
            _ if self.q_max == Some(0) => Err(Error::invalid("q_max must be at least 1")),
            _ => Ok(()),
        }
    }

    fn resolved_q_max(&self, m: usize, n: usize) -> Result<usize> {
        let q_max = self.q_max.unwrap_or_else(|| m.min(n - 1).max(1));
        if q_max > n - 1 {
            return Err(Error::invalid(format!(
                "q_max = {q_max} exceeds the {} available neighbors",
                n - 1
            )));
        }
        Ok(q_max)
    }
}

/// Selected neighborhood of one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodResult {
    pub point_index: usize,
    /// Neighbor indices, nearest first.
    pub selected: Vec<usize>,
    pub q: usize,
    /// Least-squares coefficients of the point against `selected`, same order.
    pub coefficients: Vec<f64>,
    /// Distance to the span of the first `q` neighbors, for `q = 1..=self.q`.
    pub residual_trace: Vec<f64>,
    /// The threshold was never met within `q_max` neighbors.
    pub truncated: bool,
}

/// Absolute correlations `|⟨x_j, x_i⟩|` for all `i`.
pub(crate) fn abs_correlations(x: &Dataset, j: usize) -> Vec<f64> {
    let xj = x.point(j);
    (0..x.len()).map(|i| dot(xj, x.point(i)).abs()).collect()
}

/// Indices other than `j`, by descending correlation then ascending index.
pub(crate) fn order_by_correlation(corr: &[f64], j: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..corr.len()).filter(|&i| i != j).collect();
    order.sort_by(|&a, &b| corr[b].total_cmp(&corr[a]).then(a.cmp(&b)));
    order
}

fn check_point(x: &Dataset, j: usize) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 points, got {}",
            x.len()
        )));
    }
    if j >= x.len() {
        return Err(Error::invalid(format!(
            "point index {j} out of range for {} points",
            x.len()
        )));
    }
    Ok(())
}

/// All other points, nearest first under the spherical pseudo-distance.
pub fn rank_neighbors(x: &Dataset, j: usize) -> Result<Vec<usize>> {
    check_point(x, j)?;
    x.require_normalized()?;
    Ok(order_by_correlation(&abs_correlations(x, j), j))
}

/// Neighborhood of point `j` under `cfg`.
pub fn select_neighborhood(x: &Dataset, j: usize, cfg: &TscConfig) -> Result<NeighborhoodResult> {
    cfg.validate()?;
    let order = rank_neighbors(x, j)?;
    select_with_order(x, j, &order, cfg)
}

/// Neighborhoods of every point, computed in parallel.
pub fn select_all(x: &Dataset, cfg: &TscConfig) -> Result<Vec<NeighborhoodResult>> {
    cfg.validate()?;
    check_point(x, 0)?;
    x.require_normalized()?;
    (0..x.len())
        .into_par_iter()
        .map(|j| {
            let order = order_by_correlation(&abs_correlations(x, j), j);
            select_with_order(x, j, &order, cfg)
        })
        .collect()
}

/// Least-squares fit of `x_j` on the selected columns, reusing the growing
/// factorization when it has full column rank.
fn fit_coefficients(
    x: &Dataset,
    j: usize,
    selected: &[usize],
    basis: &OrthoBasis,
) -> Result<Vec<f64>> {
    match basis.solve(x.point(j)) {
        Some(c) => Ok(c),
        None => least_squares(&x.points.select_columns(selected), x.point(j)),
    }
}

pub(crate) fn select_with_order(
    x: &Dataset,
    j: usize,
    order: &[usize],
    cfg: &TscConfig,
) -> Result<NeighborhoodResult> {
    let n = x.len();
    let xj = x.point(j);
    let mut basis = OrthoBasis::new(x.dim());
    // Component of x_j orthogonal to the current basis.
    let mut residual = xj.to_vec();
    let mut trace = Vec::new();

    let mut grow = |i: usize, basis: &mut OrthoBasis, trace: &mut Vec<f64>| {
        if basis.push(x.point(i)) {
            let q = basis.last().expect("basis just grew");
            let c = dot(q, &residual);
            residual.iter_mut().zip(q).for_each(|(r, qv)| *r -= c * qv);
        }
        trace.push(norm2(&residual));
    };

    let (q, truncated) = match cfg.mode {
        TscMode::Modified { tau } => {
            let q_max = cfg.resolved_q_max(x.dim(), n)?;
            let tau_eff = tau.max(cfg.zero_tol);
            let mut hit = None;
            for (k, &i) in order.iter().take(q_max).enumerate() {
                grow(i, &mut basis, &mut trace);
                if trace[k] <= tau_eff {
                    hit = Some(k + 1);
                    break;
                }
            }
            match hit {
                Some(q) => (q, false),
                None => (q_max, true),
            }
        }
        TscMode::FixedQ { q } => {
            if q > n - 1 {
                return Err(Error::invalid(format!(
                    "q = {q} exceeds the {} available neighbors",
                    n - 1
                )));
            }
            for &i in &order[..q] {
                grow(i, &mut basis, &mut trace);
            }
            (q, false)
        }
    };

    let selected = order[..q].to_vec();
    let coefficients = fit_coefficients(x, j, &selected, &basis)?;
    Ok(NeighborhoodResult {
        point_index: j,
        selected,
        q,
        coefficients,
        residual_trace: trace,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RealMatrix;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn dataset(cols: &[Vec<f64>]) -> Dataset {
        Dataset::new(RealMatrix::from_columns(cols).unwrap(), None).unwrap()
    }

    #[test]
    fn ranking_by_absolute_correlation() {
        let x = dataset(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2],
        ]);
        assert_eq!(rank_neighbors(&x, 0).unwrap(), vec![2, 1]);
    }

    #[test]
    fn duplicates_and_antipodes_rank_first() {
        let x = dataset(&[
            vec![0.6, 0.8, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.6, 0.8, 0.0],
            vec![-0.6, -0.8, 0.0],
        ]);
        // Both the duplicate (2) and the antipode (3) have correlation 1;
        // ties go to the lower index.
        assert_eq!(rank_neighbors(&x, 0).unwrap(), vec![2, 3, 1]);
    }

    #[test]
    fn ranking_errors() {
        let one = dataset(&[vec![1.0, 0.0]]);
        assert!(rank_neighbors(&one, 0).is_err());
        let two = dataset(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(rank_neighbors(&two, 2).is_err());
        let unnormalized = dataset(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        assert!(rank_neighbors(&unnormalized, 0).is_err());
    }

    #[test]
    fn duplicate_gives_one_sparse_representation() {
        let x = dataset(&[
            vec![0.6, 0.8, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.6, 0.8, 0.0],
        ]);
        let r = select_neighborhood(&x, 0, &TscConfig::modified(0.0)).unwrap();
        assert_eq!(r.q, 1);
        assert_eq!(r.selected, vec![2]);
        assert_abs_diff_eq!(r.coefficients[0].abs(), 1.0, epsilon = 1e-15);
        assert_eq!(r.residual_trace, vec![0.0]);
        assert!(!r.truncated);
    }

    #[test]
    fn planar_residual_trace() {
        let (a, b) = (10f64.to_radians(), 80f64.to_radians());
        let x = dataset(&[
            vec![1.0, 0.0],
            vec![a.cos(), a.sin()],
            vec![b.cos(), b.sin()],
        ]);
        let r = select_neighborhood(&x, 0, &TscConfig::modified(0.1)).unwrap();
        assert_eq!(r.q, 2);
        assert_eq!(r.selected, vec![1, 2]);
        assert_abs_diff_eq!(r.residual_trace[0], a.sin(), epsilon = 1e-14);
        assert!(r.residual_trace[1] <= 1e-15);
        // x_0 = c_1 x_1 + c_2 x_2 solved by hand: sin(80°)/sin(70°), −sin(10°)/sin(70°).
        let s70 = 70f64.to_radians().sin();
        assert_abs_diff_eq!(r.coefficients[0], b.sin() / s70, epsilon = 1e-12);
        assert_abs_diff_eq!(r.coefficients[1], -a.sin() / s70, epsilon = 1e-12);
    }

    #[test]
    fn truncation_sets_flag() {
        let x = dataset(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let cfg = TscConfig {
            q_max: Some(2),
            ..TscConfig::modified(0.0)
        };
        let r = select_neighborhood(&x, 0, &cfg).unwrap();
        assert!(r.truncated);
        assert_eq!(r.q, 2);
        assert_eq!(r.residual_trace, vec![1.0, 1.0]);
    }

    #[test]
    fn fixed_mode_takes_first_q() {
        let x = dataset(&[
            vec![1.0, 0.0, 0.0],
            vec![0.8, 0.6, 0.0],
            vec![0.0, 0.6, 0.8],
            vec![0.0, 0.0, 1.0],
        ]);
        let r = select_neighborhood(&x, 0, &TscConfig::fixed(2)).unwrap();
        assert_eq!(r.selected, vec![1, 2]);
        assert_eq!(r.coefficients.len(), 2);
        assert!(select_neighborhood(&x, 0, &TscConfig::fixed(4)).is_err());
        assert!(select_neighborhood(&x, 0, &TscConfig::fixed(0)).is_err());
        assert!(select_neighborhood(&x, 0, &TscConfig::modified(-1.0)).is_err());
    }

    #[test]
    fn select_all_matches_single_point_selection() {
        let cols: Vec<Vec<f64>> = (0..7)
            .map(|k| {
                let t = 0.4 * k as f64 + 0.1;
                let v = vec![t.cos(), t.sin(), 0.3 * (k as f64 - 3.0)];
                let n = norm2(&v);
                v.iter().map(|c| c / n).collect()
            })
            .collect();
        let x = dataset(&cols);
        let cfg = TscConfig::modified(0.05);
        let all = select_all(&x, &cfg).unwrap();
        for (j, r) in all.iter().enumerate() {
            assert_eq!(r, &select_neighborhood(&x, j, &cfg).unwrap());
        }
    }
}
