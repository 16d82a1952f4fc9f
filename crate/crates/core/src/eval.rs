//! Evaluation: clustering error, subspace affinity, and a precondition
//! report for the exact-recovery guarantee of modified TSC.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::datagen::SubspaceModel;
use crate::error::{Error, Result};
use crate::numerics::{check_orthonormal, principal_cosines, RealMatrix};

/// Minimum-cost perfect matching on a square cost matrix (row-major).
///
/// Returns `assignment[row] = col`. Shortest augmenting paths with vertex
/// potentials, `O(n³)`.
pub fn hungarian_min(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n × n");
    if n == 0 {
        return Vec::new();
    }
    // 1-based internals; column 0 is a virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = row_of_col[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[(r - 1) * n + (col - 1)] - u[r] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            row_of_col[col0] = row_of_col[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        assignment[row_of_col[col] - 1] = col - 1;
    }
    assignment
}

/// Square contingency table between predicted and true labels, zero padded
/// to `K = max(#predicted, #true)`. Entry `(p, t)` is row-major at `p·K + t`.
pub(crate) fn contingency(predicted: &[usize], truth: &[usize]) -> (Vec<f64>, usize) {
    let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for &l in labels {
            let next = m.len();
            m.entry(l).or_insert(next);
        }
        m
    };
    let (pi, ti) = (index(predicted), index(truth));
    let k = pi.len().max(ti.len());
    let mut table = vec![0.0; k * k];
    for (p, t) in predicted.iter().zip(truth) {
        table[pi[p] * k + ti[t]] += 1.0;
    }
    (table, k)
}

/// Fraction of points misclassified under the best one-to-one matching of
/// predicted to true labels.
pub fn clustering_error(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predicted labels vs {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("no labels to compare"));
    }
    let (table, k) = contingency(predicted, truth);
    let cost: Vec<f64> = table.iter().map(|&c| -c).collect();
    let assignment = hungarian_min(&cost, k);
    let matched: f64 = assignment
        .iter()
        .enumerate()
        .map(|(p, &t)| table[p * k + t])
        .sum();
    Ok(1.0 - matched / predicted.len() as f64)
}

/// `‖UᵀV‖_F / √min(d_U, d_V)`, clamped to [0, 1].
pub fn affinity(u: &RealMatrix, v: &RealMatrix) -> Result<f64> {
    if u.rows() != v.rows() {
        return Err(Error::invalid("bases live in different ambient spaces"));
    }
    check_orthonormal(u)?;
    check_orthonormal(v)?;
    let k = u.cols().min(v.cols());
    if k == 0 {
        return Err(Error::invalid("affinity of a zero-dimensional subspace"));
    }
    let cross = u.as_dmatrix().tr_mul(v.as_dmatrix());
    Ok((cross.norm() / (k as f64).sqrt()).clamp(0.0, 1.0))
}

/// The same affinity through the principal-angle cosines:
/// `√(Σ cos² θ_i) / √min(d_U, d_V)`.
pub fn affinity_via_angles(u: &RealMatrix, v: &RealMatrix) -> Result<f64> {
    let cosines = principal_cosines(u, v)?;
    if cosines.is_empty() {
        return Err(Error::invalid("affinity of a zero-dimensional subspace"));
    }
    let sum_sq: f64 = cosines.iter().map(|c| c * c).sum();
    Ok((sum_sq.sqrt() / (cosines.len() as f64).sqrt()).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoremCheckConfig {
    /// Constant in the dimension condition `d_ℓ ≥ c₂ ln n_ℓ`.
    pub c2: f64,
    /// Required points per dimension, `n_ℓ / d_ℓ`.
    pub min_points_ratio: f64,
}

impl Default for TheoremCheckConfig {
    fn default() -> Self {
        TheoremCheckConfig {
            c2: 1.0,
            min_points_ratio: 6.0,
        }
    }
}

/// Which sufficient conditions for exact recovery hold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoremReport {
    pub num_points: usize,
    pub max_affinity: f64,
    /// `1 / (15 ln N)`.
    pub affinity_threshold: f64,
    pub affinity_ok: bool,
    pub ratio_ok: Vec<bool>,
    pub dim_ok: Vec<bool>,
    pub all_ok: bool,
}

/// `1 / (15 ln N)`, natural logarithm.
pub fn affinity_threshold(n: usize) -> f64 {
    1.0 / (15.0 * (n as f64).ln())
}

/// Evaluate the affinity, sampling-density, and dimension conditions.
pub fn theorem_check(
    model: &SubspaceModel,
    n_per: &[usize],
    cfg: &TheoremCheckConfig,
) -> Result<TheoremReport> {
    if cfg.c2.is_nan()
        || cfg.c2 <= 0.0
        || cfg.min_points_ratio.is_nan()
        || cfg.min_points_ratio <= 0.0
    {
        return Err(Error::invalid("theorem check constants must be positive"));
    }
    if n_per.len() != model.num_subspaces() {
        return Err(Error::invalid(format!(
            "{} point counts for {} subspaces",
            n_per.len(),
            model.num_subspaces()
        )));
    }
    let num_points: usize = n_per.iter().sum();
    if num_points < 2 {
        return Err(Error::invalid(format!("need N ≥ 2, got {num_points}")));
    }
    let l = model.num_subspaces();
    let mut max_affinity: f64 = 0.0;
    for k in 0..l {
        for m in k + 1..l {
            max_affinity = max_affinity.max(affinity(&model.bases[k], &model.bases[m])?);
        }
    }
    let affinity_threshold = affinity_threshold(num_points);
    let affinity_ok = max_affinity <= affinity_threshold;
    let ratio_ok: Vec<bool> = n_per
        .iter()
        .zip(&model.dims)
        .map(|(&n, &d)| n as f64 / d as f64 >= cfg.min_points_ratio)
        .collect();
    let dim_ok: Vec<bool> = n_per
        .iter()
        .zip(&model.dims)
        .map(|(&n, &d)| d as f64 >= cfg.c2 * (n as f64).ln())
        .collect();
    let all_ok = affinity_ok && ratio_ok.iter().all(|&b| b) && dim_ok.iter().all(|&b| b);
    Ok(TheoremReport {
        num_points,
        max_affinity,
        affinity_threshold,
        affinity_ok,
        ratio_ok,
        dim_ok,
        all_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_subspaces, SynthConfig};
    use approx::assert_abs_diff_eq;

    fn e(i: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    fn basis(idx: &[usize], m: usize) -> RealMatrix {
        RealMatrix::from_columns(&idx.iter().map(|&i| e(i, m)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn error_examples() {
        assert_eq!(clustering_error(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(clustering_error(&[5, 5, 2, 2], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(
            clustering_error(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap(),
            0.25
        );
        assert!(clustering_error(&[0], &[0, 1]).is_err());
        assert!(clustering_error(&[], &[]).is_err());
    }

    #[test]
    fn unmatched_clusters_count_as_errors() {
        // Three predicted groups against two true ones: one group is unmatched.
        assert_abs_diff_eq!(
            clustering_error(&[0, 0, 1, 1, 2, 2], &[0, 0, 0, 1, 1, 1]).unwrap(),
            1.0 / 3.0
        );
        // One predicted group for two true ones.
        assert_eq!(clustering_error(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.5);
    }

    #[test]
    fn hungarian_small_case() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian_min(&cost, 3);
        let total: f64 = a.iter().enumerate().map(|(r, &c)| cost[r * 3 + c]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn affinity_examples() {
        let u = basis(&[0, 1], 4);
        let w = basis(&[2, 3], 4);
        let v = basis(&[0, 2], 4);
        for f in [affinity, affinity_via_angles] {
            assert_abs_diff_eq!(f(&u, &u).unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(f(&u, &w).unwrap(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(f(&u, &v).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        }
        let bad = RealMatrix::from_columns(&[vec![1.0, 1.0, 0.0, 0.0]]).unwrap();
        assert!(affinity(&u, &bad).is_err());
        assert!(affinity_via_angles(&u, &bad).is_err());
    }

    #[test]
    fn intersection_lower_bound() {
        // Random subspaces sharing p = 2 of d = 5 dimensions.
        let cfg = SynthConfig {
            m: 30,
            num_subspaces: 3,
            d: 5,
            shared_dims: 2,
            n_per_subspace: 1,
            noise_var: 0.0,
            seed: 4,
        };
        let model = make_subspaces(&cfg).unwrap();
        let bound = (2.0f64 / 5.0).sqrt();
        for k in 0..3 {
            for l in k + 1..3 {
                assert!(
                    affinity_via_angles(&model.bases[k], &model.bases[l]).unwrap() >= bound - 1e-12
                );
            }
        }
    }

    #[test]
    fn benchmark_configuration_affinity_bound() {
        let model = make_subspaces(&SynthConfig::default()).unwrap();
        for k in 0..8 {
            for l in k + 1..8 {
                let a = affinity_via_angles(&model.bases[k], &model.bases[l]).unwrap();
                assert!(a >= 1.0 / 3f64.sqrt() - 1e-12, "{a}");
            }
        }
        let report = theorem_check(&model, &[105; 8], &TheoremCheckConfig::default()).unwrap();
        assert!(!report.affinity_ok);
        assert!(!report.all_ok);
    }

    #[test]
    fn threshold_value() {
        assert_abs_diff_eq!(affinity_threshold(100), 0.014476, epsilon = 1e-6);
    }

    #[test]
    fn disjoint_orthogonal_subspaces_pass() {
        let model = SubspaceModel::new(vec![basis(&[0, 1], 4), basis(&[2, 3], 4)]).unwrap();
        let r = theorem_check(&model, &[50, 50], &TheoremCheckConfig::default()).unwrap();
        assert_eq!(r.num_points, 100);
        assert!(r.affinity_ok);
        assert_eq!(r.ratio_ok, vec![true, true]);
        // d = 2 < ln 50 ≈ 3.9 with c₂ = 1.
        assert_eq!(r.dim_ok, vec![false, false]);
        let loose = TheoremCheckConfig {
            c2: 0.5,
            ..Default::default()
        };
        assert!(theorem_check(&model, &[50, 50], &loose).unwrap().all_ok);
    }

    #[test]
    fn ratio_condition() {
        let model = SubspaceModel::new(vec![
            basis(&[0, 1, 2, 3, 4, 5], 12),
            basis(&[6, 7, 8, 9, 10, 11], 12),
        ])
        .unwrap();
        let r = theorem_check(&model, &[30, 36], &TheoremCheckConfig::default()).unwrap();
        assert_eq!(r.ratio_ok, vec![false, true]);
        assert!(theorem_check(&model, &[1, 0], &TheoremCheckConfig::default()).is_err());
    }

    #[test]
    fn report_serializes() {
        let model = SubspaceModel::new(vec![basis(&[0], 2), basis(&[1], 2)]).unwrap();
        let r = theorem_check(&model, &[6, 6], &TheoremCheckConfig::default()).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["affinity_ok"], true);
        assert_eq!(json["num_points"], 12);
    }
}
