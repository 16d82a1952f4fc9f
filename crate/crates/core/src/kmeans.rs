//! Lloyd's k-means with greedy k-means++ seeding and seeded restarts.

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// Row-major `k × dim` centroids.
    pub centroids: Vec<f64>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Points<'a> {
    data: &'a [f64],
    dim: usize,
}

impl Points<'_> {
    fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Sample an index with probability proportional to `weights`.
fn sample_weighted(rng: &mut Rng, weights: &[f64], total: f64) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if acc > target {
            return i;
        }
    }
    // Rounding can leave `target` just past the final partial sum.
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1)
}

/// Greedy k-means++: each new center is the best of a few D²-weighted candidates.
fn seed_centers(pts: &Points, k: usize, rng: &mut Rng) -> Vec<f64> {
    let n = pts.len();
    let local_trials = 2 + (k as f64).ln().floor() as usize;
    let mut centers = Vec::with_capacity(k * pts.dim);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(pts.row(first));
    let mut closest: Vec<f64> = (0..n)
        .map(|i| sq_dist(pts.row(i), pts.row(first)))
        .collect();

    for _ in 1..k {
        let total: f64 = closest.iter().sum();
        let candidates: Vec<usize> = if total > 0.0 {
            (0..local_trials)
                .map(|_| sample_weighted(rng, &closest, total))
                .collect()
        } else {
            // Every point coincides with a center already.
            vec![rng.random_range(0..n)]
        };
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for c in candidates {
            let updated: Vec<f64> = (0..n)
                .map(|i| closest[i].min(sq_dist(pts.row(i), pts.row(c))))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(p, _, _)| potential < *p) {
                best = Some((potential, c, updated));
            }
        }
        let (_, c, updated) = best.expect("at least one candidate");
        centers.extend_from_slice(pts.row(c));
        closest = updated;
    }
    centers
}

fn nearest(row: &[f64], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.chunks(dim).enumerate() {
        let d = sq_dist(row, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd(pts: &Points, k: usize, max_iter: usize, rng: &mut Rng) -> KMeansResult {
    let (n, dim) = (pts.len(), pts.dim);
    let mut centers = seed_centers(pts, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut changed = false;
        for i in 0..n {
            let (c, d) = nearest(pts.row(i), &centers, dim);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dists[i] = d;
        }

        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        // Repair empty clusters with the point farthest from its centroid,
        // taken from a cluster that can spare it.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = donor {
                counts[labels[i]] -= 1;
                counts[c] = 1;
                labels[i] = c;
                dists[i] = 0.0;
                changed = true;
            }
        }

        let mut sums = vec![0.0; k * dim];
        for (i, &l) in labels.iter().enumerate() {
            for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(pts.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centers[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&sums[c * dim..(c + 1) * dim])
                {
                    *dst = s / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let inertia = (0..n)
        .map(|i| sq_dist(pts.row(i), &centers[labels[i] * dim..(labels[i] + 1) * dim]))
        .sum();
    KMeansResult {
        labels,
        centroids: centers,
        inertia,
        iterations,
    }
}

/// Cluster the rows of a row-major `n × dim` array.
///
/// Restarts run in parallel on derived seeds; the lowest inertia wins, ties
/// going to the earliest restart.
pub fn kmeans(data: &[f64], dim: usize, cfg: &KMeansConfig) -> Result<KMeansResult> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::invalid(
            "k-means input is not a whole number of rows",
        ));
    }
    let pts = Points { data, dim };
    let n = pts.len();
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::invalid(format!("k = {} must lie in 1..={n}", cfg.k)));
    }
    if cfg.restarts == 0 || cfg.max_iter == 0 {
        return Err(Error::invalid(
            "k-means needs at least one restart and one iteration",
        ));
    }
    let runs: Vec<KMeansResult> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, &[r as u64]));
            lloyd(&pts, cfg.k, cfg.max_iter, &mut rng)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, next| {
            if next.inertia < best.inertia {
                next
            } else {
                best
            }
        })
        .expect("at least one restart");
    if !best.inertia.is_finite() {
        return Err(Error::Numerical("k-means inertia is not finite".into()));
    }
    Ok(best)
}
