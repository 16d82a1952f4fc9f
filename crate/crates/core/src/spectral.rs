//! Normalized spectral clustering on an affinity graph.
//!
//! The graph's symmetric normalized Laplacian `I − D^{-1/2} A D^{-1/2}` is
//! diagonalized once; the number of clusters is either given or estimated
//! from its spectrum, and the rows of the bottom eigenvectors are normalized
//! and clustered with k-means.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{build_adjacency, diagnostics, AffinityGraph, DiagnosticsReport};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::neighbors::{select_all, NeighborhoodResult, TscConfig};
use crate::numerics::{symmetric_eigen, RealMatrix, SpectrumResult};

/// How the number of clusters is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderMode {
    /// Number of Laplacian eigenvalues at or below the zero tolerance.
    ZeroCount,
    /// Position of the largest gap in the ascending spectrum.
    Eigengap,
    /// Supplied by the caller.
    GivenL,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub order_mode: OrderMode,
    pub given_l: Option<usize>,
    pub zero_eig_tol: f64,
    /// Multiply `zero_eig_tol` by the number of nodes.
    pub scale_zero_tol: bool,
    /// Upper bound on the eigengap scan; defaults to `min(N − 1, 30)`.
    pub max_l_scan: Option<usize>,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub seed: u64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            order_mode: OrderMode::ZeroCount,
            given_l: None,
            zero_eig_tol: 1e-8,
            scale_zero_tol: true,
            max_l_scan: None,
            kmeans_restarts: 10,
            kmeans_max_iter: 300,
            seed: 0,
        }
    }
}

impl SpectralConfig {
    /// Cluster into a known number of groups.
    pub fn with_given_l(l: usize, seed: u64) -> Self {
        SpectralConfig {
            order_mode: OrderMode::GivenL,
            given_l: Some(l),
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.zero_eig_tol.is_nan() || self.zero_eig_tol <= 0.0 {
            return Err(Error::invalid("zero_eig_tol must be positive"));
        }
        if matches!(self.max_l_scan, Some(s) if s < 2) {
            return Err(Error::invalid("max_l_scan must be at least 2"));
        }
        if self.kmeans_restarts == 0 || self.kmeans_max_iter == 0 {
            return Err(Error::invalid(
                "k-means needs at least one restart and one iteration",
            ));
        }
        match (self.order_mode, self.given_l) {
            (OrderMode::GivenL, None) => Err(Error::invalid("given_L mode requires given_l")),
            (OrderMode::GivenL, Some(0)) => Err(Error::invalid("given_l must be positive")),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusteringResult {
    pub predicted_labels: Vec<usize>,
    pub l_hat: usize,
    /// Full spectrum of the normalized Laplacian, ascending.
    pub laplacian_eigenvalues: Vec<f64>,
    pub estimator_used: OrderMode,
    pub kmeans_inertia: f64,
    /// Per-point neighborhood sizes when produced by [`run_pipeline`] or OMP.
    pub neighborhood_sizes: Vec<usize>,
    /// Points whose neighborhood scan hit `q_max`.
    pub truncated_count: usize,
    /// Graph-versus-truth report when the dataset carries labels.
    pub diagnostics: Option<DiagnosticsReport>,
}

/// `I − D^{-1/2} A D^{-1/2}`; a zero-degree node keeps a unit diagonal and no
/// off-diagonal entries.
pub fn normalized_laplacian(g: &AffinityGraph) -> RealMatrix {
    let n = g.len();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        l[j * n + j] = 1.0;
        for i in 0..j {
            let w = g.weight(i, j);
            if w > 0.0 {
                let v = -(inv_sqrt[i] * w * inv_sqrt[j]);
                l[j * n + i] = v;
                l[i * n + j] = v;
            }
        }
    }
    RealMatrix::from_column_major(n, n, l).expect("finite Laplacian")
}

/// Number of clusters from an ascending spectrum.
pub fn estimate_num_clusters(spectrum: &[f64], cfg: &SpectralConfig) -> Result<(usize, OrderMode)> {
    if spectrum.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    cfg.validate()?;
    let n = spectrum.len();
    match cfg.order_mode {
        OrderMode::ZeroCount => {
            let tol = if cfg.scale_zero_tol {
                cfg.zero_eig_tol * n as f64
            } else {
                cfg.zero_eig_tol
            };
            let count = spectrum.iter().filter(|&&v| v <= tol).count();
            if count == 0 {
                return Err(Error::Estimation(format!(
                    "no eigenvalue at or below {tol:.3e} (smallest is {:.3e}); \
                     try the eigengap estimator",
                    spectrum[0]
                )));
            }
            Ok((count, OrderMode::ZeroCount))
        }
        OrderMode::Eigengap => {
            if n < 2 {
                return Ok((1, OrderMode::Eigengap));
            }
            let scan = cfg.max_l_scan.unwrap_or_else(|| (n - 1).min(30)).min(n);
            // Gap after position i (1-based) is λ_{i+1} − λ_i for 1 ≤ i < scan.
            let mut best = (1, f64::NEG_INFINITY);
            for i in 1..scan {
                let gap = spectrum[i] - spectrum[i - 1];
                if gap > best.1 {
                    best = (i, gap);
                }
            }
            Ok((best.0, OrderMode::Eigengap))
        }
        OrderMode::GivenL => {
            let l = cfg.given_l.expect("validated");
            if l > n {
                return Err(Error::invalid(format!("given L = {l} exceeds {n} nodes")));
            }
            Ok((l, OrderMode::GivenL))
        }
    }
}

fn embed_and_cluster(
    spectrum: &SpectrumResult,
    l_hat: usize,
    estimator: OrderMode,
    cfg: &SpectralConfig,
) -> Result<ClusteringResult> {
    let n = spectrum.eigenvalues.len();
    if l_hat == 0 || l_hat > n {
        return Err(Error::invalid(format!(
            "cluster count {l_hat} must lie in 1..={n}"
        )));
    }
    let vecs = &spectrum.eigenvectors;
    let mut rows = vec![0.0; n * l_hat];
    for i in 0..n {
        let row = &mut rows[i * l_hat..(i + 1) * l_hat];
        for (k, v) in row.iter_mut().enumerate() {
            *v = vecs[(i, k)];
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let km = kmeans(
        &rows,
        l_hat,
        &KMeansConfig {
            k: l_hat,
            restarts: cfg.kmeans_restarts,
            max_iter: cfg.kmeans_max_iter,
            seed: cfg.seed,
        },
    )?;
    Ok(ClusteringResult {
        predicted_labels: km.labels,
        l_hat,
        laplacian_eigenvalues: spectrum.eigenvalues.clone(),
        estimator_used: estimator,
        kmeans_inertia: km.inertia,
        neighborhood_sizes: Vec::new(),
        truncated_count: 0,
        diagnostics: None,
    })
}

fn laplacian_spectrum(g: &AffinityGraph) -> Result<SpectrumResult> {
    symmetric_eigen(&normalized_laplacian(g))
}

/// Cluster into exactly `l_hat` groups.
pub fn spectral_embed_and_cluster(
    g: &AffinityGraph,
    l_hat: usize,
    cfg: &SpectralConfig,
) -> Result<ClusteringResult> {
    cfg.validate()?;
    if l_hat == 0 || l_hat > g.len() {
        return Err(Error::invalid(format!(
            "cluster count {l_hat} must lie in 1..={}",
            g.len()
        )));
    }
    let spectrum = laplacian_spectrum(g)?;
    embed_and_cluster(&spectrum, l_hat, OrderMode::GivenL, cfg)
}

/// Estimate the number of clusters per `cfg.order_mode`, then cluster.
pub fn cluster_graph(g: &AffinityGraph, cfg: &SpectralConfig) -> Result<ClusteringResult> {
    cfg.validate()?;
    let spectrum = laplacian_spectrum(g)?;
    let (l_hat, used) = estimate_num_clusters(&spectrum.eigenvalues, cfg)?;
    embed_and_cluster(&spectrum, l_hat, used, cfg)
}

/// Graph assembly and spectral clustering for precomputed representations.
pub fn cluster_representations(
    x: &Dataset,
    reps: &[NeighborhoodResult],
    cfg: &SpectralConfig,
) -> Result<ClusteringResult> {
    let g = build_adjacency(reps, x.len()).map_err(|e| e.in_stage("graph"))?;
    let mut result = cluster_graph(&g, cfg).map_err(|e| e.in_stage("spectral"))?;
    result.neighborhood_sizes = reps.iter().map(|r| r.q).collect();
    result.truncated_count = reps.iter().filter(|r| r.truncated).count();
    if let Some(truth) = &x.labels {
        result.diagnostics = Some(diagnostics(&g, truth).map_err(|e| e.in_stage("graph"))?);
    }
    Ok(result)
}

/// Neighborhood selection, adjacency, and spectral clustering end to end.
pub fn run_pipeline(
    x: &Dataset,
    tsc_cfg: &TscConfig,
    spec_cfg: &SpectralConfig,
) -> Result<ClusteringResult> {
    spec_cfg.validate()?;
    let reps = select_all(x, tsc_cfg).map_err(|e| e.in_stage("neighbors"))?;
    cluster_representations(x, &reps, spec_cfg)
}
