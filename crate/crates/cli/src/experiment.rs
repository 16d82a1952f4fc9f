//! Experiment protocols: seeded trial sweeps over synthetic and MNIST data.

use std::fmt;
use std::str::FromStr;

use clap::ValueEnum;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use unionclust::baselines::{run_omp_pipeline, OmpConfig};
use unionclust::datagen::{generate, SynthConfig};
use unionclust::dataio::{sample_digit_subset, MnistSet, ResultRecord};
use unionclust::eval::clustering_error;
use unionclust::graph::lemma1_connectivity;
use unionclust::neighbors::TscConfig;
use unionclust::rng::{derive_seed, stream_id};
use unionclust::spectral::{run_pipeline, ClusteringResult, OrderMode, SpectralConfig};
use unionclust::{Dataset, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Algorithm {
    TscFixed,
    TscModified,
    SscOmp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [
        Algorithm::TscFixed,
        Algorithm::TscModified,
        Algorithm::SscOmp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::TscFixed => "tsc_fixed",
            Algorithm::TscModified => "tsc_modified",
            Algorithm::SscOmp => "ssc_omp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    /// Neighborhood size for fixed-q TSC.
    pub q: usize,
    /// Residual threshold for modified TSC.
    pub tau: f64,
    /// Iteration cap for SSC-OMP.
    pub omp_iters: usize,
}

impl AlgoParams {
    pub fn validate(&self) -> Result<()> {
        TscConfig::fixed(self.q).validate()?;
        TscConfig::modified(self.tau).validate()?;
        OmpConfig::with_max_iters(self.omp_iters).validate()
    }
}

/// One sweep: every algorithm on every `(n, trial)` instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: String,
    pub algorithms: Vec<Algorithm>,
    /// Points per cluster.
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub params: AlgoParams,
    pub order_mode: OrderMode,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::InvalidInput("empty n sweep".into()));
        }
        if self.n_values.contains(&0) {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidInput("no algorithm selected".into()));
        }
        self.params.validate()
    }

    fn instances(&self) -> Vec<(usize, usize)> {
        self.n_values
            .iter()
            .flat_map(|&n| (0..self.trials).map(move |t| (n, t)))
            .collect()
    }

    fn warn_on_small_n(&self, num_clusters: usize) {
        if !self.algorithms.contains(&Algorithm::TscFixed) {
            return;
        }
        for &n in &self.n_values {
            let cap = (n * num_clusters).saturating_sub(1);
            if self.params.q > cap {
                warn!(
                    "q = {} exceeds N − 1 = {cap} at n = {n}; clamping",
                    self.params.q
                );
            }
        }
    }
}

/// Seed of the problem instance shared by all algorithms in one trial.
pub fn trial_seed(base: u64, experiment: &str, n: usize, trial: usize) -> u64 {
    derive_seed(base, &[stream_id(experiment), n as u64, trial as u64])
}

/// Seed of an algorithm's k-means restarts within a trial.
pub fn algorithm_seed(trial_seed: u64, algo: Algorithm) -> u64 {
    derive_seed(trial_seed, &[stream_id(algo.name())])
}

fn spectral_config(order_mode: OrderMode, num_clusters: usize, seed: u64) -> SpectralConfig {
    SpectralConfig {
        order_mode,
        given_l: Some(num_clusters),
        seed,
        ..Default::default()
    }
}

/// Run one algorithm end to end. A fixed `q` above `N − 1` is clamped.
pub fn run_algorithm(
    x: &Dataset,
    algo: Algorithm,
    params: &AlgoParams,
    order_mode: OrderMode,
    num_clusters: usize,
    seed: u64,
) -> Result<ClusteringResult> {
    let spec = spectral_config(order_mode, num_clusters, seed);
    match algo {
        Algorithm::TscFixed => {
            let q = params.q.min(x.len().saturating_sub(1)).max(1);
            run_pipeline(x, &TscConfig::fixed(q), &spec)
        }
        Algorithm::TscModified => run_pipeline(x, &TscConfig::modified(params.tau), &spec),
        Algorithm::SscOmp => {
            run_omp_pipeline(x, &OmpConfig::with_max_iters(params.omp_iters), &spec)
        }
    }
}

fn record(
    spec: &ExperimentSpec,
    algo: Algorithm,
    n: usize,
    seed: u64,
    x: &Dataset,
    truth: &[usize],
    num_clusters: usize,
) -> Result<ResultRecord> {
    let result = run_algorithm(
        x,
        algo,
        &spec.params,
        spec.order_mode,
        num_clusters,
        algorithm_seed(seed, algo),
    )?;
    let error = clustering_error(&result.predicted_labels, truth)?;
    let (q_param, tau) = match algo {
        Algorithm::TscFixed => (Some(spec.params.q.min(x.len() - 1)), None),
        Algorithm::TscModified => (None, Some(spec.params.tau)),
        Algorithm::SscOmp => (Some(spec.params.omp_iters), None),
    };
    Ok(ResultRecord {
        experiment: spec.experiment.clone(),
        algorithm: algo.name().to_string(),
        n,
        trial_seed: seed,
        error,
        q_param,
        tau,
        l_hat: result.l_hat,
    })
}

/// Trials run in parallel; rows come back ordered by n, trial, then algorithm.
fn sweep<F>(spec: &ExperimentSpec, num_clusters: usize, make_data: F) -> Result<Vec<ResultRecord>>
where
    F: Fn(usize, u64) -> Result<Dataset> + Sync,
{
    spec.validate()?;
    spec.warn_on_small_n(num_clusters);
    let rows: Vec<Vec<ResultRecord>> = spec
        .instances()
        .into_par_iter()
        .map(|(n, t)| {
            let seed = trial_seed(spec.seed, &spec.experiment, n, t);
            let x = make_data(n, seed)?;
            let truth = x.labels.clone().expect("generated data carries labels");
            spec.algorithms
                .iter()
                .map(|&algo| record(spec, algo, n, seed, &x, &truth, num_clusters))
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ResultRecord> = rows.into_iter().flatten().collect();
    for s in unionclust::dataio::summarize(&rows) {
        info!(
            "{} n={} mean error {:.4} (sd {:.4})",
            s.algorithm, s.n, s.mean_error, s.std_error
        );
    }
    Ok(rows)
}

/// Synthetic union-of-subspaces sweep. Each trial draws fresh subspaces and
/// points; `base.n_per_subspace` and `base.seed` are overridden.
pub fn run_synth(spec: &ExperimentSpec, base: &SynthConfig) -> Result<Vec<ResultRecord>> {
    base.validate()?;
    sweep(spec, base.num_subspaces, |n, seed| {
        let cfg = SynthConfig {
            n_per_subspace: n,
            seed,
            ..base.clone()
        };
        Ok(generate(&cfg)?.1)
    })
}

/// MNIST sweep over the given digits.
pub fn run_mnist(
    spec: &ExperimentSpec,
    set: &MnistSet,
    digits: &[u8],
) -> Result<Vec<ResultRecord>> {
    let mut distinct = digits.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.is_empty() || distinct.iter().any(|&d| d > 9) {
        return Err(Error::InvalidInput(format!("invalid digit set {digits:?}")));
    }
    sweep(spec, distinct.len(), |n, seed| {
        sample_digit_subset(set, &distinct, n, seed)
    })
}

/// Neighbor count for the connectivity experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum KRule {
    /// `k = n − 1`: every point joined to every other.
    All,
    /// `k = ⌈c ln n⌉`, capped at `n − 1`.
    Log(f64),
    Fixed(usize),
}

impl KRule {
    pub fn resolve(self, n: usize) -> Result<usize> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("need n ≥ 2, got {n}")));
        }
        let k = match self {
            KRule::All => n - 1,
            KRule::Log(c) => ((c * (n as f64).ln()).ceil() as usize).clamp(1, n - 1),
            KRule::Fixed(k) => k,
        };
        if k == 0 || k > n - 1 {
            return Err(Error::InvalidInput(format!(
                "k = {k} must lie in 1..={}",
                n - 1
            )));
        }
        Ok(k)
    }
}

impl FromStr for KRule {
    type Err = String;

    /// Accepts `n-1`, `log:<c>`, or a positive integer.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s == "n-1" {
            return Ok(KRule::All);
        }
        if let Some(c) = s.strip_prefix("log:") {
            let c: f64 = c.parse().map_err(|_| format!("bad constant in {s:?}"))?;
            if !c.is_finite() || c <= 0.0 {
                return Err(format!("constant in {s:?} must be positive"));
            }
            return Ok(KRule::Log(c));
        }
        s.parse::<usize>()
            .ok()
            .filter(|&k| k > 0)
            .map(KRule::Fixed)
            .ok_or_else(|| format!("expected n-1, log:<c>, or a positive integer, got {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Row {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub trials: usize,
    pub empirical_prob: f64,
}

/// Empirical connectivity of the union kNN graph over an (n, d) grid.
pub fn run_lemma1(
    n_values: &[usize],
    d_values: &[usize],
    rule: KRule,
    trials: usize,
    seed: u64,
) -> Result<Vec<Lemma1Row>> {
    if n_values.is_empty() || d_values.is_empty() {
        return Err(Error::InvalidInput("empty (n, d) grid".into()));
    }
    if let Some(&d) = d_values.iter().find(|&&d| d <= 1) {
        return Err(Error::InvalidInput(format!("d = {d} must exceed 1")));
    }
    let mut rows = Vec::new();
    for &n in n_values {
        let k = rule.resolve(n)?;
        for &d in d_values {
            let cell_seed = derive_seed(seed, &[n as u64, d as u64, k as u64]);
            let empirical_prob = lemma1_connectivity(n, d, k, trials, cell_seed)?;
            rows.push(Lemma1Row {
                n,
                d,
                k,
                trials,
                empirical_prob,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_rule_parsing() {
        assert_eq!("n-1".parse::<KRule>().unwrap(), KRule::All);
        assert_eq!("log:3".parse::<KRule>().unwrap(), KRule::Log(3.0));
        assert_eq!("4".parse::<KRule>().unwrap(), KRule::Fixed(4));
        assert!("0".parse::<KRule>().is_err());
        assert!("log:-1".parse::<KRule>().is_err());
        assert!("many".parse::<KRule>().is_err());
    }

    #[test]
    fn k_rule_resolution() {
        assert_eq!(KRule::All.resolve(200).unwrap(), 199);
        // ⌈3 ln 200⌉ = ⌈15.89⌉
        assert_eq!(KRule::Log(3.0).resolve(200).unwrap(), 16);
        assert_eq!(KRule::Log(3.0).resolve(3).unwrap(), 2);
        assert!(KRule::Fixed(5).resolve(5).is_err());
    }

    #[test]
    fn seeds_separate_streams() {
        let a = trial_seed(1, "synth", 30, 0);
        assert_ne!(a, trial_seed(1, "synth", 30, 1));
        assert_ne!(a, trial_seed(1, "synth", 60, 0));
        assert_ne!(a, trial_seed(1, "mnist", 30, 0));
        assert_ne!(
            algorithm_seed(a, Algorithm::TscFixed),
            algorithm_seed(a, Algorithm::SscOmp)
        );
    }

    #[test]
    fn spec_validation() {
        let spec = ExperimentSpec {
            experiment: "synth".into(),
            algorithms: Algorithm::ALL.to_vec(),
            n_values: vec![10],
            trials: 1,
            seed: 0,
            params: AlgoParams {
                q: 5,
                tau: 0.45,
                omp_iters: 5,
            },
            order_mode: OrderMode::GivenL,
        };
        assert!(spec.validate().is_ok());
        assert!(ExperimentSpec {
            trials: 0,
            ..spec.clone()
        }
        .validate()
        .is_err());
        assert!(ExperimentSpec {
            n_values: vec![],
            ..spec.clone()
        }
        .validate()
        .is_err());
        assert!(ExperimentSpec {
            algorithms: vec![],
            ..spec
        }
        .validate()
        .is_err());
    }

    #[test]
    fn lemma1_rejects_line_segments() {
        assert!(run_lemma1(&[10], &[1], KRule::All, 2, 0).is_err());
    }
}
