//! Argument parsing, subcommand dispatch, and exit codes.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

use unionclust::datagen::{make_subspaces, SubspaceModel, SynthConfig};
use unionclust::dataio::{write_results_csv, write_summary_json, MnistSet, ResultRecord};
use unionclust::eval::{clustering_error, theorem_check, TheoremCheckConfig};
use unionclust::spectral::{ClusteringResult, OrderMode};
use unionclust::Dataset;

use crate::experiment::{
    run_algorithm, run_lemma1, run_mnist, run_synth, AlgoParams, Algorithm, ExperimentSpec, KRule,
};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Core(#[from] unionclust::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use unionclust::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e.root() {
                E::InvalidInput(_) => EXIT_USAGE,
                E::Format(_) | E::Io(_) | E::Csv(_) | E::Json(_) => EXIT_IO,
                E::Numerical(_) | E::Estimation(_) => EXIT_NUMERICAL,
                E::Stage { .. } => unreachable!("root skips stage wrappers"),
            },
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "unionclust",
    version,
    about = "Subspace clustering experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep the synthetic union-of-subspaces experiment.
    Synth(SynthArgs),
    /// Sweep the MNIST digit experiment.
    Mnist(MnistArgs),
    /// Estimate kNN-graph connectivity on the sphere.
    Lemma1(Lemma1Args),
    /// Report which recovery conditions a subspace model satisfies.
    Check(CheckArgs),
    /// Cluster one dataset file with one algorithm.
    Cluster(ClusterArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimateL {
    /// Count Laplacian eigenvalues near zero.
    Zero,
    /// Largest gap in the Laplacian spectrum.
    Eigengap,
}

fn order_mode(e: Option<EstimateL>) -> OrderMode {
    match e {
        None => OrderMode::GivenL,
        Some(EstimateL::Zero) => OrderMode::ZeroCount,
        Some(EstimateL::Eigengap) => OrderMode::Eigengap,
    }
}

/// Options shared by the sweep commands.
#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Algorithms to run (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = Algorithm::ALL)]
    pub algo: Vec<Algorithm>,
    /// Neighborhood size for fixed-q TSC.
    #[arg(long)]
    pub q: Option<usize>,
    /// Residual threshold for modified TSC.
    #[arg(long, default_value_t = 0.45)]
    pub tau: f64,
    /// Iteration cap for SSC-OMP.
    #[arg(long)]
    pub omp_iters: Option<usize>,
    /// Points per cluster (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the CSV and JSON results; CSV goes to stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Estimate the number of clusters instead of using the true value.
    #[arg(long = "estimate-L", value_enum)]
    pub estimate_l: Option<EstimateL>,
}

impl SweepArgs {
    fn spec(&self, experiment: &str, q: usize, omp_iters: usize, n: &[usize]) -> ExperimentSpec {
        ExperimentSpec {
            experiment: experiment.to_string(),
            algorithms: self.algo.clone(),
            n_values: self.n.clone().unwrap_or_else(|| n.to_vec()),
            trials: self.trials,
            seed: self.seed,
            params: AlgoParams {
                q: self.q.unwrap_or(q),
                tau: self.tau,
                omp_iters: self.omp_iters.unwrap_or(omp_iters),
            },
            order_mode: order_mode(self.estimate_l),
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Ambient dimension.
    #[arg(long, default_value_t = 120)]
    pub m: usize,
    /// Number of subspaces.
    #[arg(long = "subspaces", default_value_t = 8)]
    pub num_subspaces: usize,
    /// Subspace dimension.
    #[arg(long, default_value_t = 30)]
    pub d: usize,
    /// Basis columns shared by all subspaces.
    #[arg(long, default_value_t = 10)]
    pub shared: usize,
    /// Total noise variance.
    #[arg(long, default_value_t = 0.3)]
    pub noise_var: f64,
}

impl ModelArgs {
    fn config(&self, n_per_subspace: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            m: self.m,
            num_subspaces: self.num_subspaces,
            d: self.d,
            shared_dims: self.shared,
            n_per_subspace,
            noise_var: self.noise_var,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct MnistArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// IDX image file (t10k-images-idx3-ubyte).
    #[arg(long)]
    pub mnist_images: PathBuf,
    /// IDX label file (t10k-labels-idx1-ubyte).
    #[arg(long)]
    pub mnist_labels: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0u8, 2, 4, 8])]
    pub digits: Vec<u8>,
}

#[derive(Debug, Args)]
pub struct Lemma1Args {
    /// Points per trial (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [50usize, 200])]
    pub n: Vec<usize>,
    /// Sphere dimensions (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 5])]
    pub d: Vec<usize>,
    /// Neighbors per point: `n-1`, `log:<c>` for ⌈c ln n⌉, or an integer.
    #[arg(long, default_value = "log:3")]
    pub k: KRule,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `lemma1.csv`; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Subspace model JSON; a synthetic model is generated if absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub synth: ModelArgs,
    /// Points per subspace: one value for all, or one per subspace.
    #[arg(long, value_delimiter = ',', default_values_t = [105usize])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Constant in the dimension condition d ≥ c₂ ln n.
    #[arg(long, default_value_t = 1.0)]
    pub c2: f64,
    /// Write `check.json` here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Dataset file: `.csv` with an optional label column, otherwise binary.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Algorithm::TscModified)]
    pub algo: Algorithm,
    #[arg(long, default_value_t = 20)]
    pub q: usize,
    #[arg(long, default_value_t = 0.45)]
    pub tau: f64,
    #[arg(long, default_value_t = 20)]
    pub omp_iters: usize,
    /// Number of clusters; defaults to the label count in the file.
    #[arg(long = "L")]
    pub num_clusters: Option<usize>,
    #[arg(long = "estimate-L", value_enum)]
    pub estimate_l: Option<EstimateL>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `cluster.json` and `labels.csv`; JSON to stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn create_out(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(io_err(&path))?;
    Ok(BufWriter::new(f))
}

#[derive(Serialize)]
struct SweepEcho<'a, M: Serialize> {
    spec: &'a ExperimentSpec,
    #[serde(flatten)]
    extra: M,
}

fn emit_records<M: Serialize>(
    out: Option<&Path>,
    spec: &ExperimentSpec,
    extra: M,
    records: &[ResultRecord],
) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            let name = &spec.experiment;
            write_results_csv(create_out(dir, &format!("{name}.csv"))?, records)?;
            let echo = SweepEcho { spec, extra };
            write_summary_json(create_out(dir, &format!("{name}.json"))?, &echo, records)?;
            info!("wrote {name}.csv and {name}.json to {}", dir.display());
        }
        None => write_results_csv(io::stdout().lock(), records)?,
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let spec = args.sweep.spec("synth", 20, 20, &[30, 60, 105]);
    let base = args.model.config(0, 0);
    let records = run_synth(&spec, &base)?;
    #[derive(Serialize)]
    struct Extra<'a> {
        model: &'a SynthConfig,
    }
    emit_records(
        args.sweep.out.as_deref(),
        &spec,
        Extra { model: &base },
        &records,
    )
}

fn cmd_mnist(args: &MnistArgs) -> Result<(), CliError> {
    let spec = args
        .sweep
        .spec("mnist", 7, 7, &[25, 50, 100, 150, 200, 250]);
    spec.validate()?;
    for p in [&args.mnist_images, &args.mnist_labels] {
        if !p.is_file() {
            return Err(CliError::Io {
                path: p.clone(),
                source: io::Error::new(io::ErrorKind::NotFound, "MNIST file not found"),
            });
        }
    }
    let set = MnistSet::load(&args.mnist_images, &args.mnist_labels)?;
    info!("loaded {} MNIST images", set.len());
    let records = run_mnist(&spec, &set, &args.digits)?;
    #[derive(Serialize)]
    struct Extra<'a> {
        digits: &'a [u8],
    }
    emit_records(
        args.sweep.out.as_deref(),
        &spec,
        Extra {
            digits: &args.digits,
        },
        &records,
    )
}

fn cmd_lemma1(args: &Lemma1Args) -> Result<(), CliError> {
    let rows = run_lemma1(&args.n, &args.d, args.k, args.trials, args.seed)?;
    let write = |w: &mut dyn Write| -> Result<(), CliError> {
        let mut csv = csv::Writer::from_writer(w);
        for r in &rows {
            csv.serialize(r).map_err(unionclust::Error::from)?;
        }
        csv.flush().map_err(unionclust::Error::from)?;
        Ok(())
    };
    match &args.out {
        Some(dir) => write(&mut create_out(dir, "lemma1.csv")?),
        None => write(&mut io::stdout().lock()),
    }
}

fn load_model(path: &Path) -> Result<SubspaceModel, CliError> {
    let f = File::open(path).map_err(io_err(path))?;
    let raw: SubspaceModel = serde_json::from_reader(BufReader::new(f))
        .map_err(|e| CliError::Usage(format!("malformed model {}: {e}", path.display())))?;
    // Re-validate: deserialization alone does not check orthonormality.
    SubspaceModel::new(raw.bases)
        .map_err(|e| CliError::Usage(format!("invalid model {}: {e}", path.display())))
}

fn cmd_check(args: &CheckArgs) -> Result<(), CliError> {
    let model = match &args.model {
        Some(path) => load_model(path)?,
        None => make_subspaces(&args.synth.config(1, args.seed))?,
    };
    let l = model.num_subspaces();
    let n_per = match args.n.as_slice() {
        [n] => vec![*n; l],
        ns if ns.len() == l => ns.to_vec(),
        ns => {
            return Err(CliError::Usage(format!(
                "{} point counts given for {l} subspaces",
                ns.len()
            )))
        }
    };
    let cfg = TheoremCheckConfig {
        c2: args.c2,
        ..Default::default()
    };
    let report = theorem_check(&model, &n_per, &cfg)?;
    let json = serde_json::to_string_pretty(&report).map_err(unionclust::Error::from)?;
    println!("{json}");
    if let Some(dir) = &args.out {
        let mut w = create_out(dir, "check.json")?;
        writeln!(w, "{json}").map_err(io_err(dir))?;
        w.flush().map_err(io_err(dir))?;
    }
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let f = BufReader::new(File::open(path).map_err(io_err(path))?);
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let data = if is_csv {
        Dataset::read_csv(f)?
    } else {
        Dataset::read_binary(f)?
    };
    Ok(data)
}

#[derive(Serialize)]
struct ClusterReport<'a> {
    algorithm: Algorithm,
    num_points: usize,
    clustering_error: Option<f64>,
    #[serde(flatten)]
    result: &'a ClusteringResult,
}

fn cmd_cluster(args: &ClusterArgs) -> Result<(), CliError> {
    let mut data = read_dataset(&args.input)?;
    if !data.is_normalized(1e-8) {
        warn!("input columns are not unit norm; normalizing");
        data = data.normalized()?;
    }
    let num_clusters = match (args.num_clusters, data.num_clusters()) {
        (Some(l), _) => l,
        (None, Some(l)) => l,
        (None, None) if args.estimate_l.is_some() => 1,
        (None, None) => {
            return Err(CliError::Usage(
                "unlabeled data needs --L or --estimate-L".into(),
            ))
        }
    };
    if args.algo == Algorithm::TscFixed && args.q + 1 > data.len() {
        warn!(
            "q = {} exceeds N − 1 = {}; clamping",
            args.q,
            data.len() - 1
        );
    }
    let params = AlgoParams {
        q: args.q,
        tau: args.tau,
        omp_iters: args.omp_iters,
    };
    params.validate()?;
    let result = run_algorithm(
        &data,
        args.algo,
        &params,
        order_mode(args.estimate_l),
        num_clusters,
        args.seed,
    )?;
    let error = match &data.labels {
        Some(truth) => Some(clustering_error(&result.predicted_labels, truth)?),
        None => None,
    };
    let report = ClusterReport {
        algorithm: args.algo,
        num_points: data.len(),
        clustering_error: error,
        result: &result,
    };
    let json = serde_json::to_string_pretty(&report).map_err(unionclust::Error::from)?;
    match &args.out {
        Some(dir) => {
            let mut w = create_out(dir, "cluster.json")?;
            writeln!(w, "{json}").map_err(io_err(dir))?;
            w.flush().map_err(io_err(dir))?;
            let mut csv = csv::Writer::from_writer(create_out(dir, "labels.csv")?);
            csv.write_record(["index", "label"])
                .map_err(unionclust::Error::from)?;
            for (i, l) in result.predicted_labels.iter().enumerate() {
                csv.write_record([i.to_string(), l.to_string()])
                    .map_err(unionclust::Error::from)?;
            }
            csv.flush().map_err(io_err(dir))?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Mnist(a) => cmd_mnist(a),
        Command::Lemma1(a) => cmd_lemma1(a),
        Command::Check(a) => cmd_check(a),
        Command::Cluster(a) => cmd_cluster(a),
    }
}
