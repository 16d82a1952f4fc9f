//! The `unionclust` binary end to end: outputs, exit codes, file formats.

use std::fs::File;
use std::process::{Command, Output};

use unionclust::datagen::{generate, SynthConfig};

fn unionclust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unionclust"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn small_dataset() -> unionclust::Dataset {
    let cfg = SynthConfig {
        m: 20,
        num_subspaces: 2,
        d: 3,
        shared_dims: 0,
        n_per_subspace: 15,
        noise_var: 0.0,
        seed: 11,
    };
    generate(&cfg).unwrap().1
}

#[test]
fn synth_writes_csv_to_stdout() {
    let out = unionclust(&[
        "synth",
        "--m",
        "20",
        "--subspaces",
        "2",
        "--d",
        "3",
        "--shared",
        "1",
        "--n",
        "8",
        "--trials",
        "2",
        "--q",
        "3",
        "--omp-iters",
        "3",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,algorithm,n,trial_seed,error,q_param,tau,L_hat"
    );
    // 2 trials × 3 algorithms.
    assert_eq!(lines.count(), 6);
}

#[test]
fn synth_writes_csv_and_json_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = unionclust(&[
        "synth",
        "--m",
        "20",
        "--subspaces",
        "2",
        "--d",
        "3",
        "--shared",
        "0",
        "--n",
        "6,9",
        "--trials",
        "1",
        "--algo",
        "tsc_modified",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let json: serde_json::Value =
        serde_json::from_reader(File::open(dir.path().join("synth.json")).unwrap()).unwrap();
    assert_eq!(json["records"].as_array().unwrap().len(), 2);
    assert_eq!(json["summary"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("synth.csv").is_file());
}

#[test]
fn cluster_recovers_labeled_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    small_dataset()
        .write_csv(File::create(&input).unwrap())
        .unwrap();
    let out = unionclust(&[
        "cluster",
        "--input",
        input.to_str().unwrap(),
        "--tau",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_reader(File::open(dir.path().join("cluster.json")).unwrap()).unwrap();
    assert_eq!(report["clustering_error"].as_f64(), Some(0.0));
    assert_eq!(report["num_points"].as_u64(), Some(30));
    let labels = std::fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 31);
}

#[test]
fn cluster_reads_binary_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.bin");
    small_dataset()
        .write_binary(File::create(&input).unwrap())
        .unwrap();
    let out = unionclust(&[
        "cluster",
        "--input",
        input.to_str().unwrap(),
        "--algo",
        "ssc_omp",
        "--omp-iters",
        "3",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["clustering_error"].as_f64(), Some(0.0));
}

#[test]
fn lemma1_reports_probabilities() {
    let out = unionclust(&[
        "lemma1", "--n", "20", "--d", "3", "--k", "n-1", "--trials", "5",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "n,d,k,trials,empirical_prob\n20,3,19,5,1.0\n");
}

#[test]
fn exit_codes_distinguish_error_kinds() {
    assert_eq!(
        unionclust(&["synth", "--trials", "0"]).status.code(),
        Some(2)
    );
    assert_eq!(
        unionclust(&["lemma1", "--k", "log:-1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        unionclust(&[
            "mnist",
            "--mnist-images",
            "/nonexistent/i",
            "--mnist-labels",
            "/nonexistent/l"
        ])
        .status
        .code(),
        Some(3)
    );
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n").unwrap();
    assert_eq!(
        unionclust(&["cluster", "--input", bad.to_str().unwrap(), "--L", "2"])
            .status
            .code(),
        Some(3)
    );
}
