use std::fs;
use std::process::Command;

use bayesim_cli::report::write_outputs;
use bayesim_cli::{run, Experiment, ExperimentConfig, HarnessError, Status};

fn zero_counts() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        "[reconstruct2]\ngrid = 0\n[classify]\ngrid = 0\n[multiclass]\ninstances = 0\n\
         [hierarchical]\ngap_grid = 0\nbatches = 0\ndiscrete_models = 0\n[discrimination]\nthresholds = 0\n",
    )
    .unwrap()
}

#[test]
fn zero_counts_give_skipped_criteria() {
    let config = zero_counts();
    for e in [
        Experiment::Reconstruct2,
        Experiment::ClassifyCompare,
        Experiment::Multiclass,
        Experiment::BatchedNn,
        Experiment::ThresholdSweep,
    ] {
        let r = run(&config, e).unwrap();
        assert!(
            r.metrics.iter().all(|m| m.status == Status::Skipped),
            "{e}: {:?}",
            r.metrics
        );
        assert!(r.all_passed());
    }
}

#[test]
fn reconstruct2_default_passes() {
    let r = run(&ExperimentConfig::default(), Experiment::Reconstruct2).unwrap();
    assert!(r.all_passed());
    assert_eq!(r.criteria(), vec![("A1", Status::Pass)]);
}

#[test]
fn every_experiment_maps_to_its_criteria() {
    let config = zero_counts();
    for e in Experiment::ALL {
        let r = run(&config, e).unwrap();
        for (criterion, _) in r.criteria() {
            assert!(
                e.criteria().contains(&criterion),
                "{e} reported {criterion}"
            );
        }
    }
}

#[test]
fn invalid_field_is_named() {
    let mut config = ExperimentConfig::default();
    config.discrimination.flip = 1.5;
    match run(&config, Experiment::Discriminate) {
        Err(HarnessError::Config { field, .. }) => assert_eq!(field, "discrimination.flip"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn outputs_are_byte_identical_on_rerun() {
    let config = ExperimentConfig::default();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        write_outputs(&run(&config, Experiment::Discriminate).unwrap(), dir.path()).unwrap();
    }
    for name in ["metrics.csv", "pair_scores.csv"] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let summary = fs::read_to_string(dirs[0].path().join("summary.txt")).unwrap();
    assert!(summary.contains("A7: pass"));
    let scores = fs::read_to_string(dirs[0].path().join("pair_scores.csv")).unwrap();
    assert!(
        scores.starts_with("x,x_prime,same_likelihood,diff_likelihood,posterior_same,decision\n")
    );
    assert_eq!(scores.lines().count(), 5);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_bayesim");
    let out = tempfile::tempdir().unwrap();
    let status = Command::new(bin)
        .args([
            "hierarchical-gap",
            "--quiet",
            "--check-determinism",
            "--out",
        ])
        .arg(out.path())
        .status()
        .unwrap();
    assert!(status.success());
    let metrics = fs::read_to_string(out.path().join("hierarchical-gap/metrics.csv")).unwrap();
    assert!(metrics.contains(",A8,pass"));

    let config = out.path().join("bad.toml");
    fs::write(&config, "experiment = \"reconstruct\"\n").unwrap();
    let output = Command::new(bin)
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("experiment"));
}

#[test]
fn command_line_overrides_file() {
    let bin = env!("CARGO_BIN_EXE_bayesim");
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    fs::write(
        &config,
        "experiment = \"discriminate\"\nseed = 3\nout = \"from-file\"\n",
    )
    .unwrap();
    let out = dir.path().join("from-flag");
    let status = Command::new(bin)
        .args(["run", "--quiet", "--seed", "7", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary = fs::read_to_string(out.join("discriminate/summary.txt")).unwrap();
    assert!(summary.contains("seed: 7"));
}

#[test]
fn shipped_configs_load_and_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = ExperimentConfig::load(&dir.join("default.toml")).unwrap();
    assert_eq!(default, ExperimentConfig::default());

    let bimodal = ExperimentConfig::load(&dir.join("bimodal.toml")).unwrap();
    bimodal.validate().unwrap();
    let r = run(&bimodal, bimodal.experiment.unwrap()).unwrap();
    assert!(r.all_passed(), "{}", r.summary());

    let batched = ExperimentConfig::load(&dir.join("batched_per_batch.toml")).unwrap();
    let r = run(&batched, Experiment::BatchedNn).unwrap();
    assert!(r.tables.iter().any(|t| t.name == "batched_nn_batches" && t.rows.len() == 200));
}
