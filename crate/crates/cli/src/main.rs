use std::path::PathBuf;
use std::process::ExitCode;

use bayesim_cli::report::write_outputs;
use bayesim_cli::{run, run_checked, Experiment, ExperimentConfig, HarnessResult};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bayesim", version, about = "Bayesian similarity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover two-class posteriors from an exact similarity oracle.
    Reconstruct2(Common),
    /// Factorize multi-class similarity matrices.
    Multiclass(Common),
    /// Compare the reconstructed, nearest-neighbour and Bayes classifiers.
    ClassifyCompare(Common),
    /// Batched versus marginal similarity under a task hierarchy.
    HierarchicalGap(Common),
    /// Within-batch nearest-neighbour error of each similarity.
    BatchedNn(Common),
    /// Same/different posteriors for pairs.
    Discriminate(Common),
    /// Error of same/different rules across decision thresholds.
    ThresholdSweep(Common),
    /// Run every experiment.
    All(Common),
    /// Run the experiment named by a config file's `experiment` key.
    Run(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; each experiment writes to a subdirectory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run twice and compare output digests.
    #[arg(long)]
    check_determinism: bool,
    #[arg(long, short)]
    quiet: bool,
}

fn load(common: &Common) -> HarnessResult<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn execute(
    common: &Common,
    experiments: &[Experiment],
    config: &ExperimentConfig,
) -> HarnessResult<bool> {
    let mut passed = true;
    for &experiment in experiments {
        let report = if common.check_determinism {
            run_checked(config, experiment)?
        } else {
            run(config, experiment)?
        };
        write_outputs(&report, &config.out.join(experiment.as_str()))?;
        if !common.quiet {
            print!("{}", report.summary());
        }
        passed &= report.all_passed();
    }
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, fixed) = match &cli.command {
        Command::Reconstruct2(c) => (c, Some(Experiment::Reconstruct2)),
        Command::Multiclass(c) => (c, Some(Experiment::Multiclass)),
        Command::ClassifyCompare(c) => (c, Some(Experiment::ClassifyCompare)),
        Command::HierarchicalGap(c) => (c, Some(Experiment::HierarchicalGap)),
        Command::BatchedNn(c) => (c, Some(Experiment::BatchedNn)),
        Command::Discriminate(c) => (c, Some(Experiment::Discriminate)),
        Command::ThresholdSweep(c) => (c, Some(Experiment::ThresholdSweep)),
        Command::All(c) | Command::Run(c) => (c, None),
    };
    let result = load(common).and_then(|config| {
        let experiments: Vec<Experiment> = match (fixed, &cli.command) {
            (Some(e), _) => vec![e],
            (None, Command::All(_)) => Experiment::ALL.to_vec(),
            (None, _) => match config.experiment {
                Some(e) => vec![e],
                None => {
                    return Err(bayesim_cli::HarnessError::config(
                        "experiment",
                        "the config file does not name an experiment",
                    ))
                }
            },
        };
        execute(common, &experiments, &config)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
