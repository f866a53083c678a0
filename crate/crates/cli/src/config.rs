//! Experiment configuration.
//!
//! The file format is TOML. Every key is optional; omitted keys take the
//! defaults below, which reproduce the acceptance runs.
//!
//! ```toml
//! experiment = "classify-compare"   # overridden by the CLI subcommand
//! seed = 1
//! out = "results"
//! model_file = "model.toml"         # optional; replaces [model]
//!
//! [model]                           # two-class Gaussian mixture, default ±1
//! priors = [0.5, 0.5]
//! [[model.classes]]
//! components = [{ weight = 1.0, mean = [-1.0], variances = [1.0] }]
//! [[model.classes]]
//! components = [{ weight = 1.0, mean = [1.0], variances = [1.0] }]
//!
//! [reconstruct2]
//! random_models = 20
//! grid = 41
//! samples = 200
//!
//! [classify]
//! grid = 2001
//! samples = 200
//! train = 10000
//! test = 10000
//!
//! [multiclass]
//! instances = 50
//! classes = 3
//! points = 7
//! restarts = 20
//!
//! [hierarchical]
//! gap_grid = 21
//! shift = 1.5
//! batch_size = 4
//! batches = 1000
//! discrete_models = 100
//! labeled = 2
//! per_batch = false
//!
//! [discrimination]
//! flip = 0.1
//! same_prior = 0.5
//! thresholds = 21
//! trials = 100000
//! theta_sd = 1.0
//! noise_sd = 0.5
//! ```
//!
//! A model file holds the `priors` and `classes` keys at top level.

use std::fmt;
use std::path::{Path, PathBuf};

use bayesim_core::{Component, MixtureClassModel};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Reconstruct2,
    Multiclass,
    ClassifyCompare,
    HierarchicalGap,
    BatchedNn,
    Discriminate,
    ThresholdSweep,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Reconstruct2,
        Experiment::Multiclass,
        Experiment::ClassifyCompare,
        Experiment::HierarchicalGap,
        Experiment::BatchedNn,
        Experiment::Discriminate,
        Experiment::ThresholdSweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Reconstruct2 => "reconstruct2",
            Experiment::Multiclass => "multiclass",
            Experiment::ClassifyCompare => "classify-compare",
            Experiment::HierarchicalGap => "hierarchical-gap",
            Experiment::BatchedNn => "batched-nn",
            Experiment::Discriminate => "discriminate",
            Experiment::ThresholdSweep => "threshold-sweep",
        }
    }

    /// Acceptance criteria this experiment reports on.
    pub fn criteria(self) -> &'static [&'static str] {
        match self {
            Experiment::Reconstruct2 => &["A1"],
            Experiment::Multiclass => &["A4"],
            Experiment::ClassifyCompare => &["A2", "A3"],
            Experiment::HierarchicalGap => &["A5"],
            Experiment::BatchedNn => &["A6"],
            Experiment::Discriminate | Experiment::ThresholdSweep => &["A7"],
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == name)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    #[serde(default = "one")]
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variances: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub components: Vec<ComponentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub priors: Vec<f64>,
    pub classes: Vec<ClassSpec>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let class = |m: f64| ClassSpec {
            components: vec![ComponentSpec {
                weight: 1.0,
                mean: vec![m],
                variances: vec![1.0],
            }],
        };
        Self {
            priors: vec![0.5, 0.5],
            classes: vec![class(-1.0), class(1.0)],
        }
    }
}

impl ModelSpec {
    pub fn build(&self) -> HarnessResult<MixtureClassModel> {
        let classes = self
            .classes
            .iter()
            .map(|c| {
                c.components
                    .iter()
                    .map(|k| Component::new(k.weight, k.mean.clone(), k.variances.clone()))
                    .collect()
            })
            .collect();
        MixtureClassModel::new(self.priors.clone(), classes)
            .map_err(|e| HarnessError::config("model", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Reconstruct2Config {
    pub random_models: usize,
    pub grid: usize,
    pub samples: usize,
}

impl Default for Reconstruct2Config {
    fn default() -> Self {
        Self {
            random_models: 20,
            grid: 41,
            samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub grid: usize,
    pub samples: usize,
    pub train: usize,
    pub test: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            grid: 2001,
            samples: 200,
            train: 10_000,
            test: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MulticlassConfig {
    pub instances: usize,
    pub classes: usize,
    pub points: usize,
    pub restarts: usize,
}

impl Default for MulticlassConfig {
    fn default() -> Self {
        Self {
            instances: 50,
            classes: 3,
            points: 7,
            restarts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchicalConfig {
    pub gap_grid: usize,
    pub shift: f64,
    pub batch_size: usize,
    pub batches: usize,
    pub discrete_models: usize,
    pub labeled: usize,
    pub per_batch: bool,
}

impl Default for HierarchicalConfig {
    fn default() -> Self {
        Self {
            gap_grid: 21,
            shift: 1.5,
            batch_size: 4,
            batches: 1000,
            discrete_models: 100,
            labeled: 2,
            per_batch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminationConfig {
    pub flip: f64,
    pub same_prior: f64,
    pub thresholds: usize,
    pub trials: usize,
    pub theta_sd: f64,
    pub noise_sd: f64,
}

impl Default for DiscriminationConfig {
    fn default() -> Self {
        Self {
            flip: 0.1,
            same_prior: 0.5,
            thresholds: 21,
            trials: 100_000,
            theta_sd: 1.0,
            noise_sd: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub out: PathBuf,
    pub model_file: Option<PathBuf>,
    pub model: ModelSpec,
    pub reconstruct2: Reconstruct2Config,
    pub classify: ClassifyConfig,
    pub multiclass: MulticlassConfig,
    pub hierarchical: HierarchicalConfig,
    pub discrimination: DiscriminationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 1,
            out: PathBuf::from("results"),
            model_file: None,
            model: ModelSpec::default(),
            reconstruct2: Reconstruct2Config::default(),
            classify: ClassifyConfig::default(),
            multiclass: MulticlassConfig::default(),
            hierarchical: HierarchicalConfig::default(),
            discrimination: DiscriminationConfig::default(),
        }
    }
}

fn read(path: &Path) -> HarnessResult<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

/// Names the offending key when the parser reports one.
fn toml_error(e: toml::de::Error, fallback: &str) -> HarnessError {
    let message = e.message().to_string();
    let field = message
        .split('`')
        .nth(1)
        .filter(|_| message.starts_with("unknown field") || message.starts_with("missing field"))
        .unwrap_or(fallback)
        .to_string();
    HarnessError::config(field, message)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> HarnessResult<Self> {
        let table: toml::Table = text.parse().map_err(|e| toml_error(e, "config"))?;
        if let Some(name) = table.get("experiment") {
            let known = name.as_str().and_then(Experiment::parse);
            if known.is_none() {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.as_str()).collect();
                return Err(HarnessError::config(
                    "experiment",
                    format!(
                        "unknown experiment {name}; expected one of {}",
                        names.join(", ")
                    ),
                ));
            }
        }
        table.try_into().map_err(|e| toml_error(e, "config"))
    }

    /// Reads a config file; a relative `model_file` is resolved against its directory.
    pub fn load(path: &Path) -> HarnessResult<Self> {
        let mut config = Self::from_toml(&read(path)?)?;
        if let Some(model_file) = &config.model_file {
            if model_file.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.model_file = Some(base.join(model_file));
            }
        }
        Ok(config)
    }

    /// The configured classification model, from `model_file` if given.
    pub fn model_spec(&self) -> HarnessResult<ModelSpec> {
        match &self.model_file {
            Some(path) => toml::from_str(&read(path)?).map_err(|e| toml_error(e, "model_file")),
            None => Ok(self.model.clone()),
        }
    }

    pub fn validate(&self) -> HarnessResult<()> {
        let m = &self.multiclass;
        if m.classes == 0
            || m.classes > bayesim_core::reconstruction::multiclass::MAX_PERMUTATION_CLASSES
        {
            return Err(HarnessError::config(
                "multiclass.classes",
                "must be between 1 and 6",
            ));
        }
        if m.instances > 0 && m.points < 2 * m.classes - 1 {
            return Err(HarnessError::config(
                "multiclass.points",
                "at least 2·classes − 1 points are needed",
            ));
        }
        if m.instances > 0 && m.points < m.classes {
            return Err(HarnessError::config(
                "multiclass.points",
                "need one pure column per class",
            ));
        }
        let h = &self.hierarchical;
        if h.batch_size < 2 {
            return Err(HarnessError::config(
                "hierarchical.batch_size",
                "must be at least 2",
            ));
        }
        if !(h.shift.is_finite()) {
            return Err(HarnessError::config("hierarchical.shift", "must be finite"));
        }
        let d = &self.discrimination;
        if !(0.0..=1.0).contains(&d.flip) {
            return Err(HarnessError::config(
                "discrimination.flip",
                "must lie in [0, 1]",
            ));
        }
        if !(d.same_prior > 0.0 && d.same_prior < 1.0) {
            return Err(HarnessError::config(
                "discrimination.same_prior",
                "must lie in (0, 1)",
            ));
        }
        if !(d.theta_sd > 0.0 && d.noise_sd > 0.0) {
            return Err(HarnessError::config(
                "discrimination.theta_sd",
                "standard deviations must be positive",
            ));
        }
        Ok(())
    }

    /// Text echo of the effective configuration.
    pub fn echo(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
