//! Experiment configuration.
//!
//! A single TOML file drives a whole experiment. Every protocol number
//! defaults to the standard value (population 100, 50 generations, elitism
//! 4, 80% crossover, 5% mutation, 50/100 epoch budgets, patience 10, 30
//! repeats, ADAM defaults, 75/25 split with a 10% validation slice, shuffle
//! seed 42), so a minimal config only names its dataset. Validation happens
//! before any compute and reports the offending field path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSchema, Scaling, SynthKind, TargetKind};
use crate::evolution::EvolutionConfig;
use crate::nn::{NetworkSpec, OutputKind, TrainConfig};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config '{path}': {message}")]
    Io { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field {field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub evolution: EvolutionSection,
    #[serde(default)]
    pub split: SplitSection,
}

fn default_master_seed() -> u64 {
    42
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Local CSV with a header row.
    Csv {
        path: PathBuf,
        target: String,
        target_kind: TargetKindConfig,
        /// Class count, required for multiclass targets.
        #[serde(default)]
        classes: Option<usize>,
        #[serde(default)]
        categorical: Vec<String>,
        #[serde(default = "default_scaling")]
        scaling: Scaling,
    },
    /// Built-in synthetic generator.
    Synth {
        shape: SynthKind,
        #[serde(default = "default_synth_n")]
        n: usize,
        #[serde(default)]
        noise: f64,
        #[serde(default = "default_scaling")]
        scaling: Scaling,
    },
}

fn default_scaling() -> Scaling {
    Scaling::MinMax01
}

fn default_synth_n() -> usize {
    1000
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TargetKindConfig {
    Binary,
    Multiclass,
    Regression,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub l2_enabled: bool,
    pub l2_lambda: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![50],
            dropout_rate: 0.0,
            l2_enabled: false,
            l2_lambda: 0.01,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub class_weighting: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            adam_beta1: d.adam_beta1,
            adam_beta2: d.adam_beta2,
            adam_epsilon: d.adam_epsilon,
            class_weighting: d.class_weighting,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSection {
    pub population_size: usize,
    pub generations: usize,
    pub elitism: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub init_depth_min: usize,
    pub init_depth_max: usize,
    pub max_depth: usize,
    pub search_epochs: usize,
    pub search_patience: usize,
    pub final_epochs: usize,
    pub repeats: usize,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        let d = EvolutionConfig::default();
        Self {
            population_size: d.population_size,
            generations: d.generations,
            elitism: d.elitism,
            crossover_rate: d.crossover_rate,
            mutation_rate: d.mutation_rate,
            init_depth_min: d.init_depth_min,
            init_depth_max: d.init_depth_max,
            max_depth: d.max_depth,
            search_epochs: d.search_epochs,
            search_patience: d.search_patience,
            final_epochs: d.final_epochs,
            repeats: d.repeats,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            test_fraction: 0.25,
            val_fraction: 0.10,
            seed: 42,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.dataset {
            DatasetConfig::Csv {
                target_kind,
                classes,
                ..
            } => {
                if *target_kind == TargetKindConfig::Multiclass {
                    match classes {
                        Some(k) if *k >= 2 => {}
                        Some(k) => {
                            return Err(invalid(
                                "dataset.classes",
                                format!("multiclass needs at least 2 classes, got {k}"),
                            ))
                        }
                        None => {
                            return Err(invalid(
                                "dataset.classes",
                                "required for multiclass targets",
                            ))
                        }
                    }
                }
            }
            DatasetConfig::Synth { n, noise, .. } => {
                if *n < 8 {
                    return Err(invalid(
                        "dataset.n",
                        format!("need at least 8 rows, got {n}"),
                    ));
                }
                if *noise < 0.0 {
                    return Err(invalid("dataset.noise", "must be nonnegative"));
                }
            }
        }

        if self.network.hidden.is_empty() {
            return Err(invalid("network.hidden", "at least one hidden layer"));
        }
        if self.network.hidden.contains(&0) {
            return Err(invalid("network.hidden", "layer widths must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.network.dropout_rate) {
            return Err(invalid(
                "network.dropout_rate",
                format!("must be in [0, 1), got {}", self.network.dropout_rate),
            ));
        }
        if self.network.l2_lambda < 0.0 {
            return Err(invalid("network.l2_lambda", "must be nonnegative"));
        }

        if self.training.batch_size == 0 {
            return Err(invalid("training.batch_size", "must be at least 1"));
        }
        if self.training.learning_rate <= 0.0 {
            return Err(invalid("training.learning_rate", "must be positive"));
        }

        let evo = self.evolution_config();
        evo.validate().map_err(|message| ConfigError::Invalid {
            field: format!("evolution.{}", message.split(' ').next().unwrap_or("?")),
            message,
        })?;

        for (field, value) in [
            ("split.test_fraction", self.split.test_fraction),
            ("split.val_fraction", self.split.val_fraction),
        ] {
            if !(0.0..1.0).contains(&value) || value == 0.0 {
                return Err(invalid(field, format!("must be in (0, 1), got {value}")));
            }
        }
        Ok(())
    }

    pub fn evolution_config(&self) -> EvolutionConfig {
        let e = &self.evolution;
        EvolutionConfig {
            population_size: e.population_size,
            generations: e.generations,
            elitism: e.elitism,
            crossover_rate: e.crossover_rate,
            mutation_rate: e.mutation_rate,
            init_depth_min: e.init_depth_min,
            init_depth_max: e.init_depth_max,
            max_depth: e.max_depth,
            search_epochs: e.search_epochs,
            search_patience: e.search_patience,
            final_epochs: e.final_epochs,
            repeats: e.repeats,
        }
    }

    /// Network template; input width and output head are fixed later from
    /// the loaded dataset.
    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec {
            input_dim: 1,
            hidden: self.network.hidden.clone(),
            dropout_rate: self.network.dropout_rate,
            l2_enabled: self.network.l2_enabled,
            l2_lambda: self.network.l2_lambda,
            output: OutputKind::Linear,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.training.batch_size,
            learning_rate: self.training.learning_rate,
            adam_beta1: self.training.adam_beta1,
            adam_beta2: self.training.adam_beta2,
            adam_epsilon: self.training.adam_epsilon,
            class_weighting: self.training.class_weighting,
            ..TrainConfig::default()
        }
    }

    pub fn split_spec(&self) -> crate::data::SplitSpec {
        crate::data::SplitSpec {
            test_fraction: self.split.test_fraction,
            val_fraction: self.split.val_fraction,
            shuffle_seed: self.split.seed,
        }
    }

    pub fn scaling(&self) -> Scaling {
        match &self.dataset {
            DatasetConfig::Csv { scaling, .. } | DatasetConfig::Synth { scaling, .. } => *scaling,
        }
    }

    pub fn csv_schema(&self) -> Option<DatasetSchema> {
        match &self.dataset {
            DatasetConfig::Csv {
                target,
                target_kind,
                classes,
                categorical,
                scaling,
                ..
            } => Some(DatasetSchema {
                target: target.clone(),
                target_kind: match target_kind {
                    TargetKindConfig::Binary => TargetKind::Binary,
                    TargetKindConfig::Multiclass => TargetKind::Multiclass(classes.unwrap_or(2)),
                    TargetKindConfig::Regression => TargetKind::Regression,
                },
                categorical: categorical.clone(),
                scaling: *scaling,
            }),
            DatasetConfig::Synth { .. } => None,
        }
    }
}
