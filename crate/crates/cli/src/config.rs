//! Run configurations. Every command resolves its flags into one of these,
//! writes it next to its outputs, and can be rerun from that file.

use std::fs;
use std::path::{Path, PathBuf};

use alime::dataset::{Schema, DEFAULT_TEST_FRACTION};
use alime::evaluation::{DEFAULT_ITERATIONS, DEFAULT_N_VALUES};
use alime::explain::{Method, DEFAULT_ALPHA};
use alime::models::DEFAULT_NOISE_SIGMA;
use alime::sampling::DEFAULT_POOL_SIZE;
use alime::AlimeError;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    TrainBlackbox(TrainBlackboxConfig),
    TrainAe(TrainAeConfig),
    Explain(ExplainConfig),
    Benchmark(BenchmarkConfig),
}

impl RunConfig {
    pub fn command(&self) -> &'static str {
        match self {
            RunConfig::TrainBlackbox(_) => "train-blackbox",
            RunConfig::TrainAe(_) => "train-ae",
            RunConfig::Explain(_) => "explain",
            RunConfig::Benchmark(_) => "benchmark",
        }
    }

    /// File name of the echo written into the output directory. Commands get
    /// distinct names so training both models into one directory works.
    pub fn echo_name(&self) -> String {
        format!("{}-config.json", self.command())
    }

    pub fn load(path: &Path) -> alime::Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| AlimeError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| AlimeError::config(format!("{}: not a run configuration: {e}", path.display())))
    }
}

/// Where the rows come from and how they are split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub dataset: Schema,
    pub data_path: PathBuf,
    pub test_fraction: f64,
    /// Drives the train/test shuffle.
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let dataset = Schema::BreastCancer;
        DataConfig {
            dataset,
            data_path: default_data_path(dataset),
            test_fraction: DEFAULT_TEST_FRACTION,
            split_seed: 0,
        }
    }
}

pub fn default_data_path(dataset: Schema) -> PathBuf {
    PathBuf::from(format!("data/{dataset}.csv"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            seed: 0,
            epochs: 200,
            learning_rate: 0.05,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainBlackboxConfig {
    pub data: DataConfig,
    pub training: TrainingConfig,
    pub out: PathBuf,
}

impl Default for TrainBlackboxConfig {
    fn default() -> Self {
        TrainBlackboxConfig {
            data: DataConfig::default(),
            training: TrainingConfig::default(),
            out: PathBuf::from("runs/models"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainAeConfig {
    pub data: DataConfig,
    pub training: TrainingConfig,
    /// `None` picks min(K - 1, 8).
    pub latent_dim: Option<usize>,
    pub noise_sigma: f64,
    pub out: PathBuf,
}

impl Default for TrainAeConfig {
    fn default() -> Self {
        TrainAeConfig {
            data: DataConfig::default(),
            training: TrainingConfig::default(),
            latent_dim: None,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            out: PathBuf::from("runs/models"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    /// Directory holding `blackbox.json` and, for ALIME, `autoencoder.json`.
    pub model_dir: PathBuf,
    pub method: Method,
    /// Position within the test set.
    pub instance: usize,
    pub n: usize,
    pub alpha: f64,
    /// Seeds the LIME draw or the ALIME pool.
    pub seed: u64,
    pub m: usize,
    /// Existing pool file; when absent a pool of `m` points is drawn.
    pub pool: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            model_dir: PathBuf::from("runs/models"),
            method: Method::Alime,
            instance: 0,
            n: 1000,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            m: DEFAULT_POOL_SIZE,
            pool: None,
            out: PathBuf::from("runs/explain"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    Fidelity,
    Stability,
}

impl BenchmarkKind {
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Fidelity => "fidelity",
            BenchmarkKind::Stability => "stability",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub kind: BenchmarkKind,
    pub model_dir: PathBuf,
    pub n_values: Vec<usize>,
    pub alpha: f64,
    pub seed: u64,
    pub m: usize,
    pub iterations: usize,
    /// Test-set position for stability; `None` draws one from `seed`.
    pub instance: Option<usize>,
    /// Existing pool file for fidelity sweeps.
    pub pool: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            kind: BenchmarkKind::Fidelity,
            model_dir: PathBuf::from("runs/models"),
            n_values: DEFAULT_N_VALUES.to_vec(),
            alpha: DEFAULT_ALPHA,
            seed: 0,
            m: DEFAULT_POOL_SIZE,
            iterations: DEFAULT_ITERATIONS,
            instance: None,
            pool: None,
            out: PathBuf::from("runs/benchmark"),
        }
    }
}
