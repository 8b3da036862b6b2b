use std::fs;
use std::path::Path;

use alime::dataset::{prepare, TabularDataset};
use alime::evaluation::{
    choose_stability_instance, fidelity_sweep, plot_csv, stability_sweep, win_fraction, Explainer, FidelityReport,
    StabilityExplainer, StabilityReport,
};
use alime::explain::{explain_alime, explain_lime, Explanation, SurrogateConfig};
use alime::models::{default_latent_dim, train_autoencoder, train_blackbox, BlackBoxPredictor, DenoisingAutoencoder};
use alime::neural::{Loss, TrainConfig};
use alime::sampling::{attach_embeddings, load_pool, sample_pool, save_pool, SamplePool};
use alime::{AlimeError, Embedder, Method, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{
    BenchmarkConfig, BenchmarkKind, DataConfig, ExplainConfig, RunConfig, TrainAeConfig, TrainBlackboxConfig,
    TrainingConfig,
};

pub const BLACKBOX_FILE: &str = "blackbox.json";
pub const AUTOENCODER_FILE: &str = "autoencoder.json";

/// A trained model together with the data split it was fitted on, so later
/// commands can rebuild the same standardized test set.
#[derive(Serialize, Deserialize)]
struct ModelArtifact<T> {
    data: DataConfig,
    model: T,
}

#[derive(Serialize)]
struct BlackboxSummary {
    dataset: String,
    n_train: usize,
    n_test: usize,
    train_accuracy: f64,
    test_accuracy: f64,
    training: TrainingConfig,
    loss_history: Vec<f64>,
}

#[derive(Serialize)]
struct AutoencoderSummary {
    dataset: String,
    latent_dim: usize,
    noise_sigma: f64,
    /// Clean test rows; the all-zero reconstruction scores about 1 here.
    test_reconstruction_mse: f64,
    train_reconstruction_mse: f64,
    fingerprint: String,
    training: TrainingConfig,
    loss_history: Vec<f64>,
}

#[derive(Serialize)]
struct ExplanationRecord<'a> {
    dataset: String,
    test_position: usize,
    row_index: usize,
    #[serde(flatten)]
    explanation: &'a Explanation,
}

#[derive(Serialize)]
struct BenchmarkReport<R> {
    kind: BenchmarkKind,
    dataset: String,
    lime: R,
    alime: R,
    /// Fraction of sweep points where ALIME scores at least as well as LIME.
    alime_win_fraction: WinFractions,
}

#[derive(Serialize)]
#[serde(untagged)]
enum WinFractions {
    Fidelity { r2: f64, mse: f64 },
    Stability { std: f64, cv: f64 },
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    match cfg {
        RunConfig::TrainBlackbox(c) => train_blackbox_cmd(c),
        RunConfig::TrainAe(c) => train_ae_cmd(c),
        RunConfig::Explain(c) => explain_cmd(c),
        RunConfig::Benchmark(c) => benchmark_cmd(c),
    }?;
    write_json(out_dir(cfg), &cfg.echo_name(), cfg)
}

fn out_dir(cfg: &RunConfig) -> &Path {
    match cfg {
        RunConfig::TrainBlackbox(c) => &c.out,
        RunConfig::TrainAe(c) => &c.out,
        RunConfig::Explain(c) => &c.out,
        RunConfig::Benchmark(c) => &c.out,
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AlimeError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| AlimeError::io(&path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| AlimeError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AlimeError::config(format!("{}: {e}", path.display())))
}

fn load_data(data: &DataConfig) -> Result<TabularDataset> {
    prepare(&data.data_path, data.dataset, data.test_fraction, data.split_seed)
}

fn train_config(loss: Loss, t: &TrainingConfig) -> TrainConfig {
    TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        ..TrainConfig::new(loss, t.seed)
    }
}

fn train_blackbox_cmd(cfg: &TrainBlackboxConfig) -> Result<()> {
    let data = load_data(&cfg.data)?;
    let fitted = train_blackbox(&data, &train_config(Loss::Bce, &cfg.training))?;
    let bb = fitted.model;
    let summary = BlackboxSummary {
        dataset: data.name.to_string(),
        n_train: data.train_idx.len(),
        n_test: data.test_idx.len(),
        train_accuracy: bb.accuracy(&data.train_features(), &data.train_labels())?,
        test_accuracy: bb.accuracy(&data.test_features(), &data.test_labels())?,
        training: cfg.training.clone(),
        loss_history: fitted.loss_history,
    };
    log::info!("{}: test accuracy {:.4}", summary.dataset, summary.test_accuracy);
    write_json(
        &cfg.out,
        BLACKBOX_FILE,
        &ModelArtifact {
            data: cfg.data.clone(),
            model: bb,
        },
    )?;
    write_json(&cfg.out, "blackbox-summary.json", &summary)
}

fn train_ae_cmd(cfg: &TrainAeConfig) -> Result<()> {
    let data = load_data(&cfg.data)?;
    let latent = cfg.latent_dim.unwrap_or_else(|| default_latent_dim(data.n_features()));
    let fitted = train_autoencoder(&data, latent, cfg.noise_sigma, &train_config(Loss::Mse, &cfg.training))?;
    let ae = fitted.model;
    let summary = AutoencoderSummary {
        dataset: data.name.to_string(),
        latent_dim: ae.latent_dim,
        noise_sigma: ae.noise_sigma,
        test_reconstruction_mse: ae.reconstruction_mse(&data.test_features())?,
        train_reconstruction_mse: ae.reconstruction_mse(&data.train_features())?,
        fingerprint: ae.fingerprint(),
        training: cfg.training.clone(),
        loss_history: fitted.loss_history,
    };
    log::info!(
        "{}: latent {} test reconstruction mse {:.4}",
        summary.dataset,
        summary.latent_dim,
        summary.test_reconstruction_mse
    );
    write_json(
        &cfg.out,
        AUTOENCODER_FILE,
        &ModelArtifact {
            data: cfg.data.clone(),
            model: ae,
        },
    )?;
    write_json(&cfg.out, "autoencoder-summary.json", &summary)
}

fn load_blackbox(dir: &Path) -> Result<(BlackBoxPredictor, TabularDataset)> {
    let artifact: ModelArtifact<BlackBoxPredictor> = read_json(&dir.join(BLACKBOX_FILE))?;
    let data = load_data(&artifact.data)?;
    Ok((artifact.model, data))
}

fn load_autoencoder(dir: &Path, data: &TabularDataset) -> Result<DenoisingAutoencoder> {
    let artifact: ModelArtifact<DenoisingAutoencoder> = read_json(&dir.join(AUTOENCODER_FILE))?;
    let ae = artifact.model;
    if ae.input_dim() != data.n_features() {
        return Err(AlimeError::config(format!(
            "autoencoder expects {} features but {} has {}",
            ae.input_dim(),
            data.name,
            data.n_features()
        )));
    }
    Ok(ae)
}

/// Loads `path` or draws a fresh pool, and makes sure it carries embeddings
/// from `ae`. Returns whether the pool is new and should be saved.
fn embedded_pool(path: Option<&Path>, ae: &DenoisingAutoencoder, m: usize, seed: u64) -> Result<(SamplePool, bool)> {
    let (pool, fresh) = match path {
        Some(p) => (load_pool(p)?, false),
        None => (sample_pool(ae.input_dim(), m, seed)?, true),
    };
    if pool.n_features() != ae.input_dim() {
        return Err(AlimeError::config(format!(
            "pool has {} features, autoencoder expects {}",
            pool.n_features(),
            ae.input_dim()
        )));
    }
    if pool.embedder_id() == Some(ae.fingerprint().as_str()) {
        return Ok((pool, fresh));
    }
    Ok((attach_embeddings(&pool, ae)?, fresh))
}

fn test_row(data: &TabularDataset, position: usize) -> Result<usize> {
    data.test_idx.get(position).copied().ok_or_else(|| {
        AlimeError::config(format!(
            "instance {position} out of range: the test set has {} rows",
            data.test_idx.len()
        ))
    })
}

fn explain_cmd(cfg: &ExplainConfig) -> Result<()> {
    let (bb, data) = load_blackbox(&cfg.model_dir)?;
    let row = test_row(&data, cfg.instance)?;
    let x = data.row(row);
    let surrogate = SurrogateConfig::with_alpha(cfg.alpha);
    let explanation = match cfg.method {
        Method::Lime => explain_lime(&bb, &x, cfg.n, &surrogate, cfg.seed)?,
        Method::Alime => {
            let ae = load_autoencoder(&cfg.model_dir, &data)?;
            let (pool, fresh) = embedded_pool(cfg.pool.as_deref(), &ae, cfg.m, cfg.seed)?;
            if fresh {
                fs::create_dir_all(&cfg.out).map_err(|e| AlimeError::io(&cfg.out, e))?;
                save_pool(&pool, cfg.out.join("pool.json"))?;
            }
            explain_alime(&bb, &ae, &pool, &x, cfg.n, &surrogate)?
        }
    }
    .with_feature_names(&data.feature_names)?;
    log::info!(
        "{} explanation of test row {}: local r2 {:.4}, mse {:.3e}",
        explanation.method,
        cfg.instance,
        explanation.local_r2,
        explanation.local_mse
    );
    write_json(
        &cfg.out,
        "explanation.json",
        &ExplanationRecord {
            dataset: data.name.to_string(),
            test_position: cfg.instance,
            row_index: row,
            explanation: &explanation,
        },
    )?;
    write_text(&cfg.out, "explanation-bars.csv", &explanation.to_bar_csv())
}

fn benchmark_cmd(cfg: &BenchmarkConfig) -> Result<()> {
    let (bb, data) = load_blackbox(&cfg.model_dir)?;
    let ae = load_autoencoder(&cfg.model_dir, &data)?;
    let surrogate = SurrogateConfig::with_alpha(cfg.alpha);
    let kind = cfg.kind.name();
    let dataset = data.name.to_string();
    match cfg.kind {
        BenchmarkKind::Fidelity => {
            let (pool, fresh) = embedded_pool(cfg.pool.as_deref(), &ae, cfg.m, cfg.seed)?;
            let lime = fidelity_sweep(&bb, &Explainer::Lime, &data, &cfg.n_values, &surrogate, cfg.seed)?;
            let alime_explainer = Explainer::Alime {
                embedder: &ae,
                pool: &pool,
            };
            let alime = fidelity_sweep(&bb, &alime_explainer, &data, &cfg.n_values, &surrogate, cfg.seed)?;
            let wins = WinFractions::Fidelity {
                r2: win_fraction(&alime.sweep, &lime.sweep, |a, b| a.mean_r2 >= b.mean_r2),
                mse: win_fraction(&alime.sweep, &lime.sweep, |a, b| a.mean_mse <= b.mean_mse),
            };
            write_text(&cfg.out, &format!("{kind}-plot.csv"), &plot_csv(&[lime.clone(), alime.clone()]))?;
            write_report::<FidelityReport>(cfg, dataset, lime, alime, wins)?;
            if fresh {
                save_pool(&pool, cfg.out.join("pool.json"))?;
            }
        }
        BenchmarkKind::Stability => {
            let row = match cfg.instance {
                Some(position) => test_row(&data, position)?,
                None => choose_stability_instance(&data, cfg.seed),
            };
            let run = |explainer: &StabilityExplainer<'_>| {
                stability_sweep(&bb, explainer, &data, row, &cfg.n_values, cfg.iterations, &surrogate, cfg.seed)
            };
            let lime = run(&StabilityExplainer::Lime)?;
            let alime = run(&StabilityExplainer::Alime {
                embedder: &ae,
                pool_size: cfg.m,
            })?;
            let wins = WinFractions::Stability {
                std: win_fraction(&alime.sweep, &lime.sweep, |a, b| a.mean_std <= b.mean_std),
                cv: win_fraction(&alime.sweep, &lime.sweep, |a, b| a.mean_cv <= b.mean_cv),
            };
            write_text(&cfg.out, &format!("{kind}-plot.csv"), &plot_csv(&[lime.clone(), alime.clone()]))?;
            write_report::<StabilityReport>(cfg, dataset, lime, alime, wins)?;
        }
    }
    Ok(())
}

fn write_report<R: Serialize>(cfg: &BenchmarkConfig, dataset: String, lime: R, alime: R, wins: WinFractions) -> Result<()> {
    log::info!("{} {}: ALIME win fractions {}", dataset, cfg.kind.name(), serde_json::to_string(&wins)?);
    let report = BenchmarkReport {
        kind: cfg.kind,
        dataset,
        lime,
        alime,
        alime_win_fraction: wins,
    };
    write_json(&cfg.out, &format!("{}-report.json", cfg.kind.name()), &report)
}
