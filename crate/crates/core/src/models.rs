//! The two concrete networks: the black-box classifier being explained and
//! the denoising autoencoder whose encoder supplies ALIME's latent space.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Schema, TabularDataset};
use crate::error::{check_len, AlimeError, Result};
use crate::neural::{self, Activation, Loss, MlpModel, TrainConfig};

/// Hidden width of the black-box classifier.
pub const BLACKBOX_HIDDEN: usize = 30;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;

/// Anything that maps a standardized feature vector to a positive-class probability.
pub trait Predictor: Sync {
    fn n_features(&self) -> usize;

    /// One probability per input row.
    fn predict_batch(&self, x: &DMatrix<f64>) -> Result<Vec<f64>>;

    fn predict(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n_features(), x.len())?;
        let row = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.predict_batch(&row)?[0])
    }
}

/// Maps feature vectors into the space where proximity is measured.
pub trait Embedder: Sync {
    fn input_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn embed_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>>;
    /// Identifies the mapping so cached embeddings can be matched to it.
    fn fingerprint(&self) -> String;

    fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), x.len())?;
        let row = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.embed_batch(&row)?.iter().copied().collect())
    }
}

/// Outcome of a training run together with its per-epoch loss curve.
#[derive(Clone, Debug)]
pub struct Fitted<T> {
    pub model: T,
    pub loss_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlackBoxPredictor {
    pub schema: Option<Schema>,
    pub training_seed: u64,
    pub positive_class_index: usize,
    pub model: MlpModel,
}

impl BlackBoxPredictor {
    pub fn new(model: MlpModel, positive_class_index: usize) -> Result<Self> {
        if model.output_dim() != 2 {
            return Err(AlimeError::config(format!(
                "black box must have 2 outputs, found {}",
                model.output_dim()
            )));
        }
        if positive_class_index > 1 {
            return Err(AlimeError::config("positive class index must be 0 or 1"));
        }
        Ok(BlackBoxPredictor {
            schema: None,
            training_seed: 0,
            positive_class_index,
            model,
        })
    }

    /// Both class probabilities per row.
    pub fn class_probabilities(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.model.forward_batch(x)
    }

    pub fn predict_class(&self, x: &DMatrix<f64>) -> Result<Vec<u8>> {
        Ok(self
            .predict_batch(x)?
            .into_iter()
            .map(|p| u8::from(p > 0.5))
            .collect())
    }

    pub fn accuracy(&self, x: &DMatrix<f64>, labels: &[u8]) -> Result<f64> {
        check_len(x.nrows(), labels.len())?;
        let hits = self
            .predict_class(x)?
            .iter()
            .zip(labels)
            .filter(|(p, l)| p == l)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

impl Predictor for BlackBoxPredictor {
    fn n_features(&self) -> usize {
        self.model.input_dim()
    }

    fn predict_batch(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let probs = self.class_probabilities(x)?;
        Ok(probs.column(self.positive_class_index).iter().copied().collect())
    }
}

pub fn predict_proba(p: &BlackBoxPredictor, x: &[f64]) -> Result<f64> {
    p.predict(x)
}

/// Always returns the same probability.
#[derive(Clone, Debug)]
pub struct ConstantPredictor {
    pub n_features: usize,
    pub value: f64,
}

impl Predictor for ConstantPredictor {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_batch(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_len(self.n_features, x.ncols())?;
        Ok(vec![self.value; x.nrows()])
    }
}

/// Wraps a closure over one feature row.
pub struct FnPredictor<F> {
    pub n_features: usize,
    pub f: F,
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_batch(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_len(self.n_features, x.ncols())?;
        let mut row = vec![0.0; x.ncols()];
        Ok((0..x.nrows())
            .map(|r| {
                row.iter_mut().zip(x.row(r).iter()).for_each(|(d, s)| *d = *s);
                (self.f)(&row)
            })
            .collect())
    }
}

fn one_hot(labels: &[u8]) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), 2, |r, c| if labels[r] as usize == c { 1.0 } else { 0.0 })
}

/// Trains the `K -> 30 -> 2` relu/softmax classifier on the training rows.
pub fn train_blackbox(data: &TabularDataset, cfg: &TrainConfig) -> Result<Fitted<BlackBoxPredictor>> {
    if cfg.loss != Loss::Bce {
        return Err(AlimeError::config("black box is trained with cross-entropy"));
    }
    let k = data.n_features();
    let init = neural::init_model(
        &[k, BLACKBOX_HIDDEN, 2],
        &[Activation::Relu, Activation::Softmax],
        cfg.seed,
    )?;
    let inputs = data.train_features();
    let targets = one_hot(&data.train_labels());
    let out = neural::train(&init, &inputs, &targets, cfg)?;
    // labels are encoded with the positive class as 1, so column 1 is positive
    let mut predictor = BlackBoxPredictor::new(out.model, 1)?;
    predictor.schema = Some(data.name);
    predictor.training_seed = cfg.seed;
    Ok(Fitted {
        model: predictor,
        loss_history: out.loss_history,
    })
}

/// Adds `N(0, sigma^2)` noise to every coordinate.
pub fn corrupt<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let eps: f64 = StandardNormal.sample(rng);
            v + sigma * eps
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoisingAutoencoder {
    pub schema: Option<Schema>,
    pub training_seed: u64,
    pub latent_dim: usize,
    pub noise_sigma: f64,
    pub encoder: MlpModel,
    pub decoder: MlpModel,
}

impl DenoisingAutoencoder {
    pub fn new(encoder: MlpModel, decoder: MlpModel, noise_sigma: f64) -> Result<Self> {
        let latent_dim = encoder.output_dim();
        if decoder.input_dim() != latent_dim || decoder.output_dim() != encoder.input_dim() {
            return Err(AlimeError::config(
                "decoder must map the latent width back to the input width",
            ));
        }
        if latent_dim > encoder.input_dim() {
            return Err(AlimeError::config(format!(
                "latent width {latent_dim} exceeds input width {}",
                encoder.input_dim()
            )));
        }
        Ok(DenoisingAutoencoder {
            schema: None,
            training_seed: 0,
            latent_dim,
            noise_sigma,
            encoder,
            decoder,
        })
    }

    pub fn reconstruct_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.decoder.forward_batch(&self.encoder.forward_batch(x)?)
    }

    /// Mean squared reconstruction error over every element.
    pub fn reconstruction_mse(&self, x: &DMatrix<f64>) -> Result<f64> {
        let recon = self.reconstruct_batch(x)?;
        Ok((recon - x).norm_squared() / x.len() as f64)
    }
}

impl Embedder for DenoisingAutoencoder {
    fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn embed_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.encoder.forward_batch(x)
    }

    fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"encoder");
        for layer in self.encoder.layers() {
            hasher.update((layer.input_dim() as u64).to_le_bytes());
            hasher.update((layer.output_dim() as u64).to_le_bytes());
            hasher.update(format!("{:?}", layer.activation).as_bytes());
        }
        for p in self.encoder.params() {
            hasher.update(p.to_le_bytes());
        }
        hex_prefix(&hasher.finalize(), 16)
    }
}

pub(crate) fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes.iter().take(n).map(|b| format!("{b:02x}")).collect()
}

pub fn embed(ae: &DenoisingAutoencoder, x: &[f64]) -> Result<Vec<f64>> {
    ae.embed(x)
}

/// The identity map; LIME's raw-space proximity expressed as an embedder.
#[derive(Clone, Copy, Debug)]
pub struct IdentityEmbedder {
    pub dim: usize,
}

impl Embedder for IdentityEmbedder {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len(self.dim, x.ncols())?;
        Ok(x.clone())
    }

    fn fingerprint(&self) -> String {
        format!("identity-{}", self.dim)
    }
}

/// Layer widths of the autoencoder: `K -> hidden -> latent -> hidden -> K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderShape {
    pub hidden: usize,
    pub latent: usize,
}

impl AutoencoderShape {
    pub fn default_for(k: usize) -> Self {
        AutoencoderShape {
            hidden: k.max(8),
            latent: default_latent_dim(k),
        }
    }
}

pub fn default_latent_dim(k: usize) -> usize {
    k.saturating_sub(1).clamp(1, 8)
}

/// Trains the denoising autoencoder end to end on `(corrupt(x), x)` pairs
/// from the training rows, with fresh noise each epoch.
pub fn train_autoencoder(
    data: &TabularDataset,
    latent_dim: usize,
    noise_sigma: f64,
    cfg: &TrainConfig,
) -> Result<Fitted<DenoisingAutoencoder>> {
    let k = data.n_features();
    let shape = AutoencoderShape {
        hidden: k.max(8),
        latent: latent_dim,
    };
    let mut fitted = train_autoencoder_shaped(&data.train_features(), shape, noise_sigma, cfg)?;
    fitted.model.schema = Some(data.name);
    Ok(fitted)
}

pub fn train_autoencoder_shaped(
    train_rows: &DMatrix<f64>,
    shape: AutoencoderShape,
    noise_sigma: f64,
    cfg: &TrainConfig,
) -> Result<Fitted<DenoisingAutoencoder>> {
    let k = train_rows.ncols();
    if shape.latent == 0 || shape.latent > k {
        return Err(AlimeError::config(format!(
            "latent dimension must lie in 1..={k}, got {}",
            shape.latent
        )));
    }
    if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
        return Err(AlimeError::config("noise sigma must be positive"));
    }
    if cfg.loss != Loss::Mse {
        return Err(AlimeError::config("autoencoder is trained with squared error"));
    }
    let init = neural::init_model(
        &[k, shape.hidden, shape.latent, shape.hidden, k],
        &[
            Activation::Relu,
            Activation::Identity,
            Activation::Relu,
            Activation::Identity,
        ],
        cfg.seed,
    )?;
    let out = neural::train_denoising(&init, train_rows, train_rows, cfg, Some(noise_sigma))?;
    let (encoder, decoder) = out.model.split_at(2)?;
    let mut ae = DenoisingAutoencoder::new(encoder, decoder, noise_sigma)?;
    ae.training_seed = cfg.seed;
    Ok(Fitted {
        model: ae,
        loss_history: out.loss_history,
    })
}

/// Deterministic generator used wherever a seed is given.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
