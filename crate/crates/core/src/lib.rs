//! Local surrogate explanations for tabular classifiers.
//!
//! Two explainers share one weighted-ridge pipeline: LIME draws a fresh
//! Gaussian sample per explanation and weights it by raw-space distance,
//! while ALIME reuses one large pre-embedded sample and keeps the `n` points
//! closest to the instance in a denoising autoencoder's latent space.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod models;
pub mod neural;
pub mod sampling;

pub use dataset::{RawDataset, Schema, TabularDataset};
pub use error::{AlimeError, Result};
pub use explain::{Explanation, Method, SurrogateConfig};
pub use models::{BlackBoxPredictor, DenoisingAutoencoder, Embedder, Predictor};
pub use neural::{MlpModel, TrainConfig};
pub use sampling::SamplePool;
