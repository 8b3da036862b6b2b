//! The synthetic Gaussian dataset both explainers draw from, with an
//! optional cache of latent embeddings for ALIME.

use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AlimeError, Result};
use crate::models::{hex_prefix, seeded_rng, Embedder};

pub const DEFAULT_POOL_SIZE: usize = 10_000;

/// Points are drawn row by row from a ChaCha8 stream through the ziggurat
/// standard-normal sampler of `rand_distr` 0.5.
pub const GENERATOR_TAG: &str = "chacha8/rand_distr-0.5-standard-normal/row-major";

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePool {
    points: DMatrix<f64>,
    embeddings: Option<DMatrix<f64>>,
    embedder_id: Option<String>,
    seed: u64,
}

impl SamplePool {
    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn embeddings(&self) -> Option<&DMatrix<f64>> {
        self.embeddings.as_ref()
    }

    pub fn embedder_id(&self) -> Option<&str> {
        self.embedder_id.as_deref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    /// Content hash over points and embeddings.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.points.nrows() as u64).to_le_bytes());
        hasher.update((self.points.ncols() as u64).to_le_bytes());
        for v in self.points.iter() {
            hasher.update(v.to_le_bytes());
        }
        if let Some(e) = &self.embeddings {
            hasher.update((e.ncols() as u64).to_le_bytes());
            for v in e.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex_prefix(&hasher.finalize(), 32)
    }

    /// Wraps externally supplied points (no embeddings).
    pub fn from_points(points: DMatrix<f64>, seed: u64) -> Result<Self> {
        if points.nrows() < 2 || points.ncols() == 0 {
            return Err(AlimeError::config("a pool needs at least 2 points of positive width"));
        }
        Ok(SamplePool {
            points,
            embeddings: None,
            embedder_id: None,
            seed,
        })
    }
}

/// Draws `m` i.i.d. standard-normal points in `k` dimensions.
pub fn sample_pool(k: usize, m: usize, seed: u64) -> Result<SamplePool> {
    if m < 2 {
        return Err(AlimeError::config(format!("pool size must be at least 2, got {m}")));
    }
    if k == 0 {
        return Err(AlimeError::config("pool dimension must be positive"));
    }
    let mut rng = seeded_rng(seed);
    let points = DMatrix::from_row_iterator(
        m,
        k,
        (0..m * k).map(|_| StandardNormal.sample(&mut rng)),
    );
    SamplePool::from_points(points, seed)
}

/// Computes and caches the latent embedding of every pool point.
pub fn attach_embeddings<E: Embedder + ?Sized>(pool: &SamplePool, embedder: &E) -> Result<SamplePool> {
    if embedder.input_dim() != pool.n_features() {
        return Err(AlimeError::config(format!(
            "embedder expects {} features, pool has {}",
            embedder.input_dim(),
            pool.n_features()
        )));
    }
    let embeddings = embedder.embed_batch(&pool.points)?;
    Ok(SamplePool {
        points: pool.points.clone(),
        embeddings: Some(embeddings),
        embedder_id: Some(embedder.fingerprint()),
        seed: pool.seed,
    })
}

// ---------------------------------------------------------------------------
// JSON persistence
// ---------------------------------------------------------------------------

pub const POOL_FORMAT: &str = "alime-pool";
pub const POOL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct PoolDocument {
    format: String,
    version: u32,
    generator: String,
    seed: u64,
    m: usize,
    k: usize,
    points: Vec<Vec<f64>>,
    #[serde(default)]
    embedder_id: Option<String>,
    #[serde(default)]
    embeddings: Option<Vec<Vec<f64>>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, width: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != width) {
        return Err(AlimeError::config(format!("{what} rows must all have width {width}")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), width, rows.into_iter().flatten()))
}

impl Serialize for SamplePool {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoolDocument {
            format: POOL_FORMAT.into(),
            version: POOL_VERSION,
            generator: GENERATOR_TAG.into(),
            seed: self.seed,
            m: self.len(),
            k: self.n_features(),
            points: rows_of(&self.points),
            embedder_id: self.embedder_id.clone(),
            embeddings: self.embeddings.as_ref().map(rows_of),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SamplePool {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let doc = PoolDocument::deserialize(d)?;
        if doc.format != POOL_FORMAT || doc.version != POOL_VERSION {
            return Err(D::Error::custom(format!("unsupported pool document {} v{}", doc.format, doc.version)));
        }
        if doc.points.len() != doc.m {
            return Err(D::Error::custom("pool row count does not match m"));
        }
        let points = matrix_from_rows(doc.points, doc.k, "point").map_err(D::Error::custom)?;
        let embeddings = match doc.embeddings {
            Some(rows) => {
                if rows.len() != doc.m {
                    return Err(D::Error::custom("embedding rows do not align with points"));
                }
                let width = rows.first().map_or(0, Vec::len);
                Some(matrix_from_rows(rows, width, "embedding").map_err(D::Error::custom)?)
            }
            None => None,
        };
        if embeddings.is_some() != doc.embedder_id.is_some() {
            return Err(D::Error::custom("embeddings and embedder id must be given together"));
        }
        let mut pool = SamplePool::from_points(points, doc.seed).map_err(D::Error::custom)?;
        pool.embeddings = embeddings;
        pool.embedder_id = doc.embedder_id;
        Ok(pool)
    }
}

pub fn save_pool(pool: &SamplePool, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string(pool)?;
    std::fs::write(path, json).map_err(|e| AlimeError::io(path, e))
}

pub fn load_pool(path: impl AsRef<Path>) -> Result<SamplePool> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AlimeError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
