//! LIME and ALIME explainers over a shared distance -> kernel -> weighted
//! ridge pipeline.
//!
//! Both front-ends produce a set of pool points, their distances to the
//! instance, and black-box targets. They differ only in where distances are
//! measured (raw feature space vs. autoencoder latent space) and in which
//! points are kept (all of a fresh draw vs. the `n` nearest of a cached pool).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, AlimeError, Result};
use crate::models::{Embedder, Predictor};
use crate::sampling::{sample_pool, SamplePool};

pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lime,
    Alime,
}

impl Method {
    pub const BOTH: [Method; 2] = [Method::Lime, Method::Alime];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lime => "lime",
            Method::Alime => "alime",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = AlimeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lime" => Ok(Method::Lime),
            "alime" => Ok(Method::Alime),
            other => Err(AlimeError::config(format!("unknown method `{other}` (expected lime or alime)"))),
        }
    }
}

/// Surrogate fit settings shared by both explainers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Ridge penalty on the coefficients (intercept unpenalized).
    pub alpha: f64,
    /// Kernel distance scale `s` in `exp(-d / s)`.
    pub kernel_scale: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            alpha: DEFAULT_ALPHA,
            kernel_scale: 1.0,
        }
    }
}

impl SurrogateConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        SurrogateConfig {
            alpha,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(AlimeError::config("alpha must be finite and non-negative"));
        }
        if !(self.kernel_scale > 0.0 && self.kernel_scale.is_finite()) {
            return Err(AlimeError::config("kernel scale must be positive"));
        }
        Ok(())
    }
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

pub fn exp_kernel(d: f64) -> f64 {
    (-d).exp()
}

/// Proximity weights `exp(-d / scale)` for a set of distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelWeights {
    pub distances: Vec<f64>,
    pub weights: Vec<f64>,
}

impl KernelWeights {
    pub fn new(distances: Vec<f64>, scale: f64) -> Result<Self> {
        if let Some(d) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(AlimeError::config(format!("distance {d} is not a finite non-negative value")));
        }
        let weights = distances.iter().map(|d| exp_kernel(d / scale)).collect();
        Ok(KernelWeights { distances, weights })
    }
}

/// The `n` nearest pool indices, ordered by (distance, index).
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl Selection {
    pub fn max_distance(&self) -> f64 {
        self.distances.last().copied().unwrap_or(0.0)
    }
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Picks the `n` pool points closest to `x_embedding` in the cached latent
/// space; ties go to the lower index.
pub fn select_n_closest(pool: &SamplePool, x_embedding: &[f64], n: usize) -> Result<Selection> {
    let emb = pool
        .embeddings()
        .ok_or_else(|| AlimeError::config("pool has no embeddings attached"))?;
    check_len(emb.ncols(), x_embedding.len())?;
    let m = emb.nrows();
    if n == 0 || n > m {
        return Err(AlimeError::config(format!("cannot select {n} of {m} pool points")));
    }
    let mut scored: Vec<(f64, usize)> = (0..m)
        .map(|i| {
            let d2: f64 = emb
                .row(i)
                .iter()
                .zip(x_embedding)
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            (d2.sqrt(), i)
        })
        .collect();
    if n < m {
        scored.select_nth_unstable_by(n - 1, by_distance_then_index);
        scored.truncate(n);
    }
    scored.sort_unstable_by(by_distance_then_index);
    Ok(Selection {
        indices: scored.iter().map(|s| s.1).collect(),
        distances: scored.iter().map(|s| s.0).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl RidgeFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// Minimizes `sum w_i (y_i - b.x_i - b0)^2 + alpha |b|^2` by solving the
/// weighted normal equations on weighted-mean-centered data.
pub fn weighted_ridge_fit(x: &DMatrix<f64>, y: &[f64], w: &[f64], alpha: f64) -> Result<RidgeFit> {
    let (p, k) = x.shape();
    check_len(p, y.len())?;
    check_len(p, w.len())?;
    if p < 2 {
        return Err(AlimeError::config(format!("surrogate fit needs at least 2 points, got {p}")));
    }
    if w.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(AlimeError::config("surrogate weights must be positive and finite"));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(AlimeError::config("alpha must be finite and non-negative"));
    }

    let w_sum: f64 = w.iter().sum();
    let mut x_mean = vec![0.0; k];
    for (i, wi) in w.iter().enumerate() {
        for (j, m) in x_mean.iter_mut().enumerate() {
            *m += wi * x[(i, j)];
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= w_sum);
    let y_mean = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum::<f64>() / w_sum;

    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    let mut centered = vec![0.0; k];
    for i in 0..p {
        for j in 0..k {
            centered[j] = x[(i, j)] - x_mean[j];
        }
        let yc = y[i] - y_mean;
        for a in 0..k {
            let wa = w[i] * centered[a];
            rhs[a] += wa * yc;
            for b in a..k {
                gram[(a, b)] += wa * centered[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let scale = (0..k).map(|a| gram[(a, a)]).fold(0.0, f64::max);
    for a in 0..k {
        gram[(a, a)] += alpha;
    }

    let chol = gram.clone().cholesky().ok_or(AlimeError::SingularFit)?;
    if alpha == 0.0 {
        let l = chol.l_dirty();
        let min_pivot = (0..k).map(|a| l[(a, a)].powi(2)).fold(f64::INFINITY, f64::min);
        if min_pivot.is_nan() || min_pivot <= 1e-12 * scale {
            return Err(AlimeError::SingularFit);
        }
    }
    let beta = chol.solve(&rhs);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(AlimeError::SingularFit);
    }
    let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(RidgeFit {
        coefficients: beta.iter().copied().collect(),
        intercept,
    })
}

/// Weighted coefficient of determination of `fit` on its own points.
///
/// A target with no weighted variance scores 1 when the fit reproduces it
/// and 0 otherwise.
pub fn weighted_r2(fit: &RidgeFit, x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> f64 {
    let w_sum: f64 = w.iter().sum();
    let y_mean = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum::<f64>() / w_sum;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut row = vec![0.0; x.ncols()];
    for i in 0..x.nrows() {
        row.iter_mut().zip(x.row(i).iter()).for_each(|(d, s)| *d = *s);
        ss_res += w[i] * (y[i] - fit.predict(&row)).powi(2);
        ss_tot += w[i] * (y[i] - y_mean).powi(2);
    }
    let tiny = 1e-24 * w_sum;
    if ss_tot <= tiny {
        return if ss_res <= tiny { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

/// A fitted local linear surrogate around one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub method: Method,
    pub seed: u64,
    pub n_points: usize,
    pub alpha: f64,
    pub kernel_scale: f64,
    pub feature_names: Vec<String>,
    pub instance: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub local_r2: f64,
    pub local_mse: f64,
    /// Black-box probability at the instance.
    pub prediction: f64,
    /// Surrogate value at the instance.
    pub surrogate_prediction: f64,
}

impl Explanation {
    pub fn with_feature_names(mut self, names: &[String]) -> Result<Self> {
        check_len(self.coefficients.len(), names.len())?;
        self.feature_names = names.to_vec();
        Ok(self)
    }

    /// `(feature, coefficient)` sorted by descending magnitude, ties by feature order.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut out: Vec<(usize, f64)> = self.coefficients.iter().copied().enumerate().collect();
        out.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        out.into_iter()
            .map(|(j, c)| (self.feature_names[j].as_str(), c))
            .collect()
    }

    /// Bar-chart rows `feature,coefficient,sign` ordered by |coefficient|.
    pub fn to_bar_csv(&self) -> String {
        let mut out = String::from("feature,coefficient,sign\n");
        for (name, c) in self.ranked() {
            let sign = if c > 0.0 {
                "positive"
            } else if c < 0.0 {
                "negative"
            } else {
                "zero"
            };
            out.push_str(&format!("{name},{c:e},{sign}\n"));
        }
        out
    }
}

fn default_names(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("feature_{j}")).collect()
}

struct LocalProblem<'a> {
    method: Method,
    seed: u64,
    instance: &'a [f64],
    points: DMatrix<f64>,
    distances: Vec<f64>,
}

fn fit_local<P: Predictor + ?Sized>(f: &P, problem: LocalProblem<'_>, cfg: &SurrogateConfig) -> Result<Explanation> {
    let kernel = KernelWeights::new(problem.distances, cfg.kernel_scale)?;
    let targets = f.predict_batch(&problem.points)?;
    let fit = weighted_ridge_fit(&problem.points, &targets, &kernel.weights, cfg.alpha)?;
    let local_r2 = weighted_r2(&fit, &problem.points, &targets, &kernel.weights);
    let prediction = f.predict(problem.instance)?;
    let surrogate_prediction = fit.predict(problem.instance);
    Ok(Explanation {
        method: problem.method,
        seed: problem.seed,
        n_points: problem.points.nrows(),
        alpha: cfg.alpha,
        kernel_scale: cfg.kernel_scale,
        feature_names: default_names(problem.instance.len()),
        instance: problem.instance.to_vec(),
        coefficients: fit.coefficients,
        intercept: fit.intercept,
        local_r2,
        local_mse: (surrogate_prediction - prediction).powi(2),
        prediction,
        surrogate_prediction,
    })
}

/// LIME on a given set of perturbation points: raw-space distances, every point kept.
pub fn explain_lime_on_pool<P: Predictor + ?Sized>(
    f: &P,
    pool: &SamplePool,
    x: &[f64],
    cfg: &SurrogateConfig,
) -> Result<Explanation> {
    cfg.validate()?;
    check_len(f.n_features(), x.len())?;
    check_len(pool.n_features(), x.len())?;
    let points = pool.points();
    let mut row = vec![0.0; x.len()];
    let distances = (0..points.nrows())
        .map(|i| {
            row.iter_mut().zip(points.row(i).iter()).for_each(|(d, s)| *d = *s);
            euclidean_distance(&row, x)
        })
        .collect::<Result<Vec<_>>>()?;
    fit_local(
        f,
        LocalProblem {
            method: Method::Lime,
            seed: pool.seed(),
            instance: x,
            points: points.clone(),
            distances,
        },
        cfg,
    )
}

/// LIME: draws a fresh Gaussian sample of `n` points from `seed` and fits the
/// surrogate on all of them.
pub fn explain_lime<P: Predictor + ?Sized>(
    f: &P,
    x: &[f64],
    n: usize,
    cfg: &SurrogateConfig,
    seed: u64,
) -> Result<Explanation> {
    let pool = sample_pool(x.len(), n, seed)?;
    explain_lime_on_pool(f, &pool, x, cfg)
}

/// ALIME: keeps the `n` pool points nearest to `x` in the embedder's latent
/// space and weights each by its latent distance.
pub fn explain_alime<P, E>(
    f: &P,
    embedder: &E,
    pool: &SamplePool,
    x: &[f64],
    n: usize,
    cfg: &SurrogateConfig,
) -> Result<Explanation>
where
    P: Predictor + ?Sized,
    E: Embedder + ?Sized,
{
    cfg.validate()?;
    check_len(f.n_features(), x.len())?;
    check_len(pool.n_features(), x.len())?;
    let fingerprint = embedder.fingerprint();
    if pool.embedder_id() != Some(fingerprint.as_str()) {
        return Err(AlimeError::config(
            "pool embeddings were not produced by this autoencoder",
        ));
    }
    let x_embedding = embedder.embed(x)?;
    let selection = select_n_closest(pool, &x_embedding, n)?;

    // fit in pool order so results do not depend on distance ranking
    let mut chosen: Vec<(usize, f64)> = selection.indices.into_iter().zip(selection.distances).collect();
    chosen.sort_unstable_by_key(|c| c.0);
    let all = pool.points();
    let points = DMatrix::from_fn(chosen.len(), all.ncols(), |r, c| all[(chosen[r].0, c)]);
    fit_local(
        f,
        LocalProblem {
            method: Method::Alime,
            seed: pool.seed(),
            instance: x,
            points,
            distances: chosen.iter().map(|c| c.1).collect(),
        },
        cfg,
    )
}
