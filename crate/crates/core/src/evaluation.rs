//! Fidelity and stability sweeps comparing the two explainers.
//!
//! Fidelity: for each pool size `n`, explain every test instance and average
//! the surrogate's kernel-weighted R^2 on its own fit points and the squared
//! gap between surrogate and black box at the instance.
//!
//! Stability: explain one test instance repeatedly with fresh samples and
//! summarize the spread of the absolute coefficients.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{AlimeError, Result};
use crate::explain::{explain_alime, explain_lime, Explanation, Method, SurrogateConfig};
use crate::models::{seeded_rng, Embedder, Predictor};
use crate::sampling::{attach_embeddings, sample_pool, SamplePool};

pub const DEFAULT_N_VALUES: [usize; 7] = [100, 200, 500, 1000, 2000, 5000, 10000];
pub const DEFAULT_ITERATIONS: usize = 10;

/// Documented in every report so reruns can rederive per-explanation seeds.
pub const SEED_RULE: &str = "splitmix64 chain over (base_seed, n, test_position)";

pub const R2_DEFINITION: &str = "kernel-weighted R^2 of the surrogate on its own fit points";

/// Mixes `parts` into `base` with the splitmix64 finalizer.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ p))
}

/// Which explainer a sweep drives.
#[derive(Clone, Copy)]
pub enum Explainer<'a> {
    /// Fresh Gaussian draw of `n` points per explanation.
    Lime,
    /// `n` nearest points of a fixed, pre-embedded pool.
    Alime {
        embedder: &'a dyn Embedder,
        pool: &'a SamplePool,
    },
}

impl Explainer<'_> {
    pub fn method(&self) -> Method {
        match self {
            Explainer::Lime => Method::Lime,
            Explainer::Alime { .. } => Method::Alime,
        }
    }

    fn pool_info(&self) -> (Option<u64>, Option<usize>) {
        match self {
            Explainer::Lime => (None, None),
            Explainer::Alime { pool, .. } => (Some(pool.seed()), Some(pool.len())),
        }
    }

    fn explain(&self, f: &dyn Predictor, x: &[f64], n: usize, cfg: &SurrogateConfig, seed: u64) -> Result<Explanation> {
        match self {
            Explainer::Lime => explain_lime(f, x, n, cfg, seed),
            Explainer::Alime { embedder, pool } => explain_alime(f, *embedder, pool, x, n, cfg),
        }
    }
}

fn validate_n_values(n_values: &[usize], explainer: &Explainer<'_>) -> Result<()> {
    if n_values.is_empty() {
        return Err(AlimeError::config("sweep needs at least one n value"));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AlimeError::config("sweep n values must be strictly increasing"));
    }
    if n_values[0] < 2 {
        return Err(AlimeError::config("sweep n values must be at least 2"));
    }
    if let Explainer::Alime { pool, .. } = explainer {
        let max = *n_values.last().expect("non-empty");
        if max > pool.len() {
            return Err(AlimeError::config(format!(
                "n = {max} exceeds the pool size {}",
                pool.len()
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityPoint {
    pub n: usize,
    pub mean_r2: f64,
    pub mean_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub dataset: String,
    pub method: Method,
    pub n_test: usize,
    pub alpha: f64,
    pub kernel_scale: f64,
    pub base_seed: u64,
    pub seed_rule: String,
    pub r2_definition: String,
    pub pool_seed: Option<u64>,
    pub pool_size: Option<usize>,
    pub sweep: Vec<FidelityPoint>,
}

/// Explains each listed row of `data` with `n` points; results come back in
/// `rows` order.
pub fn explain_rows(
    f: &dyn Predictor,
    explainer: &Explainer<'_>,
    data: &TabularDataset,
    rows: &[usize],
    n: usize,
    cfg: &SurrogateConfig,
    base_seed: u64,
) -> Result<Vec<Explanation>> {
    rows.par_iter()
        .enumerate()
        .map(|(pos, &row)| {
            let seed = derive_seed(base_seed, &[n as u64, pos as u64]);
            explainer.explain(f, &data.row(row), n, cfg, seed)
        })
        .collect()
}

pub fn fidelity_sweep(
    f: &dyn Predictor,
    explainer: &Explainer<'_>,
    data: &TabularDataset,
    n_values: &[usize],
    cfg: &SurrogateConfig,
    base_seed: u64,
) -> Result<FidelityReport> {
    fidelity_sweep_rows(f, explainer, data, &data.test_idx, n_values, cfg, base_seed)
}

/// [`fidelity_sweep`] over an explicit subset of rows.
pub fn fidelity_sweep_rows(
    f: &dyn Predictor,
    explainer: &Explainer<'_>,
    data: &TabularDataset,
    rows: &[usize],
    n_values: &[usize],
    cfg: &SurrogateConfig,
    base_seed: u64,
) -> Result<FidelityReport> {
    validate_n_values(n_values, explainer)?;
    if rows.is_empty() {
        return Err(AlimeError::config("no instances to explain"));
    }
    let mut sweep = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let explanations = explain_rows(f, explainer, data, rows, n, cfg, base_seed)?;
        let count = explanations.len() as f64;
        // sequential sums keep the means bitwise reproducible
        let mean_r2 = explanations.iter().map(|e| e.local_r2).sum::<f64>() / count;
        let mean_mse = explanations.iter().map(|e| e.local_mse).sum::<f64>() / count;
        log::debug!("{} fidelity n={n}: r2 {mean_r2:.4} mse {mean_mse:.6}", explainer.method());
        sweep.push(FidelityPoint { n, mean_r2, mean_mse });
    }
    let (pool_seed, pool_size) = explainer.pool_info();
    Ok(FidelityReport {
        dataset: data.name.to_string(),
        method: explainer.method(),
        n_test: rows.len(),
        alpha: cfg.alpha,
        kernel_scale: cfg.kernel_scale,
        base_seed,
        seed_rule: SEED_RULE.to_string(),
        r2_definition: R2_DEFINITION.to_string(),
        pool_seed,
        pool_size,
        sweep,
    })
}

/// Runs `explain_fn` once per iteration with seed `base_seed + i` and stacks
/// the absolute coefficients into an `iterations x K` matrix.
pub fn stability_run<F>(explain_fn: F, iterations: usize, base_seed: u64) -> Result<DMatrix<f64>>
where
    F: Fn(u64) -> Result<Explanation> + Sync,
{
    if iterations < 2 {
        return Err(AlimeError::config("stability needs at least 2 iterations"));
    }
    let rows: Vec<Vec<f64>> = (0..iterations)
        .into_par_iter()
        .map(|i| {
            explain_fn(base_seed.wrapping_add(i as u64))
                .map(|e| e.coefficients.iter().map(|c| c.abs()).collect())
        })
        .collect::<Result<_>>()?;
    let k = rows[0].len();
    Ok(DMatrix::from_row_iterator(iterations, k, rows.into_iter().flatten()))
}

/// `(mean_std, mean_cv)` over features: the per-feature sample standard
/// deviation of |coefficient| across iterations, and that deviation divided by
/// the per-feature mean |coefficient|. Features with zero mean add 0 to the
/// ratio average.
pub fn stability_metrics(coeffs: &DMatrix<f64>) -> Result<(f64, f64)> {
    let (iters, k) = coeffs.shape();
    if iters < 2 || k == 0 {
        return Err(AlimeError::config("need at least 2 iterations and 1 feature"));
    }
    let mut std_sum = 0.0;
    let mut cv_sum = 0.0;
    for j in 0..k {
        let col: Vec<f64> = coeffs.column(j).iter().map(|c| c.abs()).collect();
        // shifted by the first value so identical rows give exactly zero spread
        let shifted: Vec<f64> = col.iter().map(|v| v - col[0]).collect();
        let shift_mean = shifted.iter().sum::<f64>() / iters as f64;
        let mean = col[0] + shift_mean;
        let var = shifted.iter().map(|d| (d - shift_mean).powi(2)).sum::<f64>() / (iters - 1) as f64;
        let std = var.sqrt();
        std_sum += std;
        if mean > 0.0 {
            cv_sum += std / mean;
        }
    }
    Ok((std_sum / k as f64, cv_sum / k as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub n: usize,
    pub mean_std: f64,
    pub mean_cv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub dataset: String,
    pub method: Method,
    /// Row of the dataset that was explained.
    pub instance_index: usize,
    pub iterations: usize,
    pub alpha: f64,
    pub kernel_scale: f64,
    pub base_seed: u64,
    pub pool_size: Option<usize>,
    pub sweep: Vec<StabilityPoint>,
}

/// Picks one test row by seeded uniform draw.
pub fn choose_stability_instance(data: &TabularDataset, seed: u64) -> usize {
    let mut rng = seeded_rng(seed);
    data.test_idx[rng.random_range(0..data.test_idx.len())]
}

/// How the stability sweep resamples between iterations.
#[derive(Clone, Copy)]
pub enum StabilityExplainer<'a> {
    Lime,
    /// Every iteration draws a new pool of `pool_size` points and re-embeds it.
    Alime {
        embedder: &'a dyn Embedder,
        pool_size: usize,
    },
}

impl StabilityExplainer<'_> {
    pub fn method(&self) -> Method {
        match self {
            StabilityExplainer::Lime => Method::Lime,
            StabilityExplainer::Alime { .. } => Method::Alime,
        }
    }
}

/// One explanation of `x` with `n` points whose randomness comes from `seed`.
pub fn explain_with_seed(
    f: &dyn Predictor,
    explainer: &StabilityExplainer<'_>,
    x: &[f64],
    n: usize,
    cfg: &SurrogateConfig,
    seed: u64,
) -> Result<Explanation> {
    match explainer {
        StabilityExplainer::Lime => explain_lime(f, x, n, cfg, seed),
        StabilityExplainer::Alime { embedder, pool_size } => {
            let pool = attach_embeddings(&sample_pool(x.len(), *pool_size, seed)?, *embedder)?;
            explain_alime(f, *embedder, &pool, x, n, cfg)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn stability_sweep(
    f: &dyn Predictor,
    explainer: &StabilityExplainer<'_>,
    data: &TabularDataset,
    instance_index: usize,
    n_values: &[usize],
    iterations: usize,
    cfg: &SurrogateConfig,
    base_seed: u64,
) -> Result<StabilityReport> {
    if n_values.is_empty() {
        return Err(AlimeError::config("sweep needs at least one n value"));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) || n_values[0] < 2 {
        return Err(AlimeError::config("sweep n values must be strictly increasing and at least 2"));
    }
    if let StabilityExplainer::Alime { pool_size, .. } = explainer {
        if n_values.iter().any(|&n| n > *pool_size) {
            return Err(AlimeError::config("sweep n exceeds the ALIME pool size"));
        }
    }
    if instance_index >= data.n_rows() {
        return Err(AlimeError::config(format!("instance {instance_index} out of range")));
    }
    let x = data.row(instance_index);
    let mut sweep = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let coeffs = stability_run(|seed| explain_with_seed(f, explainer, &x, n, cfg, seed), iterations, base_seed)?;
        let (mean_std, mean_cv) = stability_metrics(&coeffs)?;
        log::debug!("{} stability n={n}: std {mean_std:.6} cv {mean_cv:.4}", explainer.method());
        sweep.push(StabilityPoint { n, mean_std, mean_cv });
    }
    Ok(StabilityReport {
        dataset: data.name.to_string(),
        method: explainer.method(),
        instance_index,
        iterations,
        alpha: cfg.alpha,
        kernel_scale: cfg.kernel_scale,
        base_seed,
        pool_size: match explainer {
            StabilityExplainer::Lime => None,
            StabilityExplainer::Alime { pool_size, .. } => Some(*pool_size),
        },
        sweep,
    })
}

/// Flat `dataset,method,n,metric,value` rows for plotting.
pub trait PlotRows {
    fn plot_rows(&self) -> Vec<(String, Method, usize, &'static str, f64)>;
}

impl PlotRows for FidelityReport {
    fn plot_rows(&self) -> Vec<(String, Method, usize, &'static str, f64)> {
        self.sweep
            .iter()
            .flat_map(|p| {
                [
                    (self.dataset.clone(), self.method, p.n, "mean_r2", p.mean_r2),
                    (self.dataset.clone(), self.method, p.n, "mean_mse", p.mean_mse),
                ]
            })
            .collect()
    }
}

impl PlotRows for StabilityReport {
    fn plot_rows(&self) -> Vec<(String, Method, usize, &'static str, f64)> {
        self.sweep
            .iter()
            .flat_map(|p| {
                [
                    (self.dataset.clone(), self.method, p.n, "mean_std", p.mean_std),
                    (self.dataset.clone(), self.method, p.n, "mean_cv", p.mean_cv),
                ]
            })
            .collect()
    }
}

pub fn plot_csv<R: PlotRows>(reports: &[R]) -> String {
    let mut out = String::from("dataset,method,n,metric,value\n");
    for r in reports {
        for (dataset, method, n, metric, value) in r.plot_rows() {
            out.push_str(&format!("{dataset},{method},{n},{metric},{value:e}\n"));
        }
    }
    out
}

/// Fraction of sweep points where `better(a, b)` holds, pairing points by `n`.
pub fn win_fraction<T>(a: &[T], b: &[T], better: impl Fn(&T, &T) -> bool) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| better(x, y)).count() as f64 / n as f64
}
