use std::path::PathBuf;
use std::sync::OnceLock;

use alime::dataset::{load_csv, prepare, Schema, TabularDataset};
use alime::evaluation::{
    derive_seed, explain_with_seed, fidelity_sweep_rows, stability_metrics, stability_run, stability_sweep,
    Explainer, StabilityExplainer,
};
use alime::explain::{explain_alime, explain_lime, SurrogateConfig};
use alime::models::{
    default_latent_dim, train_autoencoder, train_autoencoder_shaped, train_blackbox, AutoencoderShape,
    ConstantPredictor, DenoisingAutoencoder,
};
use alime::neural::{init_model, train, Activation, Loss, TrainConfig};
use alime::sampling::{attach_embeddings, sample_pool, SamplePool};
use alime::{AlimeError, BlackBoxPredictor, Embedder};
use nalgebra::DMatrix;
use rand::Rng;

fn data_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

struct Trained {
    data: TabularDataset,
    blackbox: BlackBoxPredictor,
    ae: DenoisingAutoencoder,
    ae_losses: Vec<f64>,
}

fn breast_cancer() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let data = prepare(data_file("breast_cancer.csv"), Schema::BreastCancer, 0.3, 0).unwrap();
        let blackbox = train_blackbox(&data, &TrainConfig::new(Loss::Bce, 0)).unwrap().model;
        let fitted = train_autoencoder(&data, default_latent_dim(9), 0.1, &TrainConfig::new(Loss::Mse, 0)).unwrap();
        Trained {
            data,
            blackbox,
            ae: fitted.model,
            ae_losses: fitted.loss_history,
        }
    })
}

#[test]
fn shipped_files_parse() {
    let bc = load_csv(data_file("breast_cancer.csv"), Schema::BreastCancer).unwrap();
    assert_eq!((bc.n_rows(), bc.n_features(), bc.n_missing()), (699, 9, 16));
    assert_eq!(bc.labels.iter().filter(|&&l| l == 1).count(), 241);

    let hep = load_csv(data_file("hepatitis.csv"), Schema::Hepatitis).unwrap();
    assert_eq!((hep.n_rows(), hep.n_features()), (155, 19));
    assert_eq!(hep.labels.iter().filter(|&&l| l == 1).count(), 32);
}

#[test]
fn linear_fit_loss_keeps_falling() {
    let mut rng = alime::models::seeded_rng(21);
    let truth = [0.8, -1.5, 0.3];
    let x = DMatrix::from_fn(200, 3, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(200, 1, |r, _| 0.25 + (0..3).map(|c| truth[c] * x[(r, c)]).sum::<f64>());
    let model = init_model(&[3, 1], &[Activation::Identity], 5).unwrap();
    let cfg = TrainConfig {
        epochs: 100,
        ..TrainConfig::new(Loss::Mse, 5)
    };
    let out = train(&model, &x, &y, &cfg).unwrap();
    let h = &out.loss_history;
    let falling = h.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(falling as f64 >= 0.95 * (h.len() - 1) as f64, "{falling} of {}", h.len() - 1);
    assert!(h.last().unwrap() < &1e-6);
}

#[test]
fn autoencoder_learns_breast_cancer() {
    let t = breast_cancer();
    assert!(t.ae_losses.last().unwrap() < &t.ae_losses[0]);
    let test = t.data.test_features();
    // reconstructing every row as zero scores the mean square of the test block
    let baseline = test.norm_squared() / test.len() as f64;
    let mse = t.ae.reconstruction_mse(&test).unwrap();
    assert!(mse < 0.9 && mse < baseline, "mse {mse} baseline {baseline}");

    let a = t.ae.embed(&t.data.row(t.data.train_idx[0])).unwrap();
    let b = t.ae.embed(&t.data.row(t.data.train_idx[1])).unwrap();
    assert_eq!(a.len(), t.ae.latent_dim);
    assert_ne!(a, b);
}

#[test]
fn autoencoder_training_is_seeded() {
    let t = breast_cancer();
    let again = train_autoencoder(&t.data, default_latent_dim(9), 0.1, &TrainConfig::new(Loss::Mse, 0)).unwrap();
    assert_eq!(again.model, t.ae);
}

#[test]
fn full_width_latent_reconstructs_best() {
    let t = breast_cancer();
    let train_rows = t.data.train_features();
    let test_rows = t.data.test_features();
    let cfg = TrainConfig::new(Loss::Mse, 3);
    let mse_at = |latent: usize| {
        // 2K relu units can pass any vector through unchanged
        let shape = AutoencoderShape { hidden: 18, latent };
        let ae = train_autoencoder_shaped(&train_rows, shape, 0.1, &cfg).unwrap().model;
        ae.reconstruction_mse(&test_rows).unwrap()
    };
    let full = mse_at(9);
    for latent in 1..9 {
        let narrow = mse_at(latent);
        assert!(full < narrow, "L=9 {full} vs L={latent} {narrow}");
    }
}

#[test]
fn fidelity_means_match_recomputed_explanations() {
    let t = breast_cancer();
    let rows: Vec<usize> = t.data.test_idx[..5].to_vec();
    let pool = attach_embeddings(&sample_pool(9, 2000, 17).unwrap(), &t.ae).unwrap();
    let cfg = SurrogateConfig::default();
    let n = 300;

    let lime = fidelity_sweep_rows(&t.blackbox, &Explainer::Lime, &t.data, &rows, &[n], &cfg, 8).unwrap();
    let alime_explainer = Explainer::Alime {
        embedder: &t.ae,
        pool: &pool,
    };
    let alime = fidelity_sweep_rows(&t.blackbox, &alime_explainer, &t.data, &rows, &[n], &cfg, 8).unwrap();

    let (mut r2_l, mut mse_l, mut r2_a, mut mse_a) = (0.0, 0.0, 0.0, 0.0);
    for (pos, &row) in rows.iter().enumerate() {
        let x = t.data.row(row);
        let e = explain_lime(&t.blackbox, &x, n, &cfg, derive_seed(8, &[n as u64, pos as u64])).unwrap();
        r2_l += e.local_r2;
        mse_l += e.local_mse;
        let e = explain_alime(&t.blackbox, &t.ae, &pool, &x, n, &cfg).unwrap();
        r2_a += e.local_r2;
        mse_a += e.local_mse;
    }
    assert_eq!(lime.sweep[0].mean_r2, r2_l / 5.0);
    assert_eq!(lime.sweep[0].mean_mse, mse_l / 5.0);
    assert_eq!(alime.sweep[0].mean_r2, r2_a / 5.0);
    assert_eq!(alime.sweep[0].mean_mse, mse_a / 5.0);
    assert_eq!(lime.n_test, 5);
}

#[test]
fn constant_black_box_has_zero_fidelity_error() {
    let t = breast_cancer();
    let f = ConstantPredictor {
        n_features: 9,
        value: 0.3,
    };
    let pool = attach_embeddings(&sample_pool(9, 1000, 2).unwrap(), &t.ae).unwrap();
    let rows = &t.data.test_idx[..4];
    let n_values = [50, 200, 1000];
    let cfg = SurrogateConfig::default();
    for explainer in [
        Explainer::Lime,
        Explainer::Alime {
            embedder: &t.ae,
            pool: &pool,
        },
    ] {
        let report = fidelity_sweep_rows(&f, &explainer, &t.data, rows, &n_values, &cfg, 0).unwrap();
        assert_eq!(report.sweep.len(), 3);
        for p in &report.sweep {
            assert!(p.mean_mse.abs() < 1e-12, "{p:?}");
        }
    }
}

#[test]
fn single_instance_single_n_sweep() {
    let t = breast_cancer();
    let rows = [t.data.test_idx[0]];
    let report = fidelity_sweep_rows(&t.blackbox, &Explainer::Lime, &t.data, &rows, &[150], &SurrogateConfig::default(), 1)
        .unwrap();
    assert_eq!(report.sweep.len(), 1);
    assert_eq!(report.sweep[0].n, 150);
}

#[test]
fn sweep_rejects_bad_grids() {
    let t = breast_cancer();
    let rows = [t.data.test_idx[0]];
    let cfg = SurrogateConfig::default();
    for grid in [vec![], vec![100, 100], vec![200, 100]] {
        let err = fidelity_sweep_rows(&t.blackbox, &Explainer::Lime, &t.data, &rows, &grid, &cfg, 0).unwrap_err();
        assert!(matches!(err, AlimeError::Config(_)), "{grid:?}");
    }
    let pool = attach_embeddings(&sample_pool(9, 100, 0).unwrap(), &t.ae).unwrap();
    let alime = Explainer::Alime {
        embedder: &t.ae,
        pool: &pool,
    };
    assert!(fidelity_sweep_rows(&t.blackbox, &alime, &t.data, &rows, &[50, 101], &cfg, 0).is_err());
    let err = stability_sweep(&t.blackbox, &StabilityExplainer::Lime, &t.data, rows[0], &[], 10, &cfg, 0).unwrap_err();
    assert!(matches!(err, AlimeError::Config(_)));
}

#[test]
fn fixed_pool_gives_zero_spread() {
    let t = breast_cancer();
    let x = t.data.row(t.data.test_idx[3]);
    let pool: SamplePool = attach_embeddings(&sample_pool(9, 1000, 5).unwrap(), &t.ae).unwrap();
    let cfg = SurrogateConfig::default();
    let coeffs = stability_run(|_seed| explain_alime(&t.blackbox, &t.ae, &pool, &x, 200, &cfg), 10, 0).unwrap();
    assert_eq!(coeffs.shape(), (10, 9));
    assert_eq!(stability_metrics(&coeffs).unwrap(), (0.0, 0.0));
}

#[test]
fn lime_iterations_differ() {
    let t = breast_cancer();
    let x = t.data.row(t.data.test_idx[3]);
    let cfg = SurrogateConfig::default();
    let coeffs = stability_run(
        |seed| explain_with_seed(&t.blackbox, &StabilityExplainer::Lime, &x, 200, &cfg, seed),
        10,
        40,
    )
    .unwrap();
    assert_eq!(coeffs.shape(), (10, 9));
    for i in 0..10 {
        for j in i + 1..10 {
            assert_ne!(coeffs.row(i), coeffs.row(j), "rows {i} and {j}");
        }
    }
}

#[test]
fn stability_report_reproduces() {
    let t = breast_cancer();
    let cfg = SurrogateConfig::default();
    let explainer = StabilityExplainer::Alime {
        embedder: &t.ae,
        pool_size: 1000,
    };
    let row = t.data.test_idx[7];
    let a = stability_sweep(&t.blackbox, &explainer, &t.data, row, &[100, 400], 3, &cfg, 12).unwrap();
    let b = stability_sweep(&t.blackbox, &explainer, &t.data, row, &[100, 400], 3, &cfg, 12).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.instance_index, row);
    assert!(a.sweep.iter().all(|p| p.mean_std >= 0.0));
}
