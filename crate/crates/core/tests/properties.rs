use alime::dataset::{standardize_and_split, RawDataset, Schema};
use alime::evaluation::stability_metrics;
use alime::explain::{explain_alime, explain_lime, select_n_closest, KernelWeights, SurrogateConfig};
use alime::models::{FnPredictor, IdentityEmbedder};
use alime::neural::{init_model, Activation};
use alime::sampling::{attach_embeddings, sample_pool, SamplePool};
use alime::Embedder;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// An untrained relu encoder, enough for a non-trivial latent map.
struct RandomEncoder(alime::MlpModel);

impl Embedder for RandomEncoder {
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }
    fn latent_dim(&self) -> usize {
        self.0.output_dim()
    }
    fn embed_batch(&self, x: &DMatrix<f64>) -> alime::Result<DMatrix<f64>> {
        self.0.forward_batch(x)
    }
    fn fingerprint(&self) -> String {
        format!("random-{:?}", self.0.params().iter().take(3).collect::<Vec<_>>())
    }
}

fn coefficient_matrix() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2usize..8, 1usize..6).prop_flat_map(|(rows, cols)| {
        (Just(rows), Just(cols), prop::collection::vec(-5.0f64..5.0, rows * cols))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stability_metrics_ignore_row_order((rows, cols, values) in coefficient_matrix(), shift in 1usize..7) {
        let m = DMatrix::from_row_slice(rows, cols, &values);
        let rotated = DMatrix::from_fn(rows, cols, |r, c| m[((r + shift) % rows, c)]);
        let (s1, c1) = stability_metrics(&m).unwrap();
        let (s2, c2) = stability_metrics(&rotated).unwrap();
        prop_assert!((s1 - s2).abs() <= 1e-12 * s1.max(1.0));
        prop_assert!((c1 - c2).abs() <= 1e-12 * c1.max(1.0));
    }

    #[test]
    fn stability_metrics_scale_homogeneously((rows, cols, values) in coefficient_matrix(), scale in 0.01f64..100.0) {
        let m = DMatrix::from_row_slice(rows, cols, &values);
        let (s1, c1) = stability_metrics(&m).unwrap();
        let (s2, c2) = stability_metrics(&(&m * scale)).unwrap();
        prop_assert!((s2 - scale * s1).abs() <= 1e-9 * (scale * s1).max(1.0));
        prop_assert!((c2 - c1).abs() <= 1e-9 * c1.max(1.0));
        prop_assert!(s1 >= 0.0 && c1 >= 0.0);
    }

    #[test]
    fn destandardize_recovers_training_rows(
        seed in any::<u64>(),
        values in prop::collection::vec(-50.0f64..50.0, 36),
    ) {
        let rows: Vec<Vec<Option<f64>>> = values.chunks(3).map(|c| c.iter().map(|v| Some(*v)).collect()).collect();
        let labels = (0..12).map(|i| (i % 2) as u8).collect();
        let names = vec!["a".into(), "b".into(), "c".into()];
        let raw = RawDataset::new(Schema::BreastCancer, rows.clone(), labels, names).unwrap();
        let data = standardize_and_split(&raw, 0.25, seed).unwrap();
        for &i in &data.train_idx {
            let back = data.destandardize(&data.row(i));
            for (b, v) in back.iter().zip(&rows[i]) {
                prop_assert!((b - v.unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn kernel_weights_lie_in_unit_interval(distances in prop::collection::vec(0.0f64..50.0, 1..40)) {
        let k = KernelWeights::new(distances, 1.0).unwrap();
        prop_assert!(k.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
    }

    #[test]
    fn larger_neighbourhoods_reach_further(seed in any::<u64>(), n1 in 2usize..100, extra in 1usize..100) {
        let pool = attach_embeddings(&sample_pool(4, 200, seed).unwrap(), &IdentityEmbedder { dim: 4 }).unwrap();
        let x = pool.point(0).iter().map(|v| v * 0.5).collect::<Vec<_>>();
        let n2 = (n1 + extra).min(200);
        let a = select_n_closest(&pool, &x, n1).unwrap();
        let b = select_n_closest(&pool, &x, n2).unwrap();
        prop_assert!(a.max_distance() <= b.max_distance());
    }
}

#[test]
fn explanations_leave_the_pool_untouched() {
    let encoder = RandomEncoder(init_model(&[5, 6, 3], &[Activation::Relu, Activation::Identity], 4).unwrap());
    let pool = attach_embeddings(&sample_pool(5, 300, 9).unwrap(), &encoder).unwrap();
    let before = pool.checksum();
    let f = FnPredictor {
        n_features: 5,
        f: |z: &[f64]| 1.0 / (1.0 + (-(z[0] - 0.5 * z[3])).exp()),
    };
    let cfg = SurrogateConfig::default();
    for (i, n) in [10, 50, 300].into_iter().enumerate() {
        let x = pool.point(i);
        explain_alime(&f, &encoder, &pool, &x, n, &cfg).unwrap();
        explain_lime(&f, &x, n, &cfg, i as u64).unwrap();
    }
    assert_eq!(pool.checksum(), before);
}

#[test]
fn cached_embeddings_match_fresh_ones() {
    let encoder = RandomEncoder(init_model(&[6, 8, 2], &[Activation::Relu, Activation::Identity], 11).unwrap());
    let pool: SamplePool = attach_embeddings(&sample_pool(6, 500, 3).unwrap(), &encoder).unwrap();
    let cached = pool.embeddings().unwrap();
    for i in [0, 7, 42, 99, 123, 250, 311, 404, 470, 499] {
        let fresh = encoder.embed(&pool.point(i)).unwrap();
        let row: Vec<f64> = cached.row(i).iter().copied().collect();
        assert_eq!(fresh, row, "row {i}");
    }
}
