use flare_core::federation::fedavg_aggregate;
use flare_core::model::softmax;
use flare_core::{LabeledDataset, ModelParams, Provenance};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> LabeledDataset {
    let x = Array2::from_shape_fn((n, dim), |_| rng.gen_range(-1.0..1.0));
    let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    LabeledDataset::new(x, labels, classes, Provenance::Clean).unwrap()
}

fn random_sizes(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let depth = rng.gen_range(0..=2);
    let mut sizes = vec![rng.gen_range(2..=6)];
    for _ in 0..depth {
        sizes.push(rng.gen_range(2..=5));
    }
    sizes.push(rng.gen_range(3..=5));
    sizes
}

/// Central differences of the mean loss, one parameter at a time.
fn finite_difference(model: &ModelParams, batch: &LabeledDataset, h: f64) -> Vec<f64> {
    let flat = model.to_flat();
    (0..flat.len())
        .map(|i| {
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let lp = model.with_flat(&plus).unwrap().cross_entropy_loss(batch).unwrap();
            let lm = model.with_flat(&minus).unwrap().cross_entropy_loss(batch).unwrap();
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

fn flatten_grads(model: &ModelParams, batch: &LabeledDataset) -> Vec<f64> {
    let (_, grads) = model.gradient(batch).unwrap();
    let mut out = Vec::new();
    for (gw, gb) in &grads.layers {
        out.extend(gw.iter());
        out.extend(gb.iter());
    }
    out
}

#[test]
fn backprop_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 120 {
        let sizes = random_sizes(&mut rng);
        // Random biases too: zero biases put dead units exactly on the relu kink.
        let template = ModelParams::zeros(&sizes).unwrap();
        let flat: Vec<f64> = (0..template.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let model = template.with_flat(&flat).unwrap();
        let batch = random_batch(&mut rng, 6, sizes[0], *sizes.last().unwrap());
        let analytic = flatten_grads(&model, &batch);
        let numeric = finite_difference(&model, &batch, 1e-6);
        assert_eq!(analytic.len(), numeric.len());
        for (a, n) in analytic.iter().zip(&numeric) {
            // Relative error with an absolute floor for near-zero components,
            // where relu kinks make central differences meaningless.
            let scale = a.abs().max(n.abs()).max(1e-4);
            worst = worst.max((a - n).abs() / scale);
        }
        checked += 1;
    }
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn flat_layout_matches_gradient_layout() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = ModelParams::init_mlp(&[3, 4, 3], &mut rng).unwrap();
    let flat = model.to_flat();
    assert_eq!(flat.len(), model.num_params());
    assert_eq!(model.with_flat(&flat).unwrap(), model);
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 2..20)) {
        let p = softmax(&logits);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn softmax_survives_extreme_logits(shift in -1e4f64..1e4, logits in prop::collection::vec(-30.0f64..30.0, 2..12)) {
        let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
        let p = softmax(&shifted);
        let q = softmax(&logits);
        prop_assert!(p.iter().all(|v| v.is_finite()));
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn model_probabilities_sum_to_one(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = random_sizes(&mut rng);
        let model = ModelParams::init_mlp(&sizes, &mut rng).unwrap();
        let batch = random_batch(&mut rng, 5, sizes[0], *sizes.last().unwrap());
        let p = model.predict_proba(batch.features()).unwrap();
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }
}

fn scalar_model(values: &[f64]) -> ModelParams {
    ModelParams::zeros(&[1, 1, 2]).unwrap().with_flat(values).unwrap()
}

#[test]
fn fedavg_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let template = ModelParams::zeros(&[2, 3, 3]).unwrap();
    let n = template.num_params();
    for _ in 0..50 {
        let locals: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let counts = [1usize, 2, 3];
        let models: Vec<ModelParams> = locals.iter().map(|v| template.with_flat(v).unwrap()).collect();
        let pairs: Vec<(&ModelParams, usize)> = models.iter().zip(counts).collect();
        let got = fedavg_aggregate(&pairs).unwrap().to_flat();
        for i in 0..n {
            // Same association order as the implementation: x0 + sum w_k (x_k - x0).
            let x0 = locals[0][i];
            let mut expected = x0;
            for k in 1..3 {
                expected += counts[k] as f64 / 6.0 * (locals[k][i] - x0);
            }
            assert_eq!(got[i], expected);
            let textbook: f64 = (0..3).map(|k| counts[k] as f64 * locals[k][i]).sum::<f64>() / 6.0;
            assert!((got[i] - textbook).abs() < 1e-12);
        }
    }
}

#[test]
fn fedavg_two_client_example() {
    let a = ModelParams::zeros(&[1, 1, 2]).unwrap();
    let n = a.num_params();
    let b = a.with_flat(&vec![1.0; n]).unwrap();
    let g = fedavg_aggregate(&[(&a, 4), (&b, 4)]).unwrap();
    assert!(g.to_flat().iter().all(|&v| v == 0.5));
}

proptest! {
    #[test]
    fn fedavg_single_client_is_identity(v in prop::collection::vec(-5.0f64..5.0, 6)) {
        let m = scalar_model(&v);
        prop_assert_eq!(fedavg_aggregate(&[(&m, 9)]).unwrap(), m);
    }

    #[test]
    fn fedavg_is_permutation_invariant_and_convex(
        vals in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 2..6),
        counts in prop::collection::vec(1usize..50, 6),
        rot in 0usize..6,
    ) {
        let models: Vec<ModelParams> = vals.iter().map(|v| scalar_model(v)).collect();
        let pairs: Vec<(&ModelParams, usize)> = models.iter().zip(counts.iter().copied()).collect();
        let g = fedavg_aggregate(&pairs).unwrap().to_flat();
        let mut rotated = pairs.clone();
        rotated.rotate_left(rot % pairs.len());
        rotated.reverse();
        let h = fedavg_aggregate(&rotated).unwrap().to_flat();
        for i in 0..g.len() {
            prop_assert!((g[i] - h[i]).abs() < 1e-12);
            let lo = vals.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
            let hi = vals.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(g[i] >= lo - 1e-12 && g[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn fedavg_of_identical_models_is_exact(v in prop::collection::vec(-5.0f64..5.0, 6), k in 1usize..6) {
        let m = scalar_model(&v);
        let pairs: Vec<(&ModelParams, usize)> = (0..k).map(|i| (&m, i + 1)).collect();
        prop_assert_eq!(fedavg_aggregate(&pairs).unwrap(), m);
    }
}

#[test]
fn fedavg_rejects_mismatched_shapes() {
    let a = ModelParams::zeros(&[2, 3]).unwrap();
    let b = ModelParams::zeros(&[2, 4]).unwrap();
    assert!(fedavg_aggregate(&[(&a, 1), (&b, 1)]).is_err());
    assert!(fedavg_aggregate(&[]).is_err());
    assert!(fedavg_aggregate(&[(&a, 0)]).is_err());
}
