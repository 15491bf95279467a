//! Small multi-layer perceptron: relu hidden layers, softmax output.
//!
//! Everything here is a pure function of the parameters and the input, so a
//! [`ModelParams`] value can be shared freely between threads. Training uses
//! plain gradient descent on mean cross-entropy, with gradients obtained by
//! backpropagation.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::dataset::LabeledDataset;
use crate::error::{FlareError, Result};

/// Probabilities below this are clamped before taking the log in the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Softmax,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Softmax => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Softmax),
            _ => None,
        }
    }
}

/// Dense layer. `weights` has one row per output unit and one column per input.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Self {
        Self {
            weights,
            bias,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<Layer>,
}

/// Class prediction for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    /// Maximum softmax probability, used label-free by the sensor monitor.
    pub confidence: f64,
    pub probabilities: Vec<f64>,
}

/// Per-layer gradients of the mean loss, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

/// Numerically stable softmax: the max logit is subtracted before exponentiation.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl ModelParams {
    /// Validates dimension chaining, activations and finiteness.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(FlareError::contract("model needs at least one layer"));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(FlareError::contract(format!(
                    "layer {k}: bias length {} != output dim {}",
                    layer.bias.len(),
                    layer.output_dim()
                )));
            }
            if layer.input_dim() == 0 || layer.output_dim() == 0 {
                return Err(FlareError::contract(format!("layer {k} has a zero dimension")));
            }
            let last = k + 1 == layers.len();
            let expected = if last {
                Activation::Softmax
            } else {
                Activation::Relu
            };
            if layer.activation != expected {
                return Err(FlareError::contract(format!(
                    "layer {k} must use {expected:?}, found {:?}",
                    layer.activation
                )));
            }
            if !last && layer.output_dim() != layers[k + 1].input_dim() {
                return Err(FlareError::contract(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    layer.output_dim(),
                    k + 1,
                    layers[k + 1].input_dim()
                )));
            }
            if layer.weights.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(FlareError::Numeric {
                    layer: k,
                    what: "parameter".into(),
                });
            }
        }
        let classes = layers.last().map(Layer::output_dim).unwrap_or(0);
        if classes < 2 {
            return Err(FlareError::contract("softmax output needs at least two classes"));
        }
        Ok(Self { layers })
    }

    /// He-uniform initialisation for relu layers, Glorot-uniform for the output layer.
    pub fn init_mlp<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(FlareError::contract("an MLP needs input and output sizes"));
        }
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, pair)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let last = k + 2 == sizes.len();
                let bound = if last {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                let weights =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..=bound));
                let activation = if last {
                    Activation::Softmax
                } else {
                    Activation::Relu
                };
                Layer::new(weights, Array1::zeros(fan_out), activation)
            })
            .collect();
        Self::new(layers)
    }

    /// All weights and biases zero; the output is uniform for every input.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(FlareError::contract("an MLP needs input and output sizes"));
        }
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, pair)| {
                let activation = if k + 2 == sizes.len() {
                    Activation::Softmax
                } else {
                    Activation::Relu
                };
                Layer::new(Array2::zeros((pair[1], pair[0])), Array1::zeros(pair[1]), activation)
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn classes(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Layer sizes from input to output, e.g. `[64, 32, 10]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::output_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.dim() == b.weights.dim())
    }

    /// Parameters flattened layer by layer: row-major weights, then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend(layer.weights.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }

    /// Inverse of [`ModelParams::to_flat`], reusing this model's shapes.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(FlareError::contract(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        let layers = self
            .layers
            .iter()
            .map(|layer| {
                let (rows, cols) = layer.weights.dim();
                let w = Array2::from_shape_vec((rows, cols), flat[offset..offset + rows * cols].to_vec())
                    .expect("shape matches length");
                offset += rows * cols;
                let b = Array1::from(flat[offset..offset + rows].to_vec());
                offset += rows;
                Layer::new(w, b, layer.activation)
            })
            .collect();
        Self::new(layers)
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(FlareError::contract(format!(
                "feature dimension {} does not match model input {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FlareError::contract("input features must be finite"));
        }
        Ok(())
    }

    /// Forward pass keeping every layer's activation; `acts[0]` is the input and
    /// the last entry holds softmax probabilities.
    fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
        self.check_input(&x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = acts[k].dot(&layer.weights.t());
            z += &layer.bias;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(FlareError::Numeric {
                    layer: k,
                    what: "pre-activation".into(),
                });
            }
            match layer.activation {
                Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
                Activation::Softmax => softmax_rows(&mut z),
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Softmax probabilities for every row of `x`.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut acts = self.forward_cached(x)?;
        Ok(acts.pop().expect("at least one layer"))
    }

    pub fn forward(&self, features: ArrayView1<'_, f64>) -> Result<Prediction> {
        let x = features.insert_axis(Axis(0));
        let probs = self.predict_proba(x)?;
        let row = probs.row(0);
        let class = argmax(row);
        Ok(Prediction {
            class,
            confidence: row[class],
            probabilities: row.to_vec(),
        })
    }

    /// Maximum softmax probability of each row.
    pub fn confidences(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let probs = self.predict_proba(x)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect())
    }

    pub fn predict_classes(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let probs = self.predict_proba(x)?;
        Ok(probs.rows().into_iter().map(argmax).collect())
    }

    fn check_batch(&self, batch: &LabeledDataset) -> Result<()> {
        if batch.is_empty() {
            return Err(FlareError::contract("batch must not be empty"));
        }
        if batch.classes() > self.classes() {
            return Err(FlareError::contract(format!(
                "dataset has {} classes, model only {}",
                batch.classes(),
                self.classes()
            )));
        }
        Ok(())
    }

    /// Mean of `-ln p(true class)`, with probabilities clamped at [`PROB_FLOOR`].
    pub fn cross_entropy_loss(&self, batch: &LabeledDataset) -> Result<f64> {
        self.check_batch(batch)?;
        let probs = self.predict_proba(batch.features())?;
        Ok(mean_cross_entropy(&probs, batch.labels()))
    }

    /// Loss and backpropagated gradients of the mean cross-entropy.
    ///
    /// The gradient is that of the unclamped loss; the two differ only where
    /// the true-class probability falls below [`PROB_FLOOR`].
    pub fn gradient(&self, batch: &LabeledDataset) -> Result<(f64, Gradients)> {
        self.check_batch(batch)?;
        let acts = self.forward_cached(batch.features())?;
        let n = batch.len() as f64;
        let probs = &acts[acts.len() - 1];
        let loss = mean_cross_entropy(probs, batch.labels());

        // d(loss)/d(logits) for softmax + cross-entropy is (p - onehot) / n.
        let mut delta = probs.clone();
        for (mut row, &label) in delta.rows_mut().into_iter().zip(batch.labels()) {
            row[label] -= 1.0;
        }
        delta /= n;

        let mut grads = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let grad_w = delta.t().dot(&acts[k]);
            let grad_b = delta.sum_axis(Axis(0));
            if grad_w.iter().chain(grad_b.iter()).any(|v| !v.is_finite()) {
                return Err(FlareError::Numeric {
                    layer: k,
                    what: "gradient".into(),
                });
            }
            if k > 0 {
                let mut upstream = delta.dot(&self.layers[k].weights);
                upstream.zip_mut_with(&acts[k], |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = upstream;
            }
            grads.push((grad_w, grad_b));
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    /// Applies `params -= learning_rate * grads` in place.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(FlareError::contract("gradient layer count mismatch"));
        }
        for (k, (layer, (gw, gb))) in self.layers.iter_mut().zip(&grads.layers).enumerate() {
            if gw.dim() != layer.weights.dim() || gb.len() != layer.bias.len() {
                return Err(FlareError::contract(format!("gradient shape mismatch in layer {k}")));
            }
            layer.weights.scaled_add(-learning_rate, gw);
            layer.bias.scaled_add(-learning_rate, gb);
        }
        Ok(())
    }

    /// One full-batch gradient-descent step in place; returns the pre-step loss.
    pub fn train_step(&mut self, batch: &LabeledDataset, learning_rate: f64) -> Result<f64> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(FlareError::contract("learning rate must be a finite non-negative number"));
        }
        let (loss, grads) = self.gradient(batch)?;
        self.apply_gradients(&grads, learning_rate)?;
        Ok(loss)
    }

    /// Returns the model after one gradient-descent step on `batch`.
    pub fn sgd_step(&self, batch: &LabeledDataset, learning_rate: f64) -> Result<ModelParams> {
        let mut next = self.clone();
        next.train_step(batch, learning_rate)?;
        Ok(next)
    }

    /// Fraction of samples whose argmax prediction equals the label.
    pub fn evaluate_accuracy(&self, dataset: &LabeledDataset) -> Result<f64> {
        if dataset.is_empty() {
            return Err(FlareError::contract("cannot evaluate on an empty dataset"));
        }
        let predicted = self.predict_classes(dataset.features())?;
        let correct = predicted
            .iter()
            .zip(dataset.labels())
            .filter(|(p, l)| p == l)
            .count();
        Ok(correct as f64 / dataset.len() as f64)
    }
}

fn mean_cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = probs
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &label)| -row[label].max(PROB_FLOOR).ln())
        .sum();
    total / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Provenance;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(x: Array2<f64>, y: Vec<usize>, classes: usize) -> LabeledDataset {
        LabeledDataset::new(x, y, classes, Provenance::Clean).unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = ModelParams::zeros(&[4, 3, 2]).unwrap();
        let p = model.forward(array![0.3, 0.1, 0.9, 0.5].view()).unwrap();
        assert_eq!(p.probabilities, vec![0.5, 0.5]);
        assert_eq!(p.confidence, 0.5);
        assert_eq!(p.class, 0);
    }

    #[test]
    fn equal_logits_give_thirds() {
        let g = softmax(&[0.0, 0.0, 0.0]);
        for v in g {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn huge_logit_gap_does_not_overflow() {
        let g = softmax(&[1000.0, 0.0]);
        assert!(g.iter().all(|v| v.is_finite()));
        // Exact value 1/(1+e^-1000) rounds to 1 in f64; e^-1000 underflows to 0.
        assert_eq!(g[0], 1.0);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn uniform_ten_class_loss_is_ln_ten() {
        let model = ModelParams::zeros(&[3, 10]).unwrap();
        let data = dataset(array![[0.1, 0.2, 0.3], [0.5, 0.5, 0.5]], vec![3, 7], 10);
        let loss = model.cross_entropy_loss(&data).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_model_has_zero_loss() {
        // Output bias so large that class 1 takes all the mass in f64.
        let layer = Layer::new(Array2::zeros((3, 2)), array![0.0, 1000.0, 0.0], Activation::Softmax);
        let model = ModelParams::new(vec![layer]).unwrap();
        let data = dataset(array![[0.2, 0.4], [0.9, 0.1]], vec![1, 1], 3);
        assert_eq!(model.cross_entropy_loss(&data).unwrap(), 0.0);
    }

    #[test]
    fn loss_clamps_vanishing_probabilities() {
        let layer = Layer::new(Array2::zeros((3, 2)), array![0.0, 1000.0, 0.0], Activation::Softmax);
        let model = ModelParams::new(vec![layer]).unwrap();
        let data = dataset(array![[0.2, 0.4]], vec![0], 3);
        let loss = model.cross_entropy_loss(&data).unwrap();
        assert!((loss + PROB_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_and_mismatched_inputs_are_contract_errors() {
        let model = ModelParams::zeros(&[4, 3]).unwrap();
        let err = model.forward(array![0.1, 0.2].view());
        assert!(matches!(err, Err(FlareError::Contract(_))));
        let err = model.forward(array![0.1, f64::INFINITY, 0.0, 0.0].view());
        assert!(matches!(err, Err(FlareError::Contract(_))));
    }

    #[test]
    fn rejects_broken_chains_and_activations() {
        let l0 = Layer::new(Array2::zeros((5, 4)), Array1::zeros(5), Activation::Relu);
        let l1 = Layer::new(Array2::zeros((3, 6)), Array1::zeros(3), Activation::Softmax);
        assert!(ModelParams::new(vec![l0.clone(), l1]).is_err());
        let relu_out = Layer::new(Array2::zeros((3, 5)), Array1::zeros(3), Activation::Relu);
        assert!(ModelParams::new(vec![l0, relu_out]).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = ModelParams::init_mlp(&[3, 5, 3], &mut rng).unwrap();
        let data = dataset(array![[0.1, 0.2, 0.3], [0.9, 0.1, 0.4]], vec![0, 2], 3);
        assert_eq!(model.sgd_step(&data, 0.0).unwrap(), model);
    }

    #[test]
    fn step_on_separable_toy_set_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = ModelParams::init_mlp(&[2, 8, 2], &mut rng).unwrap();
        let data = dataset(
            array![[0.1, 0.1], [0.2, 0.15], [0.9, 0.8], [0.85, 0.95]],
            vec![0, 0, 1, 1],
            2,
        );
        let before = model.cross_entropy_loss(&data).unwrap();
        let after = model.sgd_step(&data, 0.1).unwrap().cross_entropy_loss(&data).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn argmax_ties_go_to_lowest_index() {
        let zero = ModelParams::zeros(&[2, 4]).unwrap();
        let data = dataset(array![[0.3, 0.3], [0.7, 0.1], [0.0, 1.0]], vec![0, 0, 0], 4);
        assert_eq!(zero.evaluate_accuracy(&data).unwrap(), 1.0);
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = ModelParams::init_mlp(&[4, 6, 3], &mut rng).unwrap();
        let flat = model.to_flat();
        assert_eq!(flat.len(), 4 * 6 + 6 + 6 * 3 + 3);
        assert_eq!(model.with_flat(&flat).unwrap(), model);
    }
}
