//! Statistics shared by both schedulers: loss-difference spread on the client,
//! empirical CDFs and the two-sample Kolmogorov-Smirnov distance on the sensor.

use crate::error::{FlareError, Result};

/// Elementwise `|train - val|`.
pub fn abs_loss_diff(train_losses: &[f64], val_losses: &[f64]) -> Result<Vec<f64>> {
    if train_losses.len() != val_losses.len() {
        return Err(FlareError::contract(format!(
            "loss arrays differ in length: {} vs {}",
            train_losses.len(),
            val_losses.len()
        )));
    }
    if train_losses.is_empty() {
        return Err(FlareError::contract("loss arrays must not be empty"));
    }
    Ok(train_losses
        .iter()
        .zip(val_losses)
        .map(|(t, v)| (t - v).abs())
        .collect())
}

/// Sample standard deviation with Bessel correction, accumulated with
/// Welford's update.
pub fn window_std(deltas: &[f64]) -> Result<f64> {
    if deltas.len() < 2 {
        return Err(FlareError::contract(format!(
            "window needs at least 2 values, got {}",
            deltas.len()
        )));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in deltas.iter().enumerate() {
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    Ok((m2.max(0.0) / (deltas.len() - 1) as f64).sqrt())
}

/// Paired train/validation losses over one scheduler window.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWindow {
    train: Vec<f64>,
    val: Vec<f64>,
    deltas: Vec<f64>,
}

impl LossWindow {
    pub fn new(train: Vec<f64>, val: Vec<f64>) -> Result<Self> {
        let deltas = abs_loss_diff(&train, &val)?;
        if train.len() < 2 {
            return Err(FlareError::contract("loss window length must be at least 2"));
        }
        if train
            .iter()
            .chain(&val)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(FlareError::contract("losses must be finite and non-negative"));
        }
        Ok(Self { train, val, deltas })
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn train_losses(&self) -> &[f64] {
        &self.train
    }

    pub fn val_losses(&self) -> &[f64] {
        &self.val
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn mean(&self) -> f64 {
        self.deltas.iter().sum::<f64>() / self.deltas.len() as f64
    }

    pub fn sigma(&self) -> f64 {
        window_std(&self.deltas).expect("length checked at construction")
    }
}

/// Sorted sample of finite reals backing an empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSample {
    values: Vec<f64>,
}

/// Confidence values `p_i` in `(0, 1]`.
pub type ConfidenceSample = EmpiricalSample;

impl EmpiricalSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(FlareError::contract("sample must not be empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FlareError::contract("sample values must be finite"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    /// Like [`EmpiricalSample::new`], additionally requiring every value in `(0, 1]`.
    pub fn confidences(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
            return Err(FlareError::contract(format!("confidence {bad} outside (0, 1]")));
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `F(x) = #{v <= x} / n`.
    pub fn cdf(&self, x: f64) -> f64 {
        let count = self.values.partition_point(|&v| v <= x);
        count as f64 / self.values.len() as f64
    }
}

pub fn empirical_cdf(sample: &EmpiricalSample, x: f64) -> f64 {
    sample.cdf(x)
}

/// Two-sample KS distance `sup_x |F_a(x) - F_b(x)|`.
///
/// Both ECDFs are step functions that only jump at sample points, so the
/// supremum is attained on the merged set of points. A single merge walk over
/// the two sorted samples visits each of those points once.
pub fn ks_statistic(a: &EmpiricalSample, b: &EmpiricalSample) -> f64 {
    let (xs, ys) = (a.values(), b.values());
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / n - j as f64 / m).abs());
    }
    // Once one sample is exhausted its CDF is 1; the other only moves towards 1.
    sup
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: &[f64]) -> EmpiricalSample {
        EmpiricalSample::new(v.to_vec()).unwrap()
    }

    #[test]
    fn abs_loss_diff_examples() {
        assert_eq!(abs_loss_diff(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
        let d = abs_loss_diff(&[0.5], &[0.8]).unwrap();
        assert!((d[0] - 0.3).abs() < 1e-15);
        assert_eq!(abs_loss_diff(&[2.0, 0.0], &[0.0, 3.0]).unwrap(), vec![2.0, 3.0]);
        assert!(abs_loss_diff(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn window_std_examples() {
        assert_eq!(window_std(&[0.4; 10]).unwrap(), 0.0);
        assert!((window_std(&[1.0, 3.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(window_std(&[1.0]), Err(FlareError::Contract(_))));
    }

    #[test]
    fn loss_window_rejects_negative_losses() {
        assert!(LossWindow::new(vec![0.1, -0.2], vec![0.1, 0.2]).is_err());
        let w = LossWindow::new(vec![1.0, 2.0], vec![0.0, 5.0]).unwrap();
        assert_eq!(w.deltas(), &[1.0, 3.0]);
        assert_eq!(w.mean(), 2.0);
        assert!((w.sigma() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cdf_examples() {
        let s = sample(&[0.5]);
        assert_eq!(empirical_cdf(&s, 0.4), 0.0);
        assert_eq!(empirical_cdf(&s, 0.5), 1.0);
        let s = sample(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(empirical_cdf(&s, 0.25), 0.5);
    }

    #[test]
    fn ks_examples() {
        let a = sample(&[0.3, 0.1, 0.7]);
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert_eq!(ks_statistic(&sample(&[0.1, 0.2]), &sample(&[0.8, 0.9])), 1.0);
        let d = ks_statistic(&sample(&[1.0, 2.0, 3.0]), &sample(&[1.0, 2.0, 3.0, 4.0, 5.0]));
        assert!((d - 0.4).abs() < 1e-15);
    }

    #[test]
    fn confidence_range_enforced() {
        assert!(EmpiricalSample::confidences(vec![0.0, 0.5]).is_err());
        assert!(EmpiricalSample::confidences(vec![1.0 + 1e-9]).is_err());
        assert!(EmpiricalSample::confidences(vec![1.0, 0.1]).is_ok());
        assert!(EmpiricalSample::new(vec![]).is_err());
    }
}
