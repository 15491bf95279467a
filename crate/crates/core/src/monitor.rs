//! Sensor-side drift monitor.
//!
//! The sensor never sees labels when deciding. It compares the confidence
//! distribution of each inference batch with the reference confidences that
//! arrived with the deployed model, and asks for retraining data when the KS
//! distance jumps by more than `phi` over the previous batch.

use crate::codec::SerializedModel;
use crate::dataset::LabeledDataset;
use crate::error::{FlareError, Result};
use crate::model::{ModelParams, Prediction};
use crate::stats::{ks_statistic, ConfidenceSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MonitorAction {
    ContinueInference,
    SendDataToClient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorDecision {
    pub action: MonitorAction,
    pub ks: f64,
    pub prev_ks: f64,
}

/// `true` iff the KS value rose by strictly more than `phi`.
pub fn ks_jump(prev_ks: f64, ks: f64, phi: f64) -> bool {
    ks - prev_ks > phi
}

pub fn validate_phi(phi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(FlareError::config(format!(
            "phi = {phi} violates the constraint 0 <= phi <= 1"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SensorState {
    model: Option<ModelParams>,
    reference: Option<ConfidenceSample>,
    prev_ks: f64,
    phi: f64,
    batch_size: usize,
    buffer: Option<LabeledDataset>,
}

impl SensorState {
    pub fn new(phi: f64, batch_size: usize) -> Result<Self> {
        validate_phi(phi)?;
        if batch_size == 0 {
            return Err(FlareError::config("inference batch size m must be at least 1"));
        }
        Ok(Self {
            model: None,
            reference: None,
            prev_ks: 0.0,
            phi,
            batch_size,
            buffer: None,
        })
    }

    pub fn model(&self) -> Option<&ModelParams> {
        self.model.as_ref()
    }

    pub fn reference(&self) -> Option<&ConfidenceSample> {
        self.reference.as_ref()
    }

    pub fn prev_ks(&self) -> f64 {
        self.prev_ks
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// The most recent inference batch, i.e. what an upload would carry.
    pub fn buffer(&self) -> Option<&LabeledDataset> {
        self.buffer.as_ref()
    }

    /// Decodes and installs a deployment. A malformed blob leaves the
    /// previous model and reference in place.
    pub fn install_model(&mut self, blob: &SerializedModel, reference: ConfidenceSample) -> Result<()> {
        let model = blob
            .decode()
            .map_err(|e| FlareError::Deployment(e.to_string()))?;
        self.model = Some(model);
        self.reference = Some(reference);
        self.prev_ks = 0.0;
        Ok(())
    }

    pub fn infer(&self, features: ndarray::ArrayView1<'_, f64>) -> Result<Prediction> {
        self.model.as_ref().ok_or(FlareError::NoModel)?.forward(features)
    }

    /// Scores one batch and applies the jump rule. `prev_ks` always moves to
    /// the new value, whatever the decision.
    pub fn observe_inference_batch(&mut self, batch: &LabeledDataset) -> Result<MonitorDecision> {
        let (model, reference) = match (&self.model, &self.reference) {
            (Some(m), Some(r)) => (m, r),
            _ => return Err(FlareError::NoModel),
        };
        if batch.len() != self.batch_size {
            return Err(FlareError::contract(format!(
                "inference batch has {} samples, expected {}",
                batch.len(),
                self.batch_size
            )));
        }
        let confidences = ConfidenceSample::confidences(model.confidences(batch.features())?)?;
        let ks = ks_statistic(reference, &confidences);
        Ok(self.record(ks, batch.clone()))
    }

    fn record(&mut self, ks: f64, batch: LabeledDataset) -> MonitorDecision {
        let prev_ks = self.prev_ks;
        let action = if ks_jump(prev_ks, ks, self.phi) {
            MonitorAction::SendDataToClient
        } else {
            MonitorAction::ContinueInference
        };
        self.prev_ks = ks;
        self.buffer = Some(batch);
        MonitorDecision { action, ks, prev_ks }
    }
}
