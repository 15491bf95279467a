use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::drift::DriftSchedule;
use crate::error::{FlareError, Result};
use crate::federation::{TrainingOptions, WindowMode};
use crate::monitor::validate_phi;
use crate::scheduler::validate_coefficients;

/// Which policy decides deployments and uploads once pre-training ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SchedulerKind {
    Flare,
    /// Deploy every `deploy_interval_s` after the initial deployment; every
    /// sensor uploads its buffer every `upload_interval_s`. The first upload of
    /// each sensor comes `upload_phase_s` after the initial deployment, or a
    /// seeded phase in `[1, upload_interval_s]` when unset.
    Fixed {
        deploy_interval_s: u64,
        upload_interval_s: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upload_phase_s: Option<u64>,
    },
    /// Only the forced initial deployment; sensors never upload.
    None,
}

impl SchedulerKind {
    pub fn fixed(deploy_interval_s: u64, upload_interval_s: u64) -> Self {
        SchedulerKind::Fixed {
            deploy_interval_s,
            upload_interval_s,
            upload_phase_s: None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            SchedulerKind::Flare => "flare".into(),
            SchedulerKind::Fixed {
                deploy_interval_s,
                upload_interval_s,
                ..
            } => format!("fixed({deploy_interval_s},{upload_interval_s})"),
            SchedulerKind::None => "none".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub num_clients: usize,
    pub sensors_per_client: usize,
    pub scheduler: SchedulerKind,

    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
    /// Loss pairs per scheduler window.
    pub window: usize,
    /// Samples per sensor inference batch.
    pub inference_batch: usize,
    pub window_mode: WindowMode,

    pub learning_rate: f64,
    /// Mini-batch size for local training; 0 trains full-batch.
    pub minibatch: usize,
    /// Local rounds between FedAvg aggregations.
    pub aggregation_every: usize,
    pub quantize: bool,

    pub seconds_per_training_round: u64,
    pub seconds_per_inference_batch: u64,
    pub metrics_interval_s: u64,
    pub pretrain_s: u64,
    pub duration_s: u64,
    pub drift: DriftSchedule,

    pub seed: u64,
    /// Seeds fixed-scheduler upload phases and sensor batch offsets; defaults to `seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_seed: Option<u64>,

    pub classes: usize,
    pub dim: usize,
    pub hidden: Vec<usize>,
    /// Fixed size of each client's local data (train plus validation).
    pub local_samples: usize,
    /// Client test split, the source of reference confidences.
    pub test_samples: usize,
    /// Pool each sensor draws its inference batches from.
    pub sensor_pool: usize,
    /// Held-out labelled samples per sensor for accuracy metrics.
    pub eval_samples: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_clients: 1,
            sensors_per_client: 1,
            scheduler: SchedulerKind::Flare,
            alpha: 8.0,
            beta: 0.3,
            phi: 0.2,
            window: 10,
            inference_batch: 200,
            window_mode: WindowMode::Tumbling,
            learning_rate: 0.1,
            minibatch: 50,
            aggregation_every: 5,
            quantize: false,
            seconds_per_training_round: 10,
            seconds_per_inference_batch: 10,
            metrics_interval_s: 10,
            pretrain_s: 1500,
            duration_s: 4800,
            drift: DriftSchedule::default(),
            seed: 0,
            phase_seed: None,
            classes: 10,
            dim: 64,
            hidden: vec![32],
            local_samples: 500,
            test_samples: 200,
            sensor_pool: 1000,
            eval_samples: 500,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SimConfig = toml::from_str(text).map_err(|e| FlareError::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FlareError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn num_sensors(&self) -> usize {
        self.num_clients * self.sensors_per_client
    }

    pub fn phase_seed(&self) -> u64 {
        self.phase_seed.unwrap_or(self.seed)
    }

    pub fn model_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.dim);
        sizes.extend(&self.hidden);
        sizes.push(self.classes);
        sizes
    }

    pub fn training_options(&self) -> TrainingOptions {
        TrainingOptions {
            learning_rate: self.learning_rate,
            batch_size: (self.minibatch > 0).then_some(self.minibatch),
            window_mode: self.window_mode,
            ..TrainingOptions::default()
        }
    }

    /// Client owning `sensor`; sensors are numbered client by client.
    pub fn client_of(&self, sensor: usize) -> usize {
        sensor / self.sensors_per_client
    }

    pub fn validate(&self) -> Result<()> {
        validate_coefficients(self.alpha, self.beta)?;
        validate_phi(self.phi)?;
        let positive = [
            ("num_clients", self.num_clients as u64),
            ("sensors_per_client", self.sensors_per_client as u64),
            ("inference_batch", self.inference_batch as u64),
            ("aggregation_every", self.aggregation_every as u64),
            ("seconds_per_training_round", self.seconds_per_training_round),
            ("seconds_per_inference_batch", self.seconds_per_inference_batch),
            ("metrics_interval_s", self.metrics_interval_s),
            ("pretrain_s", self.pretrain_s),
            ("duration_s", self.duration_s),
            ("test_samples", self.test_samples as u64),
            ("eval_samples", self.eval_samples as u64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(FlareError::config(format!("{name} must be positive")));
        }
        if self.window < 2 {
            return Err(FlareError::config(format!(
                "window length w = {} must be at least 2",
                self.window
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FlareError::config("learning_rate must be positive"));
        }
        if self.pretrain_s >= self.duration_s {
            return Err(FlareError::config(format!(
                "pretrain_s ({}) must be shorter than duration_s ({})",
                self.pretrain_s, self.duration_s
            )));
        }
        if self.pretrain_s < self.window as u64 * self.seconds_per_training_round {
            return Err(FlareError::config(format!(
                "pre-training ({} s) must cover at least one window of {} rounds",
                self.pretrain_s, self.window
            )));
        }
        if let SchedulerKind::Fixed {
            deploy_interval_s,
            upload_interval_s,
            upload_phase_s,
        } = self.scheduler
        {
            if deploy_interval_s == 0 || upload_interval_s == 0 {
                return Err(FlareError::config("fixed scheduler intervals must be positive"));
            }
            if upload_phase_s == Some(0) {
                return Err(FlareError::config("upload_phase_s must be positive"));
            }
        }
        if self.classes <= 2 || self.dim < 4 {
            return Err(FlareError::config(format!(
                "need more than 2 classes and dim >= 4, got {} classes, dim {}",
                self.classes, self.dim
            )));
        }
        if self.hidden.contains(&0) {
            return Err(FlareError::config("hidden layer widths must be positive"));
        }
        if self.sensor_pool < self.inference_batch {
            return Err(FlareError::config(format!(
                "sensor_pool ({}) is smaller than the inference batch ({})",
                self.sensor_pool, self.inference_batch
            )));
        }
        let val = (self.local_samples as f64 * TrainingOptions::default().val_fraction).round() as usize;
        if val == 0 || val >= self.local_samples {
            return Err(FlareError::config(format!(
                "{} local samples cannot be split into train and validation",
                self.local_samples
            )));
        }
        for n in [self.local_samples, self.test_samples, self.sensor_pool, self.eval_samples] {
            if n < self.classes {
                return Err(FlareError::config(format!(
                    "sample count {n} is below the number of classes ({})",
                    self.classes
                )));
            }
        }
        self.drift.validate(self.num_sensors())?;
        for e in &self.drift.events {
            if e.time_s <= self.pretrain_s || e.time_s > self.duration_s {
                return Err(FlareError::config(format!(
                    "drift at {} s must fall after the initial deployment ({} s) and within the run ({} s)",
                    e.time_s, self.pretrain_s, self.duration_s
                )));
            }
        }
        Ok(())
    }
}
