use crate::drift::DriftEvent;
use crate::error::{FlareError, Result};
use crate::scheduler::Branch;

/// Accuracy of a sensor's deployed model on its current input distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub time_s: u64,
    pub sensor: usize,
    pub accuracy: f64,
    /// Latest KS statistic seen by the sensor monitor, if any batch ran.
    pub ks: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecisionKind {
    /// A completed scheduler window on a client.
    Window { branch: Branch, sigma_w: f64 },
    /// The monitor asked to upload raw data.
    Trigger { ks: f64, prev_ks: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionEvent {
    pub time_s: u64,
    /// Client id for windows, sensor id for triggers.
    pub node: usize,
    pub kind: DecisionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeploymentEvent {
    pub time_s: u64,
    pub client: usize,
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    pub samples: Vec<MetricSample>,
    pub decisions: Vec<DecisionEvent>,
    pub drifts: Vec<DriftEvent>,
    pub deployments: Vec<DeploymentEvent>,
    /// Accuracy of each sensor at its first deployment.
    pub initial_accuracy: Vec<Option<f64>>,
}

impl MetricsLog {
    pub fn new(num_sensors: usize) -> Self {
        Self {
            initial_accuracy: vec![None; num_sensors],
            ..Self::default()
        }
    }

    pub fn num_sensors(&self) -> usize {
        self.initial_accuracy.len()
    }

    pub fn sensor_samples(&self, sensor: usize) -> impl Iterator<Item = &MetricSample> + '_ {
        self.samples.iter().filter(move |s| s.sensor == sensor)
    }

    pub fn instability_flags(&self) -> usize {
        self.count_windows(Branch::MarkUnstable)
    }

    pub fn count_windows(&self, branch: Branch) -> usize {
        self.decisions
            .iter()
            .filter(|d| matches!(d.kind, DecisionKind::Window { branch: b, .. } if b == branch))
            .count()
    }

    pub fn drift_triggers(&self) -> usize {
        self.decisions
            .iter()
            .filter(|d| matches!(d.kind, DecisionKind::Trigger { .. }))
            .count()
    }

    /// Sensors targeted by at least one drift event, ascending.
    pub fn affected_sensors(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.drifts.iter().map(|d| d.sensor).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// A sample divided by its sensor's accuracy at the first deployment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedSample {
    pub time_s: u64,
    pub sensor: usize,
    pub value: f64,
}

/// Per-sensor series, one entry per sensor id.
pub fn normalized_accuracy(metrics: &MetricsLog) -> Result<Vec<Vec<NormalizedSample>>> {
    let mut series = vec![Vec::new(); metrics.num_sensors()];
    for s in &metrics.samples {
        let base = metrics
            .initial_accuracy
            .get(s.sensor)
            .copied()
            .flatten()
            .ok_or_else(|| {
                FlareError::Normalization(format!("sensor {} has no initial deployment", s.sensor))
            })?;
        if base <= 0.0 {
            return Err(FlareError::Normalization(format!(
                "sensor {} had zero accuracy at its first deployment",
                s.sensor
            )));
        }
        series[s.sensor].push(NormalizedSample {
            time_s: s.time_s,
            sensor: s.sensor,
            value: s.accuracy / base,
        });
    }
    Ok(series)
}
