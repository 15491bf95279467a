use std::fmt;

use super::engine::SimOutput;
use super::ledger::{CommLedger, Link, LinkFilter, Reason};
use super::metrics::{normalized_accuracy, MetricsLog};
use crate::drift::DriftEvent;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Latency {
    Detected(u64),
    /// No raw-data upload from the affected sensor followed the drift.
    Undetected,
}

impl Latency {
    pub fn seconds(self) -> Option<u64> {
        match self {
            Latency::Detected(s) => Some(s),
            Latency::Undetected => None,
        }
    }
}

impl fmt::Display for Latency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Latency::Detected(s) => write!(f, "{s}"),
            Latency::Undetected => f.write_str("undetected"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub events: Vec<(DriftEvent, Latency)>,
    /// Mean over detected events; `None` when nothing was detected.
    pub average_s: Option<f64>,
}

impl LatencyReport {
    pub fn undetected(&self) -> usize {
        self.events.iter().filter(|(_, l)| *l == Latency::Undetected).count()
    }
}

/// Time from each drift to the first later raw-data upload of its sensor.
pub fn detection_latency(metrics: &MetricsLog, ledger: &CommLedger) -> LatencyReport {
    let events: Vec<(DriftEvent, Latency)> = metrics
        .drifts
        .iter()
        .map(|d| {
            let first = ledger.records().iter().find(|r| {
                r.link == Link::Uplink
                    && r.reason == Reason::RawData
                    && r.sensor == Some(d.sensor)
                    && r.time_s >= d.time_s
            });
            let latency = first.map_or(Latency::Undetected, |r| Latency::Detected(r.time_s - d.time_s));
            (*d, latency)
        })
        .collect();
    let detected: Vec<u64> = events.iter().filter_map(|(_, l)| l.seconds()).collect();
    let average_s = (!detected.is_empty()).then(|| detected.iter().sum::<u64>() as f64 / detected.len() as f64);
    LatencyReport { events, average_s }
}

/// Headline KPIs of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scheduler: String,
    /// Largest drop below the initial deployment, in percent, on the
    /// drift-affected sensors (all sensors when there is no drift).
    pub max_drop_pct: f64,
    /// Mean final normalized accuracy over the same sensors.
    pub final_normalized_accuracy: f64,
    /// `(final_normalized_accuracy - 1) * 100`.
    pub final_accuracy_diff_pct: f64,
    pub latency: LatencyReport,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub fl_bytes: u64,
    pub deployments: usize,
    pub uploads: usize,
    pub instability_flags: usize,
    pub drift_triggers: usize,
}

impl RunSummary {
    pub fn client_sensor_bytes(&self) -> u64 {
        self.uplink_bytes + self.downlink_bytes
    }
}

pub fn summarize(output: &SimOutput) -> Result<RunSummary> {
    let metrics = &output.metrics;
    let ledger = &output.ledger;
    let series = normalized_accuracy(metrics)?;
    let mut focus = metrics.affected_sensors();
    if focus.is_empty() {
        focus = (0..series.len()).collect();
    }
    let mut min_value = f64::INFINITY;
    let mut finals = Vec::new();
    for &s in &focus {
        for sample in &series[s] {
            min_value = min_value.min(sample.value);
        }
        if let Some(last) = series[s].last() {
            finals.push(last.value);
        }
    }
    let final_normalized_accuracy = if finals.is_empty() {
        f64::NAN
    } else {
        finals.iter().sum::<f64>() / finals.len() as f64
    };
    let max_drop_pct = if min_value.is_finite() {
        ((1.0 - min_value) * 100.0).max(0.0)
    } else {
        f64::NAN
    };
    Ok(RunSummary {
        scheduler: output.config.scheduler.label(),
        max_drop_pct,
        final_normalized_accuracy,
        final_accuracy_diff_pct: (final_normalized_accuracy - 1.0) * 100.0,
        latency: detection_latency(metrics, ledger),
        uplink_bytes: ledger.total_bytes(LinkFilter::Only(Link::Uplink)),
        downlink_bytes: ledger.total_bytes(LinkFilter::Only(Link::Downlink)),
        fl_bytes: ledger.total_bytes(LinkFilter::Only(Link::Fl)),
        deployments: metrics.deployments.len(),
        uploads: ledger.count(Link::Uplink, Reason::RawData),
        instability_flags: metrics.instability_flags(),
        drift_triggers: metrics.drift_triggers(),
    })
}
