//! Discrete-event simulation of server, clients and sensors.

mod config;
mod engine;
mod kpi;
mod ledger;
mod metrics;
pub mod report;
mod scenario;
mod seeds;
mod sweep;

pub use config::{SchedulerKind, SimConfig};
pub use engine::{run_simulation, SimOutput};
pub use kpi::{detection_latency, summarize, Latency, LatencyReport, RunSummary};
pub use ledger::{cumulative_bytes, CommLedger, Link, LinkFilter, Reason, TransferRecord};
pub use metrics::{
    normalized_accuracy, DecisionEvent, DecisionKind, DeploymentEvent, MetricSample, MetricsLog,
    NormalizedSample,
};
pub use scenario::{Scenario, SchedulerName};
pub use sweep::{sweep, SweepParam, SweepRow};
