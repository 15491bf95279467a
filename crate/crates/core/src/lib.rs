//! Drift-aware model scheduling for federated sensor networks with server,
//! client and sensor nodes.
//!
//! The client scheduler ([`scheduler`]) decides when a locally trained model
//! is stable enough to ship to its sensors; the sensor monitor ([`monitor`])
//! watches the deployed model's confidence distribution and requests
//! retraining data when it shifts. [`sim`] wires both into a deterministic
//! discrete-event simulation with byte-accurate communication accounting.

pub mod codec;
pub mod dataset;
pub mod drift;
pub mod error;
pub mod federation;
pub mod idx;
pub mod model;
pub mod monitor;
pub mod scheduler;
pub mod sim;
pub mod stats;

pub use dataset::{LabeledDataset, Provenance};
pub use error::{FlareError, Result};
pub use model::{ModelParams, Prediction};
