//! Preset scenarios and baseline schedulers.

use std::fmt;
use std::str::FromStr;

use super::config::{SchedulerKind, SimConfig};
use crate::drift::{CorruptionKind, DriftEvent, DriftSchedule};
use crate::error::{FlareError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// One client with one sensor; three drifts starting 500 s after the
    /// initial deployment, 800 s apart.
    Preliminary,
    /// Four clients with eight sensors each; three drifts on sensor 0
    /// starting 1000 s after the initial deployment, 2500 s apart.
    RealWorld,
}

impl Scenario {
    pub const NAMES: [&'static str; 2] = ["preliminary", "realworld"];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Preliminary => "preliminary",
            Scenario::RealWorld => "realworld",
        }
    }

    /// FLARE configuration of the scenario.
    pub fn config(self, seed: u64) -> SimConfig {
        let kinds = CorruptionKind::drift_sequence();
        match self {
            Scenario::Preliminary => SimConfig {
                num_clients: 1,
                sensors_per_client: 1,
                pretrain_s: 1500,
                duration_s: 4800,
                drift: schedule(&[2000, 2800, 3600], 0, kinds),
                seed,
                ..SimConfig::default()
            },
            Scenario::RealWorld => SimConfig {
                num_clients: 4,
                sensors_per_client: 8,
                pretrain_s: 4000,
                duration_s: 13000,
                drift: schedule(&[5000, 7500, 10000], 0, kinds),
                seed,
                ..SimConfig::default()
            },
        }
    }

    /// Resolves a scheduler name in the context of this scenario.
    pub fn scheduler(self, name: SchedulerName) -> SchedulerKind {
        match (name, self) {
            (SchedulerName::Flare, _) => SchedulerKind::Flare,
            (SchedulerName::None, _) => SchedulerKind::None,
            (SchedulerName::Fixed, Scenario::Preliminary) => SchedulerKind::fixed(300, 350),
            (SchedulerName::Fixed | SchedulerName::FixedHigh, _) => SchedulerKind::fixed(1200, 900),
            (SchedulerName::FixedLow, _) => SchedulerKind::fixed(3000, 2800),
        }
    }

    pub fn with_scheduler(self, name: SchedulerName, seed: u64) -> SimConfig {
        SimConfig {
            scheduler: self.scheduler(name),
            ..self.config(seed)
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = FlareError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "preliminary" => Ok(Scenario::Preliminary),
            "realworld" | "real-world" => Ok(Scenario::RealWorld),
            _ => Err(FlareError::config(format!(
                "unknown scenario {s:?}; expected one of {}",
                Scenario::NAMES.join(", ")
            ))),
        }
    }
}

fn schedule(times: &[u64], sensor: usize, kinds: [CorruptionKind; 3]) -> DriftSchedule {
    DriftSchedule::new(
        times
            .iter()
            .zip(kinds)
            .map(|(&time_s, corruption)| DriftEvent {
                time_s,
                sensor,
                corruption,
            })
            .collect(),
    )
}

/// Scheduler names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerName {
    Flare,
    /// The scenario's default fixed-interval baseline.
    Fixed,
    FixedHigh,
    FixedLow,
    None,
}

impl SchedulerName {
    pub const NAMES: [&'static str; 5] = ["flare", "fixed", "fixed-high", "fixed-low", "none"];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerName::Flare => "flare",
            SchedulerName::Fixed => "fixed",
            SchedulerName::FixedHigh => "fixed-high",
            SchedulerName::FixedLow => "fixed-low",
            SchedulerName::None => "none",
        }
    }
}

impl fmt::Display for SchedulerName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerName {
    type Err = FlareError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flare" => Ok(SchedulerName::Flare),
            "fixed" => Ok(SchedulerName::Fixed),
            "fixed-high" => Ok(SchedulerName::FixedHigh),
            "fixed-low" => Ok(SchedulerName::FixedLow),
            "none" => Ok(SchedulerName::None),
            _ => Err(FlareError::config(format!(
                "unknown scheduler {s:?}; valid names are {}",
                SchedulerName::NAMES.join(", ")
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for sc in [Scenario::Preliminary, Scenario::RealWorld] {
            for name in SchedulerName::NAMES {
                sc.with_scheduler(name.parse().unwrap(), 1).validate().unwrap();
            }
        }
        assert_eq!(Scenario::RealWorld.config(0).num_sensors(), 32);
    }

    #[test]
    fn unknown_scheduler_lists_valid_names() {
        let err = "sometimes".parse::<SchedulerName>().unwrap_err().to_string();
        assert!(err.contains("flare, fixed, fixed-high, fixed-low, none"), "{err}");
    }
}
