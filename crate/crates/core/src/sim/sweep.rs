use std::fmt;
use std::str::FromStr;

use super::config::SimConfig;
use super::engine::run_simulation;
use super::kpi::{summarize, RunSummary};
use crate::error::{FlareError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    Beta,
    Phi,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
            SweepParam::Phi => "phi",
        }
    }

    pub fn apply(self, config: &SimConfig, value: f64) -> SimConfig {
        let mut c = config.clone();
        match self {
            SweepParam::Alpha => c.alpha = value,
            SweepParam::Beta => c.beta = value,
            SweepParam::Phi => c.phi = value,
        }
        c
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = FlareError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "beta" => Ok(SweepParam::Beta),
            "phi" => Ok(SweepParam::Phi),
            _ => Err(FlareError::config(format!(
                "unknown sweep parameter {s:?}; expected alpha, beta or phi"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub summary: RunSummary,
}

/// Runs `base` once per value. Every value is validated before the first run.
pub fn sweep(base: &SimConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(FlareError::config("sweep needs at least one value"));
    }
    let configs: Vec<SimConfig> = values.iter().map(|&v| param.apply(base, v)).collect();
    for c in &configs {
        c.validate()?;
    }
    configs
        .iter()
        .zip(values)
        .map(|(c, &value)| {
            let out = run_simulation(c)?;
            Ok(SweepRow {
                value,
                summary: summarize(&out)?,
            })
        })
        .collect()
}
