use std::fmt;

use crate::error::{FlareError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Link {
    /// Sensor to client.
    Uplink,
    /// Client to sensor.
    Downlink,
    /// Client to server or back.
    Fl,
}

impl Link {
    pub fn as_str(self) -> &'static str {
        match self {
            Link::Uplink => "uplink",
            Link::Downlink => "downlink",
            Link::Fl => "fl",
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reason {
    Deploy,
    RawData,
    Aggregate,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Deploy => "deploy",
            Reason::RawData => "raw_data",
            Reason::Aggregate => "aggregate",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One transfer. `sensor` is `None` for client-server traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferRecord {
    pub time_s: u64,
    pub link: Link,
    pub bytes: u64,
    pub reason: Reason,
    pub client: usize,
    pub sensor: Option<usize>,
}

/// Which records a byte total counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkFilter {
    All,
    /// Uplink and downlink, i.e. everything a sensor sends or receives.
    ClientSensor,
    Only(Link),
}

impl LinkFilter {
    pub fn matches(self, link: Link) -> bool {
        match self {
            LinkFilter::All => true,
            LinkFilter::ClientSensor => link != Link::Fl,
            LinkFilter::Only(l) => l == link,
        }
    }
}

/// Append-only transfer log with non-decreasing times.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    records: Vec<TransferRecord>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, record: TransferRecord) -> Result<()> {
        if record.bytes == 0 {
            return Err(FlareError::contract("transfer records must carry bytes"));
        }
        if let Some(last) = self.records.last() {
            if record.time_s < last.time_s {
                return Err(FlareError::contract(format!(
                    "ledger time went backwards: {} after {}",
                    record.time_s, last.time_s
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TransferRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_bytes(&self, filter: LinkFilter) -> u64 {
        self.records
            .iter()
            .filter(|r| filter.matches(r.link))
            .map(|r| r.bytes)
            .sum()
    }

    pub fn count(&self, link: Link, reason: Reason) -> usize {
        self.records
            .iter()
            .filter(|r| r.link == link && r.reason == reason)
            .count()
    }
}

/// Running byte totals `(time, total)`, one point per matching record.
pub fn cumulative_bytes(ledger: &CommLedger, filter: LinkFilter) -> Vec<(u64, u64)> {
    let mut total = 0;
    ledger
        .records()
        .iter()
        .filter(|r| filter.matches(r.link))
        .map(|r| {
            total += r.bytes;
            (r.time_s, total)
        })
        .collect()
}
