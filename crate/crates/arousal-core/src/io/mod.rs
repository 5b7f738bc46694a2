//! Recording ingestion and export: EDF binaries, CSV recordings, and
//! hypnogram sidecars.

pub mod csv;
pub mod edf;
pub mod hypnogram;

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One physical signal of a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub label: String,
    pub sample_rate_hz: f64,
    /// Samples in physical units (calibration already applied).
    pub samples: Vec<f64>,
}

/// A multichannel recording in physical units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Recording {
    pub channels: Vec<Channel>,
    /// Recording start, `dd.mm.yy` and `hh.mm.ss` as stored in EDF headers.
    pub start_date: String,
    pub start_time: String,
    /// Free-form header fields (patient id, recording id, ...).
    pub metadata: BTreeMap<String, String>,
}

impl Recording {
    /// Finds a channel by exact label, listing what exists when it does not.
    pub fn channel(&self, label: &str) -> Result<&Channel> {
        self.channels
            .iter()
            .find(|c| c.label == label)
            .ok_or_else(|| Error::ChannelNotFound {
                wanted: label.to_string(),
                available: self.channels.iter().map(|c| c.label.clone()).collect(),
            })
    }

    pub fn channel_labels(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.label.clone()).collect()
    }
}
