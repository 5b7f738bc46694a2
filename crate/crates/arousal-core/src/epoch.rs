//! Fixed-length analysis epochs.
//!
//! All spectral estimation downstream operates on non-overlapping epochs cut
//! from a single channel. A trailing partial epoch is discarded rather than
//! padded: a padded tail would carry a different variance and bias the last
//! spectral estimate.

use crate::error::{Error, Result};

/// One contiguous, validated segment of a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub source_channel: String,
    /// Offset of the first sample from the start of the recording.
    pub start_time_s: f64,
}

impl Epoch {
    /// Builds an epoch, enforcing `len == duration * rate` and finite samples.
    pub fn new(
        samples: Vec<f64>,
        sample_rate_hz: f64,
        source_channel: &str,
        start_time_s: f64,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "epoch sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::InsufficientData("epoch has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "epoch sample {i} is {}",
                samples[i]
            )));
        }
        let duration_s = samples.len() as f64 / sample_rate_hz;
        Ok(Epoch {
            samples,
            sample_rate_hz,
            duration_s,
            source_channel: source_channel.to_string(),
            start_time_s,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Sample period in seconds.
    pub fn delta_t_s(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }
}

/// Splits a signal into consecutive non-overlapping epochs of `epoch_s` seconds.
///
/// `epoch_s * fs` must land on an integer sample count. A signal shorter than
/// one epoch yields an empty list; the trailing partial epoch is dropped.
pub fn epoch_signal(
    x: &[f64],
    sample_rate_hz: f64,
    epoch_s: f64,
    channel: &str,
) -> Result<Vec<Epoch>> {
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    if !(epoch_s.is_finite() && epoch_s > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "epoch length must be positive, got {epoch_s}"
        )));
    }
    let exact = epoch_s * sample_rate_hz;
    let n_per = exact.round();
    if (exact - n_per).abs() > 1e-9 * n_per.max(1.0) || n_per < 1.0 {
        return Err(Error::InvalidSpec(format!(
            "epoch length {epoch_s} s at {sample_rate_hz} Hz is {exact} samples, not an integer"
        )));
    }
    let n_per = n_per as usize;

    let mut out = Vec::with_capacity(x.len() / n_per);
    for (k, chunk) in x.chunks_exact(n_per).enumerate() {
        out.push(Epoch::new(
            chunk.to_vec(),
            sample_rate_hz,
            channel,
            k as f64 * epoch_s,
        )?);
    }
    Ok(out)
}
