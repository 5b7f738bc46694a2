//! End-to-end processing: channel in, staged epochs out.
//!
//! The stages run in a fixed order: decimate to the target rate, low-pass to
//! reject line noise and leftover high-frequency content, cut into epochs,
//! estimate each epoch's spectrum, fit the log-log slope over the fit band,
//! and threshold the slope into a stage. Taper computation and filter design
//! happen once in [`Pipeline::new`]; per-epoch work reuses them.

use serde::{Deserialize, Serialize};

use crate::classifier::{classify_binary_arousal, classify_slope, ArousalState, Stage, Thresholds};
use crate::dpss::{
    compute_tapers, recommended_n_tapers, sparsify_tapers, SparsifyReport, TaperParams, TaperSet,
};
use crate::epoch::{epoch_signal, Epoch};
use crate::error::{Error, Result};
use crate::filters::{
    design_butterworth_lowpass, filter_signal, filter_signal_zero_phase, SosCascade,
};
use crate::io::{Channel, Recording};
use crate::multitaper::multitaper_psd;
use crate::resample::{design_antialias_fir, resample};
use crate::slope::spectral_slope;
use crate::{
    DENOISE_CUTOFF_HZ, DENOISE_ORDER, FIT_BAND_HZ, SLEEP_EPOCH_S, SMOOTHING_HALF_BANDWIDTH_HZ,
    TARGET_RATE_HZ,
};

/// Everything the pipeline needs to know, with sensible defaults for sleep
/// EEG at 200 Hz and 30-second epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Channel to process when handed a whole recording.
    pub channel_label: String,
    /// Epoch length in seconds.
    pub epoch_s: f64,
    /// Rate everything is decimated to before analysis.
    pub target_rate_hz: f64,
    /// Spectral smoothing half-bandwidth `W` for the tapers.
    pub nw_smoothing_hz: f64,
    /// Taper count; `None` derives it from the time-bandwidth product.
    pub n_tapers: Option<usize>,
    /// Frequency band the slope is fit over, inclusive.
    pub fit_band_hz: (f64, f64),
    /// Slope cut points between stages.
    pub thresholds: Thresholds,
    /// Taper entries below this magnitude are dropped; 0 keeps tapers dense.
    pub sparsify_epsilon: f64,
    /// Run the low-pass forward and backward instead of causally.
    pub zero_phase: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            channel_label: "Cz".to_string(),
            epoch_s: SLEEP_EPOCH_S,
            target_rate_hz: TARGET_RATE_HZ,
            nw_smoothing_hz: SMOOTHING_HALF_BANDWIDTH_HZ,
            n_tapers: None,
            fit_band_hz: FIT_BAND_HZ,
            thresholds: Thresholds::default(),
            sparsify_epsilon: 0.0,
            zero_phase: false,
        }
    }
}

impl PipelineConfig {
    /// Checks the fields against each other; cheap, no taper computation.
    pub fn validate(&self) -> Result<()> {
        if self.channel_label.is_empty() {
            return Err(Error::Config("channel label is empty".into()));
        }
        if !(self.epoch_s.is_finite() && self.epoch_s > 0.0) {
            return Err(Error::Config(format!(
                "epoch length {} s must be positive",
                self.epoch_s
            )));
        }
        if !(self.target_rate_hz.is_finite() && self.target_rate_hz > 0.0) {
            return Err(Error::Config(format!(
                "target rate {} Hz must be positive",
                self.target_rate_hz
            )));
        }
        let per_epoch = self.epoch_s * self.target_rate_hz;
        if per_epoch.fract() != 0.0 {
            return Err(Error::Config(format!(
                "{} s epochs at {} Hz give a fractional {per_epoch} samples per epoch",
                self.epoch_s, self.target_rate_hz
            )));
        }
        if !(self.nw_smoothing_hz.is_finite() && self.nw_smoothing_hz > 0.0) {
            return Err(Error::Config(format!(
                "smoothing half-bandwidth {} Hz must be positive",
                self.nw_smoothing_hz
            )));
        }
        if self.n_tapers == Some(0) {
            return Err(Error::Config("taper count must be at least 1".into()));
        }
        let (lo, hi) = self.fit_band_hz;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
            return Err(Error::Config(format!(
                "fit band [{lo}, {hi}] Hz must satisfy 0 < low < high"
            )));
        }
        if !(self.sparsify_epsilon.is_finite() && self.sparsify_epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "sparsify threshold {} must be non-negative",
                self.sparsify_epsilon
            )));
        }
        self.thresholds.validate()?;
        Ok(())
    }

    /// The taper request this configuration implies.
    pub fn taper_params(&self) -> TaperParams {
        let n_tapers = self
            .n_tapers
            .unwrap_or_else(|| recommended_n_tapers(self.epoch_s, self.nw_smoothing_hz));
        TaperParams {
            n_samples: (self.epoch_s * self.target_rate_hz).round() as usize,
            n_tapers,
            half_bandwidth_hz: self.nw_smoothing_hz,
            sample_rate_hz: self.target_rate_hz,
        }
    }
}

/// One epoch's worth of pipeline output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch_index: usize,
    pub start_time_s: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Three-way stage from the slope thresholds.
    pub stage: Stage,
    /// Binary collapse of the same decision.
    pub state: ArousalState,
}

/// A validated configuration plus the tapers and filter it implies.
pub struct Pipeline {
    config: PipelineConfig,
    tapers: TaperSet,
    sparsify_report: Option<SparsifyReport>,
    filter: SosCascade,
}

impl Pipeline {
    /// Validates the configuration and does the one-time setup work.
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let dense = compute_tapers(&config.taper_params())?;
        let (tapers, sparsify_report) = if config.sparsify_epsilon > 0.0 {
            let (set, report) = sparsify_tapers(&dense, config.sparsify_epsilon)?;
            (set, Some(report))
        } else {
            (dense, None)
        };
        let filter =
            design_butterworth_lowpass(DENOISE_ORDER, DENOISE_CUTOFF_HZ, config.target_rate_hz)?;
        Ok(Self {
            config,
            tapers,
            sparsify_report,
            filter,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn tapers(&self) -> &TaperSet {
        &self.tapers
    }

    pub fn sparsify_report(&self) -> Option<&SparsifyReport> {
        self.sparsify_report.as_ref()
    }

    pub fn filter(&self) -> &SosCascade {
        &self.filter
    }

    /// Decimates, low-passes, and cuts one channel into epochs.
    pub fn prepare_channel(&self, channel: &Channel) -> Result<Vec<Epoch>> {
        let spec = design_antialias_fir(channel.sample_rate_hz, self.config.target_rate_hz)?;
        let decimated = resample(&spec, &channel.samples)?;
        let filtered = if self.config.zero_phase {
            filter_signal_zero_phase(&self.filter, &decimated)?
        } else {
            filter_signal(&self.filter, &decimated)?
        };
        epoch_signal(
            &filtered,
            self.config.target_rate_hz,
            self.config.epoch_s,
            &channel.label,
        )
    }

    /// Spectrum, slope, and stage for one prepared epoch.
    pub fn process_epoch(&self, epoch: &Epoch, epoch_index: usize) -> Result<EpochRecord> {
        let psd = multitaper_psd(epoch, &self.tapers)?;
        let feature = spectral_slope(&psd, self.config.fit_band_hz)?;
        let stage = classify_slope(feature.slope, &self.config.thresholds)?;
        let state = classify_binary_arousal(feature.slope, &self.config.thresholds)?;
        Ok(EpochRecord {
            epoch_index,
            start_time_s: epoch.start_time_s,
            slope: feature.slope,
            intercept: feature.intercept,
            stage,
            state,
        })
    }

    /// Runs the whole pipeline over one channel.
    pub fn process_channel(&self, channel: &Channel) -> Result<Vec<EpochRecord>> {
        let epochs = self.prepare_channel(channel)?;
        epochs
            .iter()
            .enumerate()
            .map(|(i, e)| self.process_epoch(e, i))
            .collect()
    }

    /// Runs the whole pipeline over the configured channel of a recording.
    pub fn process_recording(&self, recording: &Recording) -> Result<Vec<EpochRecord>> {
        let channel = recording.channel(&self.config.channel_label)?;
        self.process_channel(channel)
    }
}
