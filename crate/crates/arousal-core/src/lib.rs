//! EEG arousal-state estimation from the multitaper spectral slope.
//!
//! The crate takes raw EEG (EDF files, CSV exports, or synthetic signals),
//! brings it to a common 200 Hz analysis rate, cuts it into fixed epochs,
//! estimates each epoch's power spectral density with discrete prolate
//! spheroidal (Slepian) tapers, fits a log-log line to the 30-45 Hz band,
//! and maps the fitted slope to an arousal state. Each stage is exposed on
//! its own so the pieces compose into other pipelines.

pub mod classifier;
pub mod dpss;
pub mod epoch;
pub mod error;
pub mod filters;
pub mod io;
pub mod multitaper;
pub mod pipeline;
pub mod resample;
pub mod slope;
pub mod synth;

pub use error::{Error, ErrorClass, Result};

/// Analysis sample rate, Hz. All spectral machinery assumes input at this rate.
pub const TARGET_RATE_HZ: f64 = 200.0;

/// Half-bandwidth of the spectral smoothing window, Hz.
pub const SMOOTHING_HALF_BANDWIDTH_HZ: f64 = 0.5;

/// Frequency band retained in PSD estimates, Hz.
pub const ANALYSIS_BAND_HZ: (f64, f64) = (0.5, 45.0);

/// Band over which the log-log slope is fitted, Hz (inclusive on both ends).
pub const FIT_BAND_HZ: (f64, f64) = (30.0, 45.0);

/// Epoch length for sleep recordings, seconds.
pub const SLEEP_EPOCH_S: f64 = 30.0;

/// Epoch length for anesthesia recordings, seconds.
pub const ANESTHESIA_EPOCH_S: f64 = 10.0;

/// Order of the optional low-pass denoising filter.
pub const DENOISE_ORDER: usize = 10;

/// Cutoff of the optional low-pass denoising filter, Hz.
pub const DENOISE_CUTOFF_HZ: f64 = 50.0;

/// Default magnitude threshold below which taper samples are stored as
/// structural zeros in the sparse representation.
pub const DEFAULT_SPARSIFY_EPSILON: f64 = 1e-9;
