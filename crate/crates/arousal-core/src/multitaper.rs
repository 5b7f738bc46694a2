//! Multitaper power spectral density estimation.
//!
//! Each taper gives one modified periodogram
//!
//! ```text
//! S_k(f) = dt * | sum_n g_k(n) x(n) e^(-j 2 pi f n dt) |^2
//! ```
//!
//! and the estimate is their plain arithmetic mean. Averaging K nearly
//! uncorrelated periodograms cuts the chi-squared variance of a single
//! periodogram by about 1/K while the Slepian concentration keeps the bias
//! confined to the design half-bandwidth.
//!
//! Spectra are one-sided: bins strictly between DC and Nyquist carry doubled
//! power so that integrating over (0, Fs/2] recovers the signal's mean-square
//! value. The epoch mean is removed before tapering, since a DC offset leaks
//! through taper sidelobes into exactly the low-frequency bins the analysis
//! band starts at.

use realfft::RealFftPlanner;

use crate::dpss::{TaperSet, TaperVector};
use crate::epoch::Epoch;
use crate::error::{Error, Result};
use crate::ANALYSIS_BAND_HZ;

/// One taper's modified periodogram over the full one-sided FFT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    pub taper_index: usize,
    /// One-sided power, `nfft/2 + 1` bins from DC to Nyquist, (signal^2)/Hz.
    pub power: Vec<f64>,
    pub delta_f_hz: f64,
}

/// An averaged multitaper spectrum on a contiguous frequency band.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    /// Strictly increasing bin frequencies, Hz.
    pub freqs_hz: Vec<f64>,
    /// Power per bin, (signal^2)/Hz, same length as `freqs_hz`.
    pub power: Vec<f64>,
    pub n_tapers_used: usize,
    /// Provenance string, `"<channel>@<start>s"`.
    pub epoch_ref: String,
    /// Sampling interval of the source epoch, seconds.
    pub delta_t_s: f64,
}

impl PsdEstimate {
    /// Grid spacing in Hz (the grid is uniform by construction).
    pub fn delta_f_hz(&self) -> f64 {
        if self.freqs_hz.len() >= 2 {
            self.freqs_hz[1] - self.freqs_hz[0]
        } else {
            0.0
        }
    }

    /// Copy restricted to bins with `lo_hz <= f <= hi_hz` (inclusive, with a
    /// relative guard so exact band edges are kept despite rounding).
    pub fn band(&self, lo_hz: f64, hi_hz: f64) -> PsdEstimate {
        let tol = self.delta_f_hz() * 1e-9;
        let keep: Vec<usize> = (0..self.freqs_hz.len())
            .filter(|&i| self.freqs_hz[i] >= lo_hz - tol && self.freqs_hz[i] <= hi_hz + tol)
            .collect();
        PsdEstimate {
            freqs_hz: keep.iter().map(|&i| self.freqs_hz[i]).collect(),
            power: keep.iter().map(|&i| self.power[i]).collect(),
            n_tapers_used: self.n_tapers_used,
            epoch_ref: self.epoch_ref.clone(),
            delta_t_s: self.delta_t_s,
        }
    }

    /// Riemann integral of the spectrum over its band, (signal^2).
    pub fn integrated_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.delta_f_hz()
    }
}

/// Knobs for [`multitaper_psd_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdOptions {
    /// FFT length; `None` uses the epoch length (no zero padding). Padding
    /// interpolates the grid but adds no information.
    pub nfft: Option<usize>,
    /// Band restriction for the returned grid; `None` keeps everything from
    /// DC to Nyquist.
    pub band_hz: Option<(f64, f64)>,
}

impl Default for PsdOptions {
    /// Matches the analysis product: epoch-length FFT, 0.5-45 Hz band.
    fn default() -> PsdOptions {
        PsdOptions {
            nfft: None,
            band_hz: Some(ANALYSIS_BAND_HZ),
        }
    }
}

/// The full-grid variant, used where power accounting matters.
pub const FULL_GRID: PsdOptions = PsdOptions {
    nfft: None,
    band_hz: None,
};

fn validate_epoch_signal(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::InsufficientData("empty epoch".into()));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("epoch sample {i} is {}", x[i])));
    }
    Ok(())
}

fn demean(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

/// One modified periodogram: taper, transform, scale by the sampling
/// interval, fold to one side.
pub fn modified_periodogram(
    epoch: &Epoch,
    taper: &TaperVector,
    delta_t_s: f64,
) -> Result<Periodogram> {
    if taper.len() != epoch.samples.len() {
        return Err(Error::LengthMismatch(format!(
            "taper has {} samples, epoch has {}",
            taper.len(),
            epoch.samples.len()
        )));
    }
    validate_epoch_signal(&epoch.samples)?;
    let x = demean(&epoch.samples);
    let spectra = tapered_spectra(&x, std::slice::from_ref(taper), None, delta_t_s)?;
    Ok(Periodogram {
        taper_index: 0,
        power: spectra.per_taper.into_iter().next().unwrap(),
        delta_f_hz: spectra.delta_f_hz,
    })
}

/// The averaged multitaper estimate on the 0.5-45 Hz analysis grid.
pub fn multitaper_psd(epoch: &Epoch, tapers: &TaperSet) -> Result<PsdEstimate> {
    multitaper_psd_with(epoch, &tapers.tapers, &PsdOptions::default())
}

/// The averaged multitaper estimate with explicit taper vectors and options.
///
/// Accepts sparse tapers so the storage-reduced family can drive the same
/// code path as the dense one.
pub fn multitaper_psd_with(
    epoch: &Epoch,
    tapers: &[TaperVector],
    options: &PsdOptions,
) -> Result<PsdEstimate> {
    if tapers.is_empty() {
        return Err(Error::InvalidSpec("need at least one taper".into()));
    }
    let n = epoch.samples.len();
    for (k, t) in tapers.iter().enumerate() {
        if t.len() != n {
            return Err(Error::LengthMismatch(format!(
                "taper {k} has {} samples, epoch has {n}",
                t.len()
            )));
        }
    }
    validate_epoch_signal(&epoch.samples)?;
    let x = demean(&epoch.samples);
    let spectra = tapered_spectra(&x, tapers, options.nfft, epoch.delta_t_s())?;

    let n_bins = spectra.per_taper[0].len();
    let k_count = spectra.per_taper.len();
    let mut avg = vec![0.0; n_bins];
    for per in &spectra.per_taper {
        for (a, &p) in avg.iter_mut().zip(per) {
            *a += p;
        }
    }
    for a in avg.iter_mut() {
        *a /= k_count as f64;
    }

    let freqs: Vec<f64> = (0..n_bins).map(|i| i as f64 * spectra.delta_f_hz).collect();
    let full = PsdEstimate {
        freqs_hz: freqs,
        power: avg,
        n_tapers_used: k_count,
        epoch_ref: format!("{}@{}s", epoch.source_channel, epoch.start_time_s),
        delta_t_s: epoch.delta_t_s(),
    };
    Ok(match options.band_hz {
        Some((lo, hi)) => full.band(lo, hi),
        None => full,
    })
}

struct TaperedSpectra {
    per_taper: Vec<Vec<f64>>,
    delta_f_hz: f64,
}

/// Computes one-sided `dt * |FFT(g_k . x)|^2` for each taper.
fn tapered_spectra(
    x: &[f64],
    tapers: &[TaperVector],
    nfft: Option<usize>,
    delta_t_s: f64,
) -> Result<TaperedSpectra> {
    let n = x.len();
    let nfft = nfft.unwrap_or(n);
    if nfft < n {
        return Err(Error::InvalidSpec(format!(
            "FFT length {nfft} is shorter than the epoch ({n} samples)"
        )));
    }
    if !(delta_t_s.is_finite() && delta_t_s > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "sampling interval must be positive, got {delta_t_s}"
        )));
    }
    let fs = 1.0 / delta_t_s;
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut buf = vec![0.0; nfft];
    let mut spectrum = fft.make_output_vec();
    let nyquist_bin = if nfft % 2 == 0 { Some(nfft / 2) } else { None };

    let mut per_taper = Vec::with_capacity(tapers.len());
    for taper in tapers {
        buf.fill(0.0);
        taper.apply_to(x, &mut buf[..n]);
        fft.process(&mut buf, &mut spectrum)
            .expect("forward FFT on correctly sized buffers");
        let power: Vec<f64> = spectrum
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let two_sided = c.norm_sqr() * delta_t_s;
                if i == 0 || Some(i) == nyquist_bin {
                    two_sided
                } else {
                    2.0 * two_sided
                }
            })
            .collect();
        per_taper.push(power);
    }
    Ok(TaperedSpectra {
        per_taper,
        delta_f_hz: fs / nfft as f64,
    })
}
