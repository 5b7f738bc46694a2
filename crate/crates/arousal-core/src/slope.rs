//! Log-log spectral slope extraction.
//!
//! The arousal feature is the slope of a straight line fitted to
//! (log10 f, log10 P) over the 30-45 Hz band by ordinary least squares. The
//! regressor is centered before solving, which keeps the normal equations
//! well conditioned even though the band's log-frequencies span only ~0.18.
//! The intercept is reported at log10 f = 0, i.e. the fitted log-power at
//! 1 Hz extrapolated from the band.

use crate::dpss::TaperSet;
use crate::epoch::Epoch;
use crate::error::{Error, Result};
use crate::multitaper::{multitaper_psd, PsdEstimate};
use crate::FIT_BAND_HZ;

/// A fitted log-log line over one epoch's spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFeature {
    /// Log-power per log-frequency; dimensionless.
    pub slope: f64,
    /// Fitted log10 power at 1 Hz.
    pub intercept: f64,
    /// Band the fit used, Hz.
    pub fit_band_hz: (f64, f64),
    /// Bins inside the band.
    pub n_bins: usize,
    /// Root-mean-square of the fit residuals, log10-power units.
    pub residual_rms: f64,
}

/// Fits `log10 P = slope * log10 f + intercept` over `band` (inclusive).
pub fn spectral_slope(psd: &PsdEstimate, band: (f64, f64)) -> Result<SlopeFeature> {
    let (lo, hi) = band;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
        return Err(Error::InvalidSpec(format!(
            "fit band must satisfy 0 < lo < hi, got ({lo}, {hi})"
        )));
    }
    let tol = psd.delta_f_hz() * 1e-9;
    let mut us = Vec::new();
    let mut ys = Vec::new();
    for (i, &f) in psd.freqs_hz.iter().enumerate() {
        if f < lo - tol || f > hi + tol {
            continue;
        }
        let p = psd.power[i];
        if !p.is_finite() {
            return Err(Error::NonFinite(format!("power at {f} Hz is {p}")));
        }
        if p <= 0.0 {
            return Err(Error::DegenerateSpectrum(format!(
                "power at {f} Hz is {p}; the log-log fit needs strictly positive power"
            )));
        }
        us.push(f.log10());
        ys.push(p.log10());
    }
    let n = us.len();
    if n < 3 {
        return Err(Error::InsufficientBand(format!(
            "{n} bins fall inside ({lo}, {hi}) Hz; at least 3 are needed"
        )));
    }

    let u_mean = us.iter().sum::<f64>() / n as f64;
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let mut suy = 0.0;
    let mut suu = 0.0;
    for (&u, &y) in us.iter().zip(&ys) {
        let du = u - u_mean;
        suy += du * (y - y_mean);
        suu += du * du;
    }
    if suu == 0.0 {
        return Err(Error::InsufficientBand(format!(
            "all {n} band bins share one frequency; the slope is undefined"
        )));
    }
    let slope = suy / suu;
    let intercept = y_mean - slope * u_mean;
    let ss_res: f64 = us
        .iter()
        .zip(&ys)
        .map(|(&u, &y)| {
            let r = y - (slope * u + intercept);
            r * r
        })
        .sum();
    Ok(SlopeFeature {
        slope,
        intercept,
        fit_band_hz: band,
        n_bins: n,
        residual_rms: (ss_res / n as f64).sqrt(),
    })
}

/// Estimates the PSD of `epoch` with `tapers` and fits the 30-45 Hz slope.
pub fn slope_of_epoch(epoch: &Epoch, tapers: &TaperSet) -> Result<SlopeFeature> {
    let psd = multitaper_psd(epoch, tapers)?;
    spectral_slope(&psd, FIT_BAND_HZ)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_psd(power_of: impl Fn(f64) -> f64) -> PsdEstimate {
        // 0.5..45 Hz at the sleep-epoch spacing of 1/30 Hz.
        let delta_f = 1.0 / 30.0;
        let freqs: Vec<f64> = (15..=1350).map(|i| i as f64 * delta_f).collect();
        let power = freqs.iter().map(|&f| power_of(f)).collect();
        PsdEstimate {
            freqs_hz: freqs,
            power,
            n_tapers_used: 1,
            epoch_ref: "synthetic".into(),
            delta_t_s: 0.005,
        }
    }

    #[test]
    fn exact_power_law_recovers_its_exponent_at_any_scale() {
        for c in [1.0, 3.7e-4, 2.9e6] {
            let psd = grid_psd(|f| c * f.powi(-2));
            let fit = spectral_slope(&psd, (30.0, 45.0)).unwrap();
            assert!(
                (fit.slope + 2.0).abs() < 1e-9,
                "C = {c}: slope {}",
                fit.slope
            );
            assert!(fit.residual_rms < 1e-9, "power law must fit exactly");
        }
    }

    #[test]
    fn flat_spectrum_has_zero_slope() {
        let psd = grid_psd(|_| 0.125);
        let fit = spectral_slope(&psd, (30.0, 45.0)).unwrap();
        assert!(fit.slope.abs() < 1e-9, "slope {}", fit.slope);
        assert!((fit.intercept - 0.125f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn intercept_tracks_power_scaling() {
        let base = grid_psd(|f| f.powi(-3));
        let scaled = grid_psd(|f| 100.0 * f.powi(-3));
        let a = spectral_slope(&base, (30.0, 45.0)).unwrap();
        let b = spectral_slope(&scaled, (30.0, 45.0)).unwrap();
        assert!((a.slope - b.slope).abs() < 1e-9);
        assert!(
            (b.intercept - a.intercept - 2.0).abs() < 1e-9,
            "x100 in power must shift log10 intercept by exactly 2"
        );
    }

    #[test]
    fn band_edges_are_inclusive() {
        let psd = grid_psd(|f| f.powi(-1));
        let fit = spectral_slope(&psd, (30.0, 45.0)).unwrap();
        // 1/30 Hz spacing: 30.0 is bin 900, 45.0 is bin 1350.
        assert_eq!(fit.n_bins, 451);
    }

    #[test]
    fn out_of_band_bins_cannot_influence_the_fit() {
        let clean = grid_psd(|f| f.powi(-2));
        let mut poked = clean.clone();
        for (i, &f) in poked.freqs_hz.clone().iter().enumerate() {
            if !(30.0..=45.0).contains(&f) {
                poked.power[i] *= 1e6;
            }
        }
        let a = spectral_slope(&clean, (30.0, 45.0)).unwrap();
        let b = spectral_slope(&poked, (30.0, 45.0)).unwrap();
        assert_eq!(
            a.slope.to_bits(),
            b.slope.to_bits(),
            "slope must be bit-identical"
        );
        assert_eq!(a.intercept.to_bits(), b.intercept.to_bits());
    }

    #[test]
    fn slope_is_log_base_invariant() {
        let psd = grid_psd(|f| 0.3 * f.powf(-2.7) * (1.0 + 0.05 * (f * 3.0).sin()));
        let fit = spectral_slope(&psd, (30.0, 45.0)).unwrap();
        // Re-fit in natural log on both axes; the line's slope is the same.
        let us: Vec<f64> = psd
            .freqs_hz
            .iter()
            .zip(&psd.power)
            .filter(|(&f, _)| (30.0..=45.0 + 1e-9).contains(&f))
            .map(|(&f, _)| f.ln())
            .collect();
        let ys: Vec<f64> = psd
            .freqs_hz
            .iter()
            .zip(&psd.power)
            .filter(|(&f, _)| (30.0..=45.0 + 1e-9).contains(&f))
            .map(|(_, &p)| p.ln())
            .collect();
        let n = us.len() as f64;
        let um = us.iter().sum::<f64>() / n;
        let ym = ys.iter().sum::<f64>() / n;
        let num: f64 = us.iter().zip(&ys).map(|(u, y)| (u - um) * (y - ym)).sum();
        let den: f64 = us.iter().map(|u| (u - um) * (u - um)).sum();
        let ln_slope = num / den;
        assert!(
            (fit.slope - ln_slope).abs() < 1e-9,
            "log10 fit {} vs ln fit {ln_slope}",
            fit.slope
        );
    }

    #[test]
    fn residuals_are_orthogonal_to_the_regressor() {
        let psd = grid_psd(|f| f.powf(-2.2) * (1.0 + 0.2 * (f * 0.9).cos()));
        let fit = spectral_slope(&psd, (30.0, 45.0)).unwrap();
        let mut dot = 0.0;
        for (&f, &p) in psd.freqs_hz.iter().zip(&psd.power) {
            if (30.0..=45.0 + 1e-9).contains(&f) {
                let u = f.log10();
                let r = p.log10() - (fit.slope * u + fit.intercept);
                dot += r * u;
            }
        }
        assert!(dot.abs() < 1e-9, "residual-regressor inner product {dot}");
    }

    #[test]
    fn nonpositive_power_in_band_is_degenerate() {
        let mut psd = grid_psd(|f| f.powi(-2));
        let bad = psd.freqs_hz.iter().position(|&f| f >= 37.0).unwrap();
        psd.power[bad] = 0.0;
        assert!(matches!(
            spectral_slope(&psd, (30.0, 45.0)),
            Err(Error::DegenerateSpectrum(_))
        ));
        psd.power[bad] = -1e-12;
        assert!(matches!(
            spectral_slope(&psd, (30.0, 45.0)),
            Err(Error::DegenerateSpectrum(_))
        ));
    }

    #[test]
    fn narrow_band_is_rejected() {
        let psd = grid_psd(|f| f.powi(-2));
        // 1/30 Hz grid: (37.0, 37.05) holds at most 2 bins.
        assert!(matches!(
            spectral_slope(&psd, (37.0, 37.05)),
            Err(Error::InsufficientBand(_))
        ));
        // A band entirely outside the grid has zero bins.
        assert!(matches!(
            spectral_slope(&psd, (60.0, 80.0)),
            Err(Error::InsufficientBand(_))
        ));
    }

    #[test]
    fn invalid_band_is_rejected() {
        let psd = grid_psd(|f| f.powi(-2));
        assert!(spectral_slope(&psd, (45.0, 30.0)).is_err());
        assert!(spectral_slope(&psd, (0.0, 45.0)).is_err());
        assert!(spectral_slope(&psd, (f64::NAN, 45.0)).is_err());
    }
}
