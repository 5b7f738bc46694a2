//! IIR low-pass filtering as a cascade of second-order sections.
//!
//! The denoising front end is a Butterworth low-pass realized in second-order
//! sections (SOS). Direct high-order polynomial forms are numerically fragile:
//! at order 10 the transfer-function coefficients span many decades and the
//! rounded polynomial can place poles outside the unit circle. Factoring the
//! design into biquads keeps every stored coefficient O(1) and each section
//! independently stable.
//!
//! The design maps the analog Butterworth prototype through the bilinear
//! transform with frequency pre-warping, so the -3 dB point lands exactly on
//! the requested cutoff. Analog pole pairs at angle `theta = pi*(2k+1)/(2n)`
//! become one digital biquad each:
//!
//! ```text
//! wc = tan(pi * fc / fs)                   pre-warped cutoff
//! d  = 1 + 2*sin(theta)*wc + wc^2
//! b  = [wc^2/d, 2*wc^2/d, wc^2/d]
//! a  = [2*(wc^2 - 1)/d, (1 - 2*sin(theta)*wc + wc^2)/d]
//! ```
//!
//! Odd orders get one extra first-order tail from the real pole. Every section
//! has unit DC gain by construction, so the cascade's `overall_gain` stays 1.

use crate::error::{Error, Result};

/// Design request for the low-pass stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

/// One biquad: `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sos {
    pub b: [f64; 3],
    /// Denominator coefficients `[a1, a2]`; `a0` is normalized to 1.
    pub a: [f64; 2],
}

impl Sos {
    /// Squared magnitude response at normalized angular frequency `w` (rad/sample).
    fn mag_sq_at(&self, w: f64) -> f64 {
        let (cw, c2w) = (w.cos(), (2.0 * w).cos());
        let (sw, s2w) = (w.sin(), (2.0 * w).sin());
        let num_re = self.b[0] + self.b[1] * cw + self.b[2] * c2w;
        let num_im = self.b[1] * sw + self.b[2] * s2w;
        let den_re = 1.0 + self.a[0] * cw + self.a[1] * c2w;
        let den_im = self.a[0] * sw + self.a[1] * s2w;
        (num_re * num_re + num_im * num_im) / (den_re * den_re + den_im * den_im)
    }

    /// Both poles strictly inside the unit circle.
    fn is_stable(&self) -> bool {
        let (a1, a2) = (self.a[0], self.a[1]);
        a2.abs() < 1.0 && a1.abs() < 1.0 + a2
    }
}

/// A stable cascade of second-order sections plus a scalar gain.
#[derive(Debug, Clone, PartialEq)]
pub struct SosCascade {
    pub spec: FilterSpec,
    pub sections: Vec<Sos>,
    pub overall_gain: f64,
}

impl SosCascade {
    /// Magnitude response at `f_hz`.
    pub fn magnitude_at(&self, f_hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f_hz / self.spec.sample_rate_hz;
        let mag_sq: f64 = self.sections.iter().map(|s| s.mag_sq_at(w)).product();
        self.overall_gain.abs() * mag_sq.sqrt()
    }
}

/// Designs a Butterworth low-pass as a stable SOS cascade.
///
/// The cutoff is the exact -3 dB point of the digital response. Errors:
/// zero order, non-positive rate, or a cutoff at or above Nyquist.
pub fn design_butterworth_lowpass(
    order: usize,
    cutoff_hz: f64,
    sample_rate_hz: f64,
) -> Result<SosCascade> {
    if order == 0 {
        return Err(Error::InvalidSpec("filter order must be at least 1".into()));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    if !(cutoff_hz.is_finite() && cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
        return Err(Error::InvalidSpec(format!(
            "cutoff must lie in (0, {}) Hz, got {cutoff_hz}",
            sample_rate_hz / 2.0
        )));
    }

    let wc = (std::f64::consts::PI * cutoff_hz / sample_rate_hz).tan();
    let wc2 = wc * wc;
    let mut sections = Vec::with_capacity(order.div_ceil(2));

    for k in 0..order / 2 {
        let theta = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * order) as f64;
        let d = 1.0 + 2.0 * theta.sin() * wc + wc2;
        sections.push(Sos {
            b: [wc2 / d, 2.0 * wc2 / d, wc2 / d],
            a: [
                2.0 * (wc2 - 1.0) / d,
                (1.0 - 2.0 * theta.sin() * wc + wc2) / d,
            ],
        });
    }
    if order % 2 == 1 {
        // Real pole at s = -wc maps to a first-order tail.
        let d = 1.0 + wc;
        sections.push(Sos {
            b: [wc / d, wc / d, 0.0],
            a: [(wc - 1.0) / d, 0.0],
        });
    }

    let cascade = SosCascade {
        spec: FilterSpec {
            order,
            cutoff_hz,
            sample_rate_hz,
        },
        sections,
        overall_gain: 1.0,
    };
    if let Some(bad) = cascade.sections.iter().position(|s| !s.is_stable()) {
        return Err(Error::Internal(format!(
            "designed section {bad} is unstable: {:?}",
            cascade.sections[bad]
        )));
    }
    Ok(cascade)
}

/// Runs the cascade over `x` causally (single forward pass, zero initial state).
///
/// Uses the transposed direct-form II recurrence per section. Rejects
/// non-finite samples up front so a NaN cannot silently poison the state.
pub fn filter_signal(cascade: &SosCascade, x: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "input sample {i} is {} and would propagate through the filter state",
            x[i]
        )));
    }
    let mut y = x.to_vec();
    for s in &cascade.sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in y.iter_mut() {
            let xin = *v;
            let out = s.b[0] * xin + z1;
            z1 = s.b[1] * xin - s.a[0] * out + z2;
            z2 = s.b[2] * xin - s.a[1] * out;
            *v = out;
        }
    }
    if cascade.overall_gain != 1.0 {
        for v in y.iter_mut() {
            *v *= cascade.overall_gain;
        }
    }
    Ok(y)
}

/// Forward-backward application of the cascade: zero phase, squared magnitude.
///
/// The signal is extended at both ends by odd reflection before the two passes
/// so the filter state is warmed up when it enters the real data; the
/// extensions are discarded. Intended for offline analysis; the causal
/// [`filter_signal`] is the default pipeline path.
pub fn filter_signal_zero_phase(cascade: &SosCascade, x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let pad = (3 * (2 * cascade.sections.len() + 1)).min(x.len() - 1);
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }

    let mut fwd = filter_signal(cascade, &ext)?;
    fwd.reverse();
    let mut back = filter_signal(cascade, &fwd)?;
    back.reverse();
    Ok(back[pad..pad + n].to_vec())
}
