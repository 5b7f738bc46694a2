//! Shared oracles for the integration suite.
//!
//! Everything here is deliberately independent of the library's internals:
//! the taper oracle solves the dense concentration kernel with nalgebra, the
//! spectrum oracle is a direct O(N^2) DFT, and the RNG is a self-contained
//! splitmix64. Agreement between these and the production paths is the point
//! of the tests that use them.

#![allow(dead_code)] // each test target compiles this module separately

use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Solves the dense N x N concentration kernel
/// `B[i][j] = sin(2 pi w (i-j)) / (pi (i-j))`, `B[i][i] = 2w`,
/// returning the `k` leading eigenvectors (unit norm, arbitrary sign)
/// and their eigenvalues in descending order.
pub fn sinc_kernel_tapers(n: usize, w: f64, k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let kernel = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * w
        } else {
            let d = i as f64 - j as f64;
            (2.0 * PI * w * d).sin() / (PI * d)
        }
    });
    let eig = kernel.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vectors = order
        .iter()
        .take(k)
        .map(|&i| eig.eigenvectors.column(i).iter().cloned().collect())
        .collect();
    let values = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
    (vectors, values)
}

/// Flips `v` so it points the same way as `reference`.
pub fn aligned_to(reference: &[f64], v: &[f64]) -> Vec<f64> {
    let dot: f64 = reference.iter().zip(v).map(|(a, b)| a * b).sum();
    if dot < 0.0 {
        v.iter().map(|x| -x).collect()
    } else {
        v.to_vec()
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Direct-DFT mirror of the production estimate: demean, taper, transform,
/// scale by the sampling interval, fold to one side, average over tapers.
/// Returns (freqs_hz, power) on the full one-sided grid.
pub fn naive_multitaper_psd(samples: &[f64], tapers: &[Vec<f64>], fs: f64) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = samples.iter().map(|v| v - mean).collect();
    let n_bins = n / 2 + 1;
    let dt = 1.0 / fs;
    let mut avg = vec![0.0; n_bins];
    for taper in tapers {
        assert_eq!(taper.len(), n);
        let y: Vec<f64> = taper.iter().zip(&x).map(|(g, v)| g * v).collect();
        for (j, a) in avg.iter_mut().enumerate() {
            let w = 2.0 * PI * j as f64 / n as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in y.iter().enumerate() {
                let phase = w * i as f64;
                re += v * phase.cos();
                im -= v * phase.sin();
            }
            let mut p = (re * re + im * im) * dt;
            let at_nyquist = n % 2 == 0 && j == n / 2;
            if j != 0 && !at_nyquist {
                p *= 2.0;
            }
            *a += p;
        }
    }
    for a in avg.iter_mut() {
        *a /= tapers.len() as f64;
    }
    let freqs = (0..n_bins).map(|j| j as f64 * fs / n as f64).collect();
    (freqs, avg)
}

/// Deterministic splitmix64; independent of the library's generator.
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in (0, 1].
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64
    }

    /// Standard normal via Box-Muller.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

pub fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance_of(xs: &[f64]) -> f64 {
    let m = mean_of(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}
