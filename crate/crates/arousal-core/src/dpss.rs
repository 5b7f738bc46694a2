//! Discrete prolate spheroidal (Slepian) tapers.
//!
//! The tapers of length `N` with half-bandwidth `w` cycles per sample are the
//! eigenvectors of a dense symmetric kernel, but that kernel commutes with a
//! symmetric tridiagonal matrix whose eigenvectors are the same sequences in
//! the same order. Working on the tridiagonal form turns an O(N^3) dense
//! eigensolve into bisection plus inverse iteration at O(K N) per taper,
//! which is what makes 6000-sample epochs cheap to set up.
//!
//! The commuting matrix has
//!
//! ```text
//! diag[n] = ((N - 1 - 2n) / 2)^2 * cos(2 pi w),   n = 0..N-1
//! off[n]  = n (N - n) / 2,                        n = 1..N-1
//! ```
//!
//! Its eigenvalues are not the spectral concentrations; those are recovered
//! afterwards from each taper's autocorrelation by [`concentration_of`].

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Current on-disk cache format version.
const CACHE_VERSION: u32 = 1;

/// Magic bytes opening a taper cache file.
const CACHE_MAGIC: [u8; 4] = *b"DPSS";

/// Fraction of a taper's energy that sparsification may discard before the
/// requested epsilon is refused.
const MAX_SPARSIFY_ENERGY_LOSS: f64 = 0.01;

/// Parameters selecting a taper family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaperParams {
    /// Samples per epoch.
    pub n_samples: usize,
    /// Number of tapers to compute.
    pub n_tapers: usize,
    /// Half-bandwidth of the concentration interval, Hz.
    pub half_bandwidth_hz: f64,
    /// Sample rate the epoch is expressed at, Hz.
    pub sample_rate_hz: f64,
}

impl TaperParams {
    /// Half-bandwidth in cycles per sample.
    pub fn w(&self) -> f64 {
        self.half_bandwidth_hz / self.sample_rate_hz
    }

    /// The time-bandwidth product `N * w`.
    pub fn time_bandwidth(&self) -> f64 {
        self.n_samples as f64 * self.w()
    }

    /// Largest taper count whose members all stay well concentrated,
    /// `floor(2 N w) - 1`.
    pub fn max_well_concentrated(&self) -> usize {
        let two_nw = (2.0 * self.time_bandwidth()).floor() as i64;
        (two_nw - 1).max(0) as usize
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 samples per epoch, got {}",
                self.n_samples
            )));
        }
        if self.n_tapers == 0 {
            return Err(Error::InvalidSpec("taper count must be positive".into()));
        }
        if self.n_tapers > self.n_samples {
            return Err(Error::InvalidSpec(format!(
                "{} tapers cannot be orthonormal in {} dimensions",
                self.n_tapers, self.n_samples
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if !(self.half_bandwidth_hz.is_finite() && self.half_bandwidth_hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "half-bandwidth must be positive, got {}",
                self.half_bandwidth_hz
            )));
        }
        if self.half_bandwidth_hz >= self.sample_rate_hz / 2.0 {
            return Err(Error::InvalidSpec(format!(
                "half-bandwidth {} Hz reaches the Nyquist rate {} Hz",
                self.half_bandwidth_hz,
                self.sample_rate_hz / 2.0
            )));
        }
        Ok(())
    }
}

/// Taper count for an epoch of `duration_s` seconds smoothed over
/// `half_bandwidth_hz`: `round(2 T W - 1)`.
pub fn recommended_n_tapers(duration_s: f64, half_bandwidth_hz: f64) -> usize {
    ((2.0 * duration_s * half_bandwidth_hz - 1.0).round()).max(1.0) as usize
}

/// An orthonormal family of tapers with their spectral concentrations.
#[derive(Debug, Clone, PartialEq)]
pub struct TaperSet {
    pub params: TaperParams,
    /// `n_tapers` vectors of `n_samples` each, unit Euclidean norm, ordered
    /// by decreasing concentration. Dense when computed; sparse after
    /// [`sparsify_tapers`].
    pub tapers: Vec<TaperVector>,
    /// In-band energy fraction of each taper, in (0, 1), strictly decreasing.
    pub eigenvalues: Vec<f64>,
}

impl TaperSet {
    /// Bytes the taper payload occupies in its current representation.
    pub fn storage_bytes(&self) -> usize {
        self.tapers.iter().map(TaperVector::storage_bytes).sum()
    }
}

/// A taper stored either densely or in index/value form.
#[derive(Debug, Clone, PartialEq)]
pub enum TaperVector {
    Dense(Vec<f64>),
    Sparse(SparseVector),
}

impl TaperVector {
    pub fn len(&self) -> usize {
        match self {
            TaperVector::Dense(v) => v.len(),
            TaperVector::Sparse(s) => s.length,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_dense_vec(&self) -> Vec<f64> {
        match self {
            TaperVector::Dense(v) => v.clone(),
            TaperVector::Sparse(s) => s.to_dense(),
        }
    }

    /// Writes `x[n] * g[n]` into `out`, leaving structural-zero positions
    /// untouched. `out` must already be zeroed and at least as long as `x`.
    pub fn apply_to(&self, x: &[f64], out: &mut [f64]) {
        match self {
            TaperVector::Dense(g) => {
                for ((o, &xv), &gv) in out.iter_mut().zip(x).zip(g) {
                    *o = xv * gv;
                }
            }
            TaperVector::Sparse(s) => {
                for (&i, &gv) in s.indices.iter().zip(&s.values) {
                    out[i as usize] = x[i as usize] * gv;
                }
            }
        }
    }

    /// Inner product, exploiting sparsity where available.
    pub fn dot(&self, other: &TaperVector) -> f64 {
        match (self, other) {
            (TaperVector::Dense(a), TaperVector::Dense(b)) => {
                a.iter().zip(b).map(|(x, y)| x * y).sum()
            }
            (TaperVector::Dense(a), TaperVector::Sparse(s))
            | (TaperVector::Sparse(s), TaperVector::Dense(a)) => s.dot_dense(a),
            (TaperVector::Sparse(a), TaperVector::Sparse(b)) => a.dot_sparse(b),
        }
    }

    /// Payload bytes: 8 per dense element, 12 per retained sparse element
    /// (value plus 32-bit index).
    pub fn storage_bytes(&self) -> usize {
        match self {
            TaperVector::Dense(v) => 8 * v.len(),
            TaperVector::Sparse(s) => 12 * s.nnz(),
        }
    }
}

/// A vector with entries below a magnitude threshold stored implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    /// Positions of retained entries, strictly increasing.
    pub indices: Vec<u32>,
    /// Retained values, parallel to `indices`, all nonzero.
    pub values: Vec<f64>,
    /// Logical length of the vector.
    pub length: usize,
    /// Magnitude threshold the vector was truncated at.
    pub truncation_epsilon: f64,
}

impl SparseVector {
    /// Truncates `x`, keeping nonzero entries with `|x[i]| >= epsilon`. The
    /// retained values are stored as-is; nothing is rescaled to compensate.
    pub fn from_dense(x: &[f64], epsilon: f64) -> SparseVector {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 && v.abs() >= epsilon {
                indices.push(i as u32);
                values.push(v);
            }
        }
        SparseVector {
            indices,
            values,
            length: x.len(),
            truncation_epsilon: epsilon,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Fraction of positions holding explicit values.
    pub fn density(&self) -> f64 {
        if self.length == 0 {
            0.0
        } else {
            self.nnz() as f64 / self.length as f64
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.length];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] = v;
        }
        out
    }

    pub fn dot_dense(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * x[i as usize])
            .sum()
    }

    fn dot_sparse(&self, other: &SparseVector) -> f64 {
        let mut acc = 0.0;
        let (mut a, mut b) = (0, 0);
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }
}

/// What sparsification kept and how far the family drifted from orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsifyReport {
    pub epsilon: f64,
    /// Retained entries per taper.
    pub nnz: Vec<usize>,
    /// Largest `|<g_i, g_j> - delta_ij|` over all taper pairs after truncation.
    pub worst_gram_deviation: f64,
}

/// Replaces sub-`epsilon` taper entries with structural zeros.
///
/// Refuses (without partial output) if any taper would lose more than 1% of
/// its energy, since the retained values are deliberately not renormalized.
/// The eigenvalues still describe the dense originals.
pub fn sparsify_tapers(set: &TaperSet, epsilon: f64) -> Result<(TaperSet, SparsifyReport)> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "sparsification threshold must be finite and non-negative, got {epsilon}"
        )));
    }
    let mut sparse = Vec::with_capacity(set.tapers.len());
    for (k, taper) in set.tapers.iter().enumerate() {
        let dense = taper.to_dense_vec();
        let s = SparseVector::from_dense(&dense, epsilon);
        let total: f64 = dense.iter().map(|v| v * v).sum();
        if total == 0.0 {
            return Err(Error::ZeroEnergy(format!("taper {k} has no energy")));
        }
        let kept: f64 = s.values.iter().map(|v| v * v).sum();
        let loss = (total - kept) / total;
        if loss > MAX_SPARSIFY_ENERGY_LOSS {
            return Err(Error::SparsityLoss {
                taper: k,
                loss_percent: loss * 100.0,
                epsilon,
            });
        }
        sparse.push(s);
    }
    let mut worst: f64 = 0.0;
    for i in 0..sparse.len() {
        for j in i..sparse.len() {
            let target = if i == j { 1.0 } else { 0.0 };
            let dev = (sparse[i].dot_sparse(&sparse[j]) - target).abs();
            worst = worst.max(dev);
        }
    }
    let report = SparsifyReport {
        epsilon,
        nnz: sparse.iter().map(SparseVector::nnz).collect(),
        worst_gram_deviation: worst,
    };
    let out = TaperSet {
        params: set.params,
        tapers: sparse.into_iter().map(TaperVector::Sparse).collect(),
        eigenvalues: set.eigenvalues.clone(),
    };
    Ok((out, report))
}

/// Computes the `n_tapers` most concentrated tapers for `params`.
///
/// Tapers come back dense, unit-norm, mutually orthogonal, ordered by
/// decreasing concentration, with the sign convention that even-order tapers
/// have a positive sum and odd-order tapers start positive. Asking for more
/// tapers than `max_well_concentrated()` is allowed but logged, because the
/// extra tapers leak badly and degrade averaged spectra.
pub fn compute_tapers(params: &TaperParams) -> Result<TaperSet> {
    params.validate()?;
    let n = params.n_samples;
    let k_count = params.n_tapers;
    let w = params.w();

    if k_count > params.max_well_concentrated() {
        log::warn!(
            "{} tapers requested but only {} are well concentrated for N*w = {:.3}",
            k_count,
            params.max_well_concentrated(),
            params.time_bandwidth()
        );
    }

    let cos_2pw = (2.0 * std::f64::consts::PI * w).cos();
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            let half = (n as f64 - 1.0 - 2.0 * i as f64) / 2.0;
            half * half * cos_2pw
        })
        .collect();
    let off: Vec<f64> = (1..n).map(|i| (i * (n - i)) as f64 / 2.0).collect();

    let max_off2 = off.iter().map(|e| e * e).fold(1.0f64, f64::max);
    let pivmin = f64::MIN_POSITIVE * max_off2;

    let mut tapers: Vec<Vec<f64>> = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let lambda = kth_largest_eigenvalue(&diag, &off, k, pivmin);
        let v = eigenvector_for(&diag, &off, lambda, k, &tapers, pivmin)?;
        tapers.push(v);
    }

    let eigenvalues = tapers
        .iter()
        .map(|t| concentration_of(t, params.half_bandwidth_hz, params.sample_rate_hz))
        .collect::<Result<Vec<f64>>>()?;

    Ok(TaperSet {
        params: *params,
        tapers: tapers.into_iter().map(TaperVector::Dense).collect(),
        eigenvalues,
    })
}

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly below
/// `x`, by Sturm sequence with a pivot floor.
fn count_below(diag: &[f64], off: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let e2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - e2 / q;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Bisection for the `k`-th largest eigenvalue (`k = 0` is the largest).
fn kth_largest_eigenvalue(diag: &[f64], off: &[f64], k: usize, pivmin: f64) -> f64 {
    let n = diag.len();
    // Gershgorin bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let right = if i < n - 1 { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - left - right);
        hi = hi.max(diag[i] + left + right);
    }
    let scale = lo.abs().max(hi.abs()).max(1.0);
    lo -= 2.0 * f64::EPSILON * scale;
    hi += 2.0 * f64::EPSILON * scale;

    // The target has index n-1-k in ascending order: exactly n-1-k
    // eigenvalues sit strictly below it.
    let below_target = n - 1 - k;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(diag, off, mid, pivmin) > below_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `(T - shift I) y = rhs` in place for symmetric tridiagonal `T`,
/// using LU with partial pivoting (one superdiagonal of fill-in).
fn solve_shifted(diag: &[f64], off: &[f64], shift: f64, rhs: &mut [f64], pivmin: f64) {
    let n = diag.len();
    let mut dd: Vec<f64> = diag.iter().map(|d| d - shift).collect();
    let mut du: Vec<f64> = off.to_vec();
    let dl: Vec<f64> = off.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];

    for i in 0..n - 1 {
        if dd[i].abs() >= dl[i].abs() {
            // No row swap; guard the pivot against exact singularity.
            if dd[i].abs() < pivmin {
                dd[i] = if dd[i] < 0.0 { -pivmin } else { pivmin };
            }
            let m = dl[i] / dd[i];
            dd[i + 1] -= m * du[i];
            rhs[i + 1] -= m * rhs[i];
        } else {
            // Swap rows i and i+1.
            let m = dd[i] / dl[i];
            dd[i] = dl[i];
            let t = dd[i + 1];
            dd[i + 1] = du[i] - m * t;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] *= -m;
            }
            du[i] = t;
            rhs.swap(i, i + 1);
            rhs[i + 1] -= m * rhs[i];
        }
    }
    if dd[n - 1].abs() < pivmin {
        dd[n - 1] = if dd[n - 1] < 0.0 { -pivmin } else { pivmin };
    }

    rhs[n - 1] /= dd[n - 1];
    if n >= 2 {
        rhs[n - 2] = (rhs[n - 2] - du[n - 2] * rhs[n - 1]) / dd[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        rhs[i] = (rhs[i] - du[i] * rhs[i + 1] - du2[i] * rhs[i + 2]) / dd[i];
    }
}

/// Deterministic start vector so runs are reproducible bit for bit.
fn seeded_start(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let mut next = move || {
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    };
    (0..n)
        .map(|_| (next() >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        .collect()
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::Internal(format!(
            "inverse iteration produced a vector of norm {norm}"
        )));
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

/// Forces the parity the order-`k` taper is known to have: even orders are
/// symmetric about the center, odd orders antisymmetric.
fn project_parity(v: &mut [f64], k: usize) {
    let n = v.len();
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    for i in 0..n / 2 {
        let a = v[i];
        let b = v[n - 1 - i];
        let half = 0.5 * (a + sign * b);
        v[i] = half;
        v[n - 1 - i] = sign * half;
    }
    if n % 2 == 1 && k % 2 == 1 {
        v[n / 2] = 0.0;
    }
}

fn orthogonalize_against(v: &mut [f64], previous: &[Vec<f64>]) {
    for p in previous {
        let dot: f64 = v.iter().zip(p).map(|(a, b)| a * b).sum();
        for (x, y) in v.iter_mut().zip(p) {
            *x -= dot * y;
        }
    }
}

/// Inverse iteration at `lambda` for taper order `k`, with parity projection
/// and re-orthogonalization against the already-computed tapers.
fn eigenvector_for(
    diag: &[f64],
    off: &[f64],
    lambda: f64,
    k: usize,
    previous: &[Vec<f64>],
    pivmin: f64,
) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut v = seeded_start(n, k as u64);
    normalize(&mut v)?;
    for _ in 0..3 {
        solve_shifted(diag, off, lambda, &mut v, pivmin);
        normalize(&mut v)?;
    }
    project_parity(&mut v, k);
    orthogonalize_against(&mut v, previous);
    normalize(&mut v)?;

    // One more sweep tightens vectors whose start correlated poorly.
    solve_shifted(diag, off, lambda, &mut v, pivmin);
    normalize(&mut v)?;
    project_parity(&mut v, k);
    orthogonalize_against(&mut v, previous);
    normalize(&mut v)?;

    apply_sign_convention(&mut v, k);
    Ok(v)
}

fn apply_sign_convention(v: &mut [f64], k: usize) {
    let flip = if k % 2 == 0 {
        v.iter().sum::<f64>() < 0.0
    } else {
        let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let lead = v
            .iter()
            .find(|x| x.abs() > peak * 1e-7)
            .copied()
            .unwrap_or(0.0);
        lead < 0.0
    };
    if flip {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Fraction of a taper's spectral energy inside `[-W, W]` Hz at the given
/// sample rate; the concentration ratio the tapers maximize.
///
/// The band energy is a quadratic form in the taper whose kernel depends only
/// on the index difference, so it reduces to a weighted sum over the taper's
/// autocorrelation; the autocorrelation comes from one FFT round trip. The
/// input need not be unit-norm because the ratio normalizes by total energy.
pub fn concentration_of(taper: &[f64], half_bandwidth_hz: f64, sample_rate_hz: f64) -> Result<f64> {
    if taper.is_empty() {
        return Err(Error::InvalidSpec("empty taper".into()));
    }
    if let Some(i) = taper.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "taper sample {i} is {}",
            taper[i]
        )));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    let w = half_bandwidth_hz / sample_rate_hz;
    if !(w > 0.0 && w < 0.5) {
        return Err(Error::InvalidSpec(format!(
            "half-bandwidth {half_bandwidth_hz} Hz must lie in (0, {}) Hz",
            sample_rate_hz / 2.0
        )));
    }
    let r = autocorrelation(taper);
    if r[0] <= 0.0 {
        return Err(Error::ZeroEnergy(
            "taper has zero energy; the concentration ratio is undefined".into(),
        ));
    }
    let mut acc = 2.0 * w * r[0];
    for (tau, &r_tau) in r.iter().enumerate().skip(1) {
        let t = tau as f64;
        acc +=
            2.0 * r_tau * (2.0 * std::f64::consts::PI * w * t).sin() / (std::f64::consts::PI * t);
    }
    let lambda = acc / r[0];
    // Orders far above 2Nw have concentrations that underflow the quadratic
    // form's rounding noise; keep the value inside the open unit interval so
    // downstream ratios stay meaningful.
    Ok(lambda.clamp(f64::MIN_POSITIVE, 1.0f64.next_down()))
}

/// Linear autocorrelation `r[tau] = sum_n x[n] x[n+tau]` via zero-padded FFT.
fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let nfft = (2 * n).next_power_of_two();
    let mut planner = realfft::RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);

    let mut buf = vec![0.0; nfft];
    buf[..n].copy_from_slice(x);
    let mut spec = fwd.make_output_vec();
    fwd.process(&mut buf, &mut spec)
        .expect("forward FFT on correctly sized buffers");
    for c in spec.iter_mut() {
        *c = rustfft::num_complex::Complex::new(c.norm_sqr(), 0.0);
    }
    let mut out = vec![0.0; nfft];
    inv.process(&mut spec, &mut out)
        .expect("inverse FFT on correctly sized buffers");
    out.truncate(n);
    for v in out.iter_mut() {
        *v /= nfft as f64;
    }
    out
}

/// Canonical cache file name for a taper family.
pub fn cache_file_name(params: &TaperParams) -> String {
    format!(
        "dpss-n{}-fs{}-w{}-k{}.tapers",
        params.n_samples, params.sample_rate_hz, params.half_bandwidth_hz, params.n_tapers
    )
}

/// Serializes a taper set to `path`.
///
/// Layout, all little-endian: `b"DPSS"`, `u32` version, `u64` sample count,
/// `u64` taper count, `f64` half-bandwidth in Hz, `f64` sample rate in Hz,
/// the tapers row-major as `f64`, then the eigenvalues as `f64`. Sparse
/// tapers are densified for storage; the cache always holds full rows.
pub fn write_taper_cache(path: &Path, set: &TaperSet) -> Result<()> {
    let n = set.params.n_samples;
    let k = set.params.n_tapers;
    let mut bytes = Vec::with_capacity(40 + 8 * (n * k + k));
    bytes.extend_from_slice(&CACHE_MAGIC);
    bytes.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    bytes.extend_from_slice(&(k as u64).to_le_bytes());
    bytes.extend_from_slice(&set.params.half_bandwidth_hz.to_le_bytes());
    bytes.extend_from_slice(&set.params.sample_rate_hz.to_le_bytes());
    for taper in &set.tapers {
        for v in taper.to_dense_vec() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    for c in &set.eigenvalues {
        bytes.extend_from_slice(&c.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Reads a taper set previously written by [`write_taper_cache`].
pub fn read_taper_cache(path: &Path) -> Result<TaperSet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 40 {
        return Err(Error::Cache(format!(
            "file is {} bytes, shorter than the fixed header",
            bytes.len()
        )));
    }
    if bytes[..4] != CACHE_MAGIC {
        return Err(Error::Cache("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!(
            "unsupported cache version {version}, expected {CACHE_VERSION}"
        )));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let k = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let half_bandwidth_hz = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let sample_rate_hz = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
    if n == 0 || k == 0 || k > n {
        return Err(Error::Cache(format!(
            "implausible dimensions: {k} tapers of {n} samples"
        )));
    }
    let expected = 40 + 8 * (n * k + k);
    if bytes.len() != expected {
        return Err(Error::Cache(format!(
            "file is {} bytes but the header implies {expected}",
            bytes.len()
        )));
    }
    let mut cursor = 40;
    let mut read_f64 = |bytes: &[u8]| {
        let v = f64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap());
        cursor += 8;
        v
    };
    let mut tapers = Vec::with_capacity(k);
    for _ in 0..k {
        tapers.push(TaperVector::Dense(
            (0..n).map(|_| read_f64(&bytes)).collect(),
        ));
    }
    let eigenvalues: Vec<f64> = (0..k).map(|_| read_f64(&bytes)).collect();
    Ok(TaperSet {
        params: TaperParams {
            n_samples: n,
            n_tapers: k,
            half_bandwidth_hz,
            sample_rate_hz,
        },
        tapers,
        eigenvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn params(n: usize, k: usize, w_hz: f64, fs: f64) -> TaperParams {
        TaperParams {
            n_samples: n,
            n_tapers: k,
            half_bandwidth_hz: w_hz,
            sample_rate_hz: fs,
        }
    }

    fn dense(set: &TaperSet, k: usize) -> Vec<f64> {
        set.tapers[k].to_dense_vec()
    }

    /// NW = 4 family at N = 64. Eigenvalues are checked against an
    /// independent dense eigensolve in the integration suite; here we pin
    /// orthonormality and ordering invariants.
    #[test]
    fn small_family_is_orthonormal() {
        let set = compute_tapers(&params(64, 7, 4.0 / 64.0 * 200.0, 200.0)).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let dot = set.tapers[i].dot(&set.tapers[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (dot - target).abs() < 1e-10,
                    "<g{i}, g{j}> = {dot}, expected {target}"
                );
            }
        }
    }

    #[test]
    fn eigenvalues_decrease_strictly() {
        let set = compute_tapers(&params(128, 5, 2.5 / 128.0 * 200.0, 200.0)).unwrap();
        for k in 1..set.eigenvalues.len() {
            assert!(
                set.eigenvalues[k] < set.eigenvalues[k - 1],
                "lambda_{k} = {} >= lambda_{} = {}",
                set.eigenvalues[k],
                k - 1,
                set.eigenvalues[k - 1]
            );
        }
        assert!(set.eigenvalues[0] > 0.99);
        assert!(set.eigenvalues[0] < 1.0);
        assert!(*set.eigenvalues.last().unwrap() > 0.5);
    }

    #[test]
    fn tapers_have_alternating_parity() {
        let set = compute_tapers(&params(65, 4, 2.5 / 65.0 * 100.0, 100.0)).unwrap();
        for (k, taper) in set.tapers.iter().enumerate() {
            let t = taper.to_dense_vec();
            let n = t.len();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            for i in 0..n / 2 {
                let err = (t[i] - sign * t[n - 1 - i]).abs();
                assert!(err < 1e-12, "taper {k}, pair {i}: asymmetry {err}");
            }
        }
    }

    #[test]
    fn sign_convention_holds() {
        let set = compute_tapers(&params(100, 6, 3.5 / 100.0 * 200.0, 200.0)).unwrap();
        for (k, taper) in set.tapers.iter().enumerate() {
            let t = taper.to_dense_vec();
            if k % 2 == 0 {
                let sum: f64 = t.iter().sum();
                assert!(sum > 0.0, "even taper {k} has sum {sum}");
            } else {
                let peak = t.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let lead = t.iter().find(|x| x.abs() > peak * 1e-7).unwrap();
                assert!(*lead > 0.0, "odd taper {k} starts negative: {lead}");
            }
        }
    }

    #[test]
    fn order_zero_taper_is_positive_and_bell_shaped() {
        let set = compute_tapers(&params(101, 1, 2.0, 100.0)).unwrap();
        let g = dense(&set, 0);
        assert!(g.iter().all(|&v| v > 0.0), "order 0 must be sign-free");
        // Monotone up to the center, then down.
        for i in 1..=50 {
            assert!(g[i] > g[i - 1], "not increasing at {i}");
        }
        for i in 51..101 {
            assert!(g[i] < g[i - 1], "not decreasing at {i}");
        }
    }

    #[test]
    fn computation_is_deterministic() {
        let p = params(256, 7, 4.0 / 256.0 * 200.0, 200.0);
        let a = compute_tapers(&p).unwrap();
        let b = compute_tapers(&p).unwrap();
        assert_eq!(a, b, "identical params must give bit-identical tapers");
    }

    #[test]
    fn requesting_past_the_concentration_cliff_still_works() {
        // K = 6 > floor(2*2.5) - 1 = 4; the extra tapers must come back
        // orthonormal even though they leak.
        let p = params(96, 6, 2.5 / 96.0 * 200.0, 200.0);
        assert_eq!(p.max_well_concentrated(), 4);
        let set = compute_tapers(&p).unwrap();
        assert_eq!(set.tapers.len(), 6);
        for i in 0..6 {
            for j in i + 1..6 {
                let dot = set.tapers[i].dot(&set.tapers[j]);
                assert!(dot.abs() < 1e-8, "<g{i}, g{j}> = {dot}");
            }
        }
        assert!(set.eigenvalues[5] < set.eigenvalues[4]);
    }

    #[test]
    fn recommended_taper_counts_match_the_two_protocols() {
        assert_eq!(recommended_n_tapers(30.0, 0.5), 29);
        assert_eq!(recommended_n_tapers(10.0, 0.5), 9);
    }

    #[test]
    fn concentration_matches_the_rayleigh_quotient_of_its_own_taper() {
        let set = compute_tapers(&params(64, 7, 4.0 / 64.0 * 200.0, 200.0)).unwrap();
        // Scaling the taper must not change the ratio.
        let g0: Vec<f64> = dense(&set, 0).iter().map(|v| 3.25 * v).collect();
        let lam = concentration_of(&g0, 4.0 / 64.0 * 200.0, 200.0).unwrap();
        assert!(
            (lam - set.eigenvalues[0]).abs() < 1e-12,
            "scaled taper changed lambda: {lam} vs {}",
            set.eigenvalues[0]
        );
    }

    #[test]
    fn dc_vector_with_wide_band_concentrates_fully() {
        let flat = vec![1.0; 64];
        let lam = concentration_of(&flat, 90.0, 200.0).unwrap();
        assert!(lam > 0.999, "wide-band DC concentration {lam}");
    }

    #[test]
    fn nyquist_tone_with_narrow_band_concentrates_poorly() {
        let alt: Vec<f64> = (0..64)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let lam = concentration_of(&alt, 0.05 * 200.0, 200.0).unwrap();
        assert!(lam < 0.01, "Nyquist-tone concentration {lam}");
    }

    #[test]
    fn concentration_rejects_degenerate_input() {
        assert!(matches!(
            concentration_of(&[0.0; 32], 0.5, 200.0),
            Err(Error::ZeroEnergy(_))
        ));
        assert!(matches!(
            concentration_of(&[1.0, f64::NAN], 0.5, 200.0),
            Err(Error::NonFinite(_))
        ));
        assert!(concentration_of(&[1.0, 2.0], 120.0, 200.0).is_err());
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(compute_tapers(&params(0, 1, 0.5, 200.0)).is_err());
        assert!(compute_tapers(&params(64, 0, 0.5, 200.0)).is_err());
        assert!(compute_tapers(&params(64, 65, 0.5, 200.0)).is_err());
        assert!(compute_tapers(&params(64, 4, 100.0, 200.0)).is_err());
        assert!(compute_tapers(&params(64, 4, -1.0, 200.0)).is_err());
        assert!(compute_tapers(&params(64, 4, 0.5, 0.0)).is_err());
    }

    #[test]
    fn cache_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let set = compute_tapers(&params(64, 5, 4.0 / 64.0 * 200.0, 200.0)).unwrap();
        let path = dir.path().join(cache_file_name(&set.params));
        write_taper_cache(&path, &set).unwrap();
        let back = read_taper_cache(&path).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn cache_rejects_corruption() {
        let dir = tempdir().unwrap();
        let set = compute_tapers(&params(32, 3, 2.5 / 32.0 * 200.0, 200.0)).unwrap();
        let path = dir.path().join("family.tapers");
        write_taper_cache(&path, &set).unwrap();

        let good = std::fs::read(&path).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(read_taper_cache(&path), Err(Error::Cache(_))));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        std::fs::write(&path, &bad_version).unwrap();
        assert!(matches!(read_taper_cache(&path), Err(Error::Cache(_))));

        let truncated = &good[..good.len() - 8];
        std::fs::write(&path, truncated).unwrap();
        assert!(matches!(read_taper_cache(&path), Err(Error::Cache(_))));

        std::fs::write(&path, &good[..20]).unwrap();
        assert!(matches!(read_taper_cache(&path), Err(Error::Cache(_))));
    }

    #[test]
    fn sparsify_keeps_the_family_orthonormal_at_tiny_epsilon() {
        // A high time-bandwidth product, like the production sleep setup,
        // gives tails that genuinely decay below epsilon.
        let set = compute_tapers(&params(512, 7, 10.0 / 512.0 * 200.0, 200.0)).unwrap();
        let (sparse_set, report) = sparsify_tapers(&set, 1e-9).unwrap();
        assert_eq!(sparse_set.tapers.len(), 7);
        assert_eq!(sparse_set.eigenvalues, set.eigenvalues);
        assert!(sparse_set.storage_bytes() > 0);
        for (k, (s, d)) in sparse_set.tapers.iter().zip(&set.tapers).enumerate() {
            // Only the well-concentrated low orders are guaranteed to dip
            // below epsilon; the highest orders have the fattest tails.
            if k < 4 {
                assert!(report.nnz[k] < s.len(), "taper {k}: nothing was truncated");
            }
            let err: f64 = s
                .to_dense_vec()
                .iter()
                .zip(d.to_dense_vec())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            // Dropping entries below epsilon moves the vector by at most
            // epsilon * sqrt(N) ~ 2.3e-8 in l2; same order for the Gram terms.
            assert!(err < 1e-7, "taper {k}: dense reconstruction error {err}");
        }
        assert!(
            report.worst_gram_deviation < 1e-7,
            "gram deviation {}",
            report.worst_gram_deviation
        );
    }

    #[test]
    fn sparsify_at_zero_epsilon_changes_nothing() {
        let set = compute_tapers(&params(128, 4, 4.0 / 128.0 * 200.0, 200.0)).unwrap();
        let (same, report) = sparsify_tapers(&set, 0.0).unwrap();
        for (k, (s, d)) in same.tapers.iter().zip(&set.tapers).enumerate() {
            assert_eq!(s.to_dense_vec(), d.to_dense_vec(), "taper {k} changed");
        }
        assert!(report.worst_gram_deviation < 1e-10);
    }

    #[test]
    fn high_order_tapers_keep_more_nonzeros() {
        let set = compute_tapers(&params(1024, 7, 10.0 / 1024.0 * 200.0, 200.0)).unwrap();
        let (_, report) = sparsify_tapers(&set, 1e-6).unwrap();
        assert!(
            report.nnz[0] < report.nnz[6],
            "k=0 nnz {} should be below k=6 nnz {}: low orders concentrate near the center",
            report.nnz[0],
            report.nnz[6]
        );
    }

    #[test]
    fn sparsify_refuses_destructive_epsilon() {
        let set = compute_tapers(&params(256, 5, 4.0 / 256.0 * 200.0, 200.0)).unwrap();
        match sparsify_tapers(&set, 0.2) {
            Err(Error::SparsityLoss {
                taper,
                loss_percent,
                ..
            }) => {
                assert!(loss_percent > 1.0, "loss {loss_percent}%");
                let _ = taper;
            }
            other => panic!("expected SparsityLoss, got {other:?}"),
        }
    }

    #[test]
    fn sparse_vector_round_trip_and_dot() {
        let x = vec![0.0, 1e-12, 0.5, -0.25, 0.0, 1e-10, 2.0];
        let s = SparseVector::from_dense(&x, 1e-9);
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.length, 7);
        let y = vec![1.0; 7];
        let exact: f64 = 0.5 - 0.25 + 2.0;
        assert!((s.dot_dense(&y) - exact).abs() < 1e-15);
        let d = s.to_dense();
        assert_eq!(d[2], 0.5);
        assert_eq!(d[1], 0.0, "sub-threshold entry must become exactly zero");
        assert!((s.density() - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn taper_vector_applies_dense_and_sparse_identically() {
        let set = compute_tapers(&params(128, 3, 3.0 / 128.0 * 200.0, 200.0)).unwrap();
        let x: Vec<f64> = (0..128).map(|i| (i as f64 * 0.37).sin()).collect();
        let (sparse_set, _) = sparsify_tapers(&set, 1e-9).unwrap();
        for (dv, sv) in set.tapers.iter().zip(&sparse_set.tapers) {
            let mut a = vec![0.0; 128];
            let mut b = vec![0.0; 128];
            dv.apply_to(&x, &mut a);
            sv.apply_to(&x, &mut b);
            let err: f64 = a
                .iter()
                .zip(&b)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-9, "dense/sparse application differ by {err}");
        }
    }

    #[test]
    fn storage_accounting_matches_the_representation() {
        let set = compute_tapers(&params(1024, 5, 10.0 / 1024.0 * 200.0, 200.0)).unwrap();
        assert_eq!(set.storage_bytes(), 8 * 1024 * 5);
        let (sparse_set, report) = sparsify_tapers(&set, 1e-6).unwrap();
        assert!(report.nnz.iter().all(|&n| n < 1024), "nothing was dropped");
        let expected: usize = report.nnz.iter().map(|&n| 12 * n).sum();
        assert_eq!(sparse_set.storage_bytes(), expected);
    }
}
