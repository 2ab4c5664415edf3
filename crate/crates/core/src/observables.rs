//! Diagnostics of the measured ring: probability current, inverse
//! participation ratio, wave-packet peak tracking, power spectra, histograms
//! and the steady-state two-time correlator of `D_a`.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::liouville::UniformLiouvillian;
use crate::model::{AmplitudeTable, ModelConfig, MomentumGrid};
use crate::ode::Rk4;
use crate::scalar::Scalar;
use crate::state::{Basis, PureState};

/// Net current `J = sum_a Im(conj(psi_a) psi_{a+1})` with periodic wrap.
pub fn current_expectation<T: Scalar>(psi: &PureState<T>, fourier: &Fourier<T>) -> T {
    match psi.basis {
        Basis::Position => current_from_position(&psi.amps),
        Basis::Momentum => current_from_position(&psi.to_basis(fourier, Basis::Position).amps),
    }
}

pub fn current_from_position<T: Scalar>(amps: &[Complex<T>]) -> T {
    let n = amps.len();
    (0..n).fold(T::zero(), |acc, a| {
        acc + (amps[a].conj() * amps[(a + 1) % n]).im
    })
}

/// The same current evaluated from momentum occupations.
///
/// A momentum slot `k` has position amplitudes `exp(-i k b) / sqrt(N)`, which
/// carry current `-sin k`.
pub fn current_from_momentum<T: Scalar>(probs: &[T], grid: &MomentumGrid) -> T {
    probs
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (j, &p)| acc - p * grid.k::<T>(j).sin())
}

/// `1 / sum_b |psi_b|^4` in the position basis.
pub fn ipr<T: Scalar>(psi: &PureState<T>, fourier: &Fourier<T>) -> T {
    let probs = match psi.basis {
        Basis::Position => psi.probabilities(),
        Basis::Momentum => psi.to_basis(fourier, Basis::Position).probabilities(),
    };
    ipr_from_probabilities(&probs)
}

pub fn ipr_from_probabilities<T: Scalar>(probs: &[T]) -> T {
    T::one() / probs.iter().fold(T::zero(), |acc, &p| acc + p * p)
}

/// Site of maximal density; ties go to the smallest index.
pub fn peak_site<T: Scalar>(probs: &[T]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Angle `2 pi j / N` of the ring site `j`.
pub fn site_angle<T: Scalar>(site: usize, n: usize) -> T {
    T::lit(2.0) * T::PI() * T::of_usize(site) / T::of_usize(n)
}

/// `y_j = sin(phi_j)` from a series of peak angles.
pub fn peak_angle_series<T: Scalar>(angles: &[T]) -> Vec<T> {
    angles.iter().map(|phi| phi.sin()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PsdOptions {
    pub remove_mean: bool,
    /// Average periodograms over this many half-overlapping segments.
    pub welch_segments: Option<usize>,
    /// Zero-pad each segment to `zero_pad` times its length (1 = none).
    pub zero_pad: usize,
}

impl Default for PsdOptions {
    fn default() -> Self {
        Self {
            remove_mean: true,
            welch_segments: None,
            zero_pad: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSeries<T> {
    /// Full DFT grid `2 pi m / (L dt)`, `m = 0..L`.
    pub omega: Vec<T>,
    pub power: Vec<T>,
    pub dt: T,
    /// Samples per segment before padding.
    pub segment_len: usize,
    pub segments: usize,
}

impl<T: Scalar> SpectrumSeries<T> {
    /// Number of non-negative frequencies `0..=L/2`.
    pub fn one_sided_len(&self) -> usize {
        self.omega.len() / 2 + 1
    }

    /// Frequency of the largest bin among `0 < omega <= Nyquist`.
    pub fn peak_omega(&self) -> T {
        let hi = self.one_sided_len();
        let mut best = 1.min(hi - 1);
        for m in 1..hi {
            if self.power[m] > self.power[best] {
                best = m;
            }
        }
        self.omega[best]
    }
}

/// `S(omega) = (dt^2 / T_total) |sum_j y_j exp(-i omega j dt)|^2` on the DFT grid.
pub fn power_spectral_density<T: Scalar>(
    y: &[T],
    dt: T,
    opts: &PsdOptions,
) -> Result<SpectrumSeries<T>> {
    if y.len() < 8 {
        return Err(Error::InvalidArgument(format!(
            "power spectrum needs at least 8 samples, got {}",
            y.len()
        )));
    }
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(
            "sample spacing must be positive".into(),
        ));
    }
    let segments = opts.welch_segments.unwrap_or(1).max(1);
    let seg_len = if segments == 1 {
        y.len()
    } else {
        2 * y.len() / (segments + 1)
    };
    if seg_len < 8 {
        return Err(Error::InvalidArgument(format!(
            "{segments} segments leave only {seg_len} samples each"
        )));
    }
    let step = if segments == 1 { 0 } else { seg_len / 2 };
    let padded = seg_len * opts.zero_pad.max(1);
    let fourier = Fourier::<T>::new(padded);
    let scale = dt * dt / (dt * T::of_usize(seg_len));
    let mut power = vec![T::zero(); padded];
    for s in 0..segments {
        let seg = &y[s * step..s * step + seg_len];
        let mean = if opts.remove_mean {
            seg.iter().fold(T::zero(), |a, &v| a + v) / T::of_usize(seg_len)
        } else {
            T::zero()
        };
        let mut buf = vec![Complex::new(T::zero(), T::zero()); padded];
        for (b, &v) in buf.iter_mut().zip(seg) {
            *b = Complex::new(v - mean, T::zero());
        }
        fourier.dft_raw(&mut buf);
        for (p, z) in power.iter_mut().zip(&buf) {
            *p += z.norm_sqr() * scale;
        }
    }
    let inv_seg = T::one() / T::of_usize(segments);
    for p in &mut power {
        *p *= inv_seg;
    }
    let d_omega = T::lit(2.0) * T::PI() / (T::of_usize(padded) * dt);
    Ok(SpectrumSeries {
        omega: (0..padded).map(|m| d_omega * T::of_usize(m)).collect(),
        power,
        dt,
        segment_len: seg_len,
        segments,
    })
}

/// Period of the strongest non-zero frequency, estimated from a periodogram
/// zero-padded `pad` times.
pub fn dominant_period<T: Scalar>(y: &[T], dt: T, pad: usize) -> Result<T> {
    let spec = power_spectral_density(
        y,
        dt,
        &PsdOptions {
            remove_mean: true,
            welch_segments: None,
            zero_pad: pad,
        },
    )?;
    Ok(T::lit(2.0) * T::PI() / spec.peak_omega())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BimodalityReport<T> {
    /// Most populated bin with a negative centre.
    pub left_mode: Option<usize>,
    pub right_mode: Option<usize>,
    /// Bin whose centre is closest to zero.
    pub central_bin: usize,
    /// `count[central] / mean(count[left], count[right])`.
    pub dip_ratio: T,
    /// Means of the negative and positive values.
    pub mean_left: Option<T>,
    pub mean_right: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T> {
    pub lo: T,
    pub width: T,
    pub counts: Vec<usize>,
    pub report: BimodalityReport<T>,
}

impl<T: Scalar> Histogram<T> {
    pub fn center(&self, bin: usize) -> T {
        self.lo + self.width * (T::of_usize(bin) + T::lit(0.5))
    }

    pub fn centers(&self) -> Vec<T> {
        (0..self.counts.len()).map(|b| self.center(b)).collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Equal-width histogram over the data range, with a two-mode report about zero.
pub fn histogram<T: Scalar>(values: &[T], bins: usize) -> Result<Histogram<T>> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(
            "histogram needs at least 2 values".into(),
        ));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument(
            "histogram needs at least one bin".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "histogram input is not finite".into(),
        ));
    }
    let lo = values.iter().copied().fold(T::infinity(), T::min);
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
    let (lo, width) = if hi > lo {
        (lo, (hi - lo) / T::of_usize(bins))
    } else {
        // Degenerate range: one unit-width bin per slot around the value.
        (lo - T::lit(0.5), T::one())
    };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = ((v - lo) / width)
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(bins - 1);
        counts[idx] += 1;
    }

    let center = |b: usize| lo + width * (T::of_usize(b) + T::lit(0.5));
    let mode_where = |pred: &dyn Fn(T) -> bool| {
        (0..bins)
            .filter(|&b| pred(center(b)))
            .fold(None, |best: Option<usize>, b| match best {
                Some(x) if counts[x] >= counts[b] => Some(x),
                _ => Some(b),
            })
    };
    let left_mode = mode_where(&|c| c < T::zero());
    let right_mode = mode_where(&|c| c > T::zero());
    let central_bin = (0..bins)
        .min_by(|&a, &b| {
            center(a)
                .abs()
                .partial_cmp(&center(b).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let mode_counts: Vec<usize> = [left_mode, right_mode]
        .iter()
        .flatten()
        .map(|&b| counts[b])
        .collect();
    let dip_ratio = if mode_counts.is_empty() {
        T::infinity()
    } else {
        let mean = T::of_usize(mode_counts.iter().sum::<usize>()) / T::of_usize(mode_counts.len());
        T::of_usize(counts[central_bin]) / mean
    };
    let mean_of = |pred: &dyn Fn(T) -> bool| {
        let sel: Vec<T> = values.iter().copied().filter(|&v| pred(v)).collect();
        (!sel.is_empty())
            .then(|| sel.iter().fold(T::zero(), |a, &v| a + v) / T::of_usize(sel.len()))
    };

    Ok(Histogram {
        lo,
        width,
        counts,
        report: BimodalityReport {
            left_mode,
            right_mode,
            central_bin,
            dip_ratio,
            mean_left: mean_of(&|v| v < T::zero()),
            mean_right: mean_of(&|v| v > T::zero()),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelatorOptions<T> {
    pub tau_max: T,
    pub tau_step: T,
    /// RK4 step bound; the step used divides `tau_step`.
    pub dt: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries<T> {
    pub tau: Vec<T>,
    /// `<D_a(tau) D_a>_ss`.
    pub raw: Vec<Complex<T>>,
    /// Real part of the normalized connected correlator.
    pub normalized: Vec<T>,
    /// Imaginary part of the normalized correlator.
    pub normalized_imag: Vec<T>,
    /// Largest `|Im C_norm|`, kept as a diagnostic.
    pub max_imag: T,
    pub site: usize,
    pub gamma: T,
    pub sigma: T,
    pub n_sites: usize,
    /// `N / (2 t_hop)`.
    pub period: T,
}

/// Steady-state autocorrelation of `D_a` by quantum regression.
///
/// `X(0) = D_a / N` is propagated under the uniform-rate generator one
/// diagonal offset at a time and traced against `D_a`. Offsets whose weight
/// `eta(d)^2` is below `eps / 100` are skipped: the offset propagator is a
/// contraction, so their contribution is bounded by that weight over `N`.
pub fn correlator_ss<T: Scalar>(
    config: &ModelConfig<T>,
    table: &AmplitudeTable<T>,
    site: usize,
    opts: &CorrelatorOptions<T>,
) -> Result<CorrelationSeries<T>> {
    let n = config.n_sites;
    if site >= n {
        return Err(Error::InvalidArgument(format!(
            "site {} outside the ring",
            site + 1
        )));
    }
    let gamma = config.rates.uniform().ok_or_else(|| {
        Error::InvalidArgument("steady-state correlator requires uniform rates".into())
    })?;
    if !(opts.tau_step > T::zero()) || !(opts.dt > T::zero()) || !(opts.tau_max >= T::zero()) {
        return Err(Error::InvalidArgument("tau grid must be positive".into()));
    }
    let gen = UniformLiouvillian::new(config, table)?;
    let fourier = Fourier::new(n);
    let d_mom = table.measurement_matrix_momentum(&fourier, site);
    let nf = T::of_usize(n);
    let x0: Vec<Complex<T>> = d_mom.iter().map(|z| z.unscale(nf)).collect();

    let n_tau = (opts.tau_max / opts.tau_step + T::lit(1e-9))
        .floor()
        .to_usize()
        .unwrap_or(0);
    let substeps = (opts.tau_step / opts.dt)
        .ceil()
        .to_usize()
        .unwrap_or(1)
        .max(1);
    let h = opts.tau_step / T::of_usize(substeps);
    let skip_below = T::epsilon() * T::lit(1e-2);
    let zero = Complex::new(T::zero(), T::zero());

    let offsets: Vec<usize> = (0..n).filter(|&d| table.eta2[d] >= skip_below).collect();
    let per_offset: Vec<Vec<Complex<T>>> = offsets
        .par_iter()
        .map(|&d| {
            let mut x = vec![zero; n];
            let mut dcol = vec![zero; n];
            gen.gather_offset(&x0, d, &mut x);
            // Partner entries D[k-d][k] of the trace.
            for (k, v) in dcol.iter_mut().enumerate() {
                *v = d_mom[((k + n - d) % n) * n + k];
            }
            let trace =
                |x: &[Complex<T>]| x.iter().zip(&dcol).fold(zero, |acc, (a, b)| acc + a * b);
            let mut rk = Rk4::new(n);
            let mut series = Vec::with_capacity(n_tau + 1);
            series.push(trace(&x));
            for _ in 0..n_tau {
                for _ in 0..substeps {
                    rk.step(|y, out| gen.apply_offset(d, y, out), &mut x, h);
                }
                series.push(trace(&x));
            }
            series
        })
        .collect();

    let mut raw = vec![zero; n_tau + 1];
    for series in &per_offset {
        for (r, v) in raw.iter_mut().zip(series) {
            *r += *v;
        }
    }
    let tr_d = table.row(site).iter().fold(T::zero(), |a, &x| a + x);
    let mean_sq = (tr_d / nf).powi(2);
    let denom = raw[0] - Complex::new(mean_sq, T::zero());
    if denom.norm() <= T::lit(1e3) * T::epsilon() * raw[0].norm() {
        return Err(Error::InvalidModel(
            "D_a has vanishing steady-state variance; correlator normalization undefined".into(),
        ));
    }
    let normed: Vec<Complex<T>> = raw
        .iter()
        .map(|&c| (c - Complex::new(mean_sq, T::zero())) / denom)
        .collect();
    let max_imag = normed.iter().fold(T::zero(), |m, z| m.max(z.im.abs()));
    let max_abs = normed.iter().fold(T::zero(), |m, z| m.max(z.norm()));
    if max_imag > T::lit(1e-6) * max_abs {
        log::warn!("correlator has imaginary part {max_imag} (max |C| = {max_abs})");
    }

    Ok(CorrelationSeries {
        tau: (0..=n_tau)
            .map(|i| opts.tau_step * T::of_usize(i))
            .collect(),
        raw,
        normalized: normed.iter().map(|z| z.re).collect(),
        normalized_imag: normed.iter().map(|z| z.im).collect(),
        max_imag,
        site,
        gamma,
        sigma: config.sigma,
        n_sites: n,
        period: config.reference_period(),
    })
}
