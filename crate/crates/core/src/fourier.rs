//! Unitary basis change between the site (position) basis and the
//! quasi-momentum basis of the ring.
//!
//! Convention, shared by every module:
//!
//! ```text
//! forward  (position -> momentum):  psi_k = N^{-1/2} sum_b psi_b exp(+i k b)
//! inverse  (momentum -> position):  psi_b = N^{-1/2} sum_k psi_k exp(-i k b)
//! ```
//!
//! Momentum vectors are stored in FFT order: slot `j` holds `k_j = 2 pi j / N`
//! folded into the first Brillouin zone (see [`crate::model::MomentumGrid`]).
//! Because `exp(i k_j b)` only depends on `j b mod N`, the forward transform is
//! rustfft's *inverse* (positive-exponent) transform and vice versa.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Scalar;

#[derive(Clone)]
pub struct Fourier<T: Scalar> {
    n: usize,
    scale: T,
    pos_exp: Arc<dyn Fft<T>>,
    neg_exp: Arc<dyn Fft<T>>,
}

impl<T: Scalar> fmt::Debug for Fourier<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fourier").field("n", &self.n).finish()
    }
}

impl<T: Scalar> Fourier<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            scale: T::one() / T::of_usize(n).sqrt(),
            pos_exp: planner.plan_fft_inverse(n),
            neg_exp: planner.plan_fft_forward(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Position amplitudes to momentum amplitudes, in place.
    pub fn to_momentum(&self, buf: &mut [Complex<T>]) {
        debug_assert_eq!(buf.len(), self.n);
        self.pos_exp.process(buf);
        self.rescale(buf);
    }

    /// Momentum amplitudes to position amplitudes, in place.
    pub fn to_position(&self, buf: &mut [Complex<T>]) {
        debug_assert_eq!(buf.len(), self.n);
        self.neg_exp.process(buf);
        self.rescale(buf);
    }

    /// Unnormalized `sum_j x_j exp(-2 pi i j m / N)`.
    pub fn dft_raw(&self, buf: &mut [Complex<T>]) {
        self.neg_exp.process(buf);
    }

    /// Unnormalized `sum_m x_m exp(+2 pi i j m / N)`.
    pub fn idft_raw(&self, buf: &mut [Complex<T>]) {
        self.pos_exp.process(buf);
    }

    /// Circular convolution `(g * x)[k] = sum_j g[j] x[k - j]`, given the raw
    /// DFT of `g`. Overwrites `x`.
    pub fn convolve_with_spectrum(&self, spectrum: &[Complex<T>], x: &mut [Complex<T>]) {
        self.dft_raw(x);
        for (xi, si) in x.iter_mut().zip(spectrum) {
            *xi *= *si;
        }
        self.idft_raw(x);
        let inv_n = T::one() / T::of_usize(self.n);
        for xi in x.iter_mut() {
            *xi = xi.scale(inv_n);
        }
    }

    fn rescale(&self, buf: &mut [Complex<T>]) {
        for x in buf.iter_mut() {
            *x = x.scale(self.scale);
        }
    }
}
