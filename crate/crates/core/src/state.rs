//! Single-particle pure states on the ring.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Position,
    /// FFT-ordered quasi-momentum slots.
    Momentum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState<T: Scalar> {
    pub amps: Vec<Complex<T>>,
    pub basis: Basis,
    pub time: T,
}

impl<T: Scalar> PureState<T> {
    pub fn new(amps: Vec<Complex<T>>, basis: Basis) -> Self {
        Self {
            amps,
            basis,
            time: T::zero(),
        }
    }

    /// `|k_j>` for momentum slot `j`.
    pub fn momentum_eigenstate(n: usize, slot: usize) -> Result<Self> {
        if slot >= n {
            return Err(Error::InvalidArgument(format!(
                "momentum slot {slot} out of range for N={n}"
            )));
        }
        let mut amps = vec![Complex::new(T::zero(), T::zero()); n];
        amps[slot] = Complex::new(T::one(), T::zero());
        Ok(Self::new(amps, Basis::Momentum))
    }

    /// `|b>` for 0-based site `site`.
    pub fn position_eigenstate(n: usize, site: usize) -> Result<Self> {
        if site >= n {
            return Err(Error::InvalidArgument(format!(
                "site {site} out of range for N={n}"
            )));
        }
        let mut amps = vec![Complex::new(T::zero(), T::zero()); n];
        amps[site] = Complex::new(T::one(), T::zero());
        Ok(Self::new(amps, Basis::Position))
    }

    /// Fully delocalized state `N^{-1/2} sum_b |b>`.
    pub fn uniform_position(n: usize) -> Self {
        let a = T::one() / T::of_usize(n).sqrt();
        Self::new(vec![Complex::new(a, T::zero()); n], Basis::Position)
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm_sqr(&self) -> T {
        self.amps
            .iter()
            .fold(T::zero(), |acc, a| acc + a.norm_sqr())
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    /// Rescales to unit norm. Fails on a zero vector.
    pub fn normalize(&mut self) -> Result<()> {
        let nrm = self.norm();
        if !(nrm > T::zero()) || !nrm.is_finite() {
            return Err(Error::Numerical(format!(
                "cannot normalize state with norm {nrm}"
            )));
        }
        let inv = T::one() / nrm;
        for a in &mut self.amps {
            *a = a.scale(inv);
        }
        Ok(())
    }

    pub fn to_basis(&self, fourier: &Fourier<T>, basis: Basis) -> Self {
        let mut out = self.clone();
        out.convert(fourier, basis);
        out
    }

    pub fn convert(&mut self, fourier: &Fourier<T>, basis: Basis) {
        match (self.basis, basis) {
            (Basis::Position, Basis::Momentum) => fourier.to_momentum(&mut self.amps),
            (Basis::Momentum, Basis::Position) => fourier.to_position(&mut self.amps),
            _ => {}
        }
        self.basis = basis;
    }

    /// `|amp|^2` in the current basis.
    pub fn probabilities(&self) -> Vec<T> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}
