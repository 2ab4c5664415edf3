//! Master-equation evolution of the single-particle density matrix in the
//! quasi-momentum basis.
//!
//! Two generators are provided. [`DenseLiouvillian`] assembles the full
//! `N^2 x N^2` superoperator for arbitrary per-site rates and is limited to
//! small rings. [`UniformLiouvillian`] exploits that, for a common rate, the
//! dissipator only mixes elements on the same diagonal offset
//! `d = k - k'`, where it acts as a circular convolution with `eta^2`.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::model::{AmplitudeTable, ModelConfig};
use crate::ode::Rk4;
use crate::scalar::Scalar;
use crate::state::{Basis, PureState};

/// Largest ring for which the dense superoperator is assembled.
pub const DENSE_MAX_SITES: usize = 32;

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T: Scalar> {
    n: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex::new(T::zero(), T::zero()); n * n],
        }
    }

    pub fn from_vec(n: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex<T>) {
        self.data[i * self.n + j] = v;
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.n).fold(Complex::new(T::zero(), T::zero()), |acc, i| {
            acc + self.get(i, i)
        })
    }

    /// `max |M - M^dagger|`.
    pub fn hermiticity_error(&self) -> T {
        let mut err = T::zero();
        for i in 0..self.n {
            for j in i..self.n {
                err = err.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        err
    }

    pub fn symmetrize(&mut self) {
        let half = T::lit(0.5);
        for i in 0..self.n {
            for j in i..self.n {
                let v = (self.get(i, j) + self.get(j, i).conj()).scale(half);
                self.set(i, j, v);
                self.set(j, i, v.conj());
            }
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    pub fn max_offdiag(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    m = m.max(self.get(i, j).norm());
                }
            }
        }
        m
    }

    pub fn max_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((a - b).norm()))
    }

    /// Cholesky factorization of `M + shift I`; success means `M >= -shift`.
    fn cholesky_succeeds(&self, shift: T) -> bool {
        let n = self.n;
        let mut l = vec![Complex::new(T::zero(), T::zero()); n * n];
        for j in 0..n {
            let mut d = self.get(j, j).re + shift;
            for p in 0..j {
                d -= l[j * n + p].norm_sqr();
            }
            if !(d > T::zero()) {
                return false;
            }
            let djj = d.sqrt();
            l[j * n + j] = Complex::new(djj, T::zero());
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for p in 0..j {
                    s -= l[i * n + p] * l[j * n + p].conj();
                }
                l[i * n + j] = s.unscale(djj);
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Scalar> {
    pub rho: Matrix<T>,
    pub time: T,
}

impl<T: Scalar> DensityMatrix<T> {
    /// Validates Hermiticity, unit trace and positivity to `tol`.
    pub fn new(rho: Matrix<T>, tol: T) -> Result<Self> {
        let herm = rho.hermiticity_error();
        if herm > tol {
            return Err(Error::InvalidArgument(format!(
                "density matrix is not Hermitian (deviation {herm})"
            )));
        }
        let tr = rho.trace();
        if (tr - Complex::new(T::one(), T::zero())).norm() > tol {
            return Err(Error::InvalidArgument(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        if !rho.cholesky_succeeds(tol) {
            return Err(Error::InvalidArgument(
                "density matrix is not positive semidefinite".into(),
            ));
        }
        Ok(Self {
            rho,
            time: T::zero(),
        })
    }

    /// `|psi><psi|` in the momentum basis.
    pub fn from_pure(psi: &PureState<T>, fourier: &Fourier<T>) -> Self {
        let mom = psi.to_basis(fourier, Basis::Momentum);
        let n = mom.len();
        let mut rho = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                rho.set(i, j, mom.amps[i] * mom.amps[j].conj());
            }
        }
        Self {
            rho,
            time: psi.time,
        }
    }

    pub fn from_diagonal(p: &DiagonalDistribution<T>) -> Self {
        let n = p.p.len();
        let mut rho = Matrix::zeros(n);
        for (i, &pi) in p.p.iter().enumerate() {
            rho.set(i, i, Complex::new(pi, T::zero()));
        }
        Self {
            rho,
            time: T::zero(),
        }
    }

    /// The infinite-temperature state `1/N`.
    pub fn maximally_mixed(n: usize) -> Self {
        Self::from_diagonal(&DiagonalDistribution::uniform(n))
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    /// Real parts of `rho_kk`, FFT slot order.
    pub fn diagonal(&self) -> DiagonalDistribution<T> {
        DiagonalDistribution {
            p: (0..self.dim()).map(|i| self.rho.get(i, i).re).collect(),
        }
    }
}

/// Occupations `p_k = rho_kk` in FFT slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalDistribution<T> {
    pub p: Vec<T>,
}

impl<T: Scalar> DiagonalDistribution<T> {
    pub fn new(p: Vec<T>, tol: T) -> Result<Self> {
        if let Some(x) = p.iter().find(|&&x| x < -tol || !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("negative occupation {x}")));
        }
        let total = p.iter().fold(T::zero(), |a, &x| a + x);
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "occupations sum to {total}, expected 1"
            )));
        }
        Ok(Self { p })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![T::one() / T::of_usize(n); n],
        }
    }

    pub fn point(n: usize, slot: usize) -> Self {
        let mut p = vec![T::zero(); n];
        p[slot] = T::one();
        Self { p }
    }

    pub fn purity(&self) -> T {
        self.p.iter().fold(T::zero(), |a, &x| a + x * x)
    }

    /// Copy with roundoff-negative entries clamped to zero (output only).
    pub fn clamped(&self) -> Self {
        Self {
            p: self.p.iter().map(|&x| x.max(T::zero())).collect(),
        }
    }
}

/// A linear generator `d rho / dt = L[rho]`.
pub trait Generator<T: Scalar>: Sync {
    fn apply_into(&self, x: &[Complex<T>], out: &mut [Complex<T>]);

    fn apply(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(x.dim());
        self.apply_into(&x.data, &mut out.data);
        out
    }
}

/// Explicit superoperator for arbitrary per-site rates.
///
/// Row `k N + k'`, column `alpha N + beta` holds the coefficient of
/// `rho_{alpha beta}` in `d rho_{k k'} / dt`, assembled term by term from the
/// momentum-space matrix elements of the dissipators.
#[derive(Debug, Clone)]
pub struct DenseLiouvillian<T: Scalar> {
    n: usize,
    mat: Vec<Complex<T>>,
}

impl<T: Scalar> DenseLiouvillian<T> {
    pub fn build(config: &ModelConfig<T>, table: &AmplitudeTable<T>) -> Result<Self> {
        let n = config.n_sites;
        if n > DENSE_MAX_SITES {
            return Err(Error::InvalidArgument(format!(
                "dense superoperator refused for N={n} > {DENSE_MAX_SITES}; use the uniform-rate path"
            )));
        }
        let nf = T::of_usize(n);
        let two_pi_over_n = T::lit(2.0) * T::PI() / nf;
        let zero = Complex::new(T::zero(), T::zero());

        // phase_sum[q] = N^{-1} sum_a gamma_a exp(-i a q), q = 2 pi idx / N.
        let phase_sum: Vec<Complex<T>> = (0..n)
            .map(|idx| {
                (0..n).fold(zero, |acc, a| {
                    let angle = -two_pi_over_n * T::of_usize((a * idx) % n);
                    acc + Complex::from_polar(config.rates.rate(a), angle)
                }) / nf
            })
            .collect();
        let eta = |d: isize| table.eta_at(d);
        // Auto-convolution sum_u eta(d - u) eta(u).
        let eta_conv: Vec<T> = (0..n as isize)
            .map(|d| (0..n as isize).fold(T::zero(), |acc, u| acc + eta(d - u) * eta(u)))
            .collect();
        let wrap = |x: isize| x.rem_euclid(n as isize) as usize;
        let energies = config.energies();
        let half = T::lit(0.5);

        let n2 = n * n;
        let mut mat = vec![zero; n2 * n2];
        for k in 0..n as isize {
            for kp in 0..n as isize {
                let row = &mut mat[(k as usize * n + kp as usize) * n2..][..n2];
                row[k as usize * n + kp as usize] +=
                    Complex::new(T::zero(), -(energies[k as usize] - energies[kp as usize]));
                for al in 0..n as isize {
                    for be in 0..n as isize {
                        let c = phase_sum[wrap(al - be + kp - k)].scale(eta(al - k) * eta(kp - be));
                        row[al as usize * n + be as usize] += c;
                    }
                }
                for al in 0..n as isize {
                    let d = wrap(al - k);
                    row[al as usize * n + kp as usize] -= phase_sum[d].scale(half * eta_conv[d]);
                }
                for be in 0..n as isize {
                    let d = wrap(kp - be);
                    row[k as usize * n + be as usize] -= phase_sum[d].scale(half * eta_conv[d]);
                }
            }
        }
        Ok(Self { n, mat })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Superoperator entry for `(k, k') <- (alpha, beta)`.
    pub fn element(&self, k: usize, kp: usize, alpha: usize, beta: usize) -> Complex<T> {
        let n2 = self.n * self.n;
        self.mat[(k * self.n + kp) * n2 + alpha * self.n + beta]
    }
}

impl<T: Scalar> Generator<T> for DenseLiouvillian<T> {
    fn apply_into(&self, x: &[Complex<T>], out: &mut [Complex<T>]) {
        let n2 = self.n * self.n;
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.mat[r * n2..(r + 1) * n2];
            *o = row
                .iter()
                .zip(x)
                .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| {
                    acc + a * b
                });
        }
    }
}

/// Uniform-rate generator acting diagonal offset by diagonal offset.
///
/// For offset `d`, `x_d[k] = rho_{k, k-d}` obeys
/// `dx_d/dt = (-i (eps_k - eps_{k-d}) - gamma) x_d + gamma (eta^2 * x_d)`.
#[derive(Debug, Clone)]
pub struct UniformLiouvillian<T: Scalar> {
    n: usize,
    gamma: T,
    energies: Vec<T>,
    fourier: Fourier<T>,
    kernel_spectrum: Vec<Complex<T>>,
}

const PARALLEL_OFFSETS_FROM: usize = 64;

impl<T: Scalar> UniformLiouvillian<T> {
    pub fn new(config: &ModelConfig<T>, table: &AmplitudeTable<T>) -> Result<Self> {
        let gamma = config.rates.uniform().ok_or_else(|| {
            Error::InvalidArgument("uniform-rate Liouvillian requires a common gamma".into())
        })?;
        let n = config.n_sites;
        let fourier = Fourier::new(n);
        let mut kernel_spectrum: Vec<Complex<T>> = table
            .eta2
            .iter()
            .map(|&x| Complex::new(x, T::zero()))
            .collect();
        fourier.dft_raw(&mut kernel_spectrum);
        Ok(Self {
            n,
            gamma,
            energies: config.energies(),
            fourier,
            kernel_spectrum,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Gathers offset `d` of a row-major matrix: `x[k] = M[k][k-d]`.
    pub fn gather_offset(&self, m: &[Complex<T>], d: usize, x: &mut [Complex<T>]) {
        let n = self.n;
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = m[k * n + (k + n - d) % n];
        }
    }

    pub fn scatter_offset(&self, x: &[Complex<T>], d: usize, m: &mut [Complex<T>]) {
        let n = self.n;
        for (k, xk) in x.iter().enumerate() {
            m[k * n + (k + n - d) % n] = *xk;
        }
    }

    /// Time derivative of one diagonal offset.
    pub fn apply_offset(&self, d: usize, x: &[Complex<T>], out: &mut [Complex<T>]) {
        let n = self.n;
        out.copy_from_slice(x);
        self.fourier
            .convolve_with_spectrum(&self.kernel_spectrum, out);
        let g = self.gamma;
        for k in 0..n {
            let de = self.energies[k] - self.energies[(k + n - d) % n];
            let coef = Complex::new(-g, -de);
            out[k] = coef * x[k] + out[k].scale(g);
        }
    }
}

impl<T: Scalar> Generator<T> for UniformLiouvillian<T> {
    fn apply_into(&self, x: &[Complex<T>], out: &mut [Complex<T>]) {
        let n = self.n;
        let zero = Complex::new(T::zero(), T::zero());
        let compute = |d: usize| {
            let mut xd = vec![zero; n];
            let mut od = vec![zero; n];
            self.gather_offset(x, d, &mut xd);
            self.apply_offset(d, &xd, &mut od);
            od
        };
        let per_offset: Vec<Vec<Complex<T>>> = if n >= PARALLEL_OFFSETS_FROM {
            (0..n).into_par_iter().map(compute).collect()
        } else {
            (0..n).map(compute).collect()
        };
        for (d, od) in per_offset.iter().enumerate() {
            self.scatter_offset(od, d, out);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stepping<T> {
    pub t_final: T,
    /// Upper bound on the RK4 step; the step actually used divides `sample_dt`.
    pub dt: T,
    pub sample_dt: T,
    pub method: Method,
}

/// Largest step allowed by `dt <= 0.05 min(1/gamma, 1/(2 t_hop))`.
pub fn max_stable_dt<T: Scalar>(config: &ModelConfig<T>) -> T {
    let g = config.rates.max_rate();
    let th = config.t_hop.abs();
    let inv = |x: T| {
        if x > T::zero() {
            T::one() / x
        } else {
            T::infinity()
        }
    };
    let bound = inv(g).min(inv(T::lit(2.0) * th));
    if bound.is_finite() {
        T::lit(0.05) * bound
    } else {
        T::infinity()
    }
}

/// Selects the uniform fast path when possible, the dense superoperator otherwise.
pub fn generator_for<T: Scalar>(
    config: &ModelConfig<T>,
    table: &AmplitudeTable<T>,
) -> Result<Box<dyn Generator<T>>> {
    match config.rates.uniform() {
        Some(_) => Ok(Box::new(UniformLiouvillian::new(config, table)?)),
        None => Ok(Box::new(DenseLiouvillian::build(config, table)?)),
    }
}

/// Integrates the master equation with fixed-step RK4, returning `rho` at
/// `t = 0, sample_dt, 2 sample_dt, ...` up to `t_final`.
pub fn integrate<T: Scalar>(
    config: &ModelConfig<T>,
    table: &AmplitudeTable<T>,
    rho0: &DensityMatrix<T>,
    stepping: &Stepping<T>,
) -> Result<Vec<DensityMatrix<T>>> {
    let gen = generator_for(config, table)?;
    integrate_with(gen.as_ref(), config, rho0, stepping)
}

pub fn integrate_with<T: Scalar>(
    gen: &dyn Generator<T>,
    config: &ModelConfig<T>,
    rho0: &DensityMatrix<T>,
    stepping: &Stepping<T>,
) -> Result<Vec<DensityMatrix<T>>> {
    let Stepping {
        t_final,
        dt,
        sample_dt,
        method: Method::Rk4,
    } = *stepping;
    if !(dt > T::zero()) || !(sample_dt > T::zero()) || !(t_final >= T::zero()) {
        return Err(Error::InvalidArgument(
            "dt and sample_dt must be positive, t_final non-negative".into(),
        ));
    }
    let bound = max_stable_dt(config);
    if dt > bound * (T::one() + T::lit(1e-9)) {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} exceeds 0.05 min(1/gamma, 1/(2 t_hop)) = {bound}"
        )));
    }
    if rho0.dim() != config.n_sites {
        return Err(Error::InvalidArgument(
            "rho0 dimension does not match N".into(),
        ));
    }

    let substeps = (sample_dt / dt).ceil().to_usize().unwrap_or(1).max(1);
    let h = sample_dt / T::of_usize(substeps);
    let n_samples = (t_final / sample_dt + T::lit(1e-9))
        .floor()
        .to_usize()
        .unwrap_or(0);
    let trace0 = rho0.rho.trace();
    let drift_tol = T::conservation_tol(1e-6);

    let mut rho = rho0.rho.clone();
    let mut rk = Rk4::new(rho.data.len());
    let mut out = Vec::with_capacity(n_samples + 1);
    out.push(DensityMatrix {
        rho: rho.clone(),
        time: rho0.time,
    });
    for s in 1..=n_samples {
        for _ in 0..substeps {
            rk.step(|x, o| gen.apply_into(x, o), &mut rho.data, h);
            rho.symmetrize();
        }
        let drift = (rho.trace() - trace0).norm();
        let time = rho0.time + sample_dt * T::of_usize(s);
        if drift > drift_tol || !drift.is_finite() {
            return Err(Error::Numerical(format!(
                "trace drifted by {drift} at t = {time}; reduce dt"
            )));
        }
        out.push(DensityMatrix {
            rho: rho.clone(),
            time,
        });
    }
    Ok(out)
}

/// Closed-form evolution of the diagonal sector,
/// `dp_k/dt = gamma (sum_alpha eta^2(alpha - k) p_alpha - p_k)`.
///
/// The generator is circulant, so in the DFT basis each mode decays as
/// `exp(gamma (lambda_m - 1) t)` with `lambda = DFT(eta^2)`.
#[derive(Debug, Clone)]
pub struct DiagonalPropagator<T: Scalar> {
    fourier: Fourier<T>,
    lambda: Vec<T>,
}

impl<T: Scalar> DiagonalPropagator<T> {
    pub fn new(table: &AmplitudeTable<T>) -> Self {
        let n = table.n_sites();
        let fourier = Fourier::new(n);
        let mut spec: Vec<Complex<T>> = table
            .eta2
            .iter()
            .map(|&x| Complex::new(x, T::zero()))
            .collect();
        fourier.dft_raw(&mut spec);
        // eta^2 is real and even, so its DFT is real.
        let lambda = spec.iter().map(|z| z.re).collect();
        Self { fourier, lambda }
    }

    /// Eigenvalues `lambda_m - 1` of the unit-rate diagonal generator.
    pub fn generator_eigenvalues(&self) -> Vec<T> {
        self.lambda.iter().map(|&l| l - T::one()).collect()
    }

    pub fn evolve(&self, p0: &DiagonalDistribution<T>, gamma: T, t: T) -> DiagonalDistribution<T> {
        let n = p0.p.len();
        let mut buf: Vec<Complex<T>> = p0.p.iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.fourier.dft_raw(&mut buf);
        for (z, &l) in buf.iter_mut().zip(&self.lambda) {
            *z = z.scale((gamma * (l - T::one()) * t).exp());
        }
        self.fourier.idft_raw(&mut buf);
        let inv_n = T::one() / T::of_usize(n);
        DiagonalDistribution {
            p: buf.iter().map(|z| z.re * inv_n).collect(),
        }
    }
}

pub fn solve_diagonal_exact<T: Scalar>(
    table: &AmplitudeTable<T>,
    p0: &DiagonalDistribution<T>,
    gamma: T,
    times: &[T],
) -> Result<Vec<DiagonalDistribution<T>>> {
    if p0.p.len() != table.n_sites() {
        return Err(Error::InvalidArgument(
            "initial distribution length does not match N".into(),
        ));
    }
    let prop = DiagonalPropagator::new(table);
    Ok(times.iter().map(|&t| prop.evolve(p0, gamma, t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Rates;

    fn setup(n: usize, sigma: f64, gamma: f64) -> (ModelConfig<f64>, AmplitudeTable<f64>) {
        let c = ModelConfig::uniform(n, 1.0, sigma, gamma).unwrap();
        let t = AmplitudeTable::build(&c).unwrap();
        (c, t)
    }

    /// Lindblad right-hand side assembled from explicit operator matrices.
    fn brute_force_rhs(
        config: &ModelConfig<f64>,
        table: &AmplitudeTable<f64>,
        rho: &Matrix<f64>,
    ) -> Matrix<f64> {
        let n = config.n_sites;
        let f = Fourier::new(n);
        let mul = |a: &[Complex<f64>], b: &[Complex<f64>]| {
            let mut c = vec![Complex::new(0.0, 0.0); n * n];
            for i in 0..n {
                for l in 0..n {
                    for j in 0..n {
                        c[i * n + j] += a[i * n + l] * b[l * n + j];
                    }
                }
            }
            c
        };
        let e = config.energies();
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, Complex::new(0.0, -(e[i] - e[j])) * rho.get(i, j));
            }
        }
        for a in 0..n {
            let g = config.rates.rate(a);
            let d = table.measurement_matrix_momentum(&f, a);
            let d2 = mul(&d, &d);
            let drd = mul(&mul(&d, &rho.data), &d);
            let d2r = mul(&d2, &rho.data);
            let rd2 = mul(&rho.data, &d2);
            for idx in 0..n * n {
                out.data[idx] += (drd[idx] - (d2r[idx] + rd2[idx]) * 0.5) * g;
            }
        }
        out
    }

    fn pseudo_random_state(n: usize, seed: u64) -> DensityMatrix<f64> {
        // Small LCG keeps this test independent of the rand crate.
        let mut s = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a: Vec<Complex<f64>> = (0..n * n).map(|_| Complex::new(next(), next())).collect();
        let mut rho = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let v: Complex<f64> = (0..n).map(|l| a[i * n + l] * a[j * n + l].conj()).sum();
                rho.set(i, j, v);
            }
        }
        let tr = rho.trace().re;
        for z in &mut rho.data {
            *z /= tr;
        }
        DensityMatrix::new(rho, 1e-10).unwrap()
    }

    #[test]
    fn dense_matches_operator_construction_for_per_site_rates() {
        let n = 6;
        let rates = vec![0.3, 1.0, 0.0, 2.5, 0.7, 1.1];
        let c = ModelConfig::new(n, 0.8, 1.2, Rates::PerSite(rates)).unwrap();
        let t = AmplitudeTable::build(&c).unwrap();
        let dense = DenseLiouvillian::build(&c, &t).unwrap();
        let rho = pseudo_random_state(n, 7);
        let got = dense.apply(&rho.rho);
        let want = brute_force_rhs(&c, &t, &rho.rho);
        assert!(got.max_diff(&want) < 1e-12, "diff {}", got.max_diff(&want));
    }

    #[test]
    fn dense_and_uniform_agree() {
        for n in [6, 8, 12] {
            let (c, t) = setup(n, 1.5, 0.9);
            let dense = DenseLiouvillian::build(&c, &t).unwrap();
            let fast = UniformLiouvillian::new(&c, &t).unwrap();
            for seed in 0..3 {
                let rho = pseudo_random_state(n, seed);
                let diff = dense.apply(&rho.rho).max_diff(&fast.apply(&rho.rho));
                assert!(diff < 1e-10, "N={n} diff={diff}");
            }
        }
    }

    #[test]
    fn dense_refuses_large_rings() {
        let (c, t) = setup(40, 2.0, 1.0);
        assert!(matches!(
            DenseLiouvillian::build(&c, &t),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn uniform_refuses_per_site_rates() {
        let c = ModelConfig::new(4, 1.0, 1.0, Rates::PerSite(vec![1.0; 4])).unwrap();
        let t = AmplitudeTable::build(&c).unwrap();
        assert!(UniformLiouvillian::new(&c, &t).is_err());
    }

    #[test]
    fn maximally_mixed_is_fixpoint() {
        let (c, t) = setup(10, 1.0, 1.3);
        let mixed = DensityMatrix::maximally_mixed(10);
        let fast = UniformLiouvillian::new(&c, &t).unwrap();
        let dense = DenseLiouvillian::build(&c, &t).unwrap();
        assert!(fast.apply(&mixed.rho).max_abs() < 1e-12);
        assert!(dense.apply(&mixed.rho).max_abs() < 1e-12);
    }

    #[test]
    fn zero_rates_leave_only_unitary_part() {
        let (c, t) = setup(8, 1.0, 0.0);
        let rho = pseudo_random_state(8, 3);
        let e = c.energies();
        let dense = DenseLiouvillian::build(&c, &t).unwrap();
        let out = dense.apply(&rho.rho);
        for i in 0..8 {
            for j in 0..8 {
                let want = Complex::new(0.0, -(e[i] - e[j])) * rho.rho.get(i, j);
                assert!((out.get(i, j) - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn diagonal_input_gives_rate_equation() {
        let (c, t) = setup(10, 1.0, 0.7);
        let p: Vec<f64> = (0..10).map(|i| (i + 1) as f64 / 55.0).collect();
        let rho = DensityMatrix::from_diagonal(&DiagonalDistribution { p: p.clone() });
        let out = UniformLiouvillian::new(&c, &t).unwrap().apply(&rho.rho);
        for k in 0..10 {
            let conv: f64 = (0..10)
                .map(|a| t.eta_at(a as isize - k as isize).powi(2) * p[a])
                .sum();
            let want = 0.7 * (conv - p[k]);
            assert!((out.get(k, k).re - want).abs() < 1e-13);
            assert!(out.get(k, k).im.abs() < 1e-13);
        }
        assert!(out.max_offdiag() < 1e-13);
    }

    #[test]
    fn derivative_is_traceless() {
        let (c, t) = setup(12, 2.0, 1.0);
        let fast = UniformLiouvillian::new(&c, &t).unwrap();
        for seed in 10..14 {
            let rho = pseudo_random_state(12, seed);
            assert!(fast.apply(&rho.rho).trace().norm() < 1e-13);
        }
    }

    #[test]
    fn eigenstate_is_stationary_without_dissipation() {
        let (c, t) = setup(10, 1.0, 0.0);
        let f = Fourier::new(10);
        let rho0 = DensityMatrix::from_pure(&PureState::momentum_eigenstate(10, 3).unwrap(), &f);
        let steps = Stepping {
            t_final: 5.0,
            dt: 0.01,
            sample_dt: 0.5,
            method: Method::Rk4,
        };
        let series = integrate(&c, &t, &rho0, &steps).unwrap();
        assert_eq!(series.len(), 11);
        for s in &series {
            assert!(s.rho.max_diff(&rho0.rho) < 1e-14);
        }
    }

    #[test]
    fn integrate_rejects_oversized_step() {
        let (c, t) = setup(10, 1.0, 1.0);
        let rho0 = DensityMatrix::maximally_mixed(10);
        let steps = Stepping {
            t_final: 1.0,
            dt: 0.1,
            sample_dt: 0.1,
            method: Method::Rk4,
        };
        assert!(matches!(
            integrate(&c, &t, &rho0, &steps),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn exact_diagonal_limits() {
        let (_, t) = setup(10, 1.0, 1.0);
        let p0 = DiagonalDistribution::point(10, 0);
        let out = solve_diagonal_exact(&t, &p0, 1.0, &[0.0, 500.0]).unwrap();
        for (a, b) in out[0].p.iter().zip(&p0.p) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(out[1].p.iter().all(|&x| (x - 0.1).abs() < 1e-12));
    }

    #[test]
    fn exact_diagonal_matches_independent_rk4() {
        let n = 10;
        let (_, t) = setup(n, 1.0, 1.0);
        let gamma = 1.0;
        // Plain-loop RK4 of the rate equation, sharing nothing with the propagator.
        let rhs = |p: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|k| {
                    let conv: f64 = (0..n)
                        .map(|a| t.eta_at(a as isize - k as isize).powi(2) * p[a])
                        .sum();
                    gamma * (conv - p[k])
                })
                .collect()
        };
        let mut p = vec![0.0; n];
        p[0] = 1.0;
        let h = 1e-3;
        let exact = DiagonalPropagator::new(&t);
        let p0 = DiagonalDistribution { p: p.clone() };
        for step in 1..=3000 {
            let k1 = rhs(&p);
            let y: Vec<f64> = p.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
            let k2 = rhs(&y);
            let y: Vec<f64> = p.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
            let k3 = rhs(&y);
            let y: Vec<f64> = p.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
            let k4 = rhs(&y);
            for i in 0..n {
                p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if step % 500 == 0 {
                let e = exact.evolve(&p0, gamma, step as f64 * h);
                let err =
                    e.p.iter()
                        .zip(&p)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                assert!(err < 1e-10, "t={} err={err}", step as f64 * h);
            }
        }
    }

    #[test]
    fn diagonal_generator_is_stable_with_single_zero_mode() {
        for (n, sigma) in [(10, 1.0), (20, 2.0), (33, 1.7)] {
            let (_, t) = setup(n, sigma, 1.0);
            assert!(t.eta2.iter().all(|&x| x > 0.0));
            let ev = DiagonalPropagator::new(&t).generator_eigenvalues();
            assert!(ev.iter().all(|&x| x <= 1e-14));
            assert_eq!(ev.iter().filter(|x| x.abs() < 1e-12).count(), 1);
            assert!(ev[0].abs() < 1e-12);
        }
    }

    #[test]
    fn density_matrix_validation() {
        let mut m = Matrix::<f64>::zeros(2);
        m.set(0, 0, Complex::new(1.5, 0.0));
        m.set(1, 1, Complex::new(-0.5, 0.0));
        assert!(DensityMatrix::new(m.clone(), 1e-10).is_err());
        m.set(0, 0, Complex::new(0.5, 0.0));
        m.set(1, 1, Complex::new(0.5, 0.0));
        m.set(0, 1, Complex::new(0.1, 0.2));
        assert!(DensityMatrix::new(m.clone(), 1e-10).is_err());
        m.set(1, 0, Complex::new(0.1, -0.2));
        assert!(DensityMatrix::new(m, 1e-10).is_ok());
        assert!(DiagonalDistribution::new(vec![0.5, 0.6], 1e-9).is_err());
        assert!(DiagonalDistribution::new(vec![1.1, -0.1], 1e-9).is_err());
    }
}
