//! Ring lattice, tight-binding dispersion and the Gaussian position-measurement
//! operators `D_a`.
//!
//! Sites are 0-based internally (`0..N`); user-facing output adds one.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::scalar::Scalar;
use crate::state::{Basis, PureState};

/// Dissipation rates of the measurement channels.
#[derive(Debug, Clone, PartialEq)]
pub enum Rates<T> {
    Uniform(T),
    PerSite(Vec<T>),
}

impl<T: Scalar> Rates<T> {
    /// The common rate, if all channels share one.
    pub fn uniform(&self) -> Option<T> {
        match self {
            Rates::Uniform(g) => Some(*g),
            Rates::PerSite(_) => None,
        }
    }

    pub fn rate(&self, site: usize) -> T {
        match self {
            Rates::Uniform(g) => *g,
            Rates::PerSite(v) => v[site],
        }
    }

    pub fn max_rate(&self) -> T {
        match self {
            Rates::Uniform(g) => *g,
            Rates::PerSite(v) => v.iter().copied().fold(T::zero(), T::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig<T> {
    pub n_sites: usize,
    pub t_hop: T,
    pub sigma: T,
    pub rates: Rates<T>,
}

impl<T: Scalar> ModelConfig<T> {
    pub fn new(n_sites: usize, t_hop: T, sigma: T, rates: Rates<T>) -> Result<Self> {
        let cfg = Self {
            n_sites,
            t_hop,
            sigma,
            rates,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn uniform(n_sites: usize, t_hop: T, sigma: T, gamma: T) -> Result<Self> {
        Self::new(n_sites, t_hop, sigma, Rates::Uniform(gamma))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 4 {
            return Err(Error::InvalidConfig(format!(
                "n_sites must be at least 4, got {}",
                self.n_sites
            )));
        }
        if !self.t_hop.is_finite() {
            return Err(Error::InvalidConfig("t_hop must be finite".into()));
        }
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        let bad_rate = |g: T| !(g >= T::zero()) || !g.is_finite();
        match &self.rates {
            Rates::Uniform(g) if bad_rate(*g) => {
                return Err(Error::InvalidConfig(format!("gamma must be >= 0, got {g}")))
            }
            Rates::PerSite(v) => {
                if v.len() != self.n_sites {
                    return Err(Error::InvalidConfig(format!(
                        "expected {} per-site rates, got {}",
                        self.n_sites,
                        v.len()
                    )));
                }
                if let Some((i, g)) = v.iter().enumerate().find(|(_, g)| bad_rate(**g)) {
                    return Err(Error::InvalidConfig(format!(
                        "rate for site {} must be >= 0, got {g}",
                        i + 1
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn grid(&self) -> MomentumGrid {
        MomentumGrid::new(self.n_sites)
    }

    /// One lap around the ring at the maximal group velocity `2 t_hop`.
    pub fn reference_period(&self) -> T {
        T::of_usize(self.n_sites) / (T::lit(2.0) * self.t_hop.abs())
    }

    /// Band energies in FFT slot order.
    pub fn energies(&self) -> Vec<T> {
        let grid = self.grid();
        (0..self.n_sites)
            .map(|j| band_energy(self.t_hop, grid.k::<T>(j)))
            .collect()
    }
}

fn band_energy<T: Scalar>(t_hop: T, k: T) -> T {
    -T::lit(2.0) * t_hop * k.cos()
}

/// Quasi-momentum grid `k = 2 pi m / N`.
///
/// Slot `j` (FFT order) carries the signed label `m`, with
/// `m in {-N/2, .., N/2 - 1}` for even `N` and `{-(N-1)/2, .., (N-1)/2}` for odd `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MomentumGrid {
    n: usize,
}

impl MomentumGrid {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn label(&self, slot: usize) -> i64 {
        if slot < self.n.div_ceil(2) {
            slot as i64
        } else {
            slot as i64 - self.n as i64
        }
    }

    pub fn slot(&self, label: i64) -> Option<usize> {
        let n = self.n as i64;
        let (lo, hi) = if self.n.is_multiple_of(2) {
            (-n / 2, n / 2 - 1)
        } else {
            (-(n - 1) / 2, (n - 1) / 2)
        };
        (lo..=hi)
            .contains(&label)
            .then(|| label.rem_euclid(n) as usize)
    }

    pub fn k<T: Scalar>(&self, slot: usize) -> T {
        T::lit(2.0) * T::PI() * T::lit(self.label(slot) as f64) / T::of_usize(self.n)
    }

    /// Slots sorted by ascending `m`, i.e. ascending `k`.
    pub fn ascending_slots(&self) -> Vec<usize> {
        let mut slots: Vec<usize> = (0..self.n).collect();
        slots.sort_by_key(|&s| self.label(s));
        slots
    }

    /// Slot of an arbitrary `k`, accepted modulo `2 pi`.
    pub fn slot_of_k<T: Scalar>(&self, k: T) -> Result<usize> {
        let x = k.to_f64_lossy() * self.n as f64 / (2.0 * std::f64::consts::PI);
        let m = x.round();
        let tol = 1e-9 * (1.0 + x.abs());
        if !x.is_finite() || (x - m).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "k = {k} is not on the 2 pi / {} grid",
                self.n
            )));
        }
        Ok((m as i64).rem_euclid(self.n as i64) as usize)
    }
}

/// `eps_k = -2 t_hop cos k` for an on-grid `k` (taken modulo `2 pi`).
pub fn dispersion<T: Scalar>(config: &ModelConfig<T>, k: T) -> Result<T> {
    config.grid().slot_of_k(k)?;
    Ok(band_energy(config.t_hop, k))
}

/// Free propagator `exp(-i eps_k dt)` per momentum slot.
pub fn hamiltonian_phases<T: Scalar>(config: &ModelConfig<T>, dt: T) -> Vec<Complex<T>> {
    config
        .energies()
        .into_iter()
        .map(|e| Complex::from_polar(T::one(), -e * dt))
        .collect()
}

/// Precomputed Gaussian amplitude functions and their spectra.
#[derive(Debug, Clone)]
pub struct AmplitudeTable<T: Scalar> {
    n: usize,
    /// Row-major `h[a * N + b] = h_a(b)`.
    pub h: Vec<T>,
    /// `eta(q)` per momentum slot.
    pub eta: Vec<T>,
    pub eta2: Vec<T>,
    /// `sum_b h_a(b)^4` per site.
    pub h4sum: Vec<T>,
    /// Normalization constant `N_h`.
    pub norm_const: T,
}

impl<T: Scalar> AmplitudeTable<T> {
    pub fn build(config: &ModelConfig<T>) -> Result<Self> {
        config.validate()?;
        let n = config.n_sites;
        let nf = T::of_usize(n);
        if config.sigma > T::lit(0.25) * nf {
            log::warn!(
                "sigma = {} exceeds N/4 = {}; the two-image Gaussian neglects further periodic images",
                config.sigma,
                T::lit(0.25) * nf
            );
        }
        let half = T::lit(0.5);
        let gauss = |x: T| (-half * (x / config.sigma).powi(2)).exp();
        // Profile as a function of |b - a| in 0..N.
        let profile: Vec<T> = (0..n)
            .map(|d| gauss(T::of_usize(d)) + gauss(T::of_usize(n - d)))
            .collect();
        let norm_const = profile.iter().fold(T::zero(), |acc, &g| acc + g * g);
        if !(norm_const > T::zero()) {
            return Err(Error::InvalidConfig("amplitude profile vanishes".into()));
        }
        let inv_sqrt = T::one() / norm_const.sqrt();

        let mut h = vec![T::zero(); n * n];
        for a in 0..n {
            for b in 0..n {
                h[a * n + b] = profile[a.abs_diff(b)] * inv_sqrt;
            }
        }

        let tol = T::lit(1e3) * T::epsilon() * nf;
        for b in 0..n {
            let col = (0..n).fold(T::zero(), |acc, a| acc + h[a * n + b].powi(2));
            if (col - T::one()).abs() > tol {
                return Err(Error::Internal(format!(
                    "normalization sum for site {} is {col}, not 1",
                    b + 1
                )));
            }
        }

        let fourier = Fourier::new(n);
        let mut spectrum: Vec<Complex<T>> =
            h[..n].iter().map(|&x| Complex::new(x, T::zero())).collect();
        fourier.to_momentum(&mut spectrum);
        let max_im = spectrum.iter().fold(T::zero(), |m, z| m.max(z.im.abs()));
        if max_im > tol {
            return Err(Error::Internal(format!(
                "spectrum of h_0 has imaginary part {max_im}"
            )));
        }
        let eta: Vec<T> = spectrum.iter().map(|z| z.re).collect();
        let eta2 = eta.iter().map(|&e| e * e).collect();
        let h4sum = (0..n)
            .map(|a| {
                h[a * n..(a + 1) * n]
                    .iter()
                    .fold(T::zero(), |acc, &x| acc + x.powi(4))
            })
            .collect();

        Ok(Self {
            n,
            h,
            eta,
            eta2,
            h4sum,
            norm_const,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    /// `h_a(.)` as a slice over sites `b`.
    pub fn row(&self, a: usize) -> &[T] {
        &self.h[a * self.n..(a + 1) * self.n]
    }

    /// `eta` at a slot difference, wrapping modulo `N`.
    pub fn eta_at(&self, diff: isize) -> T {
        self.eta[diff.rem_euclid(self.n as isize) as usize]
    }

    /// `D_a` in the momentum basis, row-major:
    /// `<k_i| D_a |k_j> = N^{-1} sum_b h_a(b) exp(i (k_i - k_j) b)`.
    pub fn measurement_matrix_momentum(&self, fourier: &Fourier<T>, a: usize) -> Vec<Complex<T>> {
        let n = self.n;
        let mut col: Vec<Complex<T>> = self
            .row(a)
            .iter()
            .map(|&x| Complex::new(x, T::zero()))
            .collect();
        fourier.to_momentum(&mut col);
        let s = T::one() / T::of_usize(n).sqrt();
        let mut out = vec![Complex::new(T::zero(), T::zero()); n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = col[(i + n - j) % n].scale(s);
            }
        }
        out
    }
}

/// `D_a psi`, unnormalized; its squared norm is the jump weight of channel `a`.
///
/// The result is returned in `out_basis`.
pub fn apply_measurement<T: Scalar>(
    table: &AmplitudeTable<T>,
    fourier: &Fourier<T>,
    a: usize,
    psi: &PureState<T>,
    out_basis: Basis,
) -> Result<PureState<T>> {
    let n = table.n_sites();
    if a >= n || psi.len() != n {
        return Err(Error::InvalidArgument(format!(
            "site {a} / state length {} incompatible with N={n}",
            psi.len()
        )));
    }
    let mut out = psi.to_basis(fourier, Basis::Position);
    for (amp, &hb) in out.amps.iter_mut().zip(table.row(a)) {
        *amp = amp.scale(hb);
    }
    out.convert(fourier, out_basis);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg(n: usize, sigma: f64) -> ModelConfig<f64> {
        ModelConfig::uniform(n, 1.0, sigma, 1.0).unwrap()
    }

    #[test]
    fn dispersion_values() {
        let c = cfg(8, 1.0);
        assert!((dispersion(&c, 0.0).unwrap() + 2.0).abs() < 1e-15);
        assert!(dispersion(&c, PI / 2.0).unwrap().abs() < 1e-15);
        let c25 = ModelConfig::uniform(8, 25.0, 1.0, 1.0).unwrap();
        assert!((dispersion(&c25, PI).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn dispersion_rejects_off_grid() {
        let c = cfg(8, 1.0);
        assert!(matches!(
            dispersion(&c, 0.1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::uniform(3, 1.0, 1.0, 1.0).is_err());
        assert!(ModelConfig::uniform(8, 1.0, 0.0, 1.0).is_err());
        assert!(ModelConfig::uniform(8, 1.0, 1.0, -0.1).is_err());
        assert!(ModelConfig::new(4, 1.0, 1.0, Rates::PerSite(vec![1.0; 3])).is_err());
        assert!(ModelConfig::new(4, 1.0, 1.0, Rates::PerSite(vec![1.0, 0.5, 0.0, 2.0])).is_ok());
    }

    #[test]
    fn grid_labels_even_and_odd() {
        let g = MomentumGrid::new(10);
        let labels: Vec<i64> = g.ascending_slots().iter().map(|&s| g.label(s)).collect();
        assert_eq!(labels, (-5..=4).collect::<Vec<_>>());
        let g = MomentumGrid::new(9);
        let labels: Vec<i64> = g.ascending_slots().iter().map(|&s| g.label(s)).collect();
        assert_eq!(labels, (-4..=4).collect::<Vec<_>>());
        assert_eq!(MomentumGrid::new(10).slot(-5), Some(5));
        assert_eq!(MomentumGrid::new(10).slot(5), None);
    }

    #[test]
    fn phases_identity_and_unit_modulus() {
        let c = cfg(12, 1.0);
        assert!(hamiltonian_phases(&c, 0.0)
            .iter()
            .all(|z| (z - Complex::new(1.0, 0.0)).norm() < 1e-15));
        let ph = hamiltonian_phases(&c, 0.731);
        assert!(ph.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
        // k = pi/2 lives in slot N/4 and has zero energy.
        for dt in [0.1, 3.0, 100.0] {
            let z = hamiltonian_phases(&c, dt)[3];
            assert!((z - Complex::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn sharp_gaussian_tends_to_delta() {
        let t = AmplitudeTable::build(&cfg(4, 0.01)).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((t.h[a * 4 + b] - want).abs() < 1e-12);
            }
        }
        assert!(t.eta.iter().all(|&e| (e - 0.5).abs() < 1e-12));
    }

    #[test]
    fn eta_matches_brute_force_dft() {
        let t = AmplitudeTable::build(&cfg(10, 1.0)).unwrap();
        let n = 10;
        for j in 0..n {
            let q = 2.0 * PI * j as f64 / n as f64;
            let mut re = 0.0;
            let mut im = 0.0;
            for b in 0..n {
                re += t.h[b] * (q * b as f64).cos();
                im += t.h[b] * (q * b as f64).sin();
            }
            re /= (n as f64).sqrt();
            im /= (n as f64).sqrt();
            assert!(im.abs() < 1e-12);
            assert!((t.eta[j] - re).abs() < 1e-12);
        }
    }

    #[test]
    fn completeness_of_measurement_operators() {
        for (n, sigma) in [(6, 0.7), (10, 1.0), (16, 3.0), (25, 2.5)] {
            let c = cfg(n, sigma);
            let t = AmplitudeTable::build(&c).unwrap();
            let f = Fourier::new(n);
            let mut acc = vec![Complex::new(0.0, 0.0); n * n];
            for a in 0..n {
                let d = t.measurement_matrix_momentum(&f, a);
                for i in 0..n {
                    for j in 0..n {
                        let s: Complex<f64> =
                            (0..n).map(|l| d[l * n + i].conj() * d[l * n + j]).sum();
                        acc[i * n + j] += s;
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (acc[i * n + j] - want).norm() < 1e-12,
                        "N={n} sigma={sigma}"
                    );
                }
            }
        }
    }

    #[test]
    fn measurement_matrix_matches_momentum_formula() {
        // <k|D_a|k'> = N^{-1/2} eta(k - k') exp(+i a (k - k')) with h_a centred on a.
        let n = 10;
        let c = cfg(n, 1.3);
        let t = AmplitudeTable::build(&c).unwrap();
        let f = Fourier::new(n);
        let grid = c.grid();
        let a = 3;
        let d = t.measurement_matrix_momentum(&f, a);
        for i in 0..n {
            for j in 0..n {
                let q = grid.k::<f64>(i) - grid.k::<f64>(j);
                let want = Complex::from_polar(t.eta_at(i as isize - j as isize), q * a as f64)
                    / (n as f64).sqrt();
                assert!((d[i * n + j] - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn apply_measurement_on_position_eigenstate() {
        let n = 8;
        let c = cfg(n, 1.0);
        let t = AmplitudeTable::build(&c).unwrap();
        let f = Fourier::new(n);
        let psi = PureState::position_eigenstate(n, 5).unwrap();
        let out = apply_measurement(&t, &f, 2, &psi, Basis::Position).unwrap();
        for (b, amp) in out.amps.iter().enumerate() {
            let want = if b == 5 { t.h[2 * n + 5] } else { 0.0 };
            assert!((amp.re - want).abs() < 1e-14 && amp.im.abs() < 1e-14);
        }
    }

    #[test]
    fn f32_table_is_normalized() {
        let c = ModelConfig::<f32>::uniform(20, 1.0, 2.0, 1.0).unwrap();
        let t = AmplitudeTable::build(&c).unwrap();
        for b in 0..20 {
            let s: f32 = (0..20).map(|a| t.h[a * 20 + b].powi(2)).sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }
}
