//! Quantum-jump unraveling with exact, event-driven jump times.
//!
//! Because `sum_a D_a^2 = 1`, the total jump rate is `gamma` for every
//! state. Waiting times are therefore exponential with rate `gamma`, and the
//! normalized no-jump evolution is plain unitary propagation.
//!
//! Random streams: trajectory `i` of an ensemble with master seed `s` draws
//! from `ChaCha8Rng::seed_from_u64(s)` switched to stream `i`. Each waiting
//! time consumes one `Exp(gamma)` sample and each channel choice one uniform
//! `f64` in `[0, 1)`.

use num_complex::Complex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::model::{apply_measurement, AmplitudeTable, ModelConfig};
use crate::observables::{
    current_from_position, histogram, ipr_from_probabilities, peak_site, site_angle, Histogram,
};
use crate::scalar::Scalar;
use crate::state::{Basis, PureState};

/// RNG for trajectory `index` under `master_seed`.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Free evolution `exp(-i H dt)`. The result is in the momentum basis.
pub fn step_no_jump<T: Scalar>(
    config: &ModelConfig<T>,
    fourier: &Fourier<T>,
    psi: &PureState<T>,
    dt: T,
) -> PureState<T> {
    let mut out = psi.to_basis(fourier, Basis::Momentum);
    for (a, e) in out.amps.iter_mut().zip(config.energies()) {
        *a *= Complex::from_polar(T::one(), -e * dt);
    }
    out.time = psi.time + dt;
    out
}

/// Weights `w_a = ||D_a psi||^2 = sum_b h_a(b)^2 |psi_b|^2`, computed as a
/// circular convolution.
#[derive(Debug, Clone)]
pub struct ChannelWeights<T: Scalar> {
    fourier: Fourier<T>,
    h0_sq_spectrum: Vec<Complex<T>>,
}

impl<T: Scalar> ChannelWeights<T> {
    pub fn new(table: &AmplitudeTable<T>) -> Self {
        let fourier = Fourier::new(table.n_sites());
        let mut spec: Vec<Complex<T>> = table
            .row(0)
            .iter()
            .map(|&h| Complex::new(h * h, T::zero()))
            .collect();
        fourier.dft_raw(&mut spec);
        Self {
            fourier,
            h0_sq_spectrum: spec,
        }
    }

    /// Weights for position-basis densities `probs`.
    pub fn weights(&self, probs: &[T]) -> Vec<T> {
        let mut buf: Vec<Complex<T>> = probs.iter().map(|&p| Complex::new(p, T::zero())).collect();
        self.fourier
            .convolve_with_spectrum(&self.h0_sq_spectrum, &mut buf);
        buf.iter().map(|z| z.re.max(T::zero())).collect()
    }
}

/// Picks a channel by inverse CDF and returns the normalized post-jump state
/// in the position basis.
pub fn sample_jump<T: Scalar, R: Rng + ?Sized>(
    table: &AmplitudeTable<T>,
    fourier: &Fourier<T>,
    weights: &ChannelWeights<T>,
    psi: &PureState<T>,
    rng: &mut R,
) -> Result<(usize, PureState<T>)> {
    let pos = psi.to_basis(fourier, Basis::Position);
    let w = weights.weights(&pos.probabilities());
    let total = w.iter().fold(T::zero(), |a, &x| a + x);
    if !(total > T::zero()) {
        return Err(Error::Internal("all jump weights vanish".into()));
    }
    let psi_norm = pos.norm_sqr();
    if (total - psi_norm).abs() > T::conservation_tol(1e-10) * psi_norm {
        return Err(Error::Numerical(format!(
            "channel weights sum to {total:e}, state norm is {psi_norm:e}"
        )));
    }
    let u = T::lit(rng.random::<f64>()) * total;
    let mut acc = T::zero();
    let mut site = w.len() - 1;
    for (a, &wa) in w.iter().enumerate() {
        acc += wa;
        if u < acc {
            site = a;
            break;
        }
    }
    let mut out = apply_measurement(table, fourier, site, &pos, Basis::Position)?;
    out.normalize()?;
    out.time = psi.time;
    Ok((site, out))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump<T> {
    pub time: T,
    /// 0-based site of the channel that fired.
    pub site: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub time: T,
    pub current: T,
    pub ipr: T,
    /// Site of the density maximum and its angle `2 pi j / N`.
    pub peak_site: usize,
    pub phi: T,
    /// Jumps in `(previous sample, time]`.
    pub jumps_since_last: usize,
    /// `|psi_b|^2`, present when snapshots are requested.
    pub position: Option<Vec<T>>,
    /// `|psi_k|^2` in FFT slot order, present when snapshots are requested.
    pub momentum: Option<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<T> {
    pub seed: u64,
    pub index: u64,
    pub jumps: Vec<Jump<T>>,
    pub samples: Vec<Sample<T>>,
}

impl<T: Scalar> TrajectoryRecord<T> {
    pub fn times(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn angles(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.phi).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOptions<T> {
    pub t_final: T,
    pub sample_dt: T,
    /// Recording starts at this time; earlier samples are skipped.
    pub t_record_from: T,
    pub snapshots: bool,
}

impl<T: Scalar> TrajectoryOptions<T> {
    pub fn new(t_final: T, sample_dt: T) -> Self {
        Self {
            t_final,
            sample_dt,
            t_record_from: T::zero(),
            snapshots: false,
        }
    }

    fn sample_count(&self) -> usize {
        (self.t_final / self.sample_dt + T::lit(1e-9))
            .floor()
            .to_usize()
            .unwrap_or(0)
    }

    fn first_recorded(&self) -> usize {
        (self.t_record_from / self.sample_dt - T::lit(1e-9))
            .ceil()
            .to_usize()
            .unwrap_or(0)
    }
}

/// Shared, read-only machinery for running trajectories of one model.
#[derive(Debug, Clone)]
pub struct Unraveling<T: Scalar> {
    pub config: ModelConfig<T>,
    pub table: AmplitudeTable<T>,
    gamma: T,
    fourier: Fourier<T>,
    weights: ChannelWeights<T>,
    energies: Vec<T>,
}

impl<T: Scalar> Unraveling<T> {
    pub fn new(config: &ModelConfig<T>, table: &AmplitudeTable<T>) -> Result<Self> {
        let gamma = config.rates.uniform().ok_or_else(|| {
            Error::InvalidArgument(
                "quantum trajectories require uniform rates; use the master equation for per-site rates"
                    .into(),
            )
        })?;
        if table.n_sites() != config.n_sites {
            return Err(Error::InvalidArgument(
                "amplitude table does not match N".into(),
            ));
        }
        Ok(Self {
            config: config.clone(),
            table: table.clone(),
            gamma,
            fourier: Fourier::new(config.n_sites),
            weights: ChannelWeights::new(table),
            energies: config.energies(),
        })
    }

    pub fn fourier(&self) -> &Fourier<T> {
        &self.fourier
    }

    fn propagate(&self, psi: &mut PureState<T>, dt: T) {
        debug_assert_eq!(psi.basis, Basis::Momentum);
        if dt > T::zero() {
            for (a, &e) in psi.amps.iter_mut().zip(&self.energies) {
                *a *= Complex::from_polar(T::one(), -e * dt);
            }
        }
        psi.time += dt;
    }

    fn sample(&self, psi: &PureState<T>, snapshots: bool, jumps: usize) -> Sample<T> {
        let pos = psi.to_basis(&self.fourier, Basis::Position);
        let probs = pos.probabilities();
        let peak = peak_site(&probs);
        Sample {
            time: psi.time,
            current: current_from_position(&pos.amps),
            ipr: ipr_from_probabilities(&probs),
            peak_site: peak,
            phi: site_angle(peak, probs.len()),
            jumps_since_last: jumps,
            momentum: snapshots.then(|| psi.probabilities()),
            position: snapshots.then_some(probs),
        }
    }

    /// Runs one trajectory with an explicit generator.
    pub fn run_with_rng<R: Rng + ?Sized>(
        &self,
        psi0: &PureState<T>,
        opts: &TrajectoryOptions<T>,
        rng: &mut R,
    ) -> Result<(Vec<Jump<T>>, Vec<Sample<T>>)> {
        if psi0.len() != self.config.n_sites {
            return Err(Error::InvalidArgument(
                "initial state length does not match N".into(),
            ));
        }
        if !(opts.sample_dt > T::zero()) || !(opts.t_final >= T::zero()) {
            return Err(Error::InvalidArgument("sample_dt must be positive".into()));
        }
        let mut psi = psi0.to_basis(&self.fourier, Basis::Momentum);
        psi.normalize()?;
        psi.time = T::zero();

        let exp = if self.gamma > T::zero() {
            Some(
                Exp::new(self.gamma.to_f64_lossy())
                    .map_err(|e| Error::InvalidArgument(format!("bad rate: {e}")))?,
            )
        } else {
            None
        };
        let draw_wait = |rng: &mut R| match &exp {
            Some(d) => T::lit(d.sample(rng)),
            None => T::infinity(),
        };

        let n_samples = opts.sample_count();
        let first = opts.first_recorded();
        let mut jumps = Vec::new();
        let mut samples = Vec::with_capacity(n_samples + 1 - first.min(n_samples + 1));
        let mut next_jump = draw_wait(rng);
        let mut since_last = 0usize;

        for s in 0..=n_samples {
            let ts = opts.sample_dt * T::of_usize(s);
            while next_jump <= ts {
                let dt = next_jump - psi.time;
                self.propagate(&mut psi, dt);
                psi.time = next_jump;
                let (site, post) =
                    sample_jump(&self.table, &self.fourier, &self.weights, &psi, rng)?;
                psi = post.to_basis(&self.fourier, Basis::Momentum);
                psi.time = next_jump;
                jumps.push(Jump {
                    time: next_jump,
                    site,
                });
                since_last += 1;
                next_jump += draw_wait(rng);
            }
            let dt = ts - psi.time;
            self.propagate(&mut psi, dt);
            psi.time = ts;
            psi.normalize()?;
            if s >= first {
                samples.push(self.sample(&psi, opts.snapshots, since_last));
                since_last = 0;
            }
        }
        Ok((jumps, samples))
    }

    pub fn run(
        &self,
        psi0: &PureState<T>,
        opts: &TrajectoryOptions<T>,
        master_seed: u64,
        index: u64,
    ) -> Result<TrajectoryRecord<T>> {
        let mut rng = trajectory_rng(master_seed, index);
        let (jumps, samples) = self.run_with_rng(psi0, opts, &mut rng)?;
        Ok(TrajectoryRecord {
            seed: master_seed,
            index,
            jumps,
            samples,
        })
    }
}

/// Single trajectory on stream 0 of `seed`.
pub fn run_trajectory<T: Scalar>(
    config: &ModelConfig<T>,
    table: &AmplitudeTable<T>,
    psi0: &PureState<T>,
    opts: &TrajectoryOptions<T>,
    seed: u64,
) -> Result<TrajectoryRecord<T>> {
    Unraveling::new(config, table)?.run(psi0, opts, seed, 0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleOptions<T> {
    pub n_traj: usize,
    pub master_seed: u64,
    pub trajectory: TrajectoryOptions<T>,
    /// Full records (with snapshots if requested) are kept for this many
    /// leading trajectory indices.
    pub keep_records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    Current,
    Ipr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats<T> {
    pub times: Vec<T>,
    /// Ensemble mean of `|psi_k|^2` per sample time, FFT slot order.
    pub mean_momentum: Vec<Vec<T>>,
    /// `currents[sample][trajectory]`.
    pub currents: Vec<Vec<T>>,
    pub iprs: Vec<Vec<T>>,
    pub jump_counts: Vec<usize>,
    pub records: Vec<TrajectoryRecord<T>>,
}

impl<T: Scalar> EnsembleStats<T> {
    pub fn values_at(&self, sample: usize, which: &Observable) -> &[T] {
        match which {
            Observable::Current => &self.currents[sample],
            Observable::Ipr => &self.iprs[sample],
        }
    }

    pub fn histogram_at(
        &self,
        sample: usize,
        which: &Observable,
        bins: usize,
    ) -> Result<Histogram<T>> {
        histogram(self.values_at(sample, which), bins)
    }
}

/// Trajectories handed to the worker pool per batch. Fixed, so batching
/// never depends on the number of threads.
const ENSEMBLE_BATCH: usize = 64;

/// Runs `n_traj` trajectories in parallel and reduces them in index order.
pub fn run_ensemble<T: Scalar>(
    config: &ModelConfig<T>,
    table: &AmplitudeTable<T>,
    psi0: &PureState<T>,
    opts: &EnsembleOptions<T>,
) -> Result<EnsembleStats<T>> {
    if opts.n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
    }
    let engine = Unraveling::new(config, table)?;
    let n = config.n_sites;
    let mut traj_opts = opts.trajectory;
    traj_opts.snapshots = true;
    let mut stats: Option<EnsembleStats<T>> = None;

    for start in (0..opts.n_traj).step_by(ENSEMBLE_BATCH) {
        let end = (start + ENSEMBLE_BATCH).min(opts.n_traj);
        let batch: Vec<Result<TrajectoryRecord<T>>> = (start..end)
            .into_par_iter()
            .map(|i| engine.run(psi0, &traj_opts, opts.master_seed, i as u64))
            .collect();
        for (offset, rec) in batch.into_iter().enumerate() {
            let mut rec = rec?;
            let st = stats.get_or_insert_with(|| EnsembleStats {
                times: rec.times(),
                mean_momentum: vec![vec![T::zero(); n]; rec.samples.len()],
                currents: vec![Vec::with_capacity(opts.n_traj); rec.samples.len()],
                iprs: vec![Vec::with_capacity(opts.n_traj); rec.samples.len()],
                jump_counts: Vec::with_capacity(opts.n_traj),
                records: Vec::new(),
            });
            for (s, sample) in rec.samples.iter().enumerate() {
                if let Some(mom) = &sample.momentum {
                    for (acc, &p) in st.mean_momentum[s].iter_mut().zip(mom) {
                        *acc += p;
                    }
                }
                st.currents[s].push(sample.current);
                st.iprs[s].push(sample.ipr);
            }
            st.jump_counts.push(rec.jumps.len());
            if start + offset < opts.keep_records {
                if !opts.trajectory.snapshots {
                    for s in &mut rec.samples {
                        s.position = None;
                        s.momentum = None;
                    }
                }
                st.records.push(rec);
            }
        }
    }

    let mut stats = stats.expect("n_traj >= 1");
    let inv = T::one() / T::of_usize(opts.n_traj);
    for row in &mut stats.mean_momentum {
        for p in row.iter_mut() {
            *p *= inv;
        }
    }
    Ok(stats)
}
