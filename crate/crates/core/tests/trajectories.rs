use ringclock::liouville::{solve_diagonal_exact, DiagonalDistribution};
use ringclock::model::{AmplitudeTable, ModelConfig};
use ringclock::state::PureState;
use ringclock::trajectory::{
    run_ensemble, run_trajectory, trajectory_rng, EnsembleOptions, TrajectoryOptions, Unraveling,
};

fn setup(n: usize, t_hop: f64, sigma: f64, gamma: f64) -> (ModelConfig<f64>, AmplitudeTable<f64>) {
    let c = ModelConfig::uniform(n, t_hop, sigma, gamma).unwrap();
    let t = AmplitudeTable::build(&c).unwrap();
    (c, t)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[test]
fn ensemble_matches_master_equation_diagonals() {
    let (c, t) = setup(20, 1.0, 2.0, 1.0);
    let psi0 = PureState::momentum_eigenstate(20, 3).unwrap();
    let n_traj = 2000;
    let opts = EnsembleOptions {
        n_traj,
        master_seed: 2024,
        trajectory: TrajectoryOptions::new(9.0, 1.0),
        keep_records: 0,
    };
    let stats = run_ensemble(&c, &t, &psi0, &opts).unwrap();
    assert_eq!(stats.times.len(), 10);
    let exact =
        solve_diagonal_exact(&t, &DiagonalDistribution::point(20, 3), 1.0, &stats.times).unwrap();
    let tol = 3.0 / (n_traj as f64).sqrt();
    for (s, p) in exact.iter().enumerate() {
        for k in 0..20 {
            let dev = (stats.mean_momentum[s][k] - p.p[k]).abs();
            assert!(dev < tol, "t={} k={k} dev={dev}", stats.times[s]);
        }
    }
}

#[test]
fn ensemble_is_independent_of_thread_count() {
    let (c, t) = setup(16, 1.0, 1.5, 1.0);
    let psi0 = PureState::uniform_position(16);
    let opts = EnsembleOptions {
        n_traj: 150,
        master_seed: 11,
        trajectory: TrajectoryOptions::new(20.0, 2.0),
        keep_records: 3,
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_ensemble(&c, &t, &psi0, &opts).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    assert_eq!(a.records.len(), 3);
    assert!(a.records[0].samples[0].position.is_none());
}

#[test]
fn survival_probability_is_exponential_for_any_state() {
    // P(no jump in dt) = exp(-gamma dt); checked on the first waiting time
    // from two very different initial states.
    let (c, t) = setup(24, 1.0, 2.0, 0.7);
    let engine = Unraveling::new(&c, &t).unwrap();
    let dt = 1.0;
    let expected = (-0.7f64 * dt).exp();
    let n = 4000;
    for psi0 in [
        PureState::momentum_eigenstate(24, 5).unwrap(),
        PureState::position_eigenstate(24, 7).unwrap(),
    ] {
        let mut survived = 0usize;
        for i in 0..n {
            let mut rng = trajectory_rng(5, i as u64);
            let (jumps, _) = engine
                .run_with_rng(&psi0, &TrajectoryOptions::new(dt, dt), &mut rng)
                .unwrap();
            if jumps.is_empty() {
                survived += 1;
            }
        }
        let frac = survived as f64 / n as f64;
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((frac - expected).abs() < 4.0 * se, "{frac} vs {expected}");
    }
}

#[test]
fn first_order_jump_probability() {
    let (c, t) = setup(12, 1.0, 1.0, 2.0);
    let engine = Unraveling::new(&c, &t).unwrap();
    let dt = 0.01;
    let n = 20000;
    let psi0 = PureState::uniform_position(12);
    let jumped = (0..n)
        .filter(|&i| {
            let mut rng = trajectory_rng(8, i as u64);
            !engine
                .run_with_rng(&psi0, &TrajectoryOptions::new(dt, dt), &mut rng)
                .unwrap()
                .0
                .is_empty()
        })
        .count();
    let p = 2.0 * dt;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((jumped as f64 / n as f64 - p).abs() < 4.0 * se + 2.0 * p * p);
}

#[test]
fn state_stays_normalized_and_current_bounded() {
    let (c, t) = setup(30, 1.0, 3.0, 1.0);
    let psi0 = PureState::momentum_eigenstate(30, 0).unwrap();
    let mut opts = TrajectoryOptions::new(60.0, 0.5);
    opts.snapshots = true;
    let rec = run_trajectory(&c, &t, &psi0, &opts, 99).unwrap();
    for s in &rec.samples {
        let pos: f64 = s.position.as_ref().unwrap().iter().sum();
        let mom: f64 = s.momentum.as_ref().unwrap().iter().sum();
        assert!((pos - 1.0).abs() < 1e-10 && (mom - 1.0).abs() < 1e-10);
        assert!(s.current.abs() <= 1.0 + 1e-12);
        assert!(s.ipr >= 1.0 - 1e-12 && s.ipr <= 30.0 + 1e-9);
        assert!(s.phi >= 0.0 && s.phi < std::f64::consts::TAU);
    }
}

#[test]
fn steady_state_current_has_zero_mean() {
    let (c, t) = setup(40, 1.0, 4.0, 1.0);
    let psi0 = PureState::momentum_eigenstate(40, 0).unwrap();
    let mut traj = TrajectoryOptions::new(300.0, 50.0);
    traj.t_record_from = 300.0;
    let opts = EnsembleOptions {
        n_traj: 800,
        master_seed: 3,
        trajectory: traj,
        keep_records: 0,
    };
    let stats = run_ensemble(&c, &t, &psi0, &opts).unwrap();
    let (m, sd) = mean_sd(&stats.currents[0]);
    let se = sd / (800f64).sqrt();
    assert!(m.abs() < 3.0 * se, "mean {m}, se {se}");
}

#[test]
fn measurement_localizes_the_particle() {
    // sigma = 0.1 N, gamma = t_hop: late-time IPR well below N / 2.
    let (c, t) = setup(100, 1.0, 10.0, 1.0);
    let psi0 = PureState::momentum_eigenstate(100, 0).unwrap();
    let mut opts = TrajectoryOptions::new(400.0, 1.0);
    opts.t_record_from = 200.0;
    for seed in 0..4 {
        let rec = run_trajectory(&c, &t, &psi0, &opts, seed).unwrap();
        let avg = rec.samples.iter().map(|s| s.ipr).sum::<f64>() / rec.samples.len() as f64;
        assert!(avg < 50.0, "seed {seed}: mean IPR {avg}");
    }
}

#[test]
fn jump_counts_uncorrelated_across_streams() {
    let (c, t) = setup(16, 1.0, 2.0, 1.0);
    let engine = Unraveling::new(&c, &t).unwrap();
    let psi0 = PureState::uniform_position(16);
    let opts = TrajectoryOptions::new(30.0, 30.0);
    let pairs = 1500;
    let count = |i: u64| engine.run(&psi0, &opts, 77, i).unwrap().jumps.len() as f64;
    let xs: Vec<f64> = (0..pairs).map(|i| count(2 * i)).collect();
    let ys: Vec<f64> = (0..pairs).map(|i| count(2 * i + 1)).collect();
    let (mx, sx) = mean_sd(&xs);
    let (my, sy) = mean_sd(&ys);
    let cov = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (pairs as f64 - 1.0);
    let r = cov / (sx * sy);
    assert!(r.abs() < 4.0 / (pairs as f64).sqrt(), "r = {r}");
    assert!((mx - 30.0).abs() < 5.0 * (30.0f64 / pairs as f64).sqrt());
}

#[test]
fn late_momentum_mass_near_half_pi_follows_master_equation() {
    // Mass within pi/4 of +-pi/2, per trajectory, against the exact diagonal
    // solution of the master equation.
    let n = 100;
    let (c, t) = setup(n, 1.0, 10.0, 1.0);
    let psi0 = PureState::momentum_eigenstate(n, 0).unwrap();
    let n_traj = 200;
    let mut traj = TrajectoryOptions::new(4000.0, 1000.0);
    traj.snapshots = true;
    let opts = EnsembleOptions {
        n_traj,
        master_seed: 1000,
        trajectory: traj,
        keep_records: n_traj,
    };
    let stats = run_ensemble(&c, &t, &psi0, &opts).unwrap();
    let grid = c.grid();
    let in_window = |s: usize| {
        let k: f64 = grid.k(s);
        (k.abs() - std::f64::consts::FRAC_PI_2).abs() < std::f64::consts::FRAC_PI_4
    };
    let window_mass = |p: &[f64]| (0..n).filter(|&s| in_window(s)).map(|s| p[s]).sum::<f64>();
    let exact =
        solve_diagonal_exact(&t, &DiagonalDistribution::point(n, 0), 1.0, &stats.times).unwrap();
    for (j, p) in exact.iter().enumerate() {
        let predicted = window_mass(&p.p);
        let masses: Vec<f64> = stats
            .records
            .iter()
            .map(|r| window_mass(r.samples[j].momentum.as_ref().unwrap()))
            .collect();
        let (m, sd) = mean_sd(&masses);
        let se = sd / (n_traj as f64).sqrt();
        assert!(
            (m - predicted).abs() < 4.0 * se + 1e-9,
            "t={}: trajectories {m}, master equation {predicted}",
            stats.times[j]
        );
    }
    // Relaxation is towards the uniform distribution, where the window holds
    // exactly half the mass.
    assert!((window_mass(&exact.last().unwrap().p) - 0.5).abs() < 0.02);
}
