//! Executes a resolved [`RunSpec`] and writes its data files and
//! `metadata.toml`.

use std::path::Path;

use ringclock::liouville::{integrate, solve_diagonal_exact, DensityMatrix, Method, Stepping};
use ringclock::model::{AmplitudeTable, ModelConfig};
use ringclock::observables::{
    correlator_ss, histogram, peak_angle_series, power_spectral_density, CorrelatorOptions,
    Histogram, PsdOptions,
};
use ringclock::trajectory::{
    run_ensemble, EnsembleOptions, EnsembleStats, TrajectoryOptions, TrajectoryRecord, Unraveling,
};
use ringclock::{Fourier, PureState};
use toml::{Table, Value};

use crate::error::CliError;
use crate::output::{num, OutputDir};
use crate::runspec::{InitialState, Kind, RunSpec, RUN_INFO_TABLE};

pub const METADATA_FILE: &str = "metadata.toml";

/// What a finished run wrote.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub files: Vec<String>,
    pub diagnostics: Table,
}

pub fn initial_state(
    spec: &RunSpec,
    config: &ModelConfig<f64>,
) -> Result<PureState<f64>, CliError> {
    let n = config.n_sites;
    Ok(match spec.initial {
        InitialState::Momentum { k0 } => {
            PureState::momentum_eigenstate(n, config.grid().slot_of_k(k0)?)?
        }
        InitialState::UniformPosition => PureState::uniform_position(n),
        InitialState::Position { site } => PureState::position_eigenstate(n, site - 1)?,
    })
}

fn momentum_header(config: &ModelConfig<f64>, first: &str) -> (Vec<String>, Vec<usize>) {
    let grid = config.grid();
    let slots = grid.ascending_slots();
    let mut header = vec![first.to_string()];
    header.extend(slots.iter().map(|&s| format!("m_{}", grid.label(s))));
    (header, slots)
}

fn row_by_slots(t: f64, p: &[f64], slots: &[usize]) -> Vec<String> {
    std::iter::once(num(t))
        .chain(slots.iter().map(|&s| num(p[s])))
        .collect()
}

fn spec_numbers(spec: &RunSpec) -> (f64, f64) {
    let n = &spec.numerics;
    (n.t_final.expect("resolved"), n.sample_dt.expect("resolved"))
}

fn run_evolve(
    spec: &RunSpec,
    config: &ModelConfig<f64>,
    table: &AmplitudeTable<f64>,
    psi0: &PureState<f64>,
    out: &mut OutputDir,
) -> Result<Table, CliError> {
    let (t_final, sample_dt) = spec_numbers(spec);
    let fourier = Fourier::new(config.n_sites);
    let rho0 = DensityMatrix::from_pure(psi0, &fourier);
    let stepping = Stepping {
        t_final,
        dt: spec.numerics.dt.expect("resolved"),
        sample_dt,
        method: Method::Rk4,
    };
    let series = integrate(config, table, &rho0, &stepping)?;
    let (header, slots) = momentum_header(config, "t");
    out.csv(
        "diagonals.csv",
        &header,
        series
            .iter()
            .map(|r| row_by_slots(r.time, &r.diagonal().clamped().p, &slots)),
    )?;
    let mut diag = Table::new();
    let max_trace_err = series
        .iter()
        .map(|r| (r.rho.trace() - 1.0).norm())
        .fold(0.0, f64::max);
    diag.insert("max_trace_error".into(), Value::Float(max_trace_err));
    diag.insert(
        "max_hermiticity_error".into(),
        Value::Float(
            series
                .iter()
                .map(|r| r.rho.hermiticity_error())
                .fold(0.0, f64::max),
        ),
    );
    diag.insert(
        "final_max_offdiag".into(),
        Value::Float(series.last().map(|r| r.rho.max_offdiag()).unwrap_or(0.0)),
    );
    Ok(diag)
}

fn run_diagonal_exact(
    spec: &RunSpec,
    config: &ModelConfig<f64>,
    table: &AmplitudeTable<f64>,
    psi0: &PureState<f64>,
    out: &mut OutputDir,
) -> Result<Table, CliError> {
    let (t_final, sample_dt) = spec_numbers(spec);
    let gamma = config
        .rates
        .uniform()
        .expect("resolved spec has uniform rates");
    let fourier = Fourier::new(config.n_sites);
    let p0 = DensityMatrix::from_pure(psi0, &fourier).diagonal();
    let n_samples = (t_final / sample_dt + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=n_samples).map(|i| sample_dt * i as f64).collect();
    let sol = solve_diagonal_exact(table, &p0, gamma, &times)?;
    let (header, slots) = momentum_header(config, "t");
    out.csv(
        "diagonals.csv",
        &header,
        times
            .iter()
            .zip(&sol)
            .map(|(&t, p)| row_by_slots(t, &p.clamped().p, &slots)),
    )?;
    Ok(Table::new())
}

fn write_record(
    out: &mut OutputDir,
    config: &ModelConfig<f64>,
    rec: &TrajectoryRecord<f64>,
) -> Result<(), CliError> {
    let i = rec.index;
    let header: Vec<String> = ["t", "J", "IPR", "phi", "jumps"].map(String::from).to_vec();
    out.csv(
        &format!("trajectory_{i}.csv"),
        &header,
        rec.samples.iter().map(|s| {
            vec![
                num(s.time),
                num(s.current),
                num(s.ipr),
                num(s.phi),
                s.jumps_since_last.to_string(),
            ]
        }),
    )?;
    out.csv(
        &format!("jumps_{i}.csv"),
        &["t".to_string(), "site".to_string()],
        rec.jumps
            .iter()
            .map(|j| vec![num(j.time), (j.site + 1).to_string()]),
    )?;
    if rec.samples.first().is_some_and(|s| s.position.is_some()) {
        let mut header = vec!["t".to_string()];
        header.extend((1..=config.n_sites).map(|b| format!("site_{b}")));
        out.csv(
            &format!("trajectory_{i}_position.csv"),
            &header,
            rec.samples.iter().map(|s| {
                std::iter::once(num(s.time))
                    .chain(
                        s.position
                            .as_ref()
                            .expect("snapshot")
                            .iter()
                            .map(|&p| num(p)),
                    )
                    .collect()
            }),
        )?;
        let (header, slots) = momentum_header(config, "t");
        out.csv(
            &format!("trajectory_{i}_momentum.csv"),
            &header,
            rec.samples
                .iter()
                .map(|s| row_by_slots(s.time, s.momentum.as_ref().expect("snapshot"), &slots)),
        )?;
    }
    Ok(())
}

fn histogram_summary(values: &[f64], h: &Histogram<f64>) -> Table {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut t = Table::new();
    t.insert("samples".into(), Value::Integer(values.len() as i64));
    t.insert("mean".into(), Value::Float(mean));
    t.insert("standard_error".into(), Value::Float((var / n).sqrt()));
    t.insert("dip_ratio".into(), Value::Float(h.report.dip_ratio));
    t.insert(
        "central_bin_center".into(),
        Value::Float(h.center(h.report.central_bin)),
    );
    if let Some(b) = h.report.left_mode {
        t.insert("left_mode_center".into(), Value::Float(h.center(b)));
    }
    if let Some(b) = h.report.right_mode {
        t.insert("right_mode_center".into(), Value::Float(h.center(b)));
    }
    if let Some(m) = h.report.mean_left {
        t.insert("mean_left".into(), Value::Float(m));
    }
    if let Some(m) = h.report.mean_right {
        t.insert("mean_right".into(), Value::Float(m));
    }
    t
}

fn write_histogram(
    out: &mut OutputDir,
    name: &str,
    values: &[f64],
    bins: usize,
) -> Result<Table, CliError> {
    let h = histogram(values, bins)?;
    out.csv(
        name,
        &["center".to_string(), "count".to_string()],
        h.counts
            .iter()
            .enumerate()
            .map(|(b, c)| vec![num(h.center(b)), c.to_string()]),
    )?;
    Ok(histogram_summary(values, &h))
}

fn run_trajectories(
    spec: &RunSpec,
    config: &ModelConfig<f64>,
    table: &AmplitudeTable<f64>,
    psi0: &PureState<f64>,
    out: &mut OutputDir,
) -> Result<Table, CliError> {
    let (t_final, sample_dt) = spec_numbers(spec);
    let n = &spec.numerics;
    let traj = TrajectoryOptions {
        t_final,
        sample_dt,
        t_record_from: n.t_record_from.expect("resolved"),
        snapshots: n.snapshots.expect("resolved"),
    };
    let opts = EnsembleOptions {
        n_traj: n.n_traj.expect("resolved"),
        master_seed: spec.master_seed.expect("resolved"),
        trajectory: traj,
        keep_records: n.keep_records.expect("resolved"),
    };
    let stats: EnsembleStats<f64> = run_ensemble(config, table, psi0, &opts)?;

    let (header, slots) = momentum_header(config, "t");
    out.csv(
        "ensemble_momentum.csv",
        &header,
        stats
            .times
            .iter()
            .zip(&stats.mean_momentum)
            .map(|(&t, p)| row_by_slots(t, p, &slots)),
    )?;
    for rec in &stats.records {
        write_record(out, config, rec)?;
    }

    let hist_time = n.hist_time.expect("resolved");
    let idx = stats
        .times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - hist_time).abs().total_cmp(&(b.1 - hist_time).abs()))
        .map(|(i, _)| i)
        .ok_or_else(|| CliError::Internal("no samples recorded".into()))?;
    let bins = n.bins.expect("resolved");
    let mut diag = Table::new();
    diag.insert("hist_time".into(), Value::Float(stats.times[idx]));
    if opts.n_traj >= 2 {
        diag.insert(
            "J".into(),
            Value::Table(write_histogram(
                out,
                "hist_J.csv",
                &stats.currents[idx],
                bins,
            )?),
        );
        diag.insert(
            "IPR".into(),
            Value::Table(write_histogram(
                out,
                "hist_IPR.csv",
                &stats.iprs[idx],
                bins,
            )?),
        );
    } else {
        log::warn!("a single trajectory gives no histogram; hist_*.csv not written");
    }
    let jumps: usize = stats.jump_counts.iter().sum();
    diag.insert(
        "mean_jump_count".into(),
        Value::Float(jumps as f64 / opts.n_traj as f64),
    );
    Ok(diag)
}

fn run_correlate(
    spec: &RunSpec,
    config: &ModelConfig<f64>,
    table: &AmplitudeTable<f64>,
    out: &mut OutputDir,
) -> Result<Table, CliError> {
    let n = &spec.numerics;
    let opts = CorrelatorOptions {
        tau_max: n.tau_max.expect("resolved"),
        tau_step: n.tau_step.expect("resolved"),
        dt: n.dt.expect("resolved"),
    };
    let mut diag = Table::new();
    for &site in n.sites.as_ref().expect("resolved") {
        let c = correlator_ss(config, table, site - 1, &opts)?;
        out.csv(
            &format!("correlator_a{site}.csv"),
            &["tau", "C_norm", "Im_C"].map(String::from),
            (0..c.tau.len()).map(|i| {
                vec![
                    num(c.tau[i]),
                    num(c.normalized[i]),
                    num(c.normalized_imag[i]),
                ]
            }),
        )?;
        let mut t = Table::new();
        t.insert("max_imag".into(), Value::Float(c.max_imag));
        diag.insert(format!("a{site}"), Value::Table(t));
    }
    Ok(diag)
}

fn run_spectrum(
    spec: &RunSpec,
    config: &ModelConfig<f64>,
    table: &AmplitudeTable<f64>,
    psi0: &PureState<f64>,
    out: &mut OutputDir,
) -> Result<Table, CliError> {
    let (t_final, sample_dt) = spec_numbers(spec);
    let n = &spec.numerics;
    let opts = TrajectoryOptions {
        t_final,
        sample_dt,
        t_record_from: n.t_record_from.expect("resolved"),
        snapshots: false,
    };
    let engine = Unraveling::new(config, table)?;
    let rec = engine.run(psi0, &opts, spec.master_seed.expect("resolved"), 0)?;
    let phi = rec.angles();
    let y = peak_angle_series(&phi);
    out.csv(
        "peak_angle.csv",
        &["t", "phi", "y"].map(String::from),
        rec.samples
            .iter()
            .zip(&y)
            .map(|(s, &y)| vec![num(s.time), num(s.phi), num(y)]),
    )?;
    let welch = n.welch_segments.expect("resolved");
    let psd = power_spectral_density(
        &y,
        sample_dt,
        &PsdOptions {
            remove_mean: n.remove_mean.expect("resolved"),
            welch_segments: (welch > 1).then_some(welch),
            zero_pad: n.zero_pad.expect("resolved"),
        },
    )?;
    out.csv(
        "spectrum.csv",
        &["omega", "S"].map(String::from),
        (0..psd.one_sided_len()).map(|m| vec![num(psd.omega[m]), num(psd.power[m])]),
    )?;
    let mut diag = Table::new();
    diag.insert("peak_omega".into(), Value::Float(psd.peak_omega()));
    diag.insert(
        "group_velocity_omega".into(),
        Value::Float(4.0 * std::f64::consts::PI * config.t_hop.abs() / config.n_sites as f64),
    );
    diag.insert("samples".into(), Value::Integer(y.len() as i64));
    diag.insert("segment_len".into(), Value::Integer(psd.segment_len as i64));
    diag.insert("jumps".into(), Value::Integer(rec.jumps.len() as i64));
    Ok(diag)
}

fn run_info(spec: &RunSpec, config: &ModelConfig<f64>, summary: &RunSummary) -> Table {
    let grid = config.grid();
    let slots = grid.ascending_slots();
    let mut info = Table::new();
    info.insert(
        "version".into(),
        Value::String(env!("CARGO_PKG_VERSION").into()),
    );
    info.insert("kind".into(), Value::String(spec.kind().name().into()));
    info.insert(
        "reference_period".into(),
        Value::Float(config.reference_period()),
    );
    info.insert(
        "momentum_labels".into(),
        Value::Array(
            slots
                .iter()
                .map(|&s| Value::Integer(grid.label(s)))
                .collect(),
        ),
    );
    info.insert(
        "momentum_k".into(),
        Value::Array(slots.iter().map(|&s| Value::Float(grid.k(s))).collect()),
    );
    let mut conv = Table::new();
    for (k, v) in [
        (
            "units",
            "hbar = 1; energies, rates and inverse times share the unit of t_hop",
        ),
        ("sites", "1-based in configs and files"),
        (
            "momentum",
            "k = 2 pi m / N; momentum columns m_<m> in ascending m",
        ),
        ("basis", "psi_k = N^(-1/2) sum_b psi_b exp(+i k b)"),
        (
            "momentum_eigenstate",
            "position amplitudes exp(-i k b) / sqrt(N)",
        ),
        ("current", "J = sum_a Im(conj(psi_a) psi_(a+1))"),
        (
            "peak_angle",
            "phi = 2 pi j / N with j the 0-based argmax of |psi_b|^2, ties to the smallest j",
        ),
        (
            "rng",
            "ChaCha8 seeded by master_seed, stream = 0-based trajectory index",
        ),
        ("numbers", "shortest round-trip scientific notation"),
    ] {
        conv.insert(k.into(), Value::String(v.into()));
    }
    info.insert("conventions".into(), Value::Table(conv));
    info.insert(
        "files".into(),
        Value::Array(summary.files.iter().cloned().map(Value::String).collect()),
    );
    info.insert(
        "diagnostics".into(),
        Value::Table(summary.diagnostics.clone()),
    );
    info
}

fn execute_into(spec: &RunSpec, out: &mut OutputDir) -> Result<RunSummary, CliError> {
    let config = spec.model_config()?;
    let table = AmplitudeTable::build(&config)?;
    let psi0 = initial_state(spec, &config)?;
    let diagnostics = match spec.kind() {
        Kind::Evolve => run_evolve(spec, &config, &table, &psi0, out)?,
        Kind::DiagonalExact => run_diagonal_exact(spec, &config, &table, &psi0, out)?,
        Kind::Trajectories => run_trajectories(spec, &config, &table, &psi0, out)?,
        Kind::Correlate => run_correlate(spec, &config, &table, out)?,
        Kind::Spectrum => run_spectrum(spec, &config, &table, &psi0, out)?,
    };
    let summary = RunSummary {
        files: out.file_names(),
        diagnostics,
    };
    let mut doc = spec.to_toml()?;
    doc.insert(
        RUN_INFO_TABLE.into(),
        Value::Table(run_info(spec, &config, &summary)),
    );
    let text = toml::to_string(&doc).map_err(|e| CliError::Internal(e.to_string()))?;
    out.text(METADATA_FILE, &text)?;
    Ok(summary)
}

/// Runs a resolved spec into `dir`. On failure every file written by this
/// run is removed.
pub fn execute(spec: &RunSpec, dir: &Path) -> Result<RunSummary, CliError> {
    let mut out = OutputDir::create(dir)?;
    match execute_into(spec, &mut out) {
        Ok(s) => Ok(s),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}
