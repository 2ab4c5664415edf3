use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ringclock_cli::{execute, load_runspec, CliError, Kind};

#[derive(Parser)]
#[command(
    name = "ringclock",
    version,
    about = "Measured electron ring simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the master equation and write diagonals.csv.
    Evolve(Common),
    /// Closed-form diagonal relaxation, written as diagonals.csv.
    DiagonalExact(Common),
    /// Ensemble of quantum-jump trajectories.
    Trajectories(Common),
    /// Steady-state autocorrelation of the measurement operators.
    Correlate(Common),
    /// Peak-angle power spectrum of a single long trajectory.
    Spectrum(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `master_seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the trajectory ensemble.
    #[arg(long)]
    threads: Option<usize>,
    /// `key.path=value`, applied in order before validation.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(kind: Kind, args: Common) -> Result<(), CliError> {
    let mut overrides = args.overrides;
    if let Some(seed) = args.seed {
        overrides.push(format!("master_seed={seed}"));
    }
    if let Some(out) = &args.out {
        overrides.push(format!("output={:?}", out.to_string_lossy()));
    }
    let mut spec = load_runspec(&args.config, &overrides)?;
    match spec.kind {
        Some(k) if k != kind => {
            return Err(CliError::Config(format!(
                "config has kind = \"{}\" but the subcommand is {}",
                k.name(),
                kind.name()
            )))
        }
        _ => spec.kind = Some(kind),
    }
    let spec = spec.resolve()?;
    let dir = PathBuf::from(spec.output.clone().ok_or_else(|| {
        CliError::Config("output directory missing: pass --out or set output".into())
    })?);
    let go = || execute(&spec, &dir);
    let summary = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("--threads {n}: {e}")))?
            .install(go)?,
        None => go()?,
    };
    log::info!(
        "wrote {} files to {}",
        summary.files.len() + 1,
        dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Evolve(a) => (Kind::Evolve, a),
        Command::DiagonalExact(a) => (Kind::DiagonalExact, a),
        Command::Trajectories(a) => (Kind::Trajectories, a),
        Command::Correlate(a) => (Kind::Correlate, a),
        Command::Spectrum(a) => (Kind::Spectrum, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ringclock: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
