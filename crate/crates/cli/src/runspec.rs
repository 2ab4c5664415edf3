//! Run configuration: TOML grammar, overrides, defaults and validation.
//!
//! ```toml
//! kind = "trajectories"          # evolve | diagonal-exact | trajectories | correlate | spectrum
//! master_seed = 7                # required for trajectories and spectrum
//! output = "out/hist"            # optional; --out wins
//!
//! [model]
//! n_sites = 100
//! t_hop = 25.0
//! sigma = 10.0
//! gamma = 1.0                    # or: rates = [..] with one entry per site
//!
//! [initial]
//! state = "momentum"             # momentum | uniform-position | position
//! k0 = 0.0                       # momentum only, must lie on the grid
//! # site = 1                     # position only, 1-based
//!
//! [numerics]
//! t_final = 500.0
//! n_traj = 1000
//! ```
//!
//! Which `[numerics]` keys apply depends on `kind`; see [`Numerics`]. Keys
//! that do not apply are rejected. Every default is written back into the
//! resolved spec, so the `metadata.toml` of a run parses to the same spec.

use std::path::Path;

use serde::{Deserialize, Serialize};

use ringclock::liouville::max_stable_dt;
use ringclock::model::{ModelConfig, Rates};

use crate::error::CliError;

/// Table in `metadata.toml` that carries derived run information. Ignored
/// when a metadata file is parsed back as a spec.
pub const RUN_INFO_TABLE: &str = "run_info";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Evolve,
    DiagonalExact,
    Trajectories,
    Correlate,
    Spectrum,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Evolve => "evolve",
            Kind::DiagonalExact => "diagonal-exact",
            Kind::Trajectories => "trajectories",
            Kind::Correlate => "correlate",
            Kind::Spectrum => "spectrum",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Kind::Trajectories | Kind::Spectrum)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n_sites: usize,
    pub t_hop: f64,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    Momentum {
        k0: f64,
    },
    UniformPosition,
    /// 1-based site.
    Position {
        site: usize,
    },
}

/// Numerical parameters. All optional in the input; [`RunSpec::resolve`]
/// fills defaults for the keys used by the kind and rejects the others.
///
/// | key | kinds | default |
/// |---|---|---|
/// | `t_final` | all but correlate | required |
/// | `dt` | evolve, correlate | `0.05 min(1/gamma, 1/(2 t_hop))` |
/// | `sample_dt` | all but correlate | `t_final / 100` (spectrum: `T / 50`) |
/// | `t_record_from` | trajectories, spectrum | `0` |
/// | `n_traj` | trajectories | required |
/// | `keep_records` | trajectories | `min(n_traj, 10)` |
/// | `snapshots` | trajectories | `false` |
/// | `bins` | trajectories | `40` |
/// | `hist_time` | trajectories | `t_final` |
/// | `tau_max` | correlate | required |
/// | `tau_step` | correlate | `tau_max / 400` |
/// | `sites` | correlate | `[1]` |
/// | `remove_mean` | spectrum | `true` |
/// | `welch_segments` | spectrum | `1` (plain periodogram) |
/// | `zero_pad` | spectrum | `1` |
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_record_from: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_records: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hist_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remove_mean: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub welch_segments: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_pad: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub model: ModelSpec,
    pub initial: InitialState,
    #[serde(default)]
    pub numerics: Numerics,
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses TOML text into a table, dropping the reserved run-info table.
pub fn parse_table(text: &str) -> Result<toml::Table, CliError> {
    let mut table: toml::Table = text.parse().map_err(|e| cfg_err(format!("{e}")))?;
    table.remove(RUN_INFO_TABLE);
    Ok(table)
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `key.path=value`; the value is read as TOML, falling back to a
/// bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        cfg_err(format!(
            "override '{assignment}' is not of the form key=value"
        ))
    })?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(cfg_err(format!("override key '{path}' is malformed")));
    }
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| cfg_err(format!("override key '{path}': '{k}' is not a table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

pub fn spec_from_table(table: toml::Table) -> Result<RunSpec, CliError> {
    RunSpec::deserialize(toml::Value::Table(table)).map_err(|e| cfg_err(e.to_string()))
}

/// Parses a spec without resolving it.
pub fn parse_runspec(text: &str) -> Result<RunSpec, CliError> {
    spec_from_table(parse_table(text)?)
}

pub fn load_runspec(path: &Path, overrides: &[String]) -> Result<RunSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
    let mut table = parse_table(&text)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    spec_from_table(table)
}

fn require<T: Copy>(v: Option<T>, key: &str, kind: Kind) -> Result<T, CliError> {
    v.ok_or_else(|| {
        cfg_err(format!(
            "numerics.{key} is required for kind {}",
            kind.name()
        ))
    })
}

fn positive(v: f64, key: &str) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(cfg_err(format!(
            "{key} must be positive and finite, got {v}"
        )))
    }
}

fn non_negative(v: f64, key: &str) -> Result<f64, CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(cfg_err(format!(
            "{key} must be non-negative and finite, got {v}"
        )))
    }
}

impl RunSpec {
    pub fn kind(&self) -> Kind {
        self.kind.expect("resolved spec has a kind")
    }

    pub fn model_config(&self) -> Result<ModelConfig<f64>, CliError> {
        let m = &self.model;
        let rates = match (m.gamma, &m.rates) {
            (Some(g), None) => Rates::Uniform(g),
            (None, Some(r)) => Rates::PerSite(r.clone()),
            (None, None) => return Err(cfg_err("model.gamma or model.rates is required")),
            (Some(_), Some(_)) => {
                return Err(cfg_err(
                    "model.gamma and model.rates are mutually exclusive",
                ))
            }
        };
        ModelConfig::new(m.n_sites, m.t_hop, m.sigma, rates)
            .map_err(|e| cfg_err(format!("model: {e}")))
    }

    /// Validates the spec for its kind and records every default.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let kind = self.kind.ok_or_else(|| cfg_err("kind is required"))?;
        let config = self.model_config()?;
        let uniform = config.rates.uniform().is_some();
        if !uniform && kind != Kind::Evolve {
            return Err(cfg_err(format!(
                "model.rates (per-site) is only supported by kind evolve, not {}",
                kind.name()
            )));
        }
        match &self.initial {
            InitialState::Momentum { k0 } => {
                config.grid().slot_of_k(*k0).map_err(|_| {
                    cfg_err(format!(
                        "initial.k0 = {k0} is not on the momentum grid 2 pi m / N"
                    ))
                })?;
            }
            InitialState::Position { site } => {
                if *site < 1 || *site > config.n_sites {
                    return Err(cfg_err(format!(
                        "initial.site = {site} outside 1..={}",
                        config.n_sites
                    )));
                }
            }
            InitialState::UniformPosition => {}
        }
        if kind.is_stochastic() {
            if self.master_seed.is_none() {
                return Err(cfg_err(format!(
                    "master_seed is required for kind {}",
                    kind.name()
                )));
            }
        } else if self.master_seed.is_some() {
            return Err(cfg_err(format!(
                "master_seed is not used by kind {}",
                kind.name()
            )));
        }

        let n = std::mem::take(&mut self.numerics);
        let allowed: &[&str] = match kind {
            Kind::Evolve => &["t_final", "dt", "sample_dt"],
            Kind::DiagonalExact => &["t_final", "sample_dt"],
            Kind::Trajectories => &[
                "t_final",
                "sample_dt",
                "t_record_from",
                "n_traj",
                "keep_records",
                "snapshots",
                "bins",
                "hist_time",
            ],
            Kind::Correlate => &["dt", "tau_max", "tau_step", "sites"],
            Kind::Spectrum => &[
                "t_final",
                "sample_dt",
                "t_record_from",
                "remove_mean",
                "welch_segments",
                "zero_pad",
            ],
        };
        let given = toml::Value::try_from(&n).map_err(|e| CliError::Internal(e.to_string()))?;
        if let Some(t) = given.as_table() {
            if let Some(k) = t.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(cfg_err(format!(
                    "numerics.{k} is not used by kind {}",
                    kind.name()
                )));
            }
        }

        let mut r = Numerics::default();
        let max_dt = max_stable_dt(&config);
        if allowed.contains(&"t_final") {
            r.t_final = Some(positive(
                require(n.t_final, "t_final", kind)?,
                "numerics.t_final",
            )?);
        }
        if allowed.contains(&"dt") {
            let dt = positive(n.dt.unwrap_or(max_dt), "numerics.dt")?;
            if dt > max_dt * (1.0 + 1e-9) {
                return Err(cfg_err(format!(
                    "numerics.dt = {dt} exceeds 0.05 min(1/gamma, 1/(2 t_hop)) = {max_dt}"
                )));
            }
            r.dt = Some(dt);
        }
        if allowed.contains(&"sample_dt") {
            let t_final = r.t_final.expect("set above");
            let default = if kind == Kind::Spectrum {
                config.reference_period() / 50.0
            } else {
                t_final / 100.0
            };
            let s = positive(n.sample_dt.unwrap_or(default), "numerics.sample_dt")?;
            if s > t_final {
                return Err(cfg_err("numerics.sample_dt exceeds numerics.t_final"));
            }
            r.sample_dt = Some(s);
        }
        if allowed.contains(&"t_record_from") {
            let t0 = non_negative(n.t_record_from.unwrap_or(0.0), "numerics.t_record_from")?;
            if t0 > r.t_final.expect("set above") {
                return Err(cfg_err("numerics.t_record_from exceeds numerics.t_final"));
            }
            r.t_record_from = Some(t0);
        }
        if kind == Kind::Trajectories {
            let n_traj = require(n.n_traj, "n_traj", kind)?;
            if n_traj == 0 {
                return Err(cfg_err("numerics.n_traj must be at least 1"));
            }
            r.n_traj = Some(n_traj);
            let keep = n.keep_records.unwrap_or(n_traj.min(10));
            if keep > n_traj {
                return Err(cfg_err("numerics.keep_records exceeds numerics.n_traj"));
            }
            r.keep_records = Some(keep);
            r.snapshots = Some(n.snapshots.unwrap_or(false));
            let bins = n.bins.unwrap_or(40);
            if bins == 0 {
                return Err(cfg_err("numerics.bins must be at least 1"));
            }
            r.bins = Some(bins);
            let t_final = r.t_final.expect("set above");
            let ht = n.hist_time.unwrap_or(t_final);
            let (t0, sdt) = (r.t_record_from.expect("set"), r.sample_dt.expect("set"));
            let steps = ht / sdt;
            if ht < t0 || ht > t_final || (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                return Err(cfg_err(format!(
                    "numerics.hist_time = {ht} must be a recorded sample time (multiple of sample_dt in [t_record_from, t_final])"
                )));
            }
            r.hist_time = Some(ht);
        }
        if kind == Kind::Correlate {
            let tau_max = non_negative(require(n.tau_max, "tau_max", kind)?, "numerics.tau_max")?;
            r.tau_max = Some(tau_max);
            let default_step = if tau_max > 0.0 { tau_max / 400.0 } else { 1.0 };
            r.tau_step = Some(positive(
                n.tau_step.unwrap_or(default_step),
                "numerics.tau_step",
            )?);
            let sites = n.sites.unwrap_or_else(|| vec![1]);
            if sites.is_empty() {
                return Err(cfg_err("numerics.sites must not be empty"));
            }
            if let Some(s) = sites.iter().find(|&&s| s < 1 || s > config.n_sites) {
                return Err(cfg_err(format!(
                    "numerics.sites entry {s} outside 1..={}",
                    config.n_sites
                )));
            }
            r.sites = Some(sites);
        }
        if kind == Kind::Spectrum {
            r.remove_mean = Some(n.remove_mean.unwrap_or(true));
            let w = n.welch_segments.unwrap_or(1);
            let z = n.zero_pad.unwrap_or(1);
            if w == 0 || z == 0 {
                return Err(cfg_err(
                    "numerics.welch_segments and numerics.zero_pad must be at least 1",
                ));
            }
            r.welch_segments = Some(w);
            r.zero_pad = Some(z);
        }
        self.numerics = r;
        Ok(self)
    }

    pub fn to_toml(&self) -> Result<toml::Table, CliError> {
        match toml::Value::try_from(self).map_err(|e| CliError::Internal(e.to_string()))? {
            toml::Value::Table(t) => Ok(t),
            _ => Err(CliError::Internal(
                "spec did not serialize to a table".into(),
            )),
        }
    }
}
