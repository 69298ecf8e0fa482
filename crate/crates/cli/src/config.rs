//! Run configuration and gains files.

use std::path::Path;

use jumpctl::channels::{validate_channel, ChannelConfig};
use jumpctl::closedloop::InitialMode;
use jumpctl::model::{matrix_from_rows, matrix_to_rows, ModelConfig, Rows};
use jumpctl::{MarkovChannel, MjlsModel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

/// Initial mode: a 1-based index or `"stationary"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeSpec {
    Index(usize),
    Named(String),
}

impl Default for ModeSpec {
    fn default() -> Self {
        ModeSpec::Named("stationary".into())
    }
}

impl ModeSpec {
    fn resolve(&self, what: &str, modes: usize) -> Result<InitialMode, String> {
        match self {
            ModeSpec::Named(s) if s == "stationary" => Ok(InitialMode::Stationary),
            ModeSpec::Named(s) => Err(format!(
                "{what}: expected a mode index or \"stationary\", got \"{s}\""
            )),
            ModeSpec::Index(i) if (1..=modes).contains(i) => Ok(InitialMode::Pinned(i - 1)),
            ModeSpec::Index(i) => Err(format!("{what}: mode {i} outside 1..={modes}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialConfig {
    /// Defaults to the zero vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Defaults to the zero vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xhat0: Option<Vec<f64>>,
    /// Actuation mode observed before the first step.
    #[serde(default)]
    pub theta0: ModeSpec,
    /// Sensing mode observed before the first step.
    #[serde(default)]
    pub eta0: ModeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: jumpctl::DEFAULT_TOL,
            max_iter: jumpctl::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub noise_on: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            trials: 1,
            seed: 0,
            noise_on: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub actuation_channel: ChannelConfig,
    pub sensing_channel: ChannelConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sim: SimConfig,
}

/// A configuration that passed validation.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: MjlsModel,
    pub actuation: MarkovChannel,
    pub sensing: MarkovChannel,
    pub x0: DVector<f64>,
    pub xhat0: DVector<f64>,
    pub theta_init: InitialMode,
    pub eta_init: InitialMode,
    pub solver: SolverConfig,
    pub sim: SimConfig,
}

fn channel_problems(
    name: &str,
    cfg: &ChannelConfig,
    out: &mut Vec<String>,
) -> Option<MarkovChannel> {
    let violations = validate_channel(cfg);
    if !violations.is_empty() {
        out.extend(violations.iter().map(|v| format!("{name}: {v}")));
        return None;
    }
    match MarkovChannel::from_config(cfg) {
        Ok(ch) => Some(ch),
        Err(e) => {
            out.push(format!("{name}: {e}"));
            None
        }
    }
}

fn state_vector(
    name: &str,
    v: &Option<Vec<f64>>,
    nx: usize,
    out: &mut Vec<String>,
) -> DVector<f64> {
    match v {
        None => DVector::zeros(nx),
        Some(v) if v.len() == nx && v.iter().all(|x| x.is_finite()) => {
            DVector::from_column_slice(v)
        }
        Some(v) => {
            out.push(format!(
                "initial.{name}: expected {nx} finite entries, got {}",
                v.len()
            ));
            DVector::zeros(nx)
        }
    }
}

impl RunConfig {
    /// Checks everything and collects every problem found.
    pub fn validate(&self) -> CliResult<Problem> {
        let mut out = Vec::new();
        let model = match MjlsModel::from_config(&self.model) {
            Ok(m) => Some(m),
            Err(jumpctl::Error::InvalidModel(msgs)) => {
                out.extend(msgs.into_iter().map(|m| format!("model: {m}")));
                None
            }
            Err(e) => {
                out.push(format!("model: {e}"));
                None
            }
        };
        let actuation = channel_problems("actuation_channel", &self.actuation_channel, &mut out);
        let sensing = channel_problems("sensing_channel", &self.sensing_channel, &mut out);
        if !(self.solver.tol > 0.0) {
            out.push(format!(
                "solver.tol must be positive, got {}",
                self.solver.tol
            ));
        }
        if self.solver.max_iter == 0 {
            out.push("solver.max_iter must be positive".into());
        }
        if self.sim.trials == 0 {
            out.push("sim.trials must be positive".into());
        }
        let (Some(model), Some(actuation), Some(sensing)) = (model, actuation, sensing) else {
            return Err(CliError::Validation(out));
        };
        let nx = model.nx();
        let x0 = state_vector("x0", &self.initial.x0, nx, &mut out);
        let xhat0 = state_vector("xhat0", &self.initial.xhat0, nx, &mut out);
        let theta_init = self
            .initial
            .theta0
            .resolve("initial.theta0", actuation.modes())
            .unwrap_or_else(|e| {
                out.push(e);
                InitialMode::Stationary
            });
        let eta_init = self
            .initial
            .eta0
            .resolve("initial.eta0", sensing.modes())
            .unwrap_or_else(|e| {
                out.push(e);
                InitialMode::Stationary
            });
        if !out.is_empty() {
            return Err(CliError::Validation(out));
        }
        Ok(Problem {
            model,
            actuation,
            sensing,
            x0,
            xhat0,
            theta_init,
            eta_init,
            solver: self.solver.clone(),
            sim: self.sim.clone(),
        })
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))
}

/// Hex SHA-256 of the raw bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses a configuration file, returning it with the hash of its bytes.
pub fn load_config(path: &Path) -> CliResult<(RunConfig, String)> {
    let bytes = read(path)?;
    let cfg = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok((cfg, content_hash(&bytes)))
}

/// Per-mode gains and, optionally, the Riccati solutions they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsFile {
    /// `F_1, ..., F_N`, each `n_u×n_x`.
    pub control_gains: Vec<Rows>,
    /// `M_1, ..., M_I`, each `n_x×n_y`.
    pub filter_gains: Vec<Rows>,
    #[serde(rename = "X", default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Rows>>,
    #[serde(rename = "Y", default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<Rows>>,
}

pub fn to_rows_list(ms: &[DMatrix<f64>]) -> Vec<Rows> {
    ms.iter().map(matrix_to_rows).collect()
}

fn from_rows_list(
    name: &str,
    rows: &[Rows],
    shape: (usize, usize),
    count: usize,
) -> CliResult<Vec<DMatrix<f64>>> {
    if rows.len() != count {
        return Err(CliError::validation(format!(
            "{name}: expected {count} matrices, got {}",
            rows.len()
        )));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let m = matrix_from_rows(r)
                .map_err(|e| CliError::validation(format!("{name}[{}]: {e}", i + 1)))?;
            if m.shape() != shape {
                return Err(CliError::validation(format!(
                    "{name}[{}]: expected {}x{}, got {}x{}",
                    i + 1,
                    shape.0,
                    shape.1,
                    m.nrows(),
                    m.ncols()
                )));
            }
            Ok(m)
        })
        .collect()
}

/// Gains resolved against a validated problem.
#[derive(Debug, Clone)]
pub struct Gains {
    pub f: Vec<DMatrix<f64>>,
    pub m: Vec<DMatrix<f64>>,
    pub x: Option<Vec<DMatrix<f64>>>,
    pub y: Option<Vec<DMatrix<f64>>>,
}

impl GainsFile {
    pub fn resolve(&self, p: &Problem) -> CliResult<Gains> {
        let (nx, nu, ny) = (p.model.nx(), p.model.nu(), p.model.ny());
        let (n_act, n_sens) = (p.actuation.modes(), p.sensing.modes());
        Ok(Gains {
            f: from_rows_list("control_gains", &self.control_gains, (nu, nx), n_act)?,
            m: from_rows_list("filter_gains", &self.filter_gains, (nx, ny), n_sens)?,
            x: self
                .x
                .as_ref()
                .map(|x| from_rows_list("X", x, (nx, nx), n_act))
                .transpose()?,
            y: self
                .y
                .as_ref()
                .map(|y| from_rows_list("Y", y, (nx, nx), n_sens))
                .transpose()?,
        })
    }
}

/// Reads gains either from a bare gains object or from the `gains` member
/// of a synthesis output.
pub fn load_gains(path: &Path) -> CliResult<GainsFile> {
    let bytes = read(path)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let inner = value.get("gains").cloned().unwrap_or(value);
    serde_json::from_value(inner)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}
