//! Machine-readable summaries written by every command.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::GainsFile;
use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    pub rho: f64,
    pub stabilizing: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiSummary {
    pub feasible: bool,
    pub schur_feasible: bool,
    pub discrepancy: bool,
    pub objective: f64,
    pub care_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    pub rho: f64,
    pub detecting: bool,
    /// `Σ π_m tr(Y_m)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    /// `Σ tr(Y_m)`, the stationary mean-square estimation error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_history: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lmi: Option<LmiSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lmi_feasible: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationSummary {
    pub verdict: String,
    pub rho_control: f64,
    pub rho_filter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_augmented: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub augmented_agrees: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    /// `"PASS within 3σ"` or `"FAIL"`.
    pub status: String,
    pub steps_checked: Vec<usize>,
    /// Largest `|empirical - analytic| / standard error` over the checks.
    pub worst_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub trials: usize,
    pub steps: usize,
    pub seed: u64,
    pub noise_on: bool,
    /// Time average of `E|z_k|²` after a 10% burn-in.
    pub avg_znorm2: f64,
    /// Time average of `E|e_k|²` after a 10% burn-in.
    pub avg_error_power: f64,
    /// `|x_T| / |x_0|` of trial 0, absent when `x_0 = 0`.
    pub final_state_ratio: Option<f64>,
    /// `|e_T| / |e_0|` of trial 0, absent when `e_0 = 0`.
    pub final_error_ratio: Option<f64>,
    /// Averages of `E|x_k|²` over consecutive windows of 50 steps.
    pub window_state_power: Vec<f64>,
    /// Averages of `E|e_k|²` over consecutive windows of 50 steps.
    pub window_error_power: Vec<f64>,
    pub max_bookkeeping_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_check: Option<MomentCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub versions: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: &str, config_hash: &str, seed: Option<u64>) -> Self {
        let versions = BTreeMap::from([
            ("jumpctl".to_string(), jumpctl::VERSION.to_string()),
            (
                "jumpctl-cli".to_string(),
                env!("CARGO_PKG_VERSION").to_string(),
            ),
        ]);
        Self {
            command: command.into(),
            config_hash: config_hash.into(),
            seed,
            versions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation: Option<SeparationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

/// What `synthesize` writes: the report plus everything `analyze` and
/// `simulate` need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOutput {
    pub report: SummaryReport,
    pub gains: GainsFile,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Solver(format!("serialization: {e}")))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))
}
