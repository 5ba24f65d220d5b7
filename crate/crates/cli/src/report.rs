//! JSON report types. Every report is an envelope
//! `{tool, version, command, config, result}`; bootstrap draws are
//! summarized rather than dumped.

use serde::Serialize;

use paneldid::diagnostics::{CarryoverEstimate, EventStudyTable, FTest, PlaceboEstimate};
use paneldid::did::BaconDecomposition;
use paneldid::inference::{BootstrapDraws, WaldTest};
use paneldid::panel::PeriodCounts;
use paneldid::sensitivity::RobustCs;
use paneldid::simulate::TrueEstimands;
use paneldid::{EffectEstimates, Method};

use crate::config::RunConfig;

pub const TOOL: &str = "paneldid";

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    result: &'a T,
}

/// Pretty JSON with a trailing newline. Non-finite numbers become `null`.
pub fn render<T: Serialize>(command: &str, config: &RunConfig, result: &T) -> Vec<u8> {
    let env = Envelope { tool: TOOL, version: env!("CARGO_PKG_VERSION"), command, config, result };
    let mut out = serde_json::to_vec_pretty(&env).expect("report types serialize");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub master_seed: u64,
    pub replicates: usize,
    pub failed: usize,
    /// First few failure reasons, in replicate order.
    pub failure_examples: Vec<String>,
}

impl From<&BootstrapDraws> for BootstrapSummary {
    fn from(d: &BootstrapDraws) -> Self {
        Self {
            master_seed: d.master_seed,
            replicates: d.replicates,
            failed: d.failed.len(),
            failure_examples: d.failed.iter().take(3).map(|f| format!("replicate {}: {}", f.replicate, f.reason)).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CohortCount {
    /// Time label of first adoption, or `never`, `left-censored`, `unknown`.
    pub cohort: String,
    pub units: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodRow {
    pub time: String,
    #[serde(flatten)]
    pub counts: PeriodCounts,
}

#[derive(Debug, Clone, Serialize)]
pub struct InspectResult {
    pub n_units: usize,
    pub n_times: usize,
    pub n_clusters: usize,
    pub setting: String,
    pub balanced: bool,
    pub missing_cells: usize,
    pub covariates: Vec<String>,
    pub treated_cells: usize,
    pub control_cells: usize,
    pub cohorts: Vec<CohortCount>,
    pub per_period: Vec<PeriodRow>,
    pub always_treated: Vec<String>,
    pub gap_flagged: Vec<String>,
    pub reversal_units: Vec<String>,
    pub available_estimators: Vec<Method>,
    pub se_guidance: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicRow {
    pub l: i64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub n_cells: usize,
    pub low_support: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub method: Method,
    pub estimand: &'static str,
    pub status: RowStatus,
    pub att: Option<f64>,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    /// Cluster-robust SE (TWFE only).
    pub analytic_se: Option<f64>,
    pub n_treated_cells: Option<usize>,
    pub dynamic: Vec<DynamicRow>,
    pub bootstrap: Option<BootstrapSummary>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

impl EstimateRow {
    pub fn empty(method: Method, status: RowStatus, error: String) -> Self {
        Self {
            method,
            estimand: method.estimand(),
            status,
            att: None,
            se: None,
            ci: None,
            analytic_se: None,
            n_treated_cells: None,
            dynamic: Vec::new(),
            bootstrap: None,
            warnings: Vec::new(),
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    pub setting: String,
    pub n_units: usize,
    pub n_times: usize,
    pub n_clusters: usize,
    pub confidence_level: f64,
    pub se_guidance: String,
    pub rows: Vec<EstimateRow>,
    pub bacon: Option<BaconDecomposition>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlaceboSummary {
    pub estimate: PlaceboEstimate,
    pub delta_se: Vec<f64>,
    pub att_se: f64,
    pub joint: WaldTest,
    pub bootstrap: BootstrapSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct CarryoverSummary {
    pub estimate: CarryoverEstimate,
    pub se: Vec<f64>,
    pub joint: WaldTest,
    pub bootstrap: BootstrapSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseResult {
    pub setting: String,
    pub estimates: EffectEstimates,
    pub event_study: EventStudyTable,
    pub f_test: Option<FTest>,
    pub placebo: Option<PlaceboSummary>,
    pub carryover: Option<CarryoverSummary>,
    pub pt_suspect: bool,
    pub carryover_suspect: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityResult {
    /// `placebo-bootstrap` when computed from data, `inputs` when from the
    /// `cs-*` keys.
    pub source: &'static str,
    pub analysis: RobustCs,
    pub placebo: Option<PlaceboSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruthCellRow {
    pub unit: String,
    pub time: String,
    pub treated: bool,
    pub y0: f64,
    pub y1: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateResult {
    pub preset: String,
    pub setting: String,
    pub truth: TrueEstimands,
    pub cells: Vec<TruthCellRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

/// Fixed-width comparison table for the terminal.
pub fn estimate_table(res: &EstimateResult) -> String {
    let mut out = format!(
        "{:<14} {:>10} {:>10} {:>23}  {}\n",
        "estimator",
        "ATT",
        "SE",
        format!("{:.0}% CI", 100.0 * res.confidence_level),
        "status"
    );
    for r in &res.rows {
        let ci = r.ci.map_or_else(|| "-".into(), |(a, b)| format!("[{a:.4}, {b:.4}]"));
        let status = match (r.status, &r.error) {
            (RowStatus::Ok, _) => "ok".to_string(),
            (_, Some(e)) => e.clone(),
            (s, None) => format!("{s:?}").to_lowercase(),
        };
        out.push_str(&format!("{:<14} {:>10} {:>10} {:>23}  {}\n", r.method.name(), fmt_opt(r.att), fmt_opt(r.se), ci, status));
    }
    out
}
