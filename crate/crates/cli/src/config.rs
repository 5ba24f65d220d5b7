//! Flat `key = value` run configuration.
//!
//! Every key can come from a config file or from a command-line flag of the
//! same name; flags win. Lists are comma-separated. The resolved
//! configuration is embedded in every JSON report.

use std::fmt::Display;
use std::str::FromStr;

use paneldid::diagnostics::{DEFAULT_CARRYOVER_PERIODS, DEFAULT_PLACEBO_PERIODS};
use paneldid::estimate::DEFAULT_MIN_SUPPORT;
use paneldid::imputation::ImputationSpec;
use paneldid::inference::DEFAULT_REPLICATES;
use paneldid::panel::ColumnMap;
use paneldid::sensitivity::DEFAULT_MBAR_GRID;
use paneldid::simulate::{Assignment, DgpSpec, EffectFn};
use paneldid::{EstimatorConfig, Method};
use serde::Serialize;

/// Recognized keys with their help text.
pub const KEYS: &[(&str, &str)] = &[
    ("input", "long-format panel CSV"),
    ("output-dir", "directory for reports and figures"),
    ("unit-col", "unit id column"),
    ("time-col", "time column"),
    ("outcome-col", "outcome column"),
    ("treatment-col", "binary treatment column"),
    ("cluster-col", "cluster column (defaults to units)"),
    ("covariates", "covariates entering the outcome model"),
    ("group-fe", "covariate whose values define an extra fixed effect"),
    ("unit-trends", "unit-specific linear trends in the imputation model"),
    ("recode-carryover", "periods after each exit recoded as treated (0 = off)"),
    ("estimators", "comma-separated estimator names or `all`"),
    ("bootstrap-reps", "cluster bootstrap replicates"),
    ("seed", "master seed for bootstrap and simulation"),
    ("alpha", "significance level"),
    ("min-support", "cells below which a period is flagged low-support"),
    ("placebo-periods", "relative periods held out by the placebo test"),
    ("carryover-periods", "post-exit periods held out by the carryover test"),
    ("mbar-grid", "relative-magnitude bounds for robust sets"),
    ("csdid-base-offset", "CSDID base period g - offset"),
    ("stacked-leads", "stacked DID pre-periods"),
    ("stacked-lags", "stacked DID post-periods"),
    ("panelmatch-lags", "PanelMatch history length"),
    ("panelmatch-leads", "PanelMatch leads"),
    ("twfe-leads", "TWFE event-study pre-periods"),
    ("twfe-lags", "TWFE event-study post-periods"),
    ("cs-target", "robust set from numbers: target estimate"),
    ("cs-delta0", "robust set from numbers: last placebo estimate"),
    ("cs-violation", "robust set from numbers: largest placebo violation"),
    ("cs-se", "robust set from numbers: SE of target minus delta0"),
    ("cs-horizon", "robust set from numbers: mean post horizon"),
    ("sim-preset", "`none` or `adversarial`"),
    ("sim-units", "simulated units"),
    ("sim-periods", "simulated periods"),
    ("sim-design", "block, staggered, hazard or reversal"),
    ("sim-block-start", "adoption rank for the block design"),
    ("sim-cohorts", "adoption ranks for the staggered design"),
    ("sim-hazard-rate", "per-period adoption probability"),
    ("sim-p-on", "reversal design: probability of switching in"),
    ("sim-p-off", "reversal design: probability of switching out"),
    ("sim-never-share", "share of never-treated units"),
    ("sim-effect-base", "effect at l = 1"),
    ("sim-effect-slope", "effect increment per period"),
    ("sim-unit-sd", "unit effect sd"),
    ("sim-time-sd", "period effect sd"),
    ("sim-noise-sd", "idiosyncratic noise sd"),
    ("sim-pretrend", "drift per period of ever-treated units"),
    ("sim-bias-shift", "constant shift of treated Y(0) from sim-bias-from on"),
    ("sim-bias-from", "relative period where the shift starts"),
    ("sim-anticipation-window", "periods of anticipation before adoption"),
    ("sim-anticipation-magnitude", "anticipation effect at l = 0"),
    ("sim-carryover-window", "periods of carryover after exit"),
    ("sim-carryover-magnitude", "carryover effect"),
    ("sim-missing-rate", "share of outcomes missing at random"),
    ("threads", "worker threads (0 = all cores); not part of reports"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub input: Option<String>,
    pub output_dir: String,
    pub unit_col: String,
    pub time_col: String,
    pub outcome_col: String,
    pub treatment_col: String,
    pub cluster_col: String,
    pub covariates: Vec<String>,
    pub group_fe: Option<String>,
    pub unit_trends: bool,
    pub recode_carryover: usize,
    pub estimators: Vec<String>,
    pub bootstrap_reps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub min_support: usize,
    pub placebo_periods: Vec<i64>,
    pub carryover_periods: usize,
    pub mbar_grid: Vec<f64>,
    pub csdid_base_offset: usize,
    pub stacked_leads: usize,
    pub stacked_lags: usize,
    pub panelmatch_lags: usize,
    pub panelmatch_leads: usize,
    pub twfe_leads: usize,
    pub twfe_lags: usize,
    pub cs_target: Option<f64>,
    pub cs_delta0: Option<f64>,
    pub cs_violation: Option<f64>,
    pub cs_se: Option<f64>,
    pub cs_horizon: Option<f64>,
    pub sim_preset: String,
    pub sim_units: usize,
    pub sim_periods: usize,
    pub sim_design: String,
    pub sim_block_start: usize,
    pub sim_cohorts: Vec<usize>,
    pub sim_hazard_rate: f64,
    pub sim_p_on: f64,
    pub sim_p_off: f64,
    pub sim_never_share: f64,
    pub sim_effect_base: f64,
    pub sim_effect_slope: f64,
    pub sim_unit_sd: f64,
    pub sim_time_sd: f64,
    pub sim_noise_sd: f64,
    pub sim_pretrend: f64,
    pub sim_bias_shift: f64,
    pub sim_bias_from: i64,
    pub sim_anticipation_window: usize,
    pub sim_anticipation_magnitude: f64,
    pub sim_carryover_window: usize,
    pub sim_carryover_magnitude: f64,
    pub sim_missing_rate: f64,
    /// Parallelism never changes results, so it stays out of reports.
    #[serde(skip)]
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cols = ColumnMap::default();
        let dgp = DgpSpec::default();
        let est = EstimatorConfig::default();
        Self {
            input: None,
            output_dir: ".".into(),
            unit_col: cols.unit,
            time_col: cols.time,
            outcome_col: cols.outcome,
            treatment_col: cols.treatment,
            cluster_col: cols.cluster,
            covariates: Vec::new(),
            group_fe: None,
            unit_trends: false,
            recode_carryover: 0,
            estimators: vec!["all".into()],
            bootstrap_reps: DEFAULT_REPLICATES,
            seed: 1,
            alpha: 0.05,
            min_support: DEFAULT_MIN_SUPPORT,
            placebo_periods: DEFAULT_PLACEBO_PERIODS.to_vec(),
            carryover_periods: DEFAULT_CARRYOVER_PERIODS,
            mbar_grid: DEFAULT_MBAR_GRID.to_vec(),
            csdid_base_offset: est.csdid_base_offset,
            stacked_leads: est.stacked_leads,
            stacked_lags: est.stacked_lags,
            panelmatch_lags: est.panelmatch_lags,
            panelmatch_leads: est.panelmatch_leads,
            twfe_leads: est.twfe_leads,
            twfe_lags: est.twfe_lags,
            cs_target: None,
            cs_delta0: None,
            cs_violation: None,
            cs_se: None,
            cs_horizon: None,
            sim_preset: "none".into(),
            sim_units: dgp.n_units,
            sim_periods: dgp.n_times,
            sim_design: "staggered".into(),
            sim_block_start: 5,
            sim_cohorts: vec![4, 5, 6, 7],
            sim_hazard_rate: 0.2,
            sim_p_on: 0.3,
            sim_p_off: 0.3,
            sim_never_share: dgp.never_treated_share,
            sim_effect_base: 1.0,
            sim_effect_slope: 0.0,
            sim_unit_sd: dgp.unit_fe_sd,
            sim_time_sd: dgp.time_fe_sd,
            sim_noise_sd: dgp.noise_sd,
            sim_pretrend: 0.0,
            sim_bias_shift: 0.0,
            sim_bias_from: 0,
            sim_anticipation_window: 0,
            sim_anticipation_magnitude: 0.0,
            sim_carryover_window: 0,
            sim_carryover_magnitude: 0.0,
            sim_missing_rate: 0.0,
            threads: 0,
        }
    }
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: Display,
{
    value.trim().parse().map_err(|e| format!("{key}: cannot parse {value:?}: {e}"))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String>
where
    T::Err: Display,
{
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| scalar(key, s)).collect()
}

fn optional(value: &str) -> Option<String> {
    let v = value.trim();
    (!v.is_empty() && v != "none").then(|| v.to_string())
}

fn flag(key: &str, value: &str) -> Result<bool, String> {
    match value.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        v => Err(format!("{key}: expected true or false, got {v:?}")),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "input" => self.input = optional(v),
            "output-dir" => self.output_dir = v.to_string(),
            "unit-col" => self.unit_col = v.to_string(),
            "time-col" => self.time_col = v.to_string(),
            "outcome-col" => self.outcome_col = v.to_string(),
            "treatment-col" => self.treatment_col = v.to_string(),
            "cluster-col" => self.cluster_col = v.to_string(),
            "covariates" => self.covariates = list(key, v)?,
            "group-fe" => self.group_fe = optional(v),
            "unit-trends" => self.unit_trends = flag(key, v)?,
            "recode-carryover" => self.recode_carryover = scalar(key, v)?,
            "estimators" => self.estimators = list(key, v)?,
            "bootstrap-reps" => self.bootstrap_reps = scalar(key, v)?,
            "seed" => self.seed = scalar(key, v)?,
            "alpha" => self.alpha = scalar(key, v)?,
            "min-support" => self.min_support = scalar(key, v)?,
            "placebo-periods" => self.placebo_periods = list(key, v)?,
            "carryover-periods" => self.carryover_periods = scalar(key, v)?,
            "mbar-grid" => self.mbar_grid = list(key, v)?,
            "csdid-base-offset" => self.csdid_base_offset = scalar(key, v)?,
            "stacked-leads" => self.stacked_leads = scalar(key, v)?,
            "stacked-lags" => self.stacked_lags = scalar(key, v)?,
            "panelmatch-lags" => self.panelmatch_lags = scalar(key, v)?,
            "panelmatch-leads" => self.panelmatch_leads = scalar(key, v)?,
            "twfe-leads" => self.twfe_leads = scalar(key, v)?,
            "twfe-lags" => self.twfe_lags = scalar(key, v)?,
            "cs-target" => self.cs_target = Some(scalar(key, v)?),
            "cs-delta0" => self.cs_delta0 = Some(scalar(key, v)?),
            "cs-violation" => self.cs_violation = Some(scalar(key, v)?),
            "cs-se" => self.cs_se = Some(scalar(key, v)?),
            "cs-horizon" => self.cs_horizon = Some(scalar(key, v)?),
            "sim-preset" => self.sim_preset = v.to_string(),
            "sim-units" => self.sim_units = scalar(key, v)?,
            "sim-periods" => self.sim_periods = scalar(key, v)?,
            "sim-design" => self.sim_design = v.to_string(),
            "sim-block-start" => self.sim_block_start = scalar(key, v)?,
            "sim-cohorts" => self.sim_cohorts = list(key, v)?,
            "sim-hazard-rate" => self.sim_hazard_rate = scalar(key, v)?,
            "sim-p-on" => self.sim_p_on = scalar(key, v)?,
            "sim-p-off" => self.sim_p_off = scalar(key, v)?,
            "sim-never-share" => self.sim_never_share = scalar(key, v)?,
            "sim-effect-base" => self.sim_effect_base = scalar(key, v)?,
            "sim-effect-slope" => self.sim_effect_slope = scalar(key, v)?,
            "sim-unit-sd" => self.sim_unit_sd = scalar(key, v)?,
            "sim-time-sd" => self.sim_time_sd = scalar(key, v)?,
            "sim-noise-sd" => self.sim_noise_sd = scalar(key, v)?,
            "sim-pretrend" => self.sim_pretrend = scalar(key, v)?,
            "sim-bias-shift" => self.sim_bias_shift = scalar(key, v)?,
            "sim-bias-from" => self.sim_bias_from = scalar(key, v)?,
            "sim-anticipation-window" => self.sim_anticipation_window = scalar(key, v)?,
            "sim-anticipation-magnitude" => self.sim_anticipation_magnitude = scalar(key, v)?,
            "sim-carryover-window" => self.sim_carryover_window = scalar(key, v)?,
            "sim-carryover-magnitude" => self.sim_carryover_magnitude = scalar(key, v)?,
            "sim-missing-rate" => self.sim_missing_rate = scalar(key, v)?,
            "threads" => self.threads = scalar(key, v)?,
            _ => return Err(format!("unknown configuration key {key:?}")),
        }
        Ok(())
    }

    /// Parses a config file body: one `key = value` per line, `#` comments.
    pub fn apply_file(&mut self, text: &str) -> Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| format!("config line {}: expected `key = value`", n + 1))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(format!("config line {}: key {key:?} set twice", n + 1));
            }
            self.set(key, value).map_err(|e| format!("config line {}: {e}", n + 1))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.bootstrap_reps < 2 {
            return Err("bootstrap-reps must be at least 2".into());
        }
        if self.mbar_grid.iter().any(|m| m.is_nan() || *m < 0.0) {
            return Err("mbar-grid values must be nonnegative".into());
        }
        if self.mbar_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err("mbar-grid must be sorted ascending".into());
        }
        Ok(())
    }

    pub fn columns(&self) -> ColumnMap {
        ColumnMap {
            unit: self.unit_col.clone(),
            time: self.time_col.clone(),
            outcome: self.outcome_col.clone(),
            treatment: self.treatment_col.clone(),
            cluster: self.cluster_col.clone(),
        }
    }

    pub fn imputation_spec(&self) -> ImputationSpec {
        ImputationSpec { covariates: self.covariates.clone(), group_fe: self.group_fe.clone(), unit_trends: self.unit_trends }
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            imputation: self.imputation_spec(),
            csdid_base_offset: self.csdid_base_offset,
            stacked_leads: self.stacked_leads,
            stacked_lags: self.stacked_lags,
            panelmatch_lags: self.panelmatch_lags,
            panelmatch_leads: self.panelmatch_leads,
            twfe_leads: self.twfe_leads,
            twfe_lags: self.twfe_lags,
            min_support: self.min_support,
        }
    }

    /// Requested estimators; `all` expands to every method. The flag tells
    /// whether the list was explicit.
    pub fn methods(&self) -> Result<(Vec<Method>, bool), String> {
        if self.estimators.iter().any(|e| e == "all") {
            return Ok((Method::ALL.to_vec(), false));
        }
        let mut out = Vec::new();
        for name in &self.estimators {
            let m = Method::parse(name).ok_or_else(|| {
                let known: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                format!("unknown estimator {name:?}; expected one of {}", known.join(", "))
            })?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err("no estimators requested".into());
        }
        Ok((out, true))
    }

    pub fn dgp(&self) -> Result<DgpSpec, String> {
        let assignment = match self.sim_design.as_str() {
            "block" => Assignment::Block { t0: self.sim_block_start },
            "staggered" => Assignment::Staggered { cohorts: self.sim_cohorts.clone() },
            "hazard" => Assignment::Hazard { rate: self.sim_hazard_rate },
            "reversal" => Assignment::Reversal { p_on: self.sim_p_on, p_off: self.sim_p_off },
            d => return Err(format!("sim-design: unknown design {d:?}")),
        };
        let effect = if self.sim_effect_slope == 0.0 {
            EffectFn::Constant { value: self.sim_effect_base }
        } else {
            EffectFn::Ramp { base: self.sim_effect_base, slope: self.sim_effect_slope }
        };
        Ok(DgpSpec {
            n_units: self.sim_units,
            n_times: self.sim_periods,
            assignment,
            never_treated_share: self.sim_never_share,
            effect,
            unit_fe_sd: self.sim_unit_sd,
            time_fe_sd: self.sim_time_sd,
            noise_sd: self.sim_noise_sd,
            pretrend_slope: self.sim_pretrend,
            anticipation_window: self.sim_anticipation_window,
            anticipation_magnitude: self.sim_anticipation_magnitude,
            carryover_window: self.sim_carryover_window,
            carryover_magnitude: self.sim_carryover_magnitude,
            bias_shift: self.sim_bias_shift,
            bias_from: self.sim_bias_from,
            missing_rate: self.sim_missing_rate,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_settable_and_reported() {
        let cfg = RunConfig::default();
        let json = serde_json::to_value(&cfg).unwrap();
        let map = json.as_object().unwrap();
        for (key, _) in KEYS {
            if *key != "threads" {
                assert!(map.contains_key(*key), "{key} missing from report");
            }
        }
        assert_eq!(map.len(), KEYS.len() - 1);
        let mut c = RunConfig::default();
        assert!(c.set("threads", "2").is_ok());
        assert!(c.set("no-such-key", "1").is_err());
    }

    #[test]
    fn file_parsing() {
        let mut c = RunConfig::default();
        c.apply_file("# comment\nseed = 7\nplacebo-periods = -1, 0  # trailing\n\nunit-trends = yes\nmbar-grid=0,1,2\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.placebo_periods, vec![-1, 0]);
        assert!(c.unit_trends);
        assert_eq!(c.mbar_grid, vec![0.0, 1.0, 2.0]);
        assert!(RunConfig::default().apply_file("seed 7").is_err());
        assert!(RunConfig::default().apply_file("seed = x").is_err());
        assert!(RunConfig::default().apply_file("seed = 1\nseed = 2").is_err());
    }

    #[test]
    fn estimator_lists() {
        let mut c = RunConfig::default();
        assert_eq!(c.methods().unwrap(), (Method::ALL.to_vec(), false));
        c.set("estimators", "imputation, csdid-notyet").unwrap();
        assert_eq!(c.methods().unwrap(), (vec![Method::Imputation, Method::CsdidNotyet], true));
        c.set("estimators", "bogus").unwrap();
        assert!(c.methods().is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.alpha = 1.5;
        assert!(c.validate().is_err());
        let c = RunConfig { mbar_grid: vec![1.0, 0.5], ..RunConfig::default() };
        assert!(c.validate().is_err());
    }
}
