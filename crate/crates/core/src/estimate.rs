//! Estimator-independent result types and the dispatch used by front ends.

use serde::Serialize;

use crate::did::{csdid, did_multiple, iw, panel_match, stacked_did, Comparison, CsdidOptions};
use crate::error::{Error, Result};
use crate::fe::{twfe_att, twfe_event_study};
use crate::imputation::{imputation, ImputationSpec};
use crate::panel::{compute_event_structure, PanelDataset, SettingClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Twfe,
    Imputation,
    CsdidNever,
    CsdidNotyet,
    Iw,
    Stacked,
    #[serde(rename = "panelmatch")]
    PanelMatch,
    DidMultiple,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Twfe,
        Method::Imputation,
        Method::CsdidNever,
        Method::CsdidNotyet,
        Method::Iw,
        Method::Stacked,
        Method::PanelMatch,
        Method::DidMultiple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Twfe => "twfe",
            Method::Imputation => "imputation",
            Method::CsdidNever => "csdid-never",
            Method::CsdidNotyet => "csdid-notyet",
            Method::Iw => "iw",
            Method::Stacked => "stacked",
            Method::PanelMatch => "panelmatch",
            Method::DidMultiple => "did-multiple",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    /// What the scalar `att` field estimates.
    pub fn estimand(self) -> &'static str {
        match self {
            Method::Twfe => "static TWFE coefficient",
            Method::Imputation | Method::CsdidNever | Method::CsdidNotyet | Method::Iw => "ATT over treated cells",
            Method::Stacked => "variance-weighted pooled effect",
            Method::PanelMatch => "mean of short-run effects l = 1..F",
            Method::DidMultiple => "contemporaneous switching effect",
        }
    }

    /// Only TWFE, imputation and PanelMatch-type estimators handle reversals.
    pub fn allows_reversal(self) -> bool {
        matches!(self, Method::Twfe | Method::Imputation | Method::PanelMatch | Method::DidMultiple)
    }

    /// Relative period normalized to zero, if the method has one.
    pub fn reference_period(self) -> Option<i64> {
        match self {
            Method::Imputation => None,
            _ => Some(0),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicEffect {
    pub l: i64,
    pub estimate: f64,
    /// Treated cells (or focal observations) supporting the estimate.
    pub n_cells: usize,
    /// Fewer supporting cells than the reporting threshold.
    pub low_support: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EffectEstimates {
    pub method: Method,
    pub att: f64,
    pub n_treated_cells: usize,
    /// Sorted by `l`.
    pub dynamic: Vec<DynamicEffect>,
    pub warnings: Vec<String>,
}

impl EffectEstimates {
    pub fn dynamic_at(&self, l: i64) -> Option<&DynamicEffect> {
        self.dynamic.iter().find(|d| d.l == l)
    }

    /// `[att, tau_l for l in ls]`; periods absent from this estimate are NaN,
    /// which keeps bootstrap replicates aligned with the full-sample labels.
    pub fn statistic_vector(&self, ls: &[i64]) -> Vec<f64> {
        std::iter::once(self.att).chain(ls.iter().map(|&l| self.dynamic_at(l).map_or(f64::NAN, |d| d.estimate))).collect()
    }

    pub fn periods(&self) -> Vec<i64> {
        self.dynamic.iter().map(|d| d.l).collect()
    }
}

/// Reporting threshold for supporting cells.
pub const DEFAULT_MIN_SUPPORT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorConfig {
    pub imputation: ImputationSpec,
    /// CSDID base period offset: base = g - offset.
    pub csdid_base_offset: usize,
    pub stacked_leads: usize,
    pub stacked_lags: usize,
    pub panelmatch_lags: usize,
    pub panelmatch_leads: usize,
    /// TWFE event-study window.
    pub twfe_leads: usize,
    pub twfe_lags: usize,
    pub min_support: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            imputation: ImputationSpec::default(),
            csdid_base_offset: 1,
            stacked_leads: 3,
            stacked_lags: 3,
            panelmatch_lags: 4,
            panelmatch_leads: 4,
            twfe_leads: 3,
            twfe_lags: 3,
            min_support: DEFAULT_MIN_SUPPORT,
        }
    }
}

pub(crate) fn flag_support(dynamic: &mut [DynamicEffect], min_support: usize) {
    for d in dynamic {
        d.low_support = d.n_cells < min_support;
    }
}

/// Checks that `method` may run on the dataset's setting class.
pub fn check_setting(method: Method, setting: SettingClass) -> Result<()> {
    if setting.has_reversal() && !method.allows_reversal() {
        return Err(Error::RequiresStaggered(format!(
            "{method} needs staggered adoption without reversals, but the data are in the {setting} setting; use twfe, imputation, panelmatch or did-multiple"
        )));
    }
    Ok(())
}

/// Runs one estimator with the given configuration.
pub fn run_estimator(ds: &PanelDataset, method: Method, cfg: &EstimatorConfig) -> Result<EffectEstimates> {
    let es = compute_event_structure(ds);
    check_setting(method, es.setting())?;
    let mut out = match method {
        Method::Twfe => {
            let att = twfe_att(ds)?;
            let mut warnings = Vec::new();
            let dynamic = match twfe_event_study(ds, cfg.twfe_leads, cfg.twfe_lags) {
                Ok(study) => {
                    warnings.extend(study.omitted.iter().map(|o| format!("event study: {o}")));
                    study
                        .coefficients
                        .iter()
                        .map(|c| DynamicEffect { l: c.l, estimate: c.estimate, n_cells: c.n_cells, low_support: false })
                        .collect()
                }
                Err(e) => {
                    warnings.push(format!("event study unavailable: {e}"));
                    Vec::new()
                }
            };
            let n_treated_cells =
                (0..ds.n_cells()).filter(|&c| ds.treatment_grid()[c] == Some(true) && ds.outcome_grid()[c].is_some()).count();
            EffectEstimates { method, att: att.estimate, n_treated_cells, dynamic, warnings }
        }
        Method::Imputation => imputation(ds, &cfg.imputation)?.estimates(),
        Method::CsdidNever | Method::CsdidNotyet => {
            let comparison = if method == Method::CsdidNever { Comparison::Never } else { Comparison::NotYet };
            csdid(ds, &CsdidOptions { comparison, base_offset: cfg.csdid_base_offset })?.estimates
        }
        Method::Iw => iw(ds)?.estimates,
        Method::Stacked => stacked_did(ds, cfg.stacked_leads, cfg.stacked_lags)?.estimates,
        Method::PanelMatch => panel_match(ds, cfg.panelmatch_lags, cfg.panelmatch_leads)?.estimates,
        Method::DidMultiple => did_multiple(ds)?.estimates,
    };
    flag_support(&mut out.dynamic, cfg.min_support);
    Ok(out)
}
