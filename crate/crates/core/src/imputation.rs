//! Counterfactual imputation: fit the fixed-effects model on control cells,
//! predict `Y(0)` for treated cells and average the differences.
//!
//! All averages weight treated cells equally. Treated cells whose unit or
//! period has no control observation (or no identified trend) cannot be
//! imputed and are dropped; their count is part of the result.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{flag_support, DynamicEffect, EffectEstimates, Method, DEFAULT_MIN_SUPPORT};
use crate::fe::{complete_cells, fit_fe, FeFit, FeOptions, FeProblem};
use crate::panel::{compute_event_structure, Cohort, EventStructure, PanelDataset};

/// Outcome model for the control fit.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ImputationSpec {
    /// Covariate names entering linearly.
    pub covariates: Vec<String>,
    /// Covariate whose distinct values define an extra fixed effect.
    pub group_fe: Option<String>,
    pub unit_trends: bool,
}

/// Fixed-effects model fitted on control cells.
#[derive(Debug, Clone)]
pub struct ControlModel {
    pub fit: FeFit,
    covariates: Vec<usize>,
    group: Option<(usize, Vec<f64>)>,
}

impl ControlModel {
    /// Predicted `Y(0)` at a cell, `None` when inestimable or a regressor is missing.
    pub fn predict(&self, ds: &PanelDataset, unit: usize, time: usize) -> Option<f64> {
        let c = ds.idx(unit, time);
        let mut x = Vec::with_capacity(self.fit.coefficients.len());
        for (name, _) in &self.fit.coefficients {
            let j = *self.covariates.iter().find(|&&j| ds.covariates()[j].name == *name)?;
            x.push(ds.covariates()[j].values[c]?);
        }
        let g = match &self.group {
            Some((j, levels)) => {
                let v = ds.covariates()[*j].values[c]?;
                Some(levels.iter().position(|&l| l == v)?)
            }
            None => None,
        };
        self.fit.predict(unit, time, g, &x)
    }

    /// `Y - Y(0)` at an observed cell.
    pub fn effect(&self, ds: &PanelDataset, unit: usize, time: usize) -> Option<f64> {
        Some(ds.outcome(unit, time)? - self.predict(ds, unit, time)?)
    }

    /// Residual of a fitted cell, if the cell was in the fit mask.
    pub fn residual(&self, cell: usize) -> Option<f64> {
        self.fit.cells.binary_search(&cell).ok().map(|i| self.fit.residuals[i])
    }
}

fn resolve(ds: &PanelDataset, name: &str) -> Result<usize> {
    ds.covariate_index(name).ok_or_else(|| Error::Schema(format!("unknown covariate {name:?}")))
}

/// Fits the outcome model on all observed control cells.
pub fn fit_control_model(ds: &PanelDataset, spec: &ImputationSpec) -> Result<ControlModel> {
    fit_control_model_masked(ds, spec, |_, _| false)
}

/// As [`fit_control_model`], with `holdout(unit, time)` cells removed from
/// the fitting mask.
pub fn fit_control_model_masked(
    ds: &PanelDataset,
    spec: &ImputationSpec,
    holdout: impl Fn(usize, usize) -> bool,
) -> Result<ControlModel> {
    let covariates: Vec<usize> = spec.covariates.iter().map(|n| resolve(ds, n)).collect::<Result<_>>()?;
    let group_col = spec.group_fe.as_deref().map(|n| resolve(ds, n)).transpose()?;
    let mut needed = covariates.clone();
    needed.extend(group_col);

    let cells = complete_cells(ds, &needed, |u, s| ds.treated(u, s) == Some(false) && !holdout(u, s));
    let t = ds.n_times();
    let mut units: Vec<usize> = cells.iter().map(|c| c / t).collect();
    units.dedup();
    let mut times: Vec<usize> = cells.iter().map(|c| c % t).collect();
    times.sort_unstable();
    times.dedup();
    if units.len() < 2 || times.len() < 2 {
        return Err(Error::Precondition("control cells must span at least 2 units and 2 periods".into()));
    }

    let mut problem = FeProblem::from_cells(ds, &cells).with_covariates(ds, &covariates);
    let group = group_col.map(|j| {
        let vals: Vec<f64> = cells.iter().map(|&c| ds.covariates()[j].values[c].expect("complete cell")).collect();
        let mut levels = vals.clone();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let idx = vals.iter().map(|v| levels.iter().position(|l| l == v).expect("level")).collect();
        problem.group = Some((levels.len(), idx));
        (j, levels)
    });
    let opts = FeOptions { unit_trends: spec.unit_trends, ..Default::default() };
    let fit = fit_fe(&problem, &opts)?;
    Ok(ControlModel { fit, covariates, group })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellEffect {
    pub unit: usize,
    pub time: usize,
    /// Relative time `K`.
    pub l: i64,
    /// Adoption rank of the unit's cohort, if it has one.
    pub cohort: Option<usize>,
    pub tau: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ImputedEffects {
    pub cells: Vec<CellEffect>,
    /// Treated cells whose unit or period effect is not estimable.
    pub inestimable: Vec<(usize, usize)>,
    pub missing_covariate: usize,
    /// Treated cells of left-censored units before any observed switch-in.
    pub undefined_event_time: usize,
}

/// `tau_it = Y_it - Y_it(0)` for every observed treated cell that can be imputed.
pub fn impute_and_difference(ds: &PanelDataset, model: &ControlModel) -> ImputedEffects {
    let es = compute_event_structure(ds);
    impute_with(ds, &es, model)
}

fn impute_with(ds: &PanelDataset, es: &EventStructure, model: &ControlModel) -> ImputedEffects {
    let mut out = ImputedEffects::default();
    let mut needed = model.covariates.clone();
    needed.extend(model.group.as_ref().map(|g| g.0));
    for u in 0..ds.n_units() {
        for s in 0..ds.n_times() {
            if ds.treated(u, s) != Some(true) || ds.outcome(u, s).is_none() {
                continue;
            }
            if !ds.is_complete(u, s, &needed) {
                out.missing_covariate += 1;
                continue;
            }
            let Some(l) = es.relative_time(u, s) else {
                out.undefined_event_time += 1;
                continue;
            };
            match model.effect(ds, u, s) {
                Some(tau) => out.cells.push(CellEffect { unit: u, time: s, l, cohort: cohort_rank(es.cohort(u)), tau }),
                None => out.inestimable.push((u, s)),
            }
        }
    }
    out
}

fn cohort_rank(c: Cohort) -> Option<usize> {
    match c {
        Cohort::Adopts(g) => Some(g),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTimeEffect {
    pub g: usize,
    pub l: i64,
    pub estimate: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregated {
    pub att: f64,
    pub n_cells: usize,
    pub dynamic: Vec<DynamicEffect>,
    pub group_time: Vec<GroupTimeEffect>,
}

/// Equal-weight averages over cells: overall, by `l` and by `(g, l)`.
pub fn aggregate_effects(cells: &[CellEffect]) -> Result<Aggregated> {
    if cells.is_empty() {
        return Err(Error::Precondition("no imputable treated cells".into()));
    }
    let att = cells.iter().map(|c| c.tau).sum::<f64>() / cells.len() as f64;
    let mut by_l: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    let mut by_gl: BTreeMap<(usize, i64), (f64, usize)> = BTreeMap::new();
    for c in cells {
        let e = by_l.entry(c.l).or_default();
        e.0 += c.tau;
        e.1 += 1;
        if let Some(g) = c.cohort {
            let e = by_gl.entry((g, c.l)).or_default();
            e.0 += c.tau;
            e.1 += 1;
        }
    }
    Ok(Aggregated {
        att,
        n_cells: cells.len(),
        dynamic: by_l
            .into_iter()
            .map(|(l, (s, n))| DynamicEffect { l, estimate: s / n as f64, n_cells: n, low_support: false })
            .collect(),
        group_time: by_gl
            .into_iter()
            .map(|((g, l), (s, n))| GroupTimeEffect { g, l, estimate: s / n as f64, n_cells: n })
            .collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ImputationResult {
    pub att: f64,
    pub n_treated_cells: usize,
    /// Post-treatment `tau_l` (l >= 1) plus in-sample pre-period residual
    /// means for ever-treated units (l <= 0).
    pub dynamic: Vec<DynamicEffect>,
    pub group_time: Vec<GroupTimeEffect>,
    pub cell_effects: Vec<CellEffect>,
    pub excluded_cells: usize,
    pub excluded_units: Vec<String>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub model: ControlModel,
}

impl ImputationResult {
    pub fn estimates(&self) -> EffectEstimates {
        EffectEstimates {
            method: Method::Imputation,
            att: self.att,
            n_treated_cells: self.n_treated_cells,
            dynamic: self.dynamic.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Full imputation estimator.
pub fn imputation(ds: &PanelDataset, spec: &ImputationSpec) -> Result<ImputationResult> {
    let es = compute_event_structure(ds);
    let model = fit_control_model(ds, spec)?;
    finish(ds, &es, model)
}

pub(crate) fn finish(ds: &PanelDataset, es: &EventStructure, model: ControlModel) -> Result<ImputationResult> {
    let imputed = impute_with(ds, es, &model);
    let agg = aggregate_effects(&imputed.cells)?;

    let mut warnings = Vec::new();
    let mut excluded_units: Vec<usize> = imputed.inestimable.iter().map(|p| p.0).collect();
    excluded_units.dedup();
    let excluded_units: Vec<String> = excluded_units.iter().map(|&u| ds.unit_ids()[u].clone()).collect();
    if !imputed.inestimable.is_empty() {
        warnings.push(format!(
            "{} treated cells could not be imputed (no control cells for their unit or period); units affected: {}",
            imputed.inestimable.len(),
            excluded_units.join(", ")
        ));
    }
    if imputed.missing_covariate > 0 {
        warnings.push(format!("{} treated cells dropped for missing covariates", imputed.missing_covariate));
    }
    if imputed.undefined_event_time > 0 {
        warnings.push(format!(
            "{} treated cells of left-censored units have no event time and were dropped",
            imputed.undefined_event_time
        ));
    }

    let mut pre: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for (i, &c) in model.fit.cells.iter().enumerate() {
        let (u, s) = (c / ds.n_times(), c % ds.n_times());
        if let Some(l) = es.relative_time(u, s).filter(|&l| l <= 0) {
            let e = pre.entry(l).or_default();
            e.0 += model.fit.residuals[i];
            e.1 += 1;
        }
    }
    let mut dynamic: Vec<DynamicEffect> =
        pre.into_iter().map(|(l, (s, n))| DynamicEffect { l, estimate: s / n as f64, n_cells: n, low_support: false }).collect();
    dynamic.extend(agg.dynamic);
    flag_support(&mut dynamic, DEFAULT_MIN_SUPPORT);

    Ok(ImputationResult {
        att: agg.att,
        n_treated_cells: agg.n_cells,
        dynamic,
        group_time: agg.group_time,
        cell_effects: imputed.cells,
        excluded_cells: imputed.inestimable.len() + imputed.missing_covariate + imputed.undefined_event_time,
        excluded_units,
        warnings,
        model,
    })
}
