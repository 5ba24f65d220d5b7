//! Stacked event study: one sub-dataset per cohort (the cohort plus all
//! never-treated units over the cohort's window), stacked with
//! sub-dataset-specific unit and time effects.

use serde::Serialize;

use super::{covariate_note, require_staggered};
use crate::error::{Error, Result};
use crate::estimate::{DynamicEffect, EffectEstimates, Method};
use crate::fe::{fit_fe, FeOptions, FeProblem};
use crate::panel::{compute_event_structure, Cohort, PanelDataset};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackInfo {
    /// Adoption rank of the stack's treated cohort.
    pub g: usize,
    pub n_units: usize,
    pub n_cells: usize,
    /// Inclusive rank window actually used.
    pub window: (usize, usize),
    /// Window clipped by the panel edge.
    pub truncated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StackedResult {
    pub stacks: Vec<StackInfo>,
    /// Pooled coefficient on the post-adoption indicator in the same design.
    pub static_effect: f64,
    pub estimates: EffectEstimates,
}

/// `leads = a` covers `l = 1-a ..= 0` (with `l = 0` the reference) and
/// `lags = b` covers `l = 1 ..= b`.
pub fn stacked_did(ds: &PanelDataset, leads: usize, lags: usize) -> Result<StackedResult> {
    if leads == 0 || lags == 0 {
        return Err(Error::Precondition("stacked window needs at least one lead and one lag".into()));
    }
    let es = compute_event_structure(ds);
    require_staggered(&es, "stacked")?;
    let never = es.units_in(Cohort::Never);
    if never.is_empty() {
        return Err(Error::NoNeverTreated);
    }
    let cohorts = es.adoption_times();
    if cohorts.is_empty() {
        return Err(Error::NoSwitchers);
    }

    let t = ds.n_times();
    let mut problem = FeProblem { n_times: cohorts.len() * t, ..Default::default() };
    // per observation: relative time if it belongs to the stack's treated cohort
    let mut rel: Vec<Option<i64>> = Vec::new();
    let mut stacks = Vec::new();
    let mut warnings: Vec<String> = covariate_note(ds, "stacked").into_iter().collect();
    for (si, &g) in cohorts.iter().enumerate() {
        let want = (g as i64 - leads as i64, g as i64 + lags as i64 - 1);
        let lo = want.0.max(0) as usize;
        let hi = (want.1 as usize).min(t - 1);
        let truncated = want.0 < 0 || want.1 as usize > t - 1;
        let treated = es.units_in(Cohort::Adopts(g));
        let mut n_cells = 0;
        for (&u, is_treated) in treated.iter().map(|u| (u, true)).chain(never.iter().map(|u| (u, false))) {
            let vu = problem.n_units;
            problem.n_units += 1;
            for s in lo..=hi {
                let Some(y) = ds.outcome(u, s) else { continue };
                problem.unit.push(vu);
                problem.time.push(si * t + s);
                problem.response.push(y);
                problem.cluster.push(ds.cluster_of(u));
                problem.cell.push(ds.idx(u, s));
                rel.push(is_treated.then_some(s as i64 - g as i64 + 1));
                n_cells += 1;
            }
        }
        if truncated {
            warnings.push(format!("window of cohort adopting at {} truncated by the panel edge", ds.time_ids()[g]));
        }
        stacks.push(StackInfo { g, n_units: treated.len() + never.len(), n_cells, window: (lo, hi), truncated });
    }

    let post: Vec<f64> = rel.iter().map(|r| r.is_some_and(|l| l >= 1) as u8 as f64).collect();
    let static_fit = fit_fe(&problem.clone().with_regressor("post", post), &FeOptions::default())?;
    let static_effect = static_fit
        .coefficient("post")
        .ok_or_else(|| Error::Precondition("post indicator collinear with stacked fixed effects".into()))?;

    let mut bins = Vec::new();
    for l in (1 - leads as i64)..=(lags as i64) {
        if l == 0 {
            continue;
        }
        let col: Vec<f64> = rel.iter().map(|r| (*r == Some(l)) as u8 as f64).collect();
        let support = col.iter().filter(|&&x| x > 0.0).count();
        if support == 0 {
            warnings.push(format!("l={l}: no supporting cells"));
            continue;
        }
        bins.push((l, support));
        problem = problem.with_regressor(format!("l={l}"), col);
    }
    let fit = fit_fe(&problem, &FeOptions::default())?;
    if !fit.dropped.is_empty() {
        warnings.push(format!("collinear terms dropped: {}", fit.dropped.join(", ")));
    }
    let dynamic = bins
        .iter()
        .filter_map(|&(l, n)| {
            let estimate = fit.coefficient(&format!("l={l}"))?;
            Some(DynamicEffect { l, estimate, n_cells: n, low_support: false })
        })
        .collect();
    let n_treated_cells = rel.iter().filter(|r| r.is_some_and(|l| l >= 1)).count();

    Ok(StackedResult {
        stacks,
        static_effect,
        estimates: EffectEstimates { method: Method::Stacked, att: static_effect, n_treated_cells, dynamic, warnings },
    })
}
