//! Interaction-weighted estimator: a regression with cohort × relative-time
//! dummies, aggregated with cohort shares among treated cells.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{covariate_note, require_staggered, weighted_mean};
use crate::error::{Error, Result};
use crate::estimate::{DynamicEffect, EffectEstimates, Method};
use crate::fe::{complete_cells, fit_fe, FeOptions, FeProblem};
use crate::panel::{compute_event_structure, Cohort, PanelDataset};

#[derive(Debug, Clone, Serialize)]
pub struct IwResult {
    /// `(g, l, coefficient, treated cells)`.
    pub cohort_effects: Vec<(usize, i64, f64, usize)>,
    /// Adoption rank of the comparison cohort; `None` for never-treated.
    pub comparison_cohort: Option<usize>,
    pub estimates: EffectEstimates,
}

pub fn iw(ds: &PanelDataset) -> Result<IwResult> {
    let es = compute_event_structure(ds);
    require_staggered(&es, "iw")?;
    let cohorts = es.adoption_times();
    let never = es.units_in(Cohort::Never);
    let (comparison_cohort, cutoff) = if never.is_empty() {
        let last = *cohorts.last().ok_or(Error::NoSwitchers)?;
        (Some(last), last)
    } else {
        (None, ds.n_times())
    };
    let treated_cohorts: Vec<usize> = cohorts.iter().copied().filter(|&g| Some(g) != comparison_cohort).collect();
    if treated_cohorts.is_empty() {
        return Err(Error::Precondition("iw needs a treated cohort besides the comparison cohort".into()));
    }

    let mut warnings: Vec<String> = covariate_note(ds, "iw").into_iter().collect();
    if let Some(g) = comparison_cohort {
        warnings.push(format!(
            "no never-treated units: cohort adopting at {} is the comparison group and periods from its adoption on are dropped",
            ds.time_ids()[g]
        ));
    }
    if ds.missing_cells() > 0 {
        warnings.push("panel has missing cells; the saturated regression differs from assembled local DIDs".into());
    }

    let t = ds.n_times();
    let cohort_of = |u: usize| match es.cohort(u) {
        Cohort::Adopts(g) => Some(g),
        _ => None,
    };
    let cells = complete_cells(ds, &[], |u, s| s < cutoff && (matches!(es.cohort(u), Cohort::Never) || cohort_of(u).is_some()));
    let is_comparison = |u: usize| match comparison_cohort {
        None => matches!(es.cohort(u), Cohort::Never),
        Some(g) => cohort_of(u) == Some(g),
    };
    if !cells.iter().any(|&c| is_comparison(c / t)) {
        return Err(Error::Precondition("comparison cohort has no observations".into()));
    }

    let mut problem = FeProblem::from_cells(ds, &cells);
    let mut terms: Vec<(usize, i64, usize)> = Vec::new();
    for &g in &treated_cohorts {
        let mut ls: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for (i, &c) in cells.iter().enumerate() {
            if cohort_of(c / t) == Some(g) {
                let l = (c % t) as i64 - g as i64 + 1;
                if l != 0 {
                    ls.entry(l).or_insert_with(|| vec![0.0; cells.len()])[i] = 1.0;
                }
            }
        }
        for (l, col) in ls {
            let support = col.iter().filter(|&&x| x > 0.0).count();
            terms.push((g, l, support));
            problem = problem.with_regressor(format!("g{g}:l{l}"), col);
        }
    }
    let fit = fit_fe(&problem, &FeOptions::default())?;
    if !fit.dropped.is_empty() {
        warnings.push(format!("collinear cohort-period terms dropped: {}", fit.dropped.join(", ")));
    }

    let cohort_effects: Vec<(usize, i64, f64, usize)> =
        terms.iter().filter_map(|&(g, l, n)| Some((g, l, fit.coefficient(&format!("g{g}:l{l}"))?, n))).collect();
    let mut by_l: BTreeMap<i64, Vec<(f64, usize)>> = BTreeMap::new();
    for &(_, l, b, n) in &cohort_effects {
        by_l.entry(l).or_default().push((b, n));
    }
    let dynamic = by_l
        .into_iter()
        .filter_map(|(l, items)| {
            let (estimate, n_cells) = weighted_mean(items)?;
            Some(DynamicEffect { l, estimate, n_cells, low_support: false })
        })
        .collect();
    let (att, n_treated_cells) = weighted_mean(cohort_effects.iter().filter(|c| c.1 >= 1).map(|c| (c.2, c.3)))
        .ok_or_else(|| Error::Precondition("no estimable post-treatment cohort effect".into()))?;

    Ok(IwResult {
        cohort_effects,
        comparison_cohort,
        estimates: EffectEstimates { method: Method::Iw, att, n_treated_cells, dynamic, warnings },
    })
}
