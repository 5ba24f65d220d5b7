//! Group-time ATTs against never-treated or not-yet-treated units.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{covariate_note, mean_change, require_staggered, weighted_mean};
use crate::error::{Error, Result};
use crate::estimate::{DynamicEffect, EffectEstimates, Method, DEFAULT_MIN_SUPPORT};
use crate::panel::{compute_event_structure, Cohort, PanelDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    Never,
    NotYet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CsdidOptions {
    pub comparison: Comparison,
    /// Base period is `g - base_offset`; 1 is the last pre-adoption period.
    pub base_offset: usize,
}

impl Default for CsdidOptions {
    fn default() -> Self {
        Self { comparison: Comparison::Never, base_offset: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTimeCell {
    /// Adoption rank.
    pub g: usize,
    pub l: i64,
    pub estimate: f64,
    pub n_treated: usize,
    pub n_comparison: usize,
    /// Comparison group smaller than the reporting threshold.
    pub small_comparison: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTimeGrid {
    pub comparison: Comparison,
    pub cells: Vec<GroupTimeCell>,
    /// `(g, l)` cells without treated or comparison units.
    pub omitted: Vec<(usize, i64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CsdidResult {
    pub grid: GroupTimeGrid,
    pub estimates: EffectEstimates,
}

pub fn csdid(ds: &PanelDataset, opts: &CsdidOptions) -> Result<CsdidResult> {
    let es = compute_event_structure(ds);
    require_staggered(&es, "csdid")?;
    if opts.base_offset == 0 {
        return Err(Error::Precondition("base offset must be at least 1".into()));
    }
    let cohorts = es.adoption_times();
    if cohorts.is_empty() {
        return Err(Error::NoSwitchers);
    }
    let never = es.units_in(Cohort::Never);
    if opts.comparison == Comparison::Never && never.is_empty() {
        return Err(Error::NoNeverTreated);
    }
    // adoption rank per unit; never-treated adopt "at infinity"
    let adopt: Vec<Option<usize>> = es
        .cohorts()
        .iter()
        .map(|c| match c {
            Cohort::Adopts(g) => Some(*g),
            Cohort::Never => Some(usize::MAX),
            _ => None,
        })
        .collect();

    let mut warnings: Vec<String> = covariate_note(ds, "csdid").into_iter().collect();
    let mut cells = Vec::new();
    let mut omitted = Vec::new();
    for &g in &cohorts {
        let Some(base) = g.checked_sub(opts.base_offset) else {
            warnings.push(format!("cohort adopting at {} has no base period; skipped", ds.time_ids()[g]));
            continue;
        };
        let treated = es.units_in(Cohort::Adopts(g));
        for t in (0..ds.n_times()).filter(|&t| t != base) {
            let l = t as i64 - g as i64 + 1;
            let horizon = t.max(base);
            let comparison: Vec<usize> = match opts.comparison {
                Comparison::Never => never.clone(),
                Comparison::NotYet => (0..ds.n_units()).filter(|&j| adopt[j].is_some_and(|e| e > horizon && e != g)).collect(),
            };
            let tr = mean_change(ds, treated.iter().copied(), base, t);
            let co = mean_change(ds, comparison, base, t);
            match (tr, co) {
                (Some((a, nt)), Some((b, nc))) => cells.push(GroupTimeCell {
                    g,
                    l,
                    estimate: a - b,
                    n_treated: nt,
                    n_comparison: nc,
                    small_comparison: nc < DEFAULT_MIN_SUPPORT,
                }),
                _ => omitted.push((g, l)),
            }
        }
    }
    if !omitted.is_empty() {
        warnings.push(format!("{} group-time cells omitted for lack of treated or comparison units", omitted.len()));
    }

    let mut by_l: BTreeMap<i64, Vec<(f64, usize)>> = BTreeMap::new();
    for c in &cells {
        by_l.entry(c.l).or_default().push((c.estimate, c.n_treated));
    }
    let dynamic: Vec<DynamicEffect> = by_l
        .into_iter()
        .filter_map(|(l, items)| {
            let (estimate, n_cells) = weighted_mean(items)?;
            Some(DynamicEffect { l, estimate, n_cells, low_support: false })
        })
        .collect();
    let (att, n_treated_cells) = weighted_mean(cells.iter().filter(|c| c.l >= 1).map(|c| (c.estimate, c.n_treated)))
        .ok_or_else(|| Error::Precondition("no estimable post-treatment group-time cell".into()))?;

    let method = match opts.comparison {
        Comparison::Never => Method::CsdidNever,
        Comparison::NotYet => Method::CsdidNotyet,
    };
    Ok(CsdidResult {
        grid: GroupTimeGrid { comparison: opts.comparison, cells, omitted },
        estimates: EffectEstimates { method, att, n_treated_cells, dynamic, warnings },
    })
}
