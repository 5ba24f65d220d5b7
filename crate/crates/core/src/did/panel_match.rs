//! Matching on treatment history.
//!
//! Every switch-in `(i, t)` is matched to the units that share `i`'s
//! treatment history over `[t-L, t-1]` and are untreated at `t`. The local
//! DID at lead `l` compares `Y(t+l-1) - Y(t-1)` of the focal unit, which must
//! stay treated through `t+l-1`, with the members still untreated at
//! `t+l-1`.

use serde::Serialize;

use super::{covariate_note, mean_change};
use crate::error::{Error, Result};
use crate::estimate::{DynamicEffect, EffectEstimates, Method};
use crate::panel::{compute_event_structure, PanelDataset};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeadSubset {
    pub l: usize,
    pub members: Vec<usize>,
    /// Local DID; `None` when the focal unit left treatment, an outcome is
    /// missing or no member survives.
    pub estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedSet {
    pub unit: usize,
    pub time: usize,
    pub members: Vec<usize>,
    pub leads: Vec<LeadSubset>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PanelMatchResult {
    pub matched_sets: Vec<MatchedSet>,
    /// Switch-ins without `L` observed periods of history.
    pub insufficient_history: usize,
    pub empty_sets: usize,
    pub estimates: EffectEstimates,
}

pub fn panel_match(ds: &PanelDataset, lags: usize, leads: usize) -> Result<PanelMatchResult> {
    if lags == 0 || leads == 0 {
        return Err(Error::Precondition("history length and lead count must be at least 1".into()));
    }
    let es = compute_event_structure(ds);
    let (n, t) = (ds.n_units(), ds.n_times());
    let eligible: Vec<usize> = (0..n).filter(|&u| !es.gap_flagged(u)).collect();
    let history = |u: usize, from: usize, to: usize| -> Option<Vec<bool>> { (from..to).map(|s| ds.treated(u, s)).collect() };

    let mut warnings: Vec<String> = covariate_note(ds, "panelmatch").into_iter().collect();
    let flagged = n - eligible.len();
    if flagged > 0 {
        warnings.push(format!("{flagged} units with switches across missing cells excluded"));
    }
    let mut matched_sets = Vec::new();
    let mut insufficient_history = 0;
    let mut empty_sets = 0;
    for &i in &eligible {
        for s in 1..t {
            if ds.treated(i, s) != Some(true) || ds.treated(i, s - 1) != Some(false) {
                continue;
            }
            let Some(h) = s.checked_sub(lags).and_then(|from| history(i, from, s)) else {
                insufficient_history += 1;
                continue;
            };
            let members: Vec<usize> = eligible
                .iter()
                .copied()
                .filter(|&j| j != i && ds.treated(j, s) == Some(false) && history(j, s - lags, s).as_ref() == Some(&h))
                .collect();
            if members.is_empty() {
                empty_sets += 1;
                continue;
            }
            let mut lead_sets = Vec::new();
            for l in 1..=leads {
                let p = s + l - 1;
                if p >= t {
                    break;
                }
                let survivors: Vec<usize> = members.iter().copied().filter(|&j| ds.treated(j, p) == Some(false)).collect();
                let stays = (s..=p).all(|r| ds.treated(i, r) == Some(true));
                let estimate = if stays {
                    match (mean_change(ds, [i], s - 1, p), mean_change(ds, survivors.iter().copied(), s - 1, p)) {
                        (Some((a, _)), Some((b, _))) => Some(a - b),
                        _ => None,
                    }
                } else {
                    None
                };
                lead_sets.push(LeadSubset { l, members: survivors, estimate });
            }
            matched_sets.push(MatchedSet { unit: i, time: s, members, leads: lead_sets });
        }
    }
    if insufficient_history > 0 {
        warnings.push(format!("{insufficient_history} switch-ins lack {lags} periods of observed history"));
    }
    if empty_sets > 0 {
        warnings.push(format!("{empty_sets} switch-ins have no matching unit"));
    }

    let dynamic: Vec<DynamicEffect> = (1..=leads)
        .filter_map(|l| {
            let vals: Vec<f64> = matched_sets.iter().filter_map(|m| m.leads.get(l - 1).and_then(|x| x.estimate)).collect();
            (!vals.is_empty()).then(|| DynamicEffect {
                l: l as i64,
                estimate: vals.iter().sum::<f64>() / vals.len() as f64,
                n_cells: vals.len(),
                low_support: false,
            })
        })
        .collect();
    let total: usize = dynamic.iter().map(|d| d.n_cells).sum();
    if total == 0 {
        return Err(Error::Precondition("no switch-in could be matched".into()));
    }
    let att = dynamic.iter().map(|d| d.estimate * d.n_cells as f64).sum::<f64>() / total as f64;
    Ok(PanelMatchResult {
        matched_sets,
        insufficient_history,
        empty_sets,
        estimates: EffectEstimates { method: Method::PanelMatch, att, n_treated_cells: total, dynamic, warnings },
    })
}
