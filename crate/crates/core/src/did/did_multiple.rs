//! Contemporaneous switching effect: joiners against units staying
//! untreated, leavers against units staying treated, leaver DIDs negated.

use serde::Serialize;

use super::{covariate_note, mean_change};
use crate::error::{Error, Result};
use crate::estimate::{DynamicEffect, EffectEstimates, Method};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchPeriod {
    pub time: usize,
    pub n_joiners: usize,
    pub n_stable_control: usize,
    pub joiner_did: Option<f64>,
    pub n_leavers: usize,
    pub n_stable_treated: usize,
    /// Already negated: the effect of being treated.
    pub leaver_did: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DidMultipleResult {
    pub periods: Vec<SwitchPeriod>,
    pub estimates: EffectEstimates,
}

pub fn did_multiple(ds: &PanelDataset) -> Result<DidMultipleResult> {
    let mut periods = Vec::new();
    let mut any_switch = false;
    for s in 1..ds.n_times() {
        let mut groups: [Vec<usize>; 4] = Default::default();
        for u in 0..ds.n_units() {
            if ds.outcome(u, s - 1).is_none() || ds.outcome(u, s).is_none() {
                continue;
            }
            if let (Some(a), Some(b)) = (ds.treated(u, s - 1), ds.treated(u, s)) {
                groups[a as usize * 2 + b as usize].push(u);
            }
        }
        let [stay0, join, leave, stay1] = groups;
        any_switch |= !join.is_empty() || !leave.is_empty();
        let did = |sw: &[usize], st: &[usize]| match (
            mean_change(ds, sw.iter().copied(), s - 1, s),
            mean_change(ds, st.iter().copied(), s - 1, s),
        ) {
            (Some((a, _)), Some((b, _))) => Some(a - b),
            _ => None,
        };
        periods.push(SwitchPeriod {
            time: s,
            n_joiners: join.len(),
            n_stable_control: stay0.len(),
            joiner_did: did(&join, &stay0),
            n_leavers: leave.len(),
            n_stable_treated: stay1.len(),
            leaver_did: did(&leave, &stay1).map(|x| -x),
        });
    }
    if !any_switch {
        return Err(Error::NoSwitchers);
    }
    let (mut sum, mut weight) = (0.0, 0usize);
    for p in &periods {
        if let Some(d) = p.joiner_did {
            sum += d * p.n_joiners as f64;
            weight += p.n_joiners;
        }
        if let Some(d) = p.leaver_did {
            sum += d * p.n_leavers as f64;
            weight += p.n_leavers;
        }
    }
    if weight == 0 {
        return Err(Error::Precondition("no switch has a stable comparison group".into()));
    }
    let att = sum / weight as f64;
    let warnings = covariate_note(ds, "did-multiple").into_iter().collect();
    Ok(DidMultipleResult {
        periods,
        estimates: EffectEstimates {
            method: Method::DidMultiple,
            att,
            n_treated_cells: weight,
            dynamic: vec![DynamicEffect { l: 1, estimate: att, n_cells: weight, low_support: false }],
            warnings,
        },
    })
}
