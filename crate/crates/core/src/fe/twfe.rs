//! Static TWFE coefficient and the lags-and-leads event-study regression.

use serde::Serialize;

use super::{cluster_vcov, complete_cells, fit_fe, FeOptions, FeProblem, SmallSample};
use crate::error::{Error, Result};
use crate::panel::{compute_event_structure, Cohort, PanelDataset};

const TREAT: &str = "treatment";

#[derive(Debug, Clone, Serialize)]
pub struct TwfeEstimate {
    pub estimate: f64,
    pub se: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    /// Covariates dropped as collinear.
    pub dropped: Vec<String>,
}

/// Static TWFE coefficient on treatment, all dataset covariates included,
/// cluster-robust SE at the dataset's cluster level.
pub fn twfe_att(ds: &PanelDataset) -> Result<TwfeEstimate> {
    twfe_att_with(ds, &FeOptions::default(), SmallSample::Full)
}

pub fn twfe_att_with(ds: &PanelDataset, opts: &FeOptions, correction: SmallSample) -> Result<TwfeEstimate> {
    let covs: Vec<usize> = (0..ds.covariates().len()).collect();
    let cells = complete_cells(ds, &covs, |_, _| true);
    let d: Vec<f64> = cells.iter().map(|&c| if ds.treatment_grid()[c] == Some(true) { 1.0 } else { 0.0 }).collect();
    let n_treated = d.iter().filter(|&&x| x == 1.0).count();
    if n_treated == 0 || n_treated == d.len() {
        return Err(Error::Precondition("both treated and control cells are required".into()));
    }
    let problem = FeProblem::from_cells(ds, &cells).with_regressor(TREAT, d).with_covariates(ds, &covs);
    let fit = fit_fe(&problem, opts)?;
    let estimate = fit.coefficient(TREAT).ok_or(Error::TreatmentCollinear)?;
    let v = cluster_vcov(&fit, &problem.cluster, correction)?;
    Ok(TwfeEstimate { estimate, se: v.se(0), n_obs: fit.n_obs(), n_clusters: v.n_clusters, dropped: fit.dropped.clone() })
}

#[derive(Debug, Clone, Serialize)]
pub struct EventStudyCoef {
    pub l: i64,
    pub estimate: f64,
    pub se: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwfeEventStudy {
    /// Leads `-a..=-1` and lags `1..=b` that could be estimated; `l = 0` is
    /// the reference period.
    pub coefficients: Vec<EventStudyCoef>,
    /// Pooled `K > b` treated term.
    pub long_run: Option<EventStudyCoef>,
    /// Bins without support or dropped as collinear.
    pub omitted: Vec<String>,
    pub n_obs: usize,
}

/// Lags-and-leads TWFE regression with `l = 0` as reference. Relative-time
/// bins beyond `-a` fall into the reference group; treated cells past `b`
/// load on the pooled long-run term.
pub fn twfe_event_study(ds: &PanelDataset, a: usize, b: usize) -> Result<TwfeEventStudy> {
    if a == 0 || b == 0 {
        return Err(Error::Precondition("lead and lag counts must be at least 1".into()));
    }
    let es = compute_event_structure(ds);
    let covs: Vec<usize> = (0..ds.covariates().len()).collect();
    let t = ds.n_times();
    // cells of units without a defined event history cannot be binned
    let cells = complete_cells(ds, &covs, |u, s| matches!(es.cohort(u), Cohort::Never) || es.relative_time(u, s).is_some());
    let rel: Vec<Option<i64>> = cells.iter().map(|&c| es.relative_time(c / t, c % t)).collect();
    let treated: Vec<bool> = cells.iter().map(|&c| ds.treatment_grid()[c] == Some(true)).collect();

    let mut distinct: Vec<i64> = rel.iter().flatten().copied().collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() <= 1 {
        return Err(Error::Precondition("all relative times identical; nothing to identify".into()));
    }

    let mut problem = FeProblem::from_cells(ds, &cells);
    let mut omitted = Vec::new();
    let mut bins: Vec<(i64, usize)> = Vec::new();
    let leads = (1..=a as i64).rev().map(|x| -x);
    for l in leads.chain(1..=b as i64) {
        let col: Vec<f64> =
            rel.iter().zip(&treated).map(|(k, &d)| if *k == Some(l) && (l < 1 || d) { 1.0 } else { 0.0 }).collect();
        let support = col.iter().filter(|&&x| x > 0.0).count();
        if support == 0 {
            omitted.push(format!("l={l}: no supporting cells"));
            continue;
        }
        bins.push((l, support));
        problem = problem.with_regressor(format!("l={l}"), col);
    }
    let tail: Vec<f64> =
        rel.iter().zip(&treated).map(|(k, &d)| if d && k.is_some_and(|k| k > b as i64) { 1.0 } else { 0.0 }).collect();
    let tail_support = tail.iter().filter(|&&x| x > 0.0).count();
    if tail_support > 0 {
        problem = problem.with_regressor(format!("l>{b}"), tail);
    } else {
        omitted.push(format!("l>{b}: no supporting cells"));
    }
    problem = problem.with_covariates(ds, &covs);

    let fit = fit_fe(&problem, &FeOptions::default())?;
    for name in &fit.dropped {
        omitted.push(format!("{name}: collinear"));
    }
    let v = cluster_vcov(&fit, &problem.cluster, SmallSample::Full)?;
    let pos = |name: &str| fit.coefficients.iter().position(|(n, _)| n == name);
    let coefficients = bins
        .iter()
        .filter_map(|&(l, n_cells)| {
            let j = pos(&format!("l={l}"))?;
            Some(EventStudyCoef { l, estimate: fit.coefficients[j].1, se: v.se(j), n_cells })
        })
        .collect();
    let long_run = pos(&format!("l>{b}")).map(|j| EventStudyCoef {
        l: b as i64 + 1,
        estimate: fit.coefficients[j].1,
        se: v.se(j),
        n_cells: tail_support,
    });
    Ok(TwfeEventStudy { coefficients, long_run, omitted, n_obs: fit.n_obs() })
}
