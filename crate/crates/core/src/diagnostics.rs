//! Assumption diagnostics built on the imputation estimator: event-study
//! tables, the pretrend F test, the placebo test on held-out pre-periods and
//! the carryover test on held-out post-exit periods.
//!
//! Joint tests use the covariance of jointly bootstrapped estimates.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::estimate::{EffectEstimates, Method, DEFAULT_MIN_SUPPORT};
use crate::imputation::{finish, fit_control_model_masked, imputation, ImputationSpec};
use crate::inference::{bootstrap_vcov, cluster_bootstrap, percentile_ci, wald_joint_test, BootstrapDraws, WaldTest};
use crate::panel::{compute_event_structure, Cohort, EventStructure, PanelDataset};

pub const DEFAULT_PLACEBO_PERIODS: [i64; 3] = [-2, -1, 0];
pub const DEFAULT_CARRYOVER_PERIODS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStudyRow {
    pub l: i64,
    pub estimate: f64,
    pub ci: Option<(f64, f64)>,
    pub n_cells: usize,
    pub low_support: bool,
    /// Pre-treatment row (`l <= 0`).
    pub pre: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStudyTable {
    pub method: Method,
    /// Period normalized to zero and therefore absent from `rows`.
    pub reference_period: Option<i64>,
    pub rows: Vec<EventStudyRow>,
    pub no_pre_periods: bool,
}

/// Plot-ready rows sorted by `l`. `ci[j]` belongs to `est.dynamic[j]`.
pub fn event_study_table(est: &EffectEstimates, ci: &[Option<(f64, f64)>]) -> EventStudyTable {
    let reference = est.method.reference_period();
    let mut rows: Vec<EventStudyRow> = est
        .dynamic
        .iter()
        .enumerate()
        .filter(|(_, d)| Some(d.l) != reference)
        .map(|(j, d)| EventStudyRow {
            l: d.l,
            estimate: d.estimate,
            ci: ci.get(j).copied().flatten(),
            n_cells: d.n_cells,
            low_support: d.low_support,
            pre: d.l <= 0,
        })
        .collect();
    rows.sort_by_key(|r| r.l);
    let no_pre_periods = !rows.iter().any(|r| r.pre);
    EventStudyTable { method: est.method, reference_period: reference, rows, no_pre_periods }
}

/// Pretrend F test: the Wald statistic over the pre-period estimates divided
/// by its rank, referred to `F(df1, G - 1)` with `G` clusters. The second
/// degrees of freedom account for the covariance being estimated from `G`
/// independent clusters; as `G` grows the test approaches the chi-square
/// Wald test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FStatistic {
    pub statistic: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
    pub wald: WaldTest,
}

pub fn pretrend_f_test(pre_estimates: &[f64], vcov: &nalgebra::DMatrix<f64>, n_clusters: usize) -> Result<FStatistic> {
    if pre_estimates.is_empty() {
        return Err(Error::Precondition("no pre-period estimates to test".into()));
    }
    if n_clusters < 2 {
        return Err(Error::TooFewClusters(n_clusters));
    }
    let wald = wald_joint_test(pre_estimates, vcov)?;
    let (df1, df2) = (wald.df, n_clusters - 1);
    let statistic = wald.statistic / df1 as f64;
    let dist = FisherSnedecor::new(df1 as f64, df2 as f64).expect("positive degrees of freedom");
    let p_value = (1.0 - dist.cdf(statistic.max(0.0))).clamp(0.0, 1.0);
    Ok(FStatistic { statistic, df1, df2, p_value, wald })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceboEstimate {
    pub periods: Vec<i64>,
    pub deltas: Vec<f64>,
    pub n_cells: Vec<usize>,
    /// ATT and post-treatment `tau_l` from the holdout fit.
    pub att: f64,
    pub post: Vec<(i64, f64, usize)>,
    pub excluded_units: Vec<String>,
    pub warnings: Vec<String>,
}

/// Resolves the placebo set against the available pre-periods.
pub fn resolve_placebo_periods(es: &EventStructure, requested: &[i64]) -> Result<(Vec<i64>, Option<String>)> {
    let available = es
        .cohorts()
        .iter()
        .filter_map(|c| match c {
            Cohort::Adopts(g) => Some(*g),
            _ => None,
        })
        .max()
        .ok_or(Error::NoSwitchers)?;
    if available < 2 {
        return Err(Error::Precondition("placebo test needs at least 2 pre-treatment periods".into()));
    }
    if requested.len() >= 3 && available < 3 {
        return Ok((vec![-1, 0], Some("fewer than 3 pre-treatment periods: placebo set reduced to {-1, 0}".into())));
    }
    Ok((requested.to_vec(), None))
}

/// Point estimates of the placebo run for a fixed placebo set.
pub fn placebo_estimate(ds: &PanelDataset, periods: &[i64], spec: &ImputationSpec) -> Result<PlaceboEstimate> {
    let es = compute_event_structure(ds);
    let t = ds.n_times();
    let min_controls = if spec.unit_trends { 2 } else { 1 };
    let in_p =
        |u: usize, s: usize| ds.treated(u, s) == Some(false) && es.relative_time(u, s).is_some_and(|k| periods.contains(&k));
    let mut eligible = vec![false; ds.n_units()];
    let mut excluded = Vec::new();
    for u in 0..ds.n_units() {
        let Cohort::Adopts(g) = es.cohort(u) else { continue };
        let all_observed = periods.iter().all(|&p| {
            let r = g as i64 + p - 1;
            r >= 0 && (r as usize) < t && ds.outcome(u, r as usize).is_some() && ds.treated(u, r as usize) == Some(false)
        });
        let others = (0..t).filter(|&s| ds.treated(u, s) == Some(false) && ds.outcome(u, s).is_some() && !in_p(u, s)).count();
        if all_observed && others >= min_controls {
            eligible[u] = true;
        } else {
            excluded.push(ds.unit_ids()[u].clone());
        }
    }
    let model = fit_control_model_masked(ds, spec, |u, s| eligible[u] && in_p(u, s))?;

    let mut sums: BTreeMap<i64, (f64, usize)> = periods.iter().map(|&p| (p, (0.0, 0))).collect();
    for u in (0..ds.n_units()).filter(|&u| eligible[u]) {
        for s in 0..t {
            if !in_p(u, s) {
                continue;
            }
            if let Some(e) = model.effect(ds, u, s) {
                let k = es.relative_time(u, s).expect("in placebo set");
                let x = sums.get_mut(&k).expect("placebo period");
                x.0 += e;
                x.1 += 1;
            }
        }
    }
    let deltas = periods
        .iter()
        .map(|p| {
            let (s, n) = sums[p];
            if n == 0 {
                f64::NAN
            } else {
                s / n as f64
            }
        })
        .collect();
    let n_cells = periods.iter().map(|p| sums[p].1).collect();
    let fit = finish(ds, &es, model)?;
    let post = fit.dynamic.iter().filter(|d| d.l >= 1).map(|d| (d.l, d.estimate, d.n_cells)).collect();
    let mut warnings = fit.warnings.clone();
    if !excluded.is_empty() {
        warnings.push(format!("{} treated units lack the placebo periods and were left out of the test", excluded.len()));
    }
    Ok(PlaceboEstimate { periods: periods.to_vec(), deltas, n_cells, att: fit.att, post, excluded_units: excluded, warnings })
}

#[derive(Debug, Clone, Serialize)]
pub struct PlaceboTest {
    pub estimate: PlaceboEstimate,
    pub delta_se: Vec<f64>,
    pub att_se: f64,
    pub joint: WaldTest,
    /// Columns: deltas, ATT, then the post `tau_l` in `estimate.post` order.
    pub draws: BootstrapDraws,
}

impl PlaceboTest {
    pub fn att_column(&self) -> usize {
        self.estimate.periods.len()
    }

    pub fn post_column(&self, l: i64) -> Option<usize> {
        let j = self.estimate.post.iter().position(|p| p.0 == l)?;
        Some(self.estimate.periods.len() + 1 + j)
    }
}

fn placebo_vector(ds: &PanelDataset, periods: &[i64], post_ls: &[i64], spec: &ImputationSpec) -> Result<Vec<f64>> {
    let p = placebo_estimate(ds, periods, spec)?;
    let mut v = p.deltas;
    v.push(p.att);
    v.extend(post_ls.iter().map(|l| p.post.iter().find(|x| x.0 == *l).map_or(f64::NAN, |x| x.1)));
    Ok(v)
}

/// Placebo test with the joint bootstrap of deltas, ATT and post `tau_l`.
pub fn placebo_test(
    ds: &PanelDataset,
    requested: &[i64],
    spec: &ImputationSpec,
    replicates: usize,
    seed: u64,
) -> Result<PlaceboTest> {
    let es = compute_event_structure(ds);
    let (periods, note) = resolve_placebo_periods(&es, requested)?;
    let mut estimate = placebo_estimate(ds, &periods, spec)?;
    estimate.warnings.extend(note);
    if estimate.deltas.iter().any(|d| !d.is_finite()) {
        return Err(Error::Precondition("a placebo period has no supporting cells".into()));
    }
    let post_ls: Vec<i64> = estimate.post.iter().map(|p| p.0).collect();
    let draws = cluster_bootstrap(ds, |b| placebo_vector(b, &periods, &post_ls, spec), replicates, seed)?;
    let k = periods.len();
    let ses = draws.standard_errors();
    let vcov = bootstrap_vcov(&draws, &(0..k).collect::<Vec<_>>())?;
    let joint = wald_joint_test(&estimate.deltas, &vcov)?;
    Ok(PlaceboTest { delta_se: ses[..k].to_vec(), att_se: ses[k], estimate, joint, draws })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarryoverEstimate {
    /// Offsets `j = 1..=k` after exit.
    pub offsets: Vec<usize>,
    pub estimates: Vec<f64>,
    pub n_cells: Vec<usize>,
    pub n_exits: usize,
    pub att: f64,
}

/// Held-out post-exit cells: `(unit, time, offset)`.
fn post_exit_cells(ds: &PanelDataset, k: usize) -> (Vec<(usize, usize, usize)>, usize) {
    let mut cells = Vec::new();
    let mut exits = 0;
    for u in 0..ds.n_units() {
        let mut prev: Option<bool> = None;
        let mut offset: Option<usize> = None;
        for s in 0..ds.n_times() {
            let Some(d) = ds.treated(u, s) else { continue };
            if prev == Some(true) && !d {
                exits += 1;
                offset = Some(0);
            }
            if d {
                offset = None;
            } else if let Some(j) = offset {
                if j < k && ds.outcome(u, s).is_some() {
                    cells.push((u, s, j + 1));
                    offset = Some(j + 1);
                }
            }
            prev = Some(d);
        }
    }
    (cells, exits)
}

pub fn carryover_estimate(ds: &PanelDataset, k: usize, spec: &ImputationSpec) -> Result<CarryoverEstimate> {
    if k == 0 {
        return Err(Error::Precondition("carryover holdout length must be at least 1".into()));
    }
    let es = compute_event_structure(ds);
    if !es.any_reversal() {
        return Err(Error::NoExits);
    }
    let (cells, n_exits) = post_exit_cells(ds, k);
    let held: std::collections::HashSet<(usize, usize)> = cells.iter().map(|c| (c.0, c.1)).collect();
    let model = fit_control_model_masked(ds, spec, |u, s| held.contains(&(u, s)))?;
    let mut sums = vec![(0.0, 0usize); k];
    for &(u, s, j) in &cells {
        if let Some(e) = model.effect(ds, u, s) {
            sums[j - 1].0 += e;
            sums[j - 1].1 += 1;
        }
    }
    let att = finish(ds, &es, model)?.att;
    Ok(CarryoverEstimate {
        offsets: (1..=k).collect(),
        estimates: sums.iter().map(|&(s, n)| if n == 0 { f64::NAN } else { s / n as f64 }).collect(),
        n_cells: sums.iter().map(|x| x.1).collect(),
        n_exits,
        att,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CarryoverTest {
    pub estimate: CarryoverEstimate,
    pub se: Vec<f64>,
    /// Test over the offsets with supporting cells.
    pub joint: WaldTest,
    pub draws: BootstrapDraws,
}

pub fn carryover_test(ds: &PanelDataset, k: usize, spec: &ImputationSpec, replicates: usize, seed: u64) -> Result<CarryoverTest> {
    let estimate = carryover_estimate(ds, k, spec)?;
    let cols: Vec<usize> = (0..k).filter(|&j| estimate.estimates[j].is_finite()).collect();
    if cols.is_empty() {
        return Err(Error::Precondition("no observed post-exit cells to hold out".into()));
    }
    let draws = cluster_bootstrap(
        ds,
        |b| {
            let e = carryover_estimate(b, k, spec)?;
            Ok(e.estimates.into_iter().chain(std::iter::once(e.att)).collect())
        },
        replicates,
        seed,
    )?;
    let vcov = bootstrap_vcov(&draws, &cols)?;
    let est: Vec<f64> = cols.iter().map(|&j| estimate.estimates[j]).collect();
    let joint = wald_joint_test(&est, &vcov)?;
    let se = draws.standard_errors()[..k].to_vec();
    Ok(CarryoverTest { estimate, se, joint, draws })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsConfig {
    pub spec: ImputationSpec,
    pub placebo_periods: Vec<i64>,
    pub carryover_periods: usize,
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    /// Significance level for the suspect flags.
    pub alpha: f64,
    pub min_support: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            spec: ImputationSpec::default(),
            placebo_periods: DEFAULT_PLACEBO_PERIODS.to_vec(),
            carryover_periods: DEFAULT_CARRYOVER_PERIODS,
            replicates: crate::inference::DEFAULT_REPLICATES,
            seed: 1,
            level: 0.95,
            alpha: 0.05,
            min_support: DEFAULT_MIN_SUPPORT,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FTest {
    pub periods: Vec<i64>,
    pub test: FStatistic,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub estimates: EffectEstimates,
    pub event_study: EventStudyTable,
    pub f_test: Option<FTest>,
    pub placebo: Option<PlaceboTest>,
    pub carryover: Option<CarryoverTest>,
    pub pt_suspect: bool,
    pub carryover_suspect: bool,
    /// Why a test was skipped.
    pub notes: Vec<String>,
}

/// Pretrend F test from a bootstrap of the imputation event study.
/// Returns the estimates, their draws and the test over well-supported
/// pre-periods.
pub fn imputation_event_study(
    ds: &PanelDataset,
    cfg: &DiagnosticsConfig,
) -> Result<(EffectEstimates, BootstrapDraws, Option<FTest>)> {
    let mut est = imputation(ds, &cfg.spec)?.estimates();
    crate::estimate::flag_support(&mut est.dynamic, cfg.min_support);
    let ls = est.periods();
    let draws =
        cluster_bootstrap(ds, |b| Ok(imputation(b, &cfg.spec)?.estimates().statistic_vector(&ls)), cfg.replicates, cfg.seed)?;
    let pre: Vec<(usize, i64, f64)> = est
        .dynamic
        .iter()
        .enumerate()
        .filter(|(_, d)| d.l <= 0 && !d.low_support)
        .map(|(j, d)| (j + 1, d.l, d.estimate))
        .collect();
    let f_test = if pre.is_empty() {
        None
    } else {
        let vcov = bootstrap_vcov(&draws, &pre.iter().map(|p| p.0).collect::<Vec<_>>())?;
        let values: Vec<f64> = pre.iter().map(|p| p.2).collect();
        Some(FTest { periods: pre.iter().map(|p| p.1).collect(), test: pretrend_f_test(&values, &vcov, ds.n_clusters())? })
    };
    Ok((est, draws, f_test))
}

pub fn run_diagnostics(ds: &PanelDataset, cfg: &DiagnosticsConfig) -> Result<DiagnosticsReport> {
    let (estimates, draws, f_test) = imputation_event_study(ds, cfg)?;
    let ci = percentile_ci(&draws, cfg.level);
    let event_study = event_study_table(&estimates, &ci[1..]);
    let mut notes = Vec::new();
    if f_test.is_none() {
        notes.push("F test skipped: no well-supported pre-treatment periods".into());
    }
    let placebo = match placebo_test(ds, &cfg.placebo_periods, &cfg.spec, cfg.replicates, cfg.seed) {
        Ok(p) => Some(p),
        Err(e) if !e.is_hard_failure() => {
            notes.push(format!("placebo test skipped: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let carryover = match carryover_test(ds, cfg.carryover_periods, &cfg.spec, cfg.replicates, cfg.seed) {
        Ok(c) => Some(c),
        Err(e) if !e.is_hard_failure() => {
            notes.push(format!("carryover test skipped: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let pt_suspect = f_test.as_ref().is_some_and(|f| f.test.p_value < cfg.alpha)
        || placebo.as_ref().is_some_and(|p| p.joint.p_value < cfg.alpha);
    let carryover_suspect = carryover.as_ref().is_some_and(|c| c.joint.p_value < cfg.alpha);
    Ok(DiagnosticsReport { estimates, event_study, f_test, placebo, carryover, pt_suspect, carryover_suspect, notes })
}
