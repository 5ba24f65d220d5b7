//! Fixed-effects least squares on possibly unbalanced panels.
//!
//! Regressors and response are demeaned by alternating projections; the
//! slope coefficients come from OLS on the demeaned design and the fixed
//! effects are recovered from the accumulated projections. Unit and time
//! effects are normalized to mean zero over their estimable levels, the
//! intercept absorbs the rest.

mod demean;
mod twfe;
mod vcov;

pub use twfe::{twfe_att, twfe_event_study, EventStudyCoef, TwfeEstimate, TwfeEventStudy};
pub use vcov::{cluster_vcov, homoskedastic_vcov, ClusterVcov, SmallSample};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use demean::{demean, Layout};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;
/// Relative residual-norm threshold below which a demeaned regressor is
/// treated as collinear.
pub const PIVOT_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FeOptions {
    pub unit_trends: bool,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for FeOptions {
    fn default() -> Self {
        Self { unit_trends: false, tol: DEFAULT_TOL, max_sweeps: DEFAULT_MAX_SWEEPS }
    }
}

/// Observations of a fixed-effects regression. Unit and time indices are
/// arbitrary dense labels, so stacked designs can pass sub-dataset-specific
/// units and periods.
#[derive(Debug, Clone, Default)]
pub struct FeProblem {
    pub n_units: usize,
    pub n_times: usize,
    pub unit: Vec<usize>,
    pub time: Vec<usize>,
    /// Extra fixed-effect dimension: number of levels and per-observation level.
    pub group: Option<(usize, Vec<usize>)>,
    pub response: Vec<f64>,
    pub regressors: Vec<(String, Vec<f64>)>,
    pub cluster: Vec<usize>,
    /// Originating grid cell per observation (bookkeeping only).
    pub cell: Vec<usize>,
}

impl FeProblem {
    /// Observations at the given grid cells of `ds`; responses are outcomes,
    /// clusters come from the dataset.
    pub fn from_cells(ds: &PanelDataset, cells: &[usize]) -> Self {
        let t = ds.n_times();
        let y = ds.outcome_grid();
        Self {
            n_units: ds.n_units(),
            n_times: t,
            unit: cells.iter().map(|&c| c / t).collect(),
            time: cells.iter().map(|&c| c % t).collect(),
            group: None,
            response: cells.iter().map(|&c| y[c].expect("complete cell")).collect(),
            regressors: Vec::new(),
            cluster: cells.iter().map(|&c| ds.cluster_of(c / t)).collect(),
            cell: cells.to_vec(),
        }
    }

    pub fn with_regressor(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.regressors.push((name.into(), values));
        self
    }

    pub fn with_covariates(mut self, ds: &PanelDataset, covariates: &[usize]) -> Self {
        for &c in covariates {
            let cov = &ds.covariates()[c];
            let v = self.cell.iter().map(|&k| cov.values[k].expect("complete cell")).collect();
            self.regressors.push((cov.name.clone(), v));
        }
        self
    }

    pub fn n_obs(&self) -> usize {
        self.response.len()
    }
}

#[derive(Debug, Clone)]
pub struct FeFit {
    pub coefficients: Vec<(String, f64)>,
    /// Regressors dropped as collinear with the fixed effects or with
    /// earlier regressors.
    pub dropped: Vec<String>,
    pub intercept: f64,
    pub unit_effects: Vec<Option<f64>>,
    /// Per-unit slope on time rank when unit trends are fitted.
    pub unit_slopes: Option<Vec<Option<f64>>>,
    pub time_effects: Vec<Option<f64>>,
    pub group_effects: Option<Vec<Option<f64>>>,
    pub residuals: Vec<f64>,
    pub cells: Vec<usize>,
    pub sweeps: usize,
    pub achieved_tol: f64,
    pub(crate) design: DMatrix<f64>,
    pub(crate) bread: DMatrix<f64>,
    pub(crate) n_fe_params: usize,
}

impl FeFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients.iter().find(|(n, _)| n == name).map(|p| p.1)
    }

    pub fn n_obs(&self) -> usize {
        self.residuals.len()
    }

    pub fn n_params(&self) -> usize {
        self.coefficients.len()
    }

    /// Linear prediction at (unit, time[, group]) with regressor values in
    /// the order of `coefficients`. `None` when an effect is inestimable.
    pub fn predict(&self, unit: usize, time: usize, group: Option<usize>, x: &[f64]) -> Option<f64> {
        let mut p = self.intercept + self.unit_effects[unit]? + self.time_effects[time]?;
        if let Some(slopes) = &self.unit_slopes {
            p += slopes[unit]? * time as f64;
        }
        if let (Some(g), Some(ge)) = (group, &self.group_effects) {
            p += ge[g]?;
        }
        for ((_, b), v) in self.coefficients.iter().zip(x) {
            p += b * v;
        }
        Some(p)
    }
}

pub fn fit_fe(problem: &FeProblem, opts: &FeOptions) -> Result<FeFit> {
    let n = problem.n_obs();
    if n == 0 {
        return Err(Error::Precondition("fixed-effects fit with no observations".into()));
    }
    let layout = Layout::new(
        problem.n_units,
        problem.n_times,
        &problem.unit,
        &problem.time,
        problem.group.as_ref().map(|(ng, g)| (*ng, g.as_slice())),
        opts.unit_trends,
    );

    let dy = demean(&layout, &problem.response, opts.tol, opts.max_sweeps)?;
    let mut sweeps = dy.sweeps;
    let mut achieved = dy.achieved;

    // sequential pivoting: keep a column when its demeaned part, after
    // projecting on the columns already kept, retains a non-negligible
    // fraction of its raw norm
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    let mut demeaned_cols: Vec<demean::Demeaned> = Vec::new();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (j, (name, raw)) in problem.regressors.iter().enumerate() {
        if raw.len() != n {
            return Err(Error::Precondition(format!("regressor {name:?} has wrong length")));
        }
        let d = demean(&layout, raw, opts.tol, opts.max_sweeps)?;
        sweeps = sweeps.max(d.sweeps);
        achieved = achieved.max(d.achieved);
        let raw_norm = norm(raw);
        let mut r = d.values.clone();
        for q in &basis {
            let c = dot(q, &r);
            for (ri, qi) in r.iter_mut().zip(q) {
                *ri -= c * qi;
            }
        }
        let rn = norm(&r);
        if raw_norm == 0.0 || rn <= PIVOT_THRESHOLD * raw_norm {
            dropped.push(name.clone());
            continue;
        }
        for ri in r.iter_mut() {
            *ri /= rn;
        }
        basis.push(r);
        kept.push(j);
        demeaned_cols.push(d);
    }

    let k = kept.len();
    let design = DMatrix::from_fn(n, k, |i, j| demeaned_cols[j].values[i]);
    let ytil = DVector::from_column_slice(&dy.values);
    let (beta, bread) = if k > 0 {
        let xtx = design.transpose() * &design;
        let chol = xtx.clone().cholesky().ok_or_else(|| Error::Precondition("demeaned design is singular".into()))?;
        let beta = chol.solve(&(design.transpose() * &ytil));
        (beta, chol.inverse())
    } else {
        (DVector::zeros(0), DMatrix::zeros(0, 0))
    };
    let resid = &ytil - &design * &beta;

    // fixed effects of y - X beta
    let mut fx = dy.effects.clone();
    for (j, d) in demeaned_cols.iter().enumerate() {
        fx.axpy(-beta[j], &d.effects);
    }

    let unit_ok: Vec<bool> = (0..problem.n_units)
        .map(|u| !layout.unit_obs[u].is_empty() && (!opts.unit_trends || layout.slope_identified(u)))
        .collect();
    let time_ok: Vec<bool> = (0..problem.n_times).map(|t| !layout.time_obs[t].is_empty()).collect();

    // with trends the unit block is a + b (rank - center); store the line's
    // value at rank 0 as the unit effect
    let mut unit_raw: Vec<f64> = fx.unit.clone();
    if opts.unit_trends {
        for u in 0..problem.n_units {
            unit_raw[u] -= fx.slope[u] * layout.center[u];
        }
    }
    let mean_over = |v: &[f64], ok: &[bool]| {
        let (s, c) = v.iter().zip(ok).filter(|p| *p.1).fold((0.0, 0usize), |(s, c), (x, _)| (s + x, c + 1));
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    };
    let mu_u = mean_over(&unit_raw, &unit_ok);
    let mu_t = mean_over(&fx.time, &time_ok);
    let mut intercept = mu_u + mu_t;
    let unit_effects = unit_raw.iter().zip(&unit_ok).map(|(a, &ok)| ok.then_some(a - mu_u)).collect();
    let time_effects = fx.time.iter().zip(&time_ok).map(|(a, &ok)| ok.then_some(a - mu_t)).collect();
    let unit_slopes = opts.unit_trends.then(|| fx.slope.iter().zip(&unit_ok).map(|(b, &ok)| ok.then_some(*b)).collect());
    let group_effects = problem.group.as_ref().map(|(ng, _)| {
        let ok: Vec<bool> = (0..*ng).map(|g| !layout.group_obs[g].is_empty()).collect();
        let mu_g = mean_over(&fx.group, &ok);
        intercept += mu_g;
        fx.group.iter().zip(&ok).map(|(a, &ok)| ok.then_some(a - mu_g)).collect()
    });

    let n_units_est = unit_ok.iter().filter(|&&b| b).count();
    let n_slopes = if opts.unit_trends { n_units_est } else { 0 };
    let n_times_est = time_ok.iter().filter(|&&b| b).count();
    let n_groups_est = problem.group.as_ref().map_or(0, |(ng, _)| (0..*ng).filter(|&g| !layout.group_obs[g].is_empty()).count());
    let n_fe_params = n_units_est + n_slopes + n_times_est.saturating_sub(1) + n_groups_est.saturating_sub(1);

    Ok(FeFit {
        coefficients: kept.iter().zip(beta.iter()).map(|(&j, &b)| (problem.regressors[j].0.clone(), b)).collect(),
        dropped,
        intercept,
        unit_effects,
        unit_slopes,
        time_effects,
        group_effects,
        residuals: resid.iter().copied().collect(),
        cells: problem.cell.clone(),
        sweeps,
        achieved_tol: achieved,
        design,
        bread,
        n_fe_params,
    })
}

/// Largest change produced by one projection pass; zero (to tolerance) on
/// already-demeaned data.
pub fn projection_change(problem: &FeProblem, column: &[f64], unit_trends: bool) -> f64 {
    let layout = Layout::new(
        problem.n_units,
        problem.n_times,
        &problem.unit,
        &problem.time,
        problem.group.as_ref().map(|(ng, g)| (*ng, g.as_slice())),
        unit_trends,
    );
    demean::projection_change(&layout, column)
}

/// Demeaned copy of a column (exposed for invariance checks).
pub fn demean_column(problem: &FeProblem, column: &[f64], opts: &FeOptions) -> Result<Vec<f64>> {
    let layout = Layout::new(
        problem.n_units,
        problem.n_times,
        &problem.unit,
        &problem.time,
        problem.group.as_ref().map(|(ng, g)| (*ng, g.as_slice())),
        opts.unit_trends,
    );
    Ok(demean(&layout, column, opts.tol, opts.max_sweeps)?.values)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Grid cells with outcome, treatment and the listed covariates observed.
pub fn complete_cells(ds: &PanelDataset, covariates: &[usize], mut keep: impl FnMut(usize, usize) -> bool) -> Vec<usize> {
    let mut out = Vec::new();
    for u in 0..ds.n_units() {
        for s in 0..ds.n_times() {
            if ds.is_complete(u, s, covariates) && keep(u, s) {
                out.push(ds.idx(u, s));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
