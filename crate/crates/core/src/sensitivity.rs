//! Robust confidence sets under a relative-magnitude bound on post-treatment
//! parallel-trends violations, benchmarked against placebo estimates.
//!
//! With `delta_0` the placebo estimate at the last pre-period and `Delta`
//! the largest change between consecutive placebo estimates, the bias at
//! horizon `l` is taken to lie in `delta_0 +- l * M * Delta`. The resulting
//! conservative set for a target `mu` is
//!
//! ```text
//! (mu - delta_0) +- (z_{1-alpha/2} * se(mu - delta_0) + l * M * Delta)
//! ```
//!
//! and the ATT uses the cell-weighted mean horizon in place of `l`. At
//! `M = 0` this is a debiased interval.

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::diagnostics::PlaceboTest;
use crate::error::{Error, Result};
use crate::inference::bootstrap_vcov;

pub const DEFAULT_MBAR_GRID: [f64; 2] = [0.0, 0.5];
/// Tolerance of the bisection check on the breakdown value.
pub const BISECTION_TOL: f64 = 1e-6;

/// `max |delta_{s+1} - delta_s|` over consecutive placebo periods.
pub fn max_placebo_violation(periods: &[i64], deltas: &[f64]) -> Result<f64> {
    if periods.len() < 2 || periods.len() != deltas.len() {
        return Err(Error::Precondition("need at least 2 placebo estimates".into()));
    }
    let mut order: Vec<usize> = (0..periods.len()).collect();
    order.sort_by_key(|&i| periods[i]);
    let mut worst = 0.0f64;
    for w in order.windows(2) {
        if periods[w[1]] != periods[w[0]] + 1 {
            return Err(Error::Precondition("placebo periods must be consecutive".into()));
        }
        worst = worst.max((deltas[w[1]] - deltas[w[0]]).abs());
    }
    Ok(worst)
}

/// Standard normal quantile `z_{1 - alpha/2}`.
pub fn critical_value(alpha: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - alpha / 2.0)
}

/// Cell-weighted mean horizon from `(l, cells)` pairs with `l >= 1`.
pub fn mean_horizon(weights: &[(i64, usize)]) -> Result<f64> {
    let (s, n) = weights.iter().filter(|w| w.0 >= 1).fold((0.0, 0usize), |(s, n), &(l, c)| (s + l as f64 * c as f64, n + c));
    if n == 0 {
        return Err(Error::Precondition("no post-treatment horizon weights".into()));
    }
    Ok(s / n as f64)
}

/// Inputs of one robust set: the point estimate of the target, `delta_0`,
/// `Delta`, the horizon, and the 2×2 covariance of `(target, delta_0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustInputs {
    pub target: f64,
    pub delta0: f64,
    pub max_violation: f64,
    pub horizon: f64,
    pub se_diff: f64,
    pub alpha: f64,
}

impl RobustInputs {
    pub fn new(
        target: f64,
        delta0: f64,
        max_violation: f64,
        joint_vcov: Option<&DMatrix<f64>>,
        alpha: f64,
        horizon: f64,
    ) -> Result<Self> {
        let v = joint_vcov.ok_or_else(|| {
            Error::Precondition("robust sets need the joint covariance of target and delta_0; run the placebo bootstrap".into())
        })?;
        if v.nrows() != 2 || v.ncols() != 2 {
            return Err(Error::Precondition("joint covariance must be 2x2 (target, delta_0)".into()));
        }
        let var = v[(0, 0)] + v[(1, 1)] - 2.0 * v[(0, 1)];
        Ok(Self { target, delta0, max_violation, horizon, se_diff: var.max(0.0).sqrt(), alpha })
    }

    pub fn center(&self) -> f64 {
        self.target - self.delta0
    }

    fn sampling_radius(&self) -> f64 {
        critical_value(self.alpha) * self.se_diff
    }

    fn slope(&self) -> f64 {
        self.horizon * self.max_violation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CsPoint {
    pub mbar: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CsPoint {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub fn robust_cs(inputs: &RobustInputs, mbar: f64) -> Result<CsPoint> {
    if mbar.is_nan() || mbar < 0.0 {
        return Err(Error::Precondition("M must be nonnegative".into()));
    }
    let r = inputs.sampling_radius() + mbar * inputs.slope();
    let c = inputs.center();
    Ok(CsPoint { mbar, lower: c - r, upper: c + r })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Breakdown {
    /// Smallest `M` with zero in the set.
    Value { mbar: f64, bisection: f64, interpretation: String },
    /// The set never reaches zero (no placebo violation to scale).
    Unbounded,
}

/// Closed-form breakdown value, cross-checked by bisection.
pub fn breakdown_value(inputs: &RobustInputs) -> Breakdown {
    let gap = inputs.center().abs() - inputs.sampling_radius();
    let value = if gap <= 0.0 {
        0.0
    } else if inputs.slope() <= 0.0 {
        return Breakdown::Unbounded;
    } else {
        gap / inputs.slope()
    };
    Breakdown::Value {
        mbar: value,
        bisection: bisect_breakdown(inputs, value * 2.0 + 1.0),
        interpretation: format!(
            "the conclusion survives post-treatment violations up to {value:.3} times the largest placebo violation"
        ),
    }
}

/// Bisection for the smallest `M` in `[0, hi]` whose set contains zero.
pub fn bisect_breakdown(inputs: &RobustInputs, hi: f64) -> f64 {
    let covers = |m: f64| robust_cs(inputs, m).is_ok_and(|cs| cs.contains(0.0));
    if covers(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, hi);
    while hi - lo > BISECTION_TOL / 4.0 {
        let mid = 0.5 * (lo + hi);
        if covers(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Sets along an ascending grid of `M`.
pub fn sensitivity_curve(inputs: &RobustInputs, grid: &[f64]) -> Result<Vec<CsPoint>> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("M grid must be sorted ascending".into()));
    }
    grid.iter().map(|&m| robust_cs(inputs, m)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodCs {
    pub l: i64,
    pub inputs: RobustInputs,
    pub intervals: Vec<CsPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustCs {
    pub label: String,
    pub target: String,
    pub placebo_periods: Vec<i64>,
    pub placebo_estimates: Vec<f64>,
    pub inputs: RobustInputs,
    pub mbar_grid: Vec<f64>,
    pub intervals: Vec<CsPoint>,
    pub breakdown: Breakdown,
    pub per_period: Vec<PeriodCs>,
    pub caveats: Vec<String>,
}

/// Robust sets for the holdout-fit ATT and each post-treatment `tau_l`,
/// from a placebo test whose bootstrap covers all of them jointly.
pub fn robust_analysis(placebo: &PlaceboTest, grid: &[f64], alpha: f64) -> Result<RobustCs> {
    let est = &placebo.estimate;
    let max_violation = max_placebo_violation(&est.periods, &est.deltas)?;
    let last = est.periods.iter().copied().max().expect("nonempty placebo set");
    let j0 = est.periods.iter().position(|&p| p == last).expect("present");
    let delta0 = est.deltas[j0];
    let weights: Vec<(i64, usize)> = est.post.iter().map(|p| (p.0, p.2)).collect();
    let horizon = mean_horizon(&weights)?;

    let vcov = bootstrap_vcov(&placebo.draws, &[placebo.att_column(), j0])?;
    let inputs = RobustInputs::new(est.att, delta0, max_violation, Some(&vcov), alpha, horizon)?;
    let intervals = sensitivity_curve(&inputs, grid)?;
    let breakdown = breakdown_value(&inputs);

    let mut per_period = Vec::new();
    for &(l, tau, _) in &est.post {
        let Some(col) = placebo.post_column(l) else { continue };
        let Ok(v) = bootstrap_vcov(&placebo.draws, &[col, j0]) else { continue };
        let pin = RobustInputs::new(tau, delta0, max_violation, Some(&v), alpha, l as f64)?;
        per_period.push(PeriodCs { l, intervals: sensitivity_curve(&pin, grid)?, inputs: pin });
    }
    Ok(RobustCs {
        label: "conservative robust CS".into(),
        target: "ATT (placebo-holdout fit)".into(),
        placebo_periods: est.periods.clone(),
        placebo_estimates: est.deltas.clone(),
        inputs,
        mbar_grid: grid.to_vec(),
        intervals,
        breakdown,
        per_period,
        caveats: vec!["the placebo benchmark Delta is a plug-in estimate; its sampling noise is not propagated".into()],
    })
}

#[cfg(test)]
mod tests;
