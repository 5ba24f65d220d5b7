//! Alternating-projections demeaning with effect bookkeeping.
//!
//! Each sweep projects out the unit block (optionally unit intercept plus
//! unit slope on time rank), the time block and an optional extra group
//! block, in that fixed order. The amounts removed are accumulated so the
//! fixed-effect coefficients of every demeaned column are available at
//! convergence: `v = v_demeaned + unit[u] + slope[u] * (rank - center[u]) + time[t] + group[g]`.

use crate::error::{Error, Result};

pub(crate) struct Layout {
    pub n_units: usize,
    pub n_times: usize,
    pub n_groups: usize,
    pub unit_obs: Vec<Vec<usize>>,
    pub time_obs: Vec<Vec<usize>>,
    pub group_obs: Vec<Vec<usize>>,
    pub time: Vec<usize>,
    pub trends: bool,
    // per unit: mean rank and centered sum of squares of rank
    pub center: Vec<f64>,
    pub sxx: Vec<f64>,
}

impl Layout {
    pub fn new(
        n_units: usize,
        n_times: usize,
        unit: &[usize],
        time: &[usize],
        group: Option<(usize, &[usize])>,
        trends: bool,
    ) -> Self {
        let mut unit_obs = vec![Vec::new(); n_units];
        let mut time_obs = vec![Vec::new(); n_times];
        for (k, (&u, &t)) in unit.iter().zip(time).enumerate() {
            unit_obs[u].push(k);
            time_obs[t].push(k);
        }
        let (n_groups, group_obs) = match group {
            Some((ng, g)) => {
                let mut go = vec![Vec::new(); ng];
                for (k, &gi) in g.iter().enumerate() {
                    go[gi].push(k);
                }
                (ng, go)
            }
            None => (0, Vec::new()),
        };
        let mut center = vec![0.0; n_units];
        let mut sxx = vec![0.0; n_units];
        if trends {
            for u in 0..n_units {
                let obs = &unit_obs[u];
                if obs.is_empty() {
                    continue;
                }
                let c = obs.iter().map(|&k| time[k] as f64).sum::<f64>() / obs.len() as f64;
                center[u] = c;
                sxx[u] = obs.iter().map(|&k| (time[k] as f64 - c).powi(2)).sum();
            }
        }
        Self { n_units, n_times, n_groups, unit_obs, time_obs, group_obs, time: time.to_vec(), trends, center, sxx }
    }

    pub fn slope_identified(&self, u: usize) -> bool {
        self.sxx[u] > 1e-12
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Effects {
    pub unit: Vec<f64>,
    pub slope: Vec<f64>,
    pub time: Vec<f64>,
    pub group: Vec<f64>,
}

impl Effects {
    fn zeros(l: &Layout) -> Self {
        Self {
            unit: vec![0.0; l.n_units],
            slope: vec![0.0; if l.trends { l.n_units } else { 0 }],
            time: vec![0.0; l.n_times],
            group: vec![0.0; l.n_groups],
        }
    }

    pub fn axpy(&mut self, a: f64, other: &Effects) {
        let pairs = [
            (&mut self.unit, &other.unit),
            (&mut self.slope, &other.slope),
            (&mut self.time, &other.time),
            (&mut self.group, &other.group),
        ];
        for (dst, src) in pairs {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }
}

pub(crate) struct Demeaned {
    pub values: Vec<f64>,
    pub effects: Effects,
    pub sweeps: usize,
    pub achieved: f64,
}

/// One projection pass over all blocks; returns the largest change.
fn sweep(l: &Layout, v: &mut [f64], fx: &mut Effects) -> f64 {
    let mut max_change = 0.0f64;
    for (u, obs) in l.unit_obs.iter().enumerate() {
        if obs.is_empty() {
            continue;
        }
        let m = obs.iter().map(|&k| v[k]).sum::<f64>() / obs.len() as f64;
        if l.trends && l.slope_identified(u) {
            let c = l.center[u];
            let b = obs.iter().map(|&k| (l.time[k] as f64 - c) * v[k]).sum::<f64>() / l.sxx[u];
            for &k in obs {
                let d = m + b * (l.time[k] as f64 - c);
                v[k] -= d;
                max_change = max_change.max(d.abs());
            }
            fx.slope[u] += b;
        } else {
            for &k in obs {
                v[k] -= m;
            }
            max_change = max_change.max(m.abs());
        }
        fx.unit[u] += m;
    }
    for (t, obs) in l.time_obs.iter().enumerate() {
        if obs.is_empty() {
            continue;
        }
        let m = obs.iter().map(|&k| v[k]).sum::<f64>() / obs.len() as f64;
        for &k in obs {
            v[k] -= m;
        }
        max_change = max_change.max(m.abs());
        fx.time[t] += m;
    }
    for (g, obs) in l.group_obs.iter().enumerate() {
        if obs.is_empty() {
            continue;
        }
        let m = obs.iter().map(|&k| v[k]).sum::<f64>() / obs.len() as f64;
        for &k in obs {
            v[k] -= m;
        }
        max_change = max_change.max(m.abs());
        fx.group[g] += m;
    }
    max_change
}

pub(crate) fn demean(l: &Layout, column: &[f64], tol: f64, max_sweeps: usize) -> Result<Demeaned> {
    let mut v = column.to_vec();
    let mut fx = Effects::zeros(l);
    let mut achieved = f64::INFINITY;
    let mut converged_at = None;
    for s in 1..=max_sweeps {
        let change = sweep(l, &mut v, &mut fx);
        // Linear convergence leaves an error several times the last change,
        // so once within `tol` keep polishing until the change stalls at the
        // rounding floor.
        let stalled = change >= achieved || change <= tol * 1e-6;
        achieved = achieved.min(change);
        if converged_at.is_some() && stalled {
            return Ok(Demeaned { values: v, effects: fx, sweeps: s, achieved });
        }
        if achieved <= tol && converged_at.is_none() {
            converged_at = Some(s);
        }
    }
    match converged_at {
        Some(_) => Ok(Demeaned { values: v, effects: fx, sweeps: max_sweeps, achieved }),
        None => Err(Error::NonConvergence { sweeps: max_sweeps, achieved }),
    }
}

/// Runs a single projection pass on a copy and reports the largest change.
pub(crate) fn projection_change(l: &Layout, column: &[f64]) -> f64 {
    let mut v = column.to_vec();
    let mut fx = Effects::zeros(l);
    sweep(l, &mut v, &mut fx)
}
