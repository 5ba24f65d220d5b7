//! Synthetic panels with known potential outcomes.
//!
//! `Y(0) = alpha_i + xi_t + eps_it` plus optional violations applied to
//! ever-treated units: a linear drift in calendar rank, a constant shift
//! from a given relative period on, anticipation ramps before adoption and
//! carryover after exit. Those violations are part of the emitted `Y(0)`
//! grid, so `Y = D * Y(1) + (1 - D) * Y(0)` holds cellwise.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::{compute_event_structure, Cohort, PanelDataset};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Assignment {
    /// All ever-treated units adopt at rank `t0`.
    Block { t0: usize },
    /// Ever-treated units are split evenly over the listed adoption ranks.
    Staggered { cohorts: Vec<usize> },
    /// Each ever-treated unit adopts with probability `rate` per period;
    /// units that never do stay untreated.
    Hazard { rate: f64 },
    /// Two-state Markov chain per ever-treated unit, starting untreated.
    Reversal { p_on: f64, p_off: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EffectFn {
    Constant {
        value: f64,
    },
    /// `base + slope * (l - 1)`.
    Ramp {
        base: f64,
        slope: f64,
    },
    /// Ramp parameters per adoption rank; other cohorts use `other`.
    ByCohort {
        cohorts: Vec<(usize, f64, f64)>,
        other: (f64, f64),
    },
}

impl EffectFn {
    pub fn eval(&self, g: usize, l: i64) -> f64 {
        let (base, slope) = match self {
            EffectFn::Constant { value } => (*value, 0.0),
            EffectFn::Ramp { base, slope } => (*base, *slope),
            EffectFn::ByCohort { cohorts, other } => cohorts.iter().find(|c| c.0 == g).map_or(*other, |c| (c.1, c.2)),
        };
        base + slope * (l - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DgpSpec {
    pub n_units: usize,
    pub n_times: usize,
    pub assignment: Assignment,
    pub never_treated_share: f64,
    pub effect: EffectFn,
    pub unit_fe_sd: f64,
    pub time_fe_sd: f64,
    pub noise_sd: f64,
    /// Added per calendar period to ever-treated units' `Y(0)`.
    pub pretrend_slope: f64,
    pub anticipation_window: usize,
    pub anticipation_magnitude: f64,
    pub carryover_window: usize,
    pub carryover_magnitude: f64,
    /// Constant added to ever-treated units' `Y(0)` at `K >= bias_from`.
    pub bias_shift: f64,
    pub bias_from: i64,
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            n_units: 100,
            n_times: 10,
            assignment: Assignment::Staggered { cohorts: vec![4, 5, 6, 7] },
            never_treated_share: 0.3,
            effect: EffectFn::Constant { value: 1.0 },
            unit_fe_sd: 1.0,
            time_fe_sd: 1.0,
            noise_sd: 1.0,
            pretrend_slope: 0.0,
            anticipation_window: 0,
            anticipation_magnitude: 0.0,
            carryover_window: 0,
            carryover_magnitude: 0.0,
            bias_shift: 0.0,
            bias_from: 0,
            missing_rate: 0.0,
            seed: 1,
        }
    }
}

impl DgpSpec {
    fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Precondition(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        prob("never_treated_share", self.never_treated_share)?;
        prob("missing_rate", self.missing_rate)?;
        match &self.assignment {
            Assignment::Hazard { rate } => prob("rate", *rate)?,
            Assignment::Reversal { p_on, p_off } => {
                prob("p_on", *p_on)?;
                prob("p_off", *p_off)?;
            }
            Assignment::Block { t0 } if *t0 >= self.n_times => {
                return Err(Error::Precondition("block adoption time outside the panel".into()))
            }
            Assignment::Staggered { cohorts } if cohorts.is_empty() || cohorts.iter().any(|&g| g >= self.n_times) => {
                return Err(Error::Precondition("staggered cohorts must be nonempty ranks inside the panel".into()))
            }
            _ => {}
        }
        for sd in [self.unit_fe_sd, self.time_fe_sd, self.noise_sd] {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::Precondition("standard deviations must be finite and nonnegative".into()));
            }
        }
        if self.n_units < 2 || self.n_times < 2 {
            return Err(Error::TooSmall("simulated panel needs at least 2 units and 2 periods".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthCell {
    pub l: i64,
    pub estimate: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrueEstimands {
    pub att: f64,
    pub n_treated_cells: usize,
    pub dynamic: Vec<TruthCell>,
    /// `(g, l, tau_gl, cells)`.
    pub group_time: Vec<(usize, i64, f64, usize)>,
}

impl TrueEstimands {
    pub fn tau_l(&self, l: i64) -> Option<f64> {
        self.dynamic.iter().find(|d| d.l == l).map(|d| d.estimate)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub dataset: PanelDataset,
    /// Row-major unit x time grids.
    pub tau: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub truth: TrueEstimands,
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sd).expect("valid sd").sample(rng)
    }
}

fn assign(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<u8>> {
    let (n, t) = (spec.n_units, spec.n_times);
    let n_never = (n as f64 * spec.never_treated_share).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut d = vec![vec![0u8; t]; n];
    for (pos, &u) in order.iter().enumerate().skip(n_never) {
        let k = pos - n_never;
        match &spec.assignment {
            Assignment::Block { t0 } => d[u][*t0..].fill(1),
            Assignment::Staggered { cohorts } => d[u][cohorts[k % cohorts.len()]..].fill(1),
            Assignment::Hazard { rate } => {
                if let Some(g) = (1..t).find(|_| rng.random::<f64>() < *rate) {
                    d[u][g..].fill(1);
                }
            }
            Assignment::Reversal { p_on, p_off } => {
                for s in 1..t {
                    let p = if d[u][s - 1] == 1 { 1.0 - p_off } else { *p_on };
                    d[u][s] = (rng.random::<f64>() < p) as u8;
                }
            }
        }
    }
    d
}

/// Draws a panel from `spec`, using `spec.seed`.
pub fn simulate_panel(spec: &DgpSpec) -> Result<SyntheticPanel> {
    spec.validate()?;
    let (n, t) = (spec.n_units, spec.n_times);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = assign(spec, &mut rng);
    let alpha: Vec<f64> = (0..n).map(|_| normal(&mut rng, spec.unit_fe_sd)).collect();
    let xi: Vec<f64> = (0..t).map(|_| normal(&mut rng, spec.time_fe_sd)).collect();
    let eps: Vec<f64> = (0..n * t).map(|_| normal(&mut rng, spec.noise_sd)).collect();
    let missing: Vec<bool> = (0..n * t).map(|_| rng.random::<f64>() < spec.missing_rate).collect();

    let placeholder = vec![vec![0.0; t]; n];
    let skeleton = PanelDataset::from_grid(&placeholder, &d)?;
    let es = compute_event_structure(&skeleton);

    let mut y0 = vec![0.0; n * t];
    let mut tau = vec![0.0; n * t];
    for u in 0..n {
        let ever = d[u].contains(&1);
        let g = match es.cohort(u) {
            Cohort::Adopts(g) => g,
            _ => 0,
        };
        let mut since_exit: Option<usize> = None;
        for s in 0..t {
            let k = u * t + s;
            let rel = es.relative_time(u, s);
            let mut v = alpha[u] + xi[s] + eps[k];
            if ever {
                v += spec.pretrend_slope * s as f64;
                if rel.is_some_and(|r| r >= spec.bias_from) {
                    v += spec.bias_shift;
                }
            }
            if s > 0 && d[u][s - 1] == 1 && d[u][s] == 0 {
                since_exit = Some(0);
            }
            if d[u][s] == 0 {
                let w = spec.anticipation_window as i64;
                if let Some(r) = rel.filter(|&r| w > 0 && r <= 0 && r > -w) {
                    v += spec.anticipation_magnitude * (w + r) as f64 / w as f64;
                }
                if let Some(j) = since_exit {
                    if j < spec.carryover_window {
                        v += spec.carryover_magnitude;
                    }
                    since_exit = Some(j + 1);
                }
            } else {
                since_exit = None;
            }
            y0[k] = v;
            tau[k] = if ever { spec.effect.eval(g, rel.filter(|&r| r >= 1).unwrap_or(1)) } else { 0.0 };
        }
    }
    let y1: Vec<f64> = y0.iter().zip(&tau).map(|(a, b)| a + b).collect();

    let outcome: Vec<Option<f64>> = (0..n * t)
        .map(|k| {
            let treated = d[k / t][k % t] == 1;
            (!missing[k]).then_some(if treated { y1[k] } else { y0[k] })
        })
        .collect();
    let treatment: Vec<Option<bool>> = d.iter().flatten().map(|&x| Some(x == 1)).collect();
    let n_treated = treatment.iter().filter(|x| **x == Some(true)).count();
    if n_treated == 0 || n_treated == n * t {
        return Err(Error::Precondition("design produced no treated or no control cells".into()));
    }
    let dataset = PanelDataset::new(skeleton.unit_ids().to_vec(), skeleton.time_ids().to_vec(), outcome, treatment)?;
    let mut panel = SyntheticPanel { dataset, tau, y0, y1, truth: TrueEstimands::default_empty() };
    panel.truth = true_estimands(&panel);
    Ok(panel)
}

impl TrueEstimands {
    fn default_empty() -> Self {
        Self { att: f64::NAN, n_treated_cells: 0, dynamic: Vec::new(), group_time: Vec::new() }
    }
}

/// Truth over treated cells with an observed outcome, computed from the
/// emitted effect grid.
pub fn true_estimands(sp: &SyntheticPanel) -> TrueEstimands {
    let ds = &sp.dataset;
    let es = compute_event_structure(ds);
    let t = ds.n_times();
    let mut total = (0.0, 0usize);
    let mut by_l: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    let mut by_gl: BTreeMap<(usize, i64), (f64, usize)> = BTreeMap::new();
    for u in 0..ds.n_units() {
        for s in 0..t {
            if ds.treated(u, s) != Some(true) || ds.outcome(u, s).is_none() {
                continue;
            }
            let tau = sp.tau[u * t + s];
            total.0 += tau;
            total.1 += 1;
            if let Some(l) = es.relative_time(u, s) {
                let e = by_l.entry(l).or_default();
                e.0 += tau;
                e.1 += 1;
                if let Cohort::Adopts(g) = es.cohort(u) {
                    let e = by_gl.entry((g, l)).or_default();
                    e.0 += tau;
                    e.1 += 1;
                }
            }
        }
    }
    TrueEstimands {
        att: if total.1 > 0 { total.0 / total.1 as f64 } else { f64::NAN },
        n_treated_cells: total.1,
        dynamic: by_l.into_iter().map(|(l, (s, c))| TruthCell { l, estimate: s / c as f64, n_cells: c }).collect(),
        group_time: by_gl.into_iter().map(|((g, l), (s, c))| (g, l, s / c as f64, c)).collect(),
    }
}

/// Fixed staggered panel on which the static TWFE coefficient is negative
/// although every cell effect is at least 1.
///
/// Eight periods; units 1-5 adopt at rank 1 with effect `1 + 2(l - 1)`,
/// units 6-10 adopt at rank 5 with effect 1, unit 11 is never treated.
/// `Y(0) = 0.3 i + 0.2 t^2`, no noise.
pub fn adversarial_negative_weighting() -> SyntheticPanel {
    const T: usize = 8;
    let spec: [(usize, Option<usize>); 3] = [(5, Some(1)), (5, Some(5)), (1, None)];
    let effect = EffectFn::ByCohort { cohorts: vec![(1, 1.0, 2.0), (5, 1.0, 0.0)], other: (1.0, 0.0) };
    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut y0 = Vec::new();
    let mut tau = Vec::new();
    let mut i = 0;
    for (count, g) in spec {
        for _ in 0..count {
            i += 1;
            let mut yr = Vec::with_capacity(T);
            let mut dr = Vec::with_capacity(T);
            for s in 0..T {
                let base = 0.3 * i as f64 + 0.2 * (s * s) as f64;
                let eff = match g {
                    Some(g) if s >= g => effect.eval(g, (s - g + 1) as i64),
                    Some(g) => effect.eval(g, 1),
                    None => 0.0,
                };
                let treated = g.is_some_and(|g| s >= g);
                y0.push(base);
                tau.push(eff);
                yr.push(if treated { base + eff } else { base });
                dr.push(treated as u8);
            }
            y.push(yr);
            d.push(dr);
        }
    }
    let dataset = PanelDataset::from_grid(&y, &d).expect("fixture is well formed");
    let y1 = y0.iter().zip(&tau).map(|(a, b)| a + b).collect();
    let mut panel = SyntheticPanel { dataset, tau, y0, y1, truth: TrueEstimands::default_empty() };
    panel.truth = true_estimands(&panel);
    panel
}
