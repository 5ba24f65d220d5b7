//! Goodman-Bacon decomposition of the static TWFE coefficient into
//! timing-group 2×2 DIDs with variance-share weights.
//!
//! Timing groups are the adoption cohorts, the never-treated units and (if
//! present) the always-treated units, which behave as a cohort with
//! treatment share one. With `n` the sample shares, `D` the within-group
//! share of treated periods and `V` the variance of double-demeaned
//! treatment, an earlier group `k` and a later group `l` contribute
//!
//! ```text
//! s_kU   = (n_k + n_U)^2 n_kU (1 - n_kU) D_k (1 - D_k) / V
//! s_kl^k = ((n_k + n_l)(1 - D_l))^2 n_kl (1 - n_kl) (D_k - D_l)/(1 - D_l) (1 - D_k)/(1 - D_l) / V
//! s_kl^l = ((n_k + n_l) D_k)^2 n_kl (1 - n_kl) (D_l / D_k) (D_k - D_l)/D_k / V
//! ```
//!
//! where `n_kU = n_k / (n_k + n_U)` and `n_kl = n_k / (n_k + n_l)`.

use serde::Serialize;

use super::require_staggered;
use crate::error::{Error, Result};
use crate::fe::{complete_cells, fit_fe, FeOptions, FeProblem};
use crate::panel::{compute_event_structure, Cohort, PanelDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonKind {
    TreatedVsNever,
    EarlierVsLater,
    LaterVsEarlier,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaconComponent {
    pub kind: ComparisonKind,
    pub treated: String,
    pub control: String,
    pub estimate: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaconDecomposition {
    pub components: Vec<BaconComponent>,
    pub twfe: f64,
    /// `sum(weight * estimate)`.
    pub reconstructed: f64,
    pub notes: Vec<String>,
}

struct Group {
    label: String,
    /// First treated rank; 0 for always-treated, `None` for never-treated.
    start: Option<usize>,
    share: f64,
    dbar: f64,
    /// Mean outcome per period.
    ybar: Vec<f64>,
}

impl Group {
    fn mean_over(&self, from: usize, to: usize) -> f64 {
        self.ybar[from..to].iter().sum::<f64>() / (to - from) as f64
    }
}

pub fn bacon_decompose(ds: &PanelDataset) -> Result<BaconDecomposition> {
    if ds.missing_cells() > 0 {
        return Err(Error::Unbalanced(
            "the decomposition needs a balanced panel without missing cells; compare estimators instead".into(),
        ));
    }
    let es = compute_event_structure(ds);
    require_staggered(&es, "bacon decomposition")?;
    let (n, t) = (ds.n_units(), ds.n_times());

    let mut keys: Vec<Option<usize>> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for u in 0..n {
        let key = match es.cohort(u) {
            Cohort::Adopts(g) => Some(g),
            Cohort::LeftCensored => Some(0),
            _ => None,
        };
        match keys.iter().position(|k| *k == key) {
            Some(i) => members[i].push(u),
            None => {
                keys.push(key);
                members.push(vec![u]);
            }
        }
    }
    let groups: Vec<Group> = keys
        .iter()
        .zip(&members)
        .map(|(&start, us)| {
            let ybar =
                (0..t).map(|s| us.iter().map(|&u| ds.outcome(u, s).expect("balanced")).sum::<f64>() / us.len() as f64).collect();
            Group {
                label: match start {
                    None => "never".into(),
                    Some(0) => "always".into(),
                    Some(g) => format!("adopt {}", ds.time_ids()[g]),
                },
                start,
                share: us.len() as f64 / n as f64,
                dbar: start.map_or(0.0, |g| (t - g) as f64 / t as f64),
                ybar,
            }
        })
        .collect();

    let vd = demeaned_treatment_variance(ds);
    if vd <= 0.0 {
        return Err(Error::TreatmentCollinear);
    }

    let mut components = Vec::new();
    let never = groups.iter().find(|g| g.start.is_none());
    let mut timed: Vec<&Group> = groups.iter().filter(|g| g.start.is_some()).collect();
    timed.sort_by_key(|g| g.start);

    if let Some(u) = never {
        for k in timed.iter().filter(|k| k.start != Some(0)) {
            let g = k.start.unwrap();
            let est = (k.mean_over(g, t) - k.mean_over(0, g)) - (u.mean_over(g, t) - u.mean_over(0, g));
            let nku = k.share / (k.share + u.share);
            let w = (k.share + u.share).powi(2) * nku * (1.0 - nku) * k.dbar * (1.0 - k.dbar) / vd;
            components.push(BaconComponent {
                kind: ComparisonKind::TreatedVsNever,
                treated: k.label.clone(),
                control: u.label.clone(),
                estimate: est,
                weight: w,
            });
        }
    }
    for (a, k) in timed.iter().enumerate() {
        for l in &timed[a + 1..] {
            let (gk, gl) = (k.start.unwrap(), l.start.unwrap());
            let nkl = k.share / (k.share + l.share);
            let scale = nkl * (1.0 - nkl);
            if gk > 0 {
                // earlier group treated, later group not yet treated, over [0, gl)
                let est = (k.mean_over(gk, gl) - k.mean_over(0, gk)) - (l.mean_over(gk, gl) - l.mean_over(0, gk));
                let w = ((k.share + l.share) * (1.0 - l.dbar)).powi(2)
                    * scale
                    * ((k.dbar - l.dbar) / (1.0 - l.dbar))
                    * ((1.0 - k.dbar) / (1.0 - l.dbar))
                    / vd;
                components.push(BaconComponent {
                    kind: ComparisonKind::EarlierVsLater,
                    treated: k.label.clone(),
                    control: l.label.clone(),
                    estimate: est,
                    weight: w,
                });
            }
            // later group treated, earlier group already treated, over [gk, t)
            let est = (l.mean_over(gl, t) - l.mean_over(gk, gl)) - (k.mean_over(gl, t) - k.mean_over(gk, gl));
            let w = ((k.share + l.share) * k.dbar).powi(2) * scale * (l.dbar / k.dbar) * ((k.dbar - l.dbar) / k.dbar) / vd;
            components.push(BaconComponent {
                kind: ComparisonKind::LaterVsEarlier,
                treated: l.label.clone(),
                control: k.label.clone(),
                estimate: est,
                weight: w,
            });
        }
    }

    let reconstructed = components.iter().map(|c| c.weight * c.estimate).sum();
    let mut notes = Vec::new();
    if !ds.covariates().is_empty() {
        notes.push("covariates are ignored by the decomposition".into());
    }
    Ok(BaconDecomposition { components, twfe: twfe_no_covariates(ds)?, reconstructed, notes })
}

/// `(1/NT) sum (D_it - D_i. - D_.t + D_..)^2` on a balanced panel.
fn demeaned_treatment_variance(ds: &PanelDataset) -> f64 {
    let (n, t) = (ds.n_units(), ds.n_times());
    let d = |u: usize, s: usize| ds.treated(u, s).expect("balanced") as u8 as f64;
    let unit: Vec<f64> = (0..n).map(|u| (0..t).map(|s| d(u, s)).sum::<f64>() / t as f64).collect();
    let time: Vec<f64> = (0..t).map(|s| (0..n).map(|u| d(u, s)).sum::<f64>() / n as f64).collect();
    let all = unit.iter().sum::<f64>() / n as f64;
    let mut v = 0.0;
    for u in 0..n {
        for s in 0..t {
            v += (d(u, s) - unit[u] - time[s] + all).powi(2);
        }
    }
    v / (n * t) as f64
}

fn twfe_no_covariates(ds: &PanelDataset) -> Result<f64> {
    let cells = complete_cells(ds, &[], |_, _| true);
    let d = cells.iter().map(|&c| (ds.treatment_grid()[c] == Some(true)) as u8 as f64).collect();
    let fit = fit_fe(&FeProblem::from_cells(ds, &cells).with_regressor("treatment", d), &FeOptions::default())?;
    fit.coefficient("treatment").ok_or(Error::TreatmentCollinear)
}
