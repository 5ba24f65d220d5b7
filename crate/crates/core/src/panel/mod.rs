//! Canonical unit × time panel.
//!
//! Cells are stored row-major (`unit * n_times + time`). Time labels are
//! mapped to consecutive ranks; every estimator works on ranks only, so a
//! biennial calendar is treated as adjacent periods.

mod events;
mod io;
mod transform;

pub use events::{classify_setting, compute_event_structure, Cohort, EventStructure, EventTime, SettingClass};
pub use io::{build_dataset, read_csv, write_csv, ColumnMap, PanelRecord};
pub use transform::{drop_always_treated, recode_carryover, status_summary, CellStatus, PeriodCounts, StatusSummary};

use std::collections::HashSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

/// Rectangular panel of outcome, binary treatment, covariates and clusters
/// with explicit missingness.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    unit_ids: Vec<String>,
    time_ids: Vec<String>,
    outcome: Vec<Option<f64>>,
    treatment: Vec<Option<bool>>,
    covariates: Vec<Covariate>,
    cluster_of: Vec<usize>,
    cluster_labels: Vec<String>,
    // treatment before any carryover recoding
    base_treatment: Option<Vec<Option<bool>>>,
}

impl PanelDataset {
    pub fn new(
        unit_ids: Vec<String>,
        time_ids: Vec<String>,
        outcome: Vec<Option<f64>>,
        treatment: Vec<Option<bool>>,
    ) -> Result<Self> {
        if unit_ids.len() < 2 || time_ids.len() < 2 {
            return Err(Error::TooSmall(format!(
                "need at least 2 units and 2 periods, got {} x {}",
                unit_ids.len(),
                time_ids.len()
            )));
        }
        let cells = unit_ids.len() * time_ids.len();
        if outcome.len() != cells || treatment.len() != cells {
            return Err(Error::Schema(format!(
                "grid size mismatch: expected {cells} cells, got outcome {} / treatment {}",
                outcome.len(),
                treatment.len()
            )));
        }
        check_distinct("unit", &unit_ids)?;
        check_distinct("time", &time_ids)?;
        let cluster_labels = unit_ids.clone();
        let cluster_of = (0..unit_ids.len()).collect();
        Ok(Self {
            unit_ids,
            time_ids,
            outcome,
            treatment,
            covariates: Vec::new(),
            cluster_of,
            cluster_labels,
            base_treatment: None,
        })
    }

    /// Complete panel with labels `u1..uN` and `1..T`; treatment entries are
    /// interpreted as binary (nonzero = treated).
    pub fn from_grid(outcome: &[Vec<f64>], treatment: &[Vec<u8>]) -> Result<Self> {
        let n = outcome.len();
        let t = outcome.first().map_or(0, Vec::len);
        if treatment.len() != n || outcome.iter().any(|r| r.len() != t) {
            return Err(Error::Schema("ragged outcome grid".into()));
        }
        let mut y = Vec::with_capacity(n * t);
        let mut d = Vec::with_capacity(n * t);
        for (yr, dr) in outcome.iter().zip(treatment) {
            if dr.len() != t {
                return Err(Error::Schema("ragged treatment grid".into()));
            }
            for (&v, &w) in yr.iter().zip(dr) {
                if w > 1 {
                    return Err(Error::NonBinaryTreatment { row: 0, value: w.to_string() });
                }
                y.push(Some(v));
                d.push(Some(w == 1));
            }
        }
        Self::new((1..=n).map(|i| format!("u{i}")).collect(), (1..=t).map(|s| s.to_string()).collect(), y, d)
    }

    pub fn with_covariate(mut self, name: impl Into<String>, values: Vec<Option<f64>>) -> Result<Self> {
        let name = name.into();
        if values.len() != self.n_cells() {
            return Err(Error::Schema(format!("covariate {name:?} has wrong grid size")));
        }
        if self.covariates.iter().any(|c| c.name == name) {
            return Err(Error::Schema(format!("covariate {name:?} defined twice")));
        }
        self.covariates.push(Covariate { name, values });
        Ok(self)
    }

    /// Assigns a cluster label to every unit (in unit order).
    pub fn with_clusters(mut self, labels: &[String]) -> Result<Self> {
        if labels.len() != self.n_units() {
            return Err(Error::Schema("one cluster label per unit required".into()));
        }
        let mut distinct: Vec<String> = Vec::new();
        let mut of = Vec::with_capacity(labels.len());
        for l in labels {
            let k = match distinct.iter().position(|x| x == l) {
                Some(k) => k,
                None => {
                    distinct.push(l.clone());
                    distinct.len() - 1
                }
            };
            of.push(k);
        }
        self.cluster_labels = distinct;
        self.cluster_of = of;
        Ok(self)
    }

    #[inline]
    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    #[inline]
    pub fn n_times(&self) -> usize {
        self.time_ids.len()
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.unit_ids.len() * self.time_ids.len()
    }

    #[inline]
    pub fn idx(&self, unit: usize, time: usize) -> usize {
        unit * self.time_ids.len() + time
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn time_ids(&self) -> &[String] {
        &self.time_ids
    }

    #[inline]
    pub fn outcome(&self, unit: usize, time: usize) -> Option<f64> {
        self.outcome[self.idx(unit, time)]
    }

    #[inline]
    pub fn treated(&self, unit: usize, time: usize) -> Option<bool> {
        self.treatment[self.idx(unit, time)]
    }

    pub fn outcome_grid(&self) -> &[Option<f64>] {
        &self.outcome
    }

    pub fn treatment_grid(&self) -> &[Option<bool>] {
        &self.treatment
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    pub fn cluster_of(&self, unit: usize) -> usize {
        self.cluster_of[unit]
    }

    pub fn cluster_labels(&self) -> &[String] {
        &self.cluster_labels
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_labels.len()
    }

    /// Treatment as it was before [`recode_carryover`] touched it.
    pub fn base_treatment(&self) -> &[Option<bool>] {
        self.base_treatment.as_deref().unwrap_or(&self.treatment)
    }

    /// Cells with outcome, treatment and the listed covariates observed.
    pub fn is_complete(&self, unit: usize, time: usize, covariates: &[usize]) -> bool {
        let k = self.idx(unit, time);
        self.outcome[k].is_some()
            && self.treatment[k].is_some()
            && covariates.iter().all(|&c| self.covariates[c].values[k].is_some())
    }

    /// Cells with missing outcome or missing treatment.
    pub fn missing_cells(&self) -> usize {
        self.outcome.iter().zip(&self.treatment).filter(|(y, d)| y.is_none() || d.is_none()).count()
    }

    /// Observed treatment but missing outcome: kept in the treatment history,
    /// excluded from every regression.
    pub fn incomplete_cells(&self) -> usize {
        self.outcome.iter().zip(&self.treatment).filter(|(y, d)| y.is_none() && d.is_some()).count()
    }

    pub fn is_balanced(&self) -> bool {
        self.missing_cells() == 0
    }

    /// Warning text when numeric time labels are unevenly spaced.
    pub fn calendar_gap_warning(&self) -> Option<String> {
        let vals: Vec<f64> = self.time_ids.iter().filter_map(|s| s.trim().parse().ok()).collect();
        if vals.len() != self.time_ids.len() || vals.len() < 3 {
            return None;
        }
        let step = vals[1] - vals[0];
        let uneven = vals.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9);
        uneven.then(|| "time labels are unevenly spaced; periods are treated as adjacent ranks".to_string())
    }

    /// Keeps the listed units (in the given order, duplicates allowed) and
    /// relabels them; used by the cluster bootstrap.
    pub(crate) fn resample_units(&self, picks: &[(usize, String, usize)], n_clusters: usize) -> Result<Self> {
        let t = self.n_times();
        let mut unit_ids = Vec::with_capacity(picks.len());
        let mut outcome = Vec::with_capacity(picks.len() * t);
        let mut treatment = Vec::with_capacity(picks.len() * t);
        let mut base = self.base_treatment.as_ref().map(|_| Vec::with_capacity(picks.len() * t));
        let mut covs: Vec<Covariate> = self
            .covariates
            .iter()
            .map(|c| Covariate { name: c.name.clone(), values: Vec::with_capacity(picks.len() * t) })
            .collect();
        let mut cluster_of = Vec::with_capacity(picks.len());
        for (unit, label, cluster) in picks {
            let r = self.idx(*unit, 0)..self.idx(*unit, 0) + t;
            unit_ids.push(label.clone());
            outcome.extend_from_slice(&self.outcome[r.clone()]);
            treatment.extend_from_slice(&self.treatment[r.clone()]);
            if let (Some(b), Some(src)) = (base.as_mut(), self.base_treatment.as_ref()) {
                b.extend_from_slice(&src[r.clone()]);
            }
            for (dst, src) in covs.iter_mut().zip(&self.covariates) {
                dst.values.extend_from_slice(&src.values[r.clone()]);
            }
            cluster_of.push(*cluster);
        }
        let mut ds = Self::new(unit_ids, self.time_ids.clone(), outcome, treatment)?;
        ds.covariates = covs;
        ds.base_treatment = base;
        ds.cluster_of = cluster_of;
        ds.cluster_labels = (0..n_clusters).map(|g| format!("c{g}")).collect();
        Ok(ds)
    }

    /// Keeps a subset of units, preserving clusters.
    pub fn select_units(&self, keep: &[usize]) -> Result<Self> {
        let picks: Vec<(usize, String, usize)> =
            keep.iter().map(|&u| (u, self.unit_ids[u].clone(), self.cluster_of[u])).collect();
        let mut ds = self.resample_units(&picks, self.cluster_labels.len())?;
        // compact cluster labels to those still present
        let mut used: Vec<usize> = ds.cluster_of.clone();
        used.sort_unstable();
        used.dedup();
        ds.cluster_labels = used.iter().map(|&g| self.cluster_labels[g].clone()).collect();
        for c in ds.cluster_of.iter_mut() {
            *c = used.binary_search(c).expect("cluster present");
        }
        Ok(ds)
    }

    pub(crate) fn set_treatment(&mut self, treatment: Vec<Option<bool>>, base: Option<Vec<Option<bool>>>) {
        self.treatment = treatment;
        self.base_treatment = base;
    }

    #[cfg(test)]
    pub(crate) fn set_outcome(&mut self, outcome: Vec<Option<f64>>) {
        self.outcome = outcome;
    }
}

fn check_distinct(kind: &str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Schema(format!("{kind} id {id:?} appears twice")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_shapes() {
        let err = PanelDataset::from_grid(&[vec![0.0, 1.0]], &[vec![0, 1]]).unwrap_err();
        assert!(matches!(err, Error::TooSmall(_)));
    }

    #[test]
    fn cluster_labels_compact() {
        let ds = PanelDataset::from_grid(&[vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]], &[vec![0u8; 2], vec![0; 2], vec![0; 2]])
            .unwrap()
            .with_clusters(&["a".into(), "b".into(), "a".into()])
            .unwrap();
        assert_eq!(ds.n_clusters(), 2);
        assert_eq!(ds.cluster_of(2), 0);
        let sub = ds.select_units(&[1, 2]).unwrap();
        assert_eq!(sub.cluster_labels(), &["a".to_string(), "b".to_string()]);
        assert_eq!(sub.cluster_of(0), 1);
    }

    #[test]
    fn uneven_calendar_warns() {
        let ds = PanelDataset::new(
            vec!["a".into(), "b".into()],
            vec!["2000".into(), "2002".into(), "2006".into()],
            vec![Some(0.0); 6],
            vec![Some(false); 6],
        )
        .unwrap();
        assert!(ds.calendar_gap_warning().is_some());
    }
}
