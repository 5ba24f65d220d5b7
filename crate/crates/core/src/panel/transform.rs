use serde::Serialize;

use super::{EventStructure, PanelDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellStatus {
    Control,
    Treated,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub struct PeriodCounts {
    pub control: usize,
    pub treated: usize,
    pub missing: usize,
}

/// Treatment-status grid (row-major, unit × time) with per-period counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatusSummary {
    pub n_units: usize,
    pub n_times: usize,
    pub cells: Vec<CellStatus>,
    pub per_period: Vec<PeriodCounts>,
    pub always_treated: Vec<String>,
    pub gap_flagged: Vec<String>,
}

/// A cell is coded missing when its outcome or treatment is missing.
pub fn status_summary(ds: &PanelDataset, es: &EventStructure) -> StatusSummary {
    let (n, t) = (ds.n_units(), ds.n_times());
    let mut cells = Vec::with_capacity(n * t);
    let mut per_period = vec![PeriodCounts::default(); t];
    for u in 0..n {
        for s in 0..t {
            let code = match (ds.outcome(u, s), ds.treated(u, s)) {
                (Some(_), Some(true)) => CellStatus::Treated,
                (Some(_), Some(false)) => CellStatus::Control,
                _ => CellStatus::Missing,
            };
            let c = &mut per_period[s];
            match code {
                CellStatus::Control => c.control += 1,
                CellStatus::Treated => c.treated += 1,
                CellStatus::Missing => c.missing += 1,
            }
            cells.push(code);
        }
    }
    StatusSummary {
        n_units: n,
        n_times: t,
        cells,
        per_period,
        always_treated: es.always_treated().iter().map(|&u| ds.unit_ids()[u].clone()).collect(),
        gap_flagged: (0..n).filter(|&u| es.gap_flagged(u)).map(|u| ds.unit_ids()[u].clone()).collect(),
    }
}

/// Removes units treated at every observed cell. Returns the reduced
/// panel and the removed unit ids.
pub fn drop_always_treated(ds: &PanelDataset) -> crate::Result<(PanelDataset, Vec<String>)> {
    let mut keep = Vec::with_capacity(ds.n_units());
    let mut removed = Vec::new();
    for u in 0..ds.n_units() {
        let obs: Vec<bool> = (0..ds.n_times()).filter_map(|s| ds.treated(u, s)).collect();
        if !obs.is_empty() && obs.iter().all(|&d| d) {
            removed.push(ds.unit_ids()[u].clone());
        } else {
            keep.push(u);
        }
    }
    if removed.is_empty() {
        return Ok((ds.clone(), removed));
    }
    Ok((ds.select_units(&keep)?, removed))
}

/// After every 1 → 0 switch the next `k` observed periods of the unit are
/// recoded as treated. Overlapping windows merge. The rule is always
/// applied to the treatment as it was before any recoding, so repeating
/// the call with the same `k` is a no-op.
pub fn recode_carryover(ds: &PanelDataset, k: usize) -> PanelDataset {
    if k == 0 {
        return ds.clone();
    }
    let base: Vec<Option<bool>> = ds.base_treatment().to_vec();
    let mut out = base.clone();
    for u in 0..ds.n_units() {
        let mut remaining = 0usize;
        for s in 0..ds.n_times() {
            let c = ds.idx(u, s);
            match base[c] {
                None => {}
                Some(true) => remaining = k,
                Some(false) if remaining > 0 => {
                    out[c] = Some(true);
                    remaining -= 1;
                }
                Some(false) => {}
            }
        }
    }
    let mut res = ds.clone();
    res.set_treatment(out, Some(base));
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::compute_event_structure;

    fn recode_row(d: &[u8], k: usize) -> Vec<u8> {
        let y = vec![vec![0.0; d.len()]; 2];
        let ds = PanelDataset::from_grid(&y, &[d.to_vec(), vec![0; d.len()]]).unwrap();
        let r = recode_carryover(&ds, k);
        (0..d.len()).map(|s| r.treated(0, s).unwrap() as u8).collect()
    }

    #[test]
    fn carryover_rule() {
        assert_eq!(recode_row(&[0, 1, 0, 0, 0], 2), vec![0, 1, 1, 1, 0]);
        assert_eq!(recode_row(&[0, 1, 0, 0, 0], 0), vec![0, 1, 0, 0, 0]);
    }

    /// Enumerates the rule cell by cell: a control cell is recoded iff one
    /// of the `k` observed cells before it was originally treated.
    fn brute(d: &[u8], k: usize) -> Vec<u8> {
        (0..d.len())
            .map(|s| {
                let lo = s.saturating_sub(k);
                if d[s] == 1 || d[lo..s].contains(&1) {
                    1
                } else {
                    0
                }
            })
            .collect()
    }

    #[test]
    fn overlapping_windows_merge() {
        assert_eq!(brute(&[0, 1, 0, 1, 0], 2), vec![0, 1, 1, 1, 1]);
        assert_eq!(recode_row(&[0, 1, 0, 1, 0], 2), vec![0, 1, 1, 1, 1]);
        for bits in 0u32..64 {
            let d: Vec<u8> = (0..6).map(|j| ((bits >> j) & 1) as u8).collect();
            for k in 0..4 {
                assert_eq!(recode_row(&d, k), brute(&d, k), "d={d:?} k={k}");
            }
        }
    }

    #[test]
    fn recoding_is_idempotent() {
        let y = vec![vec![0.0; 6]; 2];
        let ds = PanelDataset::from_grid(&y, &[vec![0, 1, 0, 0, 0, 0], vec![0, 0, 1, 0, 1, 0]]).unwrap();
        let once = recode_carryover(&ds, 2);
        let twice = recode_carryover(&once, 2);
        assert_eq!(once, twice);
    }

    #[test]
    fn always_treated_removal() {
        let y = vec![vec![0.0; 4]; 3];
        let ds = PanelDataset::from_grid(&y, &[vec![1, 1, 1, 1], vec![1, 1, 0, 1], vec![0; 4]]).unwrap();
        let (out, removed) = drop_always_treated(&ds).unwrap();
        assert_eq!(removed, vec!["u1".to_string()]);
        assert_eq!(out.unit_ids(), &["u2".to_string(), "u3".to_string()]);

        let (same, none) = drop_always_treated(&out).unwrap();
        assert!(none.is_empty());
        assert_eq!(same, out);
    }

    #[test]
    fn status_codes_and_counts() {
        let ds = PanelDataset::from_grid(&[vec![0.0, 0.0], vec![0.0, 1.0]], &[vec![0, 0], vec![0, 1]]).unwrap();
        let st = status_summary(&ds, &compute_event_structure(&ds));
        use CellStatus::*;
        assert_eq!(st.cells, vec![Control, Control, Control, Treated]);
        for c in &st.per_period {
            assert_eq!(c.control + c.treated + c.missing, 2);
        }

        let mut y = ds.outcome_grid().to_vec();
        y[1] = None;
        let mut ds2 = ds.clone();
        ds2.set_outcome(y);
        let st2 = status_summary(&ds2, &compute_event_structure(&ds2));
        assert_eq!(st2.cells[1], Missing);
    }
}
