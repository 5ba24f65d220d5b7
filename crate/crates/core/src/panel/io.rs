//! Long-format records and the CSV schema (`unit,time,outcome,treatment`,
//! optional `cluster`, any further numeric columns are covariates).

use std::collections::HashMap;
use std::io::{Read, Write};

use super::{Covariate, PanelDataset};
use crate::error::{Error, Result};

/// One long-format row. `None` marks a missing field.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRecord {
    pub unit: String,
    pub time: String,
    pub outcome: Option<f64>,
    pub treatment: Option<f64>,
    pub covariates: Vec<Option<f64>>,
    pub cluster: Option<String>,
}

/// Header names for the required columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub unit: String,
    pub time: String,
    pub outcome: String,
    pub treatment: String,
    pub cluster: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            time: "time".into(),
            outcome: "outcome".into(),
            treatment: "treatment".into(),
            cluster: "cluster".into(),
        }
    }
}

/// Assembles the unit × time grid from long-format rows.
///
/// Units keep their order of first appearance; time labels are sorted
/// numerically when every label parses as a number, lexicographically
/// otherwise. Absent (unit, time) pairs become missing cells. Row numbers
/// in errors are 1-based positions in `records`.
pub fn build_dataset(records: &[PanelRecord], covariate_names: &[String]) -> Result<PanelDataset> {
    let mut unit_ids: Vec<String> = Vec::new();
    let mut unit_pos: HashMap<&str, usize> = HashMap::new();
    let mut time_set: Vec<&str> = Vec::new();
    let mut time_seen: HashMap<&str, ()> = HashMap::new();
    for r in records {
        if r.covariates.len() != covariate_names.len() {
            return Err(Error::Schema(format!(
                "record for ({}, {}) has {} covariates, expected {}",
                r.unit,
                r.time,
                r.covariates.len(),
                covariate_names.len()
            )));
        }
        if !unit_pos.contains_key(r.unit.as_str()) {
            unit_pos.insert(&r.unit, unit_ids.len());
            unit_ids.push(r.unit.clone());
        }
        if time_seen.insert(&r.time, ()).is_none() {
            time_set.push(&r.time);
        }
    }
    let numeric: Option<Vec<f64>> = time_set.iter().map(|s| s.trim().parse::<f64>().ok()).collect();
    match numeric {
        Some(vals) => {
            let mut paired: Vec<(f64, &str)> = vals.into_iter().zip(time_set.iter().copied()).collect();
            paired.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
            time_set = paired.into_iter().map(|p| p.1).collect();
        }
        None => time_set.sort_unstable(),
    }
    let time_ids: Vec<String> = time_set.iter().map(|s| s.to_string()).collect();
    let time_pos: HashMap<&str, usize> = time_set.iter().enumerate().map(|(k, s)| (*s, k)).collect();

    let (n, t) = (unit_ids.len(), time_ids.len());
    if n < 2 || t < 2 {
        return Err(Error::TooSmall(format!("need at least 2 units and 2 periods, got {n} x {t}")));
    }
    let mut outcome = vec![None; n * t];
    let mut treatment = vec![None; n * t];
    let mut covs: Vec<Vec<Option<f64>>> = vec![vec![None; n * t]; covariate_names.len()];
    let mut row_of: Vec<Option<usize>> = vec![None; n * t];
    let mut cluster: Vec<Option<&str>> = vec![None; n];

    for (row0, r) in records.iter().enumerate() {
        let row = row0 + 1;
        let (u, s) = (unit_pos[r.unit.as_str()], time_pos[r.time.as_str()]);
        let k = u * t + s;
        if let Some(first) = row_of[k] {
            return Err(Error::DuplicateCell { unit: r.unit.clone(), time: r.time.clone(), first_row: first, second_row: row });
        }
        row_of[k] = Some(row);
        treatment[k] = match r.treatment {
            None => None,
            Some(0.0) => Some(false),
            Some(1.0) => Some(true),
            Some(v) => return Err(Error::NonBinaryTreatment { row, value: v.to_string() }),
        };
        outcome[k] = r.outcome;
        for (dst, v) in covs.iter_mut().zip(&r.covariates) {
            dst[k] = *v;
        }
        if let Some(c) = r.cluster.as_deref() {
            match cluster[u] {
                Some(prev) if prev != c => {
                    return Err(Error::Schema(format!("row {row}: unit {:?} assigned to clusters {prev:?} and {c:?}", r.unit)))
                }
                _ => cluster[u] = Some(c),
            }
        }
    }

    let labels: Vec<String> = unit_ids.iter().zip(&cluster).map(|(u, c)| c.map_or_else(|| u.clone(), str::to_string)).collect();
    let mut ds = PanelDataset::new(unit_ids, time_ids, outcome, treatment)?.with_clusters(&labels)?;
    for (name, values) in covariate_names.iter().zip(covs) {
        ds = ds.with_covariate(name.clone(), values)?;
    }
    Ok(ds)
}

impl PanelDataset {
    /// Long-format export; rows whose every field is missing are dropped
    /// unless needed to keep a unit or period present.
    pub fn to_records(&self) -> Vec<PanelRecord> {
        let mut out = Vec::new();
        let mut unit_seen = vec![false; self.n_units()];
        let mut time_seen = vec![false; self.n_times()];
        let mut skipped = Vec::new();
        for u in 0..self.n_units() {
            for s in 0..self.n_times() {
                let rec = self.record(u, s);
                let empty = rec.outcome.is_none() && rec.treatment.is_none() && rec.covariates.iter().all(Option::is_none);
                if empty {
                    skipped.push((u, s));
                    continue;
                }
                unit_seen[u] = true;
                time_seen[s] = true;
                out.push(rec);
            }
        }
        for (u, s) in skipped {
            if !unit_seen[u] || !time_seen[s] {
                unit_seen[u] = true;
                time_seen[s] = true;
                out.push(self.record(u, s));
            }
        }
        out
    }

    fn record(&self, u: usize, s: usize) -> PanelRecord {
        let k = self.idx(u, s);
        PanelRecord {
            unit: self.unit_ids[u].clone(),
            time: self.time_ids[s].clone(),
            outcome: self.outcome[k],
            treatment: self.treatment[k].map(|d| if d { 1.0 } else { 0.0 }),
            covariates: self.covariates.iter().map(|c| c.values[k]).collect(),
            cluster: Some(self.cluster_labels[self.cluster_of[u]].clone()),
        }
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.iter().map(|c: &Covariate| c.name.clone()).collect()
    }
}

fn parse_field(raw: &str, column: &str, row: usize) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| Error::Schema(format!("row {row}: column {column:?} value {s:?} is not numeric")))
}

/// Reads the long-format CSV schema.
pub fn read_csv<R: Read>(reader: R, columns: &ColumnMap) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| find(name).ok_or_else(|| Error::Schema(format!("missing required column {name:?}")));
    let (cu, ct, cy, cd) = (need(&columns.unit)?, need(&columns.time)?, need(&columns.outcome)?, need(&columns.treatment)?);
    let cc = find(&columns.cluster);
    let cov_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(k, _)| ![cu, ct, cy, cd].contains(k) && Some(*k) != cc)
        .map(|(k, h)| (k, h.to_string()))
        .collect();

    let mut records = Vec::new();
    for (row0, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row0 + 1;
        let get = |k: usize| rec.get(k).unwrap_or("");
        let unit = get(cu).to_string();
        let time = get(ct).to_string();
        if unit.is_empty() || time.is_empty() {
            return Err(Error::Schema(format!("row {row}: empty unit or time id")));
        }
        let treatment = {
            let s = get(cd);
            if s.is_empty() {
                None
            } else {
                Some(s.parse::<f64>().map_err(|_| Error::NonBinaryTreatment { row, value: s.to_string() })?)
            }
        };
        let covariates = cov_cols.iter().map(|(k, name)| parse_field(get(*k), name, row)).collect::<Result<Vec<_>>>()?;
        records.push(PanelRecord {
            unit,
            time,
            outcome: parse_field(get(cy), &columns.outcome, row)?,
            treatment,
            covariates,
            cluster: cc.map(|k| get(k).to_string()).filter(|s| !s.is_empty()),
        });
    }
    let names: Vec<String> = cov_cols.into_iter().map(|(_, n)| n).collect();
    build_dataset(&records, &names)
}

/// Writes the long-format CSV schema. The `cluster` column is emitted only
/// when some unit's cluster differs from its own id.
pub fn write_csv<W: Write>(ds: &PanelDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let with_cluster = (0..ds.n_units()).any(|u| ds.cluster_labels[ds.cluster_of[u]] != ds.unit_ids[u]);
    let mut header = vec!["unit".to_string(), "time".into(), "outcome".into(), "treatment".into()];
    header.extend(ds.covariate_names());
    if with_cluster {
        header.push("cluster".into());
    }
    w.write_record(&header)?;
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x}"));
    for r in ds.to_records() {
        let mut row = vec![r.unit, r.time, fmt(r.outcome), fmt(r.treatment)];
        row.extend(r.covariates.into_iter().map(fmt));
        if with_cluster {
            row.push(r.cluster.unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(u: &str, t: &str, y: f64, d: f64) -> PanelRecord {
        PanelRecord { unit: u.into(), time: t.into(), outcome: Some(y), treatment: Some(d), covariates: vec![], cluster: None }
    }

    #[test]
    fn complete_rectangle_has_no_missing_cells() {
        let rows = vec![rec("u1", "1", 0.0, 0.0), rec("u1", "2", 1.0, 1.0), rec("u2", "1", 0.0, 0.0), rec("u2", "2", 0.5, 0.0)];
        let ds = build_dataset(&rows, &[]).unwrap();
        assert_eq!(ds.missing_cells(), 0);
        assert_eq!((ds.n_units(), ds.n_times()), (2, 2));
    }

    #[test]
    fn omitted_row_becomes_missing_cell() {
        let rows = vec![rec("u1", "1", 0.0, 0.0), rec("u2", "1", 0.0, 0.0), rec("u2", "2", 0.5, 0.0)];
        let ds = build_dataset(&rows, &[]).unwrap();
        assert_eq!(ds.missing_cells(), 1);
        assert_eq!(ds.outcome(0, 1), None);
        assert_eq!(ds.treated(0, 1), None);
    }

    #[test]
    fn duplicate_cell_names_both_rows() {
        let rows = vec![rec("u1", "1", 0.0, 0.0), rec("u2", "1", 0.0, 0.0), rec("u1", "1", 0.5, 0.0), rec("u2", "2", 0.0, 0.0)];
        let err = build_dataset(&rows, &[]).unwrap_err();
        assert_eq!(err, Error::DuplicateCell { unit: "u1".into(), time: "1".into(), first_row: 1, second_row: 3 });
        assert!(err.to_string().contains("rows 1 and 3"));
    }

    #[test]
    fn non_binary_treatment_is_named() {
        let rows = vec![rec("u1", "1", 0.0, 0.0), rec("u2", "1", 0.0, 2.0), rec("u2", "2", 0.0, 0.0)];
        let err = build_dataset(&rows, &[]).unwrap_err();
        assert_eq!(err, Error::NonBinaryTreatment { row: 2, value: "2".into() });
    }

    #[test]
    fn numeric_time_labels_sort_numerically() {
        let rows = vec![rec("a", "10", 0.0, 0.0), rec("a", "9", 0.0, 0.0), rec("b", "10", 0.0, 0.0)];
        let ds = build_dataset(&rows, &[]).unwrap();
        assert_eq!(ds.time_ids(), &["9".to_string(), "10".to_string()]);
    }

    #[test]
    fn csv_reads_covariates_and_clusters() {
        let text = "unit,time,outcome,treatment,x,cluster\n\
                    a,1,1.0,0,0.5,s1\n\
                    a,2,2.0,1,,s1\n\
                    b,1,0.0,0,1.5,s1\n\
                    b,2,,0,2.5,s1\n";
        let ds = read_csv(text.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(ds.covariate_names(), vec!["x".to_string()]);
        assert_eq!(ds.n_clusters(), 1);
        assert_eq!(ds.incomplete_cells(), 1);
        assert_eq!(ds.covariates()[0].values[1], None);
    }

    #[test]
    fn csv_missing_column_is_schema_error() {
        let err = read_csv("unit,time,outcome\na,1,0\n".as_bytes(), &ColumnMap::default()).unwrap_err();
        assert!(err.is_schema());
    }
}
