//! Cluster bootstrap, percentile intervals, draw covariance and Wald tests.
//!
//! Replicate `r` draws its clusters from a ChaCha8 generator seeded with the
//! master seed and switched to stream `r`, so a replicate depends only on
//! `(master_seed, r)`. Replicates run in parallel and are collected in index
//! order; the draw matrix is the same for any number of worker threads.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

pub const DEFAULT_REPLICATES: usize = 1000;
/// Share of failed replicates above which the bootstrap is abandoned.
pub const MAX_FAILED_SHARE: f64 = 0.2;
/// Cluster count above which analytic cluster-robust SEs are usually adequate.
pub const ANALYTIC_SE_CLUSTERS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedReplicate {
    pub replicate: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapDraws {
    pub master_seed: u64,
    pub replicates: usize,
    pub n_statistics: usize,
    /// Successful replicates only, in replicate order. NaN marks a statistic
    /// the estimator could not produce on that resample.
    pub draws: Vec<Vec<f64>>,
    pub failed: Vec<FailedReplicate>,
}

impl BootstrapDraws {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect()
    }

    /// Standard deviation of each statistic over its finite draws.
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.n_statistics)
            .map(|j| {
                let c = self.column(j);
                if c.len() < 2 {
                    return f64::NAN;
                }
                let m = c.iter().sum::<f64>() / c.len() as f64;
                (c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (c.len() - 1) as f64).sqrt()
            })
            .collect()
    }
}

/// Guidance on analytic versus bootstrap standard errors.
pub fn se_guidance(n_clusters: usize) -> String {
    if n_clusters > ANALYTIC_SE_CLUSTERS {
        format!("{n_clusters} clusters: analytic cluster-robust SEs are adequate; bootstrap reported as well")
    } else {
        format!("{n_clusters} clusters (50 or fewer): prefer the cluster bootstrap over analytic SEs")
    }
}

/// Per-replicate generator: master seed, stream `r`.
pub fn replicate_rng(master_seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(r as u64);
    rng
}

/// Resamples clusters with replacement; drawn copies get fresh unit ids
/// `b<k>:<id>` and fresh cluster labels.
pub fn resample_clusters(ds: &PanelDataset, rng: &mut impl Rng) -> Result<PanelDataset> {
    let g = ds.n_clusters();
    let mut by_cluster: Vec<Vec<usize>> = vec![Vec::new(); g];
    for u in 0..ds.n_units() {
        by_cluster[ds.cluster_of(u)].push(u);
    }
    let mut picks = Vec::with_capacity(ds.n_units());
    for k in 0..g {
        let c = rng.random_range(0..g);
        for &u in &by_cluster[c] {
            picks.push((u, format!("b{k}:{}", ds.unit_ids()[u]), k));
        }
    }
    ds.resample_units(&picks, g)
}

/// Runs `estimator` on `replicates` cluster resamples.
pub fn cluster_bootstrap<F>(ds: &PanelDataset, estimator: F, replicates: usize, master_seed: u64) -> Result<BootstrapDraws>
where
    F: Fn(&PanelDataset) -> Result<Vec<f64>> + Sync,
{
    if ds.n_clusters() < 2 {
        return Err(Error::TooFewClusters(ds.n_clusters()));
    }
    if replicates == 0 {
        return Err(Error::Precondition("bootstrap needs at least one replicate".into()));
    }
    let results: Vec<Result<Vec<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(master_seed, r);
            let sample = resample_clusters(ds, &mut rng)?;
            estimator(&sample)
        })
        .collect();

    let mut draws = Vec::with_capacity(replicates);
    let mut failed = Vec::new();
    let mut width = None;
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) if width.is_none_or(|w| w == v.len()) => {
                width = Some(v.len());
                draws.push(v);
            }
            Ok(v) => failed.push(FailedReplicate { replicate: r, reason: format!("statistic length {} differs", v.len()) }),
            Err(e) => failed.push(FailedReplicate { replicate: r, reason: e.to_string() }),
        }
    }
    if failed.len() as f64 > MAX_FAILED_SHARE * replicates as f64 {
        return Err(Error::TooManyFailedReplicates { failed: failed.len(), total: replicates });
    }
    Ok(BootstrapDraws { master_seed, replicates, n_statistics: width.unwrap_or(0), draws, failed })
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval per statistic at `(1 -+ level) / 2`; `None` with
/// fewer than 2 finite draws.
pub fn percentile_ci(draws: &BootstrapDraws, level: f64) -> Vec<Option<(f64, f64)>> {
    (0..draws.n_statistics)
        .map(|j| {
            let mut c = draws.column(j);
            if c.len() < 2 {
                return None;
            }
            c.sort_by(f64::total_cmp);
            Some((quantile_sorted(&c, (1.0 - level) / 2.0), quantile_sorted(&c, (1.0 + level) / 2.0)))
        })
        .collect()
}

/// Covariance (divisor `B - 1`) of the selected statistics over replicates
/// where all of them are finite.
pub fn bootstrap_vcov(draws: &BootstrapDraws, columns: &[usize]) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = draws
        .draws
        .iter()
        .map(|r| columns.iter().map(|&j| r[j]).collect::<Vec<f64>>())
        .filter(|r| r.iter().all(|v| v.is_finite()))
        .collect();
    if rows.len() < 2 {
        return Err(Error::Precondition("covariance needs at least 2 complete replicates".into()));
    }
    let k = columns.len();
    let b = rows.len() as f64;
    let mean: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / b).collect();
    let mut v = DMatrix::zeros(k, k);
    for r in &rows {
        for i in 0..k {
            for j in 0..k {
                v[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    Ok(v / (b - 1.0))
}

/// Covariance of all statistics.
pub fn bootstrap_vcov_all(draws: &BootstrapDraws) -> Result<DMatrix<f64>> {
    bootstrap_vcov(draws, &(0..draws.n_statistics).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

/// `est' V^+ est` against a zero null with chi-square p-value; the pseudo
/// inverse handles singular `V` and `df` is its rank.
pub fn wald_joint_test(estimates: &[f64], vcov: &DMatrix<f64>) -> Result<WaldTest> {
    let k = estimates.len();
    if vcov.nrows() != k || vcov.ncols() != k {
        return Err(Error::Precondition("covariance dimension does not match the estimates".into()));
    }
    if k == 0 || estimates.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("Wald test needs finite estimates".into()));
    }
    let sym = (vcov + vcov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    if top <= 0.0 || !top.is_finite() {
        return Err(Error::ZeroRank);
    }
    let x = DVector::from_column_slice(estimates);
    let mut statistic = 0.0;
    let mut df = 0;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > RANK_TOL * top {
            let proj = eig.eigenvectors.column(i).dot(&x);
            statistic += proj * proj / lambda;
            df += 1;
        }
    }
    let dist = ChiSquared::new(df as f64).expect("positive df");
    let p_value = dist.sf(statistic).clamp(0.0, 1.0);
    Ok(WaldTest { statistic, df, p_value })
}
