use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::FeFit;
use crate::error::{Error, Result};

/// Small-sample scaling applied to the cluster sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum SmallSample {
    /// `G/(G-1) * (n-1)/(n-k)`, `k` = number of estimated slope coefficients.
    #[default]
    Full,
    /// `G/(G-1)` only.
    ClusterOnly,
    None,
}

#[derive(Debug, Clone)]
pub struct ClusterVcov {
    pub matrix: DMatrix<f64>,
    pub n_clusters: usize,
    pub scale: f64,
}

impl ClusterVcov {
    pub fn se(&self, j: usize) -> f64 {
        self.matrix[(j, j)].max(0.0).sqrt()
    }
}

/// Cluster-robust sandwich `B (sum_g s_g s_g') B` with `B = (X'X)^-1` on the
/// demeaned design and `s_g` the cluster score sums. `clusters` holds one
/// label per observation of the fit.
pub fn cluster_vcov(fit: &FeFit, clusters: &[usize], correction: SmallSample) -> Result<ClusterVcov> {
    let n = fit.n_obs();
    if clusters.len() != n {
        return Err(Error::Precondition("one cluster label per observation required".into()));
    }
    let k = fit.n_params();
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut scores: Vec<DVector<f64>> = Vec::new();
    for (i, &c) in clusters.iter().enumerate() {
        let g = *index.entry(c).or_insert_with(|| {
            scores.push(DVector::zeros(k));
            scores.len() - 1
        });
        let e = fit.residuals[i];
        for j in 0..k {
            scores[g][j] += fit.design[(i, j)] * e;
        }
    }
    let g = scores.len();
    if g < 2 {
        return Err(Error::TooFewClusters(g));
    }
    let mut meat = DMatrix::zeros(k, k);
    for s in &scores {
        meat += s * s.transpose();
    }
    let (gf, nf, kf) = (g as f64, n as f64, k as f64);
    let scale = match correction {
        SmallSample::Full => gf / (gf - 1.0) * (nf - 1.0) / (nf - kf).max(1.0),
        SmallSample::ClusterOnly => gf / (gf - 1.0),
        SmallSample::None => 1.0,
    };
    let mut matrix = &fit.bread * meat * &fit.bread * scale;
    // symmetrize away rounding
    let mt = matrix.transpose();
    matrix = (matrix + mt) * 0.5;
    Ok(ClusterVcov { matrix, n_clusters: g, scale })
}

/// Classical OLS covariance `s^2 (X'X)^-1` with degrees of freedom net of
/// the absorbed fixed effects.
pub fn homoskedastic_vcov(fit: &FeFit) -> DMatrix<f64> {
    let n = fit.n_obs();
    let dof = n as f64 - fit.n_params() as f64 - fit.n_fe_params as f64;
    let rss: f64 = fit.residuals.iter().map(|e| e * e).sum();
    let s2 = if dof > 0.0 { rss / dof } else { f64::NAN };
    &fit.bread * s2
}
