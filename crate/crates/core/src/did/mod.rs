//! Estimators assembled from local 2×2 comparisons, plus the
//! Goodman-Bacon decomposition of the static TWFE coefficient.

mod bacon;
mod csdid;
mod did_multiple;
mod iw;
mod panel_match;
mod stacked;

pub use bacon::{bacon_decompose, BaconComponent, BaconDecomposition, ComparisonKind};
pub use csdid::{csdid, Comparison, CsdidOptions, CsdidResult, GroupTimeCell, GroupTimeGrid};
pub use did_multiple::{did_multiple, DidMultipleResult, SwitchPeriod};
pub use iw::{iw, IwResult};
pub use panel_match::{panel_match, LeadSubset, MatchedSet, PanelMatchResult};
pub use stacked::{stacked_did, StackInfo, StackedResult};

use crate::error::{Error, Result};
use crate::panel::{EventStructure, PanelDataset};

pub(crate) fn require_staggered(es: &EventStructure, what: &str) -> Result<()> {
    if es.setting().has_reversal() {
        return Err(Error::RequiresStaggered(format!(
            "{what} needs staggered adoption without reversals (setting is {})",
            es.setting()
        )));
    }
    Ok(())
}

/// Mean of `Y(to) - Y(from)` over the units observed at both periods.
pub(crate) fn mean_change(
    ds: &PanelDataset,
    units: impl IntoIterator<Item = usize>,
    from: usize,
    to: usize,
) -> Option<(f64, usize)> {
    let (mut sum, mut n) = (0.0, 0usize);
    for u in units {
        if let (Some(a), Some(b)) = (ds.outcome(u, from), ds.outcome(u, to)) {
            sum += b - a;
            n += 1;
        }
    }
    (n > 0).then(|| (sum / n as f64, n))
}

/// Weighted mean of `(value, weight)` pairs; `None` when the total weight is zero.
pub(crate) fn weighted_mean(items: impl IntoIterator<Item = (f64, usize)>) -> Option<(f64, usize)> {
    let (mut s, mut w) = (0.0, 0usize);
    for (v, n) in items {
        s += v * n as f64;
        w += n;
    }
    (w > 0).then(|| (s / w as f64, w))
}

pub(crate) fn covariate_note(ds: &PanelDataset, what: &str) -> Option<String> {
    (!ds.covariates().is_empty()).then(|| format!("{what} ignores covariates"))
}

#[cfg(test)]
mod tests;
