//! Differential co-morbidity between two populations.
//!
//! The differential score is the difference of the two pooled log2 odds
//! ratios; any common selection-bias adjustment cancels in the difference.
//! Confidence is assessed with the same null-grid / FCR machinery, with the
//! null centered at ratio 1.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::imputation::PooledEstimate;
use crate::multiplicity::{fcr_interval, scan_null_grid, FcrResult, NullGrid};

#[derive(Debug, Clone, Copy)]
pub struct DifferentialResult {
    /// DC(t) = LOR(senior) - LOR(bg) on the log2 scale.
    pub dc: f64,
    /// Pooled standard error `sqrt(se_senior^2 + se_bg^2)`.
    pub sigma: f64,
    /// FCR-adjusted interval on the ratio scale, absent if never selected.
    pub interval: Option<FcrResult>,
    /// True iff the interval lower bound exceeds 1 (DC_min > 0 on log scale).
    pub confident: bool,
}

/// DC(t): difference of the pooled per-population scores. Both the raw and
/// bias-adjusted scores yield the same value since the adjustment cancels.
pub fn differential_score(senior: &PooledEstimate, bg: &PooledEstimate) -> f64 {
    senior.lor_adj - bg.lor_adj
}

/// Standard error of the difference of two independent estimates.
pub fn pooled_se(se_senior: f64, se_bg: f64) -> f64 {
    (se_senior * se_senior + se_bg * se_bg).sqrt()
}

/// Runs the null-grid scan over "DC = Q" for all comparable terms and builds
/// FCR intervals on the ratio scale. `estimates` maps each term valid in
/// both populations to its (senior, bg) pooled estimates; M for BH is the
/// size of that intersection.
pub fn differential_confidence(
    estimates: &BTreeMap<String, (PooledEstimate, PooledEstimate)>,
    grid: &NullGrid,
    alpha: f64,
) -> Result<BTreeMap<String, DifferentialResult>> {
    let mut scores: Vec<(String, f64, f64)> = Vec::with_capacity(estimates.len());
    for (term, (senior, bg)) in estimates {
        let dc = differential_score(senior, bg);
        let sigma = pooled_se(senior.se_adj, bg.se_adj);
        if !dc.is_finite() || !sigma.is_finite() {
            return Err(Error::NotComparable(term.clone()));
        }
        scores.push((term.clone(), dc, sigma));
    }

    let scan = scan_null_grid(&scores, grid, alpha);
    let m_total = scores.len();

    let mut results = BTreeMap::new();
    for (term, dc, sigma) in scores {
        let interval = fcr_interval(dc, scan.get(&term), m_total, alpha).ok();
        let confident = interval.map_or(false, |fcr| fcr.lower > 1.0);
        results.insert(term, DifferentialResult { dc, sigma, interval, confident });
    }
    Ok(results)
}
