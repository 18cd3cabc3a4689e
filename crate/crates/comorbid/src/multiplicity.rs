//! Benjamini-Hochberg selection over a logarithmic grid of null odds-ratio
//! levels, and FCR-adjusted confidence intervals for the selected terms.
//!
//! For each grid level Q the BH step-up rule is run on directional p-values
//! for the null "OR = Q"; Q(t) is the maximum level at which term t stays
//! significant and doubles as the adjusted interval's lower bound.

use std::collections::BTreeMap;

use crate::association::std_normal_cdf;
use crate::error::{Error, Result};

/// Logarithmic grid of null levels: log2 points `lo, lo+step, ..., hi`.
#[derive(Debug, Clone, Copy)]
pub struct NullGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for NullGrid {
    fn default() -> Self {
        // OR levels from 0.25 to 4096
        NullGrid { lo: -2.0, hi: 12.0, step: 0.01 }
    }
}

impl NullGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo < hi) || !(step > 0.0) {
            return Err(Error::Config(format!(
                "invalid null grid: lo={lo}, hi={hi}, step={step}"
            )));
        }
        Ok(NullGrid { lo, hi, step })
    }

    /// Grid points on the log2 scale, ascending.
    pub fn levels(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step).round() as usize;
        (0..=n).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

/// FCR-adjusted interval for a term selected at null level Q(t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcrResult {
    /// Q(t): max null level at which the term stays BH-significant (OR scale).
    pub q_max: f64,
    /// R(t): number of terms selected at that level.
    pub r_at_q: usize,
    /// M: number of valid terms tested.
    pub m_total: usize,
    /// Confidence level of the adjusted interval, `1 - alpha * R / M`.
    pub level: f64,
    /// Interval lower bound on the OR scale; equals `q_max` by construction.
    pub lower: f64,
    /// Interval upper bound: `2^(2*lor - log2 q_max)`.
    pub upper: f64,
}

/// Two-sided normal p-value for the null "OR = q":
/// `p = 2 * (1 - Phi(|lor - log2 q| / se))`.
pub fn p_value_at_null(lor_adj: f64, se_adj: f64, q: f64) -> Result<f64> {
    if !(se_adj > 0.0) {
        return Err(Error::Degenerate);
    }
    let z = (lor_adj - q.log2()).abs() / se_adj;
    Ok(2.0 * (1.0 - std_normal_cdf(z)))
}

/// Directional p-value used by the grid scan: terms at or below the null
/// level get p = 1 so only exceedance counts as significant.
pub fn directional_p(lor_adj: f64, se_adj: f64, log2_q: f64) -> f64 {
    if lor_adj <= log2_q {
        return 1.0;
    }
    let z = (lor_adj - log2_q) / se_adj;
    2.0 * (1.0 - std_normal_cdf(z))
}

/// Standard BH step-up rule: sort p-values ascending, find the largest k
/// with `p_(k) <= alpha * k / M`, select those k items. Returns the selected
/// indices into the input slice.
pub fn bh_select_indices(pvalues: &[f64], alpha: f64) -> Vec<usize> {
    let m = pvalues.len();
    if m == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvalues[i].partial_cmp(&pvalues[j]).unwrap());
    let mut k = 0;
    for (rank, &idx) in order.iter().enumerate() {
        if pvalues[idx] <= alpha * (rank + 1) as f64 / m as f64 {
            k = rank + 1;
        }
    }
    order.truncate(k);
    order
}

/// Map-keyed BH selection over the valid terms.
pub fn bh_select(pvalues: &BTreeMap<String, f64>, alpha: f64) -> Vec<String> {
    let keys: Vec<&String> = pvalues.keys().collect();
    let ps: Vec<f64> = pvalues.values().copied().collect();
    let mut selected: Vec<String> = bh_select_indices(&ps, alpha)
        .into_iter()
        .map(|i| keys[i].clone())
        .collect();
    selected.sort();
    selected
}

/// Per-term scan result: Q(t) on the OR scale and R(t) at that level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanResult {
    pub q_max: f64,
    pub r_at_q: usize,
}

/// Runs BH on directional p-values at every grid level and records, per
/// term, the maximum level at which it is selected. Terms never selected at
/// the smallest level are absent from the result.
pub fn scan_null_grid(
    estimates: &[(String, f64, f64)],
    grid: &NullGrid,
    alpha: f64,
) -> BTreeMap<String, ScanResult> {
    let mut results: BTreeMap<String, ScanResult> = BTreeMap::new();
    let mut pvals = vec![1.0; estimates.len()];
    for log2_q in grid.levels() {
        for (p, (_, lor, se)) in pvals.iter_mut().zip(estimates) {
            *p = directional_p(*lor, *se, log2_q);
        }
        let selected = bh_select_indices(&pvals, alpha);
        if selected.is_empty() {
            continue;
        }
        let r = selected.len();
        let q = log2_q.exp2();
        for idx in selected {
            // levels ascend, so the last update is the maximum
            results.insert(estimates[idx].0.clone(), ScanResult { q_max: q, r_at_q: r });
        }
    }
    results
}

/// Builds the FCR-adjusted interval `[Q(t), 2^(2*lor - log2 Q(t))]` on the
/// OR scale for a term selected at Q(t).
pub fn fcr_interval(
    lor_adj: f64,
    scan: Option<&ScanResult>,
    m_total: usize,
    alpha: f64,
) -> Result<FcrResult> {
    let scan = scan.ok_or(Error::NotSelected)?;
    let log2_q = scan.q_max.log2();
    Ok(FcrResult {
        q_max: scan.q_max,
        r_at_q: scan.r_at_q,
        m_total,
        level: 1.0 - alpha * scan.r_at_q as f64 / m_total as f64,
        lower: scan.q_max,
        upper: (2.0 * lor_adj - log2_q).exp2(),
    })
}
