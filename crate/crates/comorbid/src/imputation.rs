//! Monte-Carlo multiple imputation for round-to-ten censored counts.
//!
//! Each of the four observed aggregates is resampled uniformly from its
//! censoring interval; per-sample estimates are pooled with within/between
//! variance so the adjusted standard error reflects the rounding error.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::association::{log_odds_ratio_cells, wald_se_cells};
use crate::cohort::{build_contingency, RoundedCount};
use crate::error::{Error, Result};

const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy)]
pub struct ImputationConfig {
    /// Number of Monte-Carlo samples (m).
    pub samples: usize,
    pub seed: u64,
    /// Half-width of the censoring interval; 5 for round-to-ten exports.
    pub width: u64,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        ImputationConfig { samples: 100, seed: 0, width: 5 }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::Config(format!(
                "imputation needs at least 2 samples, got {}",
                self.samples
            )));
        }
        Ok(())
    }
}

/// Rubin-style pooled estimate over the imputation samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledEstimate {
    pub lor_adj: f64,
    /// Within variability V: mean of the squared per-sample standard errors.
    pub within: f64,
    /// Between variability B: sample variance of the per-sample estimates.
    pub between: f64,
    /// `sqrt(V + (m+1)/m * B)`.
    pub se_adj: f64,
}

/// One RNG stream per term, keyed by (seed, term-id hash), so parallel
/// execution is order-independent and reproducible.
pub fn term_rng(seed: u64, term: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a64(term.as_bytes()).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Uniform draw over the integers `[reported - width, reported + width]`,
/// clamped below at 0.
pub fn draw_count_sample<R: Rng>(reported: RoundedCount, width: u64, rng: &mut R) -> u64 {
    if width == 0 {
        return reported.reported();
    }
    let lo = reported.reported() as i64 - width as i64;
    let hi = reported.reported() as i64 + width as i64;
    rng.gen_range(lo..=hi).max(0) as u64
}

/// Pools per-sample estimates: mean LOR, within variance V = mean(SE_i^2),
/// between variance B = sum((mean - LOR_i)^2) / (m - 1), and the adjusted
/// standard error `sqrt(V + (m+1)/m * B)`.
pub fn pool(lors: &[f64], ses: &[f64]) -> PooledEstimate {
    assert_eq!(lors.len(), ses.len());
    assert!(lors.len() >= 2, "pooling needs at least 2 samples");
    if lors.iter().all(|&l| l == lors[0]) && ses.iter().all(|&s| s == ses[0]) {
        // degenerate case (e.g. width 0): the pooled estimate is the point
        // estimate exactly, with no between variance
        return PooledEstimate {
            lor_adj: lors[0],
            within: ses[0] * ses[0],
            between: 0.0,
            se_adj: ses[0],
        };
    }
    let m = lors.len() as f64;
    let lor_adj = lors.iter().sum::<f64>() / m;
    let within = ses.iter().map(|s| s * s).sum::<f64>() / m;
    let between = lors.iter().map(|l| (lor_adj - l).powi(2)).sum::<f64>() / (m - 1.0);
    let se_adj = (within + (m + 1.0) / m * between).sqrt();
    PooledEstimate { lor_adj, within, between, se_adj }
}

/// Imputes the association for one term. `counts` are the four observed
/// aggregates (N, N(cond), N(t), N(t,cond)). Infeasible draws (negative
/// derived cell) are rejected and redrawn, capped at 1000 attempts per
/// sample; a zero cell inside a sample gets the Haldane-Anscombe +0.5
/// correction.
pub fn impute_association(
    counts: [RoundedCount; 4],
    cfg: &ImputationConfig,
    term_key: &str,
) -> Result<PooledEstimate> {
    cfg.validate()?;
    let mut rng = term_rng(cfg.seed, term_key);
    let [n, n_cond, n_term, n_both] = counts;

    let mut lors = Vec::with_capacity(cfg.samples);
    let mut ses = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let table = (0..MAX_ATTEMPTS)
            .find_map(|_| {
                let n_s = draw_count_sample(n, cfg.width, &mut rng);
                let cond_s = draw_count_sample(n_cond, cfg.width, &mut rng);
                let term_s = draw_count_sample(n_term, cfg.width, &mut rng);
                let both_s = draw_count_sample(n_both, cfg.width, &mut rng);
                build_contingency(n_s, cond_s, term_s, both_s).ok()
            })
            .ok_or_else(|| Error::CensoringInfeasible(term_key.to_string()))?;

        let mut cells = table.cells().map(|x| x as f64);
        if cells.iter().any(|&x| x == 0.0) {
            cells = cells.map(|x| x + 0.5);
        }
        lors.push(log_odds_ratio_cells(cells));
        ses.push(wald_se_cells(cells));
    }
    Ok(pool(&lors, &ses))
}
