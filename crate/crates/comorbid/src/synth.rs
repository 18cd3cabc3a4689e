//! Synthetic cohort generation with planted odds ratios, selection bias and
//! round-to-ten censoring. Serves as ground truth for acceptance and FDR
//! tests.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::cohort::{Cohort, ContingencyTable, PopulationPair, RoundedCount, TermId};
use crate::error::{Error, Result};
use crate::imputation::term_rng;

#[derive(Debug, Clone, serde::Deserialize)]
pub struct TermSpec {
    pub id: TermId,
    #[serde(default)]
    pub description: String,
    /// Base rate p_t of the term in the population.
    pub rate: f64,
    pub planted_or: f64,
    #[serde(default = "default_bias")]
    pub planted_bias: f64,
}

fn default_bias() -> f64 {
    1.0
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct SynthConfig {
    pub name: String,
    pub n_base: u64,
    pub n_condition: u64,
    pub terms: Vec<TermSpec>,
    #[serde(default = "default_width")]
    pub rounding_width: u64,
    #[serde(default)]
    pub seed: u64,
    /// Draw cell counts binomially instead of using the deterministic
    /// solved cells; used for coverage/FDR experiments.
    #[serde(default)]
    pub stochastic: bool,
}

fn default_width() -> u64 {
    5
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_condition == 0 || self.n_condition >= self.n_base {
            return Err(Error::Config(format!(
                "need 0 < n_condition < n_base, got {} / {}",
                self.n_condition, self.n_base
            )));
        }
        for t in &self.terms {
            if !(t.rate > 0.0 && t.rate < 1.0) {
                return Err(Error::Config(format!(
                    "term `{}`: rate must be in (0, 1), got {}",
                    t.id, t.rate
                )));
            }
            if !(t.planted_or > 0.0) || !(t.planted_bias > 0.0) {
                return Err(Error::Config(format!(
                    "term `{}`: planted_or and planted_bias must be positive",
                    t.id
                )));
            }
        }
        Ok(())
    }
}

/// Ground truth for one generated term: the planted parameters and the
/// exact (deterministic) cells they solve to.
#[derive(Debug, Clone)]
pub struct TruthRecord {
    pub term_id: TermId,
    pub planted_or: f64,
    pub planted_bias: f64,
    pub table: ContingencyTable,
}

impl TruthRecord {
    /// Odds ratio of the exact integer truth table.
    pub fn true_or(&self) -> f64 {
        let [a, b, c, d] = self.table.cells().map(|x| x as f64);
        a * d / (b * c)
    }
}

/// Finds the integer cell `a` such that the table with marginals
/// (n, n_cond, n_term = round(p_t * n)) has odds ratio `or_target`.
/// The root is unique in the feasible interval since the odds ratio is
/// strictly increasing in `a`.
pub fn solve_cells_from_or(
    n: u64,
    n_cond: u64,
    p_t: f64,
    or_target: f64,
) -> Result<ContingencyTable> {
    let n_term = (p_t * n as f64).round() as u64;
    let infeasible = || Error::InfeasibleEffect(format!("n={n}, n_cond={n_cond}, p_t={p_t}, or={or_target}"));

    let lo = (n_cond + n_term).saturating_sub(n) as f64;
    let hi = n_cond.min(n_term) as f64;
    if hi - lo < 2.0 {
        return Err(infeasible());
    }

    let nf = n as f64;
    let n_cond_f = n_cond as f64;
    let n_term_f = n_term as f64;
    // monotone in a: ln(a) + ln(d) - ln(b) - ln(c) - ln(or)
    let g = |a: f64| -> f64 {
        a.ln() + (nf - n_cond_f - n_term_f + a).ln()
            - (n_cond_f - a).ln()
            - (n_term_f - a).ln()
            - or_target.ln()
    };

    let mut left = lo + 1e-9 * (hi - lo).max(1.0);
    let mut right = hi - 1e-9 * (hi - lo).max(1.0);
    if g(left) > 0.0 || g(right) < 0.0 {
        // target outside the open-interval range; can only happen through
        // floating point at the extremes
        return Err(infeasible());
    }
    for _ in 0..200 {
        let mid = 0.5 * (left + right);
        if g(mid) <= 0.0 {
            left = mid;
        } else {
            right = mid;
        }
    }
    let a = (0.5 * (left + right)).round();
    // all four cells must be at least 1 for a usable truth table
    if a < lo + 1.0 || a > hi - 1.0 || a < 1.0 {
        return Err(infeasible());
    }
    let a = a as u64;
    Ok(ContingencyTable {
        a,
        b: n_cond - a,
        c: n_term - a,
        d: n + a - n_cond - n_term,
    })
}

/// Generates one population pair with exact (unrounded) counts and the
/// truth ledger. Each term's observed odds ratio is planted at
/// `planted_or * planted_bias`; in stochastic mode the condition and
/// non-condition frequencies are redrawn binomially around the solved cells.
pub fn generate_cohort_pair(cfg: &SynthConfig) -> Result<(PopulationPair, Vec<TruthRecord>)> {
    cfg.validate()?;

    let mut freq_base = BTreeMap::new();
    let mut freq_cond = BTreeMap::new();
    let mut catalog = BTreeMap::new();
    let mut ledger = Vec::with_capacity(cfg.terms.len());

    for spec in &cfg.terms {
        let target = spec.planted_or * spec.planted_bias;
        let table = solve_cells_from_or(cfg.n_base, cfg.n_condition, spec.rate, target)
            .map_err(|_| Error::InfeasibleEffect(spec.id.clone()))?;

        let (a, c) = if cfg.stochastic {
            let mut rng = term_rng(cfg.seed, &spec.id);
            let n_no_cond = cfg.n_base - cfg.n_condition;
            let a = Binomial::new(cfg.n_condition, table.a as f64 / cfg.n_condition as f64)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(&mut rng);
            let c = Binomial::new(n_no_cond, table.c as f64 / n_no_cond as f64)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(&mut rng);
            (a, c)
        } else {
            (table.a, table.c)
        };

        freq_cond.insert(spec.id.clone(), RoundedCount::from_raw(a));
        freq_base.insert(spec.id.clone(), RoundedCount::from_raw(a + c));
        let description = if spec.description.is_empty() {
            format!("synthetic term {}", spec.id)
        } else {
            spec.description.clone()
        };
        catalog.insert(spec.id.clone(), description);

        ledger.push(TruthRecord {
            term_id: spec.id.clone(),
            planted_or: spec.planted_or,
            planted_bias: spec.planted_bias,
            table,
        });
    }

    let base = Cohort {
        name: cfg.name.clone(),
        total: RoundedCount::from_raw(cfg.n_base),
        freq: freq_base,
        term_catalog: catalog.clone(),
    };
    let condition = Cohort {
        name: format!("{}_condition", cfg.name),
        total: RoundedCount::from_raw(cfg.n_condition),
        freq: freq_cond,
        term_catalog: catalog,
    };
    Ok((PopulationPair::new(base, condition)?, ledger))
}

/// Rounds a count to the nearest ten, half away from zero.
pub fn round_to_ten(x: u64) -> u64 {
    (x + 5) / 10 * 10
}

/// Applies round-to-ten censoring to every count of an exact pair.
/// Width 0 bypasses rounding.
pub fn round_export(pair: &PopulationPair, width: u64) -> Result<PopulationPair> {
    match width {
        0 => Ok(pair.clone()),
        5 => {
            let round_cohort = |cohort: &Cohort| Cohort {
                name: cohort.name.clone(),
                total: RoundedCount::from_raw(round_to_ten(cohort.total.reported())),
                freq: cohort
                    .freq
                    .iter()
                    .map(|(t, c)| (t.clone(), RoundedCount::from_raw(round_to_ten(c.reported()))))
                    .collect(),
                term_catalog: cohort.term_catalog.clone(),
            };
            PopulationPair::new(round_cohort(&pair.base), round_cohort(&pair.condition))
        }
        other => Err(Error::Config(format!(
            "rounding width must be 0 or 5, got {other}"
        ))),
    }
}

/// Draws a fresh stochastic realization of a truth table with fixed
/// condition / non-condition margins. Used by replication experiments.
pub fn sample_table<R: Rng>(
    truth: &ContingencyTable,
    rng: &mut R,
) -> Result<ContingencyTable> {
    let n_cond = truth.a + truth.b;
    let n_no_cond = truth.c + truth.d;
    let a = Binomial::new(n_cond, truth.a as f64 / n_cond as f64)
        .map_err(|e| Error::Config(e.to_string()))?
        .sample(rng);
    let c = Binomial::new(n_no_cond, truth.c as f64 / n_no_cond as f64)
        .map_err(|e| Error::Config(e.to_string()))?
        .sample(rng);
    Ok(ContingencyTable {
        a,
        b: n_cond - a,
        c,
        d: n_no_cond - c,
    })
}
