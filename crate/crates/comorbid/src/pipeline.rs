//! End-to-end analysis: ingest -> impute -> score -> multiplicity ->
//! differential -> report. Emits ranked TSV tables and plot-ready data
//! files with fixed 6-significant-digit formatting for reproducible diffs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::association::{
    classify_level, estimate_selection_bias, log_odds_ratio, BiasEstimate, ComorbidityLevel,
    Thresholds,
};
use crate::cohort::{build_contingency, PopulationPair};
use crate::differential::{differential_confidence, DifferentialResult};
use crate::error::{Error, Result};
use crate::imputation::{impute_association, ImputationConfig, PooledEstimate};
use crate::multiplicity::{fcr_interval, scan_null_grid, FcrResult, NullGrid};

#[derive(Debug, Clone, Copy)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub mu: f64,
    pub samples: usize,
    pub seed: u64,
    pub width: u64,
    pub grid: NullGrid,
    pub thresholds: Thresholds,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha: 0.05,
            mu: 3.0,
            samples: 100,
            seed: 0,
            width: 5,
            grid: NullGrid::default(),
            thresholds: Thresholds::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.mu >= 1.0) {
            return Err(Error::Config(format!("mu must be >= 1, got {}", self.mu)));
        }
        self.imputation().validate()
    }

    pub fn imputation(&self) -> ImputationConfig {
        ImputationConfig { samples: self.samples, seed: self.seed, width: self.width }
    }
}

/// Per-term analysis outcome for one population.
#[derive(Debug, Clone)]
pub struct TermRecord {
    pub term_id: String,
    pub description: String,
    /// The four observed aggregates (N, N(cond), N(t), N(t,cond)).
    pub counts: [u64; 4],
    pub pooled: PooledEstimate,
    /// FCR-adjusted interval, absent if the term was never BH-selected.
    pub fcr: Option<FcrResult>,
    pub level: ComorbidityLevel,
}

impl TermRecord {
    pub fn raw_or(&self) -> f64 {
        self.pooled.lor_adj.exp2()
    }
}

#[derive(Debug, Clone)]
pub struct PopulationAnalysis {
    pub name: String,
    /// Valid terms (finite point interval) with their estimates.
    pub terms: BTreeMap<String, TermRecord>,
    /// Invalid terms with the reason they were excluded.
    pub invalid: Vec<(String, String)>,
    pub m_valid: usize,
    pub bias_estimate: Option<BiasEstimate>,
}

/// Runs the per-population analysis: validity on the point tables, censoring
/// imputation, the null-grid scan and classification.
pub fn analyze_pair(pair: &PopulationPair, cfg: &AnalysisConfig) -> Result<PopulationAnalysis> {
    cfg.validate()?;
    let merged = pair.merged_terms();
    let imputation = cfg.imputation();

    let mut invalid: Vec<(String, String)> = Vec::new();
    let mut point_or: Vec<f64> = Vec::new();
    let mut valid: Vec<(String, [u64; 4])> = Vec::new();

    for term in merged.keys() {
        let counts = pair.term_counts(term);
        let raw = counts.map(|c| c.reported());
        match build_contingency(raw[0], raw[1], raw[2], raw[3]) {
            Ok(table) if table.is_valid() => {
                point_or.push(log_odds_ratio(&table).unwrap().exp2());
                valid.push((term.clone(), raw));
            }
            Ok(_) => invalid.push((term.clone(), "zero cell in point table".to_string())),
            Err(_) => invalid.push((term.clone(), "inconsistent marginals".to_string())),
        }
    }

    // per-term RNG keying makes the parallel fan-out order-independent
    let imputed: Vec<(String, [u64; 4], Result<PooledEstimate>)> = valid
        .into_par_iter()
        .map(|(term, raw)| {
            let counts = pair.term_counts(&term);
            let pooled = impute_association(counts, &imputation, &term);
            (term, raw, pooled)
        })
        .collect();

    let mut estimates: Vec<(String, f64, f64)> = Vec::new();
    let mut records: BTreeMap<String, TermRecord> = BTreeMap::new();
    for (term, raw, pooled) in imputed {
        match pooled {
            Ok(pooled) => {
                estimates.push((term.clone(), pooled.lor_adj, pooled.se_adj));
                let description = merged.get(&term).cloned().unwrap_or_default();
                records.insert(
                    term.clone(),
                    TermRecord {
                        term_id: term,
                        description,
                        counts: raw,
                        pooled,
                        fcr: None,
                        level: ComorbidityLevel::NotSignificant,
                    },
                );
            }
            Err(Error::CensoringInfeasible(_)) => {
                invalid.push((term, "censoring infeasible".to_string()));
            }
            Err(e) => return Err(e),
        }
    }

    let m_valid = records.len();
    let scan = scan_null_grid(&estimates, &cfg.grid, cfg.alpha);
    for record in records.values_mut() {
        if let Ok(fcr) =
            fcr_interval(record.pooled.lor_adj, scan.get(&record.term_id), m_valid, cfg.alpha)
        {
            record.level = classify_level(fcr.lower, &cfg.thresholds);
            record.fcr = Some(fcr);
        }
    }

    let bias_estimate = estimate_selection_bias(&point_or).ok();
    if let Some(est) = &bias_estimate {
        log::info!(
            "{}: selection-bias guideline: geometric mean OR {:.3} [{:.3}, {:.3}] over {} valid terms",
            pair.base.name, est.geometric_mean, est.q25, est.q75, m_valid
        );
    }

    invalid.sort();
    Ok(PopulationAnalysis {
        name: pair.base.name.clone(),
        terms: records,
        invalid,
        m_valid,
        bias_estimate,
    })
}

/// Differential analysis over the intersection of the two valid-term sets.
pub fn diff_populations(
    senior: &PopulationAnalysis,
    bg: &PopulationAnalysis,
    cfg: &AnalysisConfig,
) -> Result<BTreeMap<String, DifferentialResult>> {
    let mut paired = BTreeMap::new();
    for (term, s) in &senior.terms {
        if let Some(b) = bg.terms.get(term) {
            paired.insert(term.clone(), (s.pooled, b.pooled));
        }
    }
    differential_confidence(&paired, &cfg.grid, cfg.alpha)
}

/// Fixed 6-significant-digit decimal formatting.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    format!("{:.*}", decimals, x)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_else(|| "NA".to_string())
}

/// Writes `results.tsv`: one row per selected term, sorted descending by the
/// adjusted-interval lower bound (ties by term id).
pub fn write_results_tsv<W: Write>(analysis: &PopulationAnalysis, cfg: &AnalysisConfig, mut w: W) -> Result<()> {
    writeln!(
        w,
        "term_id\tdescription\traw_or\traw_lo\traw_hi\tadj_or\tadj_lo\tadj_hi\tlevel\tq_t\tr_t\tn_base\tn_cond\tn_term\tn_both"
    )?;
    let mut rows: Vec<&TermRecord> =
        analysis.terms.values().filter(|r| r.fcr.is_some()).collect();
    rows.sort_by(|x, y| {
        let qx = x.fcr.unwrap().lower;
        let qy = y.fcr.unwrap().lower;
        qy.partial_cmp(&qx).unwrap().then(x.term_id.cmp(&y.term_id))
    });
    for row in rows {
        let fcr = row.fcr.unwrap();
        let raw = row.raw_or();
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.term_id,
            row.description,
            fmt_sig(raw),
            fmt_sig(fcr.lower),
            fmt_sig(fcr.upper),
            fmt_sig(raw / cfg.mu),
            fmt_sig(fcr.lower / cfg.mu),
            fmt_sig(fcr.upper / cfg.mu),
            row.level.label(),
            fmt_sig(fcr.q_max),
            fcr.r_at_q,
            row.counts[0],
            row.counts[1],
            row.counts[2],
            row.counts[3],
        )?;
    }
    Ok(())
}

/// Valid terms that were never BH-selected at any grid level.
pub fn write_below_threshold_tsv<W: Write>(analysis: &PopulationAnalysis, mut w: W) -> Result<()> {
    writeln!(w, "term_id\tdescription\traw_or\tse_adj")?;
    for row in analysis.terms.values().filter(|r| r.fcr.is_none()) {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            row.term_id,
            row.description,
            fmt_sig(row.raw_or()),
            fmt_sig(row.pooled.se_adj),
        )?;
    }
    Ok(())
}

pub fn write_invalid_tsv<W: Write>(analysis: &PopulationAnalysis, mut w: W) -> Result<()> {
    writeln!(w, "term_id\treason")?;
    for (term, reason) in &analysis.invalid {
        writeln!(w, "{term}\t{reason}")?;
    }
    Ok(())
}

/// Histogram of the pooled log2-OR scores over the valid terms, bin width
/// 0.25, with the three classification thresholds marked.
pub fn write_histogram_tsv<W: Write>(
    analysis: &PopulationAnalysis,
    thresholds: &Thresholds,
    mut w: W,
) -> Result<()> {
    const BIN: f64 = 0.25;
    for (name, or) in [
        ("minor", thresholds.minor),
        ("moderate", thresholds.moderate),
        ("high", thresholds.high),
    ] {
        writeln!(w, "# threshold {name}\tOR={or}\tlog2={}", fmt_sig(or.log2()))?;
    }
    writeln!(w, "bin_lo\tbin_hi\tcount")?;
    let scores: Vec<f64> = analysis.terms.values().map(|r| r.pooled.lor_adj).collect();
    if scores.is_empty() {
        return Ok(());
    }
    let min_bin = scores.iter().map(|s| (s / BIN).floor() as i64).min().unwrap();
    let max_bin = scores.iter().map(|s| (s / BIN).floor() as i64).max().unwrap();
    let mut counts = vec![0u64; (max_bin - min_bin + 1) as usize];
    for s in &scores {
        counts[((s / BIN).floor() as i64 - min_bin) as usize] += 1;
    }
    for (i, count) in counts.iter().enumerate() {
        let lo = (min_bin + i as i64) as f64 * BIN;
        writeln!(w, "{}\t{}\t{count}", fmt_sig(lo), fmt_sig(lo + BIN))?;
    }
    Ok(())
}

/// Writes `diff.tsv`: per-term senior and background adjusted scores plus
/// the differential interval, sorted descending by the differential lower
/// bound (terms without an interval last, ties by term id).
pub fn write_diff_tsv<W: Write>(
    senior: &PopulationAnalysis,
    bg: &PopulationAnalysis,
    diff: &BTreeMap<String, DifferentialResult>,
    cfg: &AnalysisConfig,
    mut w: W,
) -> Result<()> {
    writeln!(
        w,
        "term_id\tdescription\tsenior_adj_or\tsenior_adj_lo\tsenior_adj_hi\tsenior_level\t\
         bg_adj_or\tbg_adj_lo\tbg_adj_hi\tbg_level\tdc_ratio\tdc_lo\tdc_hi\tconfident"
    )?;
    let mut keys: Vec<&String> = diff.keys().collect();
    keys.sort_by(|x, y| {
        let lx = diff[*x].interval.map(|f| f.lower);
        let ly = diff[*y].interval.map(|f| f.lower);
        match (lx, ly) {
            (Some(a), Some(b)) => b.partial_cmp(&a).unwrap().then(x.cmp(y)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => x.cmp(y),
        }
    });
    for term in keys {
        let result = &diff[term];
        let s = &senior.terms[term];
        let b = &bg.terms[term];
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            term,
            s.description,
            fmt_sig(s.raw_or() / cfg.mu),
            fmt_opt(s.fcr.map(|f| f.lower / cfg.mu)),
            fmt_opt(s.fcr.map(|f| f.upper / cfg.mu)),
            s.level.label(),
            fmt_sig(b.raw_or() / cfg.mu),
            fmt_opt(b.fcr.map(|f| f.lower / cfg.mu)),
            fmt_opt(b.fcr.map(|f| f.upper / cfg.mu)),
            b.level.label(),
            fmt_sig(result.dc.exp2()),
            fmt_opt(result.interval.map(|f| f.lower)),
            fmt_opt(result.interval.map(|f| f.upper)),
            result.confident as u8,
        )?;
    }
    Ok(())
}

/// Writes `scatter.tsv`: per-term interval lower bounds in both populations
/// for region-plot style visualization.
pub fn write_scatter_tsv<W: Write>(
    senior: &PopulationAnalysis,
    bg: &PopulationAnalysis,
    diff: &BTreeMap<String, DifferentialResult>,
    mut w: W,
) -> Result<()> {
    writeln!(
        w,
        "term_id\tor_min_senior\tor_min_bg\tlevel_senior\tlevel_bg\tdifferential"
    )?;
    for (term, result) in diff {
        let s = &senior.terms[term];
        let b = &bg.terms[term];
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            term,
            fmt_opt(s.fcr.map(|f| f.lower)),
            fmt_opt(b.fcr.map(|f| f.lower)),
            s.level.label(),
            b.level.label(),
            result.confident as u8,
        )?;
    }
    Ok(())
}

/// Writes the complete analyze output set into a directory.
pub fn write_analyze_outputs(
    analysis: &PopulationAnalysis,
    cfg: &AnalysisConfig,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_results_tsv(analysis, cfg, std::fs::File::create(out_dir.join("results.tsv"))?)?;
    write_below_threshold_tsv(
        analysis,
        std::fs::File::create(out_dir.join("below_threshold.tsv"))?,
    )?;
    write_invalid_tsv(analysis, std::fs::File::create(out_dir.join("invalid.tsv"))?)?;
    write_histogram_tsv(
        analysis,
        &cfg.thresholds,
        std::fs::File::create(out_dir.join("histogram.tsv"))?,
    )?;
    Ok(())
}

/// Writes the complete diff output set into a directory.
pub fn write_diff_outputs(
    senior: &PopulationAnalysis,
    bg: &PopulationAnalysis,
    diff: &BTreeMap<String, DifferentialResult>,
    cfg: &AnalysisConfig,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_diff_tsv(senior, bg, diff, cfg, std::fs::File::create(out_dir.join("diff.tsv"))?)?;
    write_scatter_tsv(senior, bg, diff, std::fs::File::create(out_dir.join("scatter.tsv"))?)?;
    Ok(())
}
