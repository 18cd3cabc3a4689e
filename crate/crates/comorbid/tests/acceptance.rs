//! Acceptance suite: each test prints one pass/fail line for its criterion.

use std::collections::BTreeMap;

use comorbid::association::{
    bias_adjust, classify_level, estimate_selection_bias, log_odds_ratio, z_critical, BiasModel,
    ComorbidityLevel, Thresholds,
};
use comorbid::cohort::build_contingency;
use comorbid::imputation::{impute_association, term_rng, ImputationConfig};
use comorbid::multiplicity::{bh_select_indices, p_value_at_null};
use comorbid::pipeline::{
    analyze_pair, diff_populations, write_analyze_outputs, write_diff_outputs, AnalysisConfig,
};
use comorbid::synth::{
    generate_cohort_pair, round_export, round_to_ten, sample_table, solve_cells_from_or,
    SynthConfig, TermSpec,
};

/// Top-20 association table: (raw point, raw lo, raw hi), (adjusted point,
/// adjusted lo, adjusted hi), level label.
const TOP20: [((f64, f64, f64), (f64, f64, f64), &str); 20] = [
    ((91.4, 27.9, 299.4), (30.5, 9.3, 99.8), "H"),
    ((194.7, 27.9, 1358.4), (64.9, 9.3, 452.8), "H"),
    ((50.4, 16.2, 156.6), (16.8, 5.4, 52.2), "H"),
    ((46.3, 15.5, 138.3), (15.4, 5.2, 46.1), "H"),
    ((85.8, 13.7, 535.5), (28.6, 4.6, 178.5), "H"),
    ((38.9, 12.9, 116.9), (13.0, 4.3, 39.0), "H"),
    ((28.2, 12.1, 65.8), (9.4, 4.0, 21.9), "H"),
    ((64.6, 10.8, 386.9), (21.5, 3.6, 129.0), "H"),
    ((21.7, 10.8, 43.6), (7.2, 3.6, 14.5), "H"),
    ((29.9, 10.5, 85.0), (10.0, 3.5, 28.3), "H"),
    ((29.5, 10.5, 82.6), (9.8, 3.5, 27.5), "H"),
    ((20.8, 10.5, 41.1), (6.9, 3.5, 13.7), "H"),
    ((29.4, 10.3, 84.0), (9.8, 3.4, 28.0), "H"),
    ((22.1, 10.0, 48.7), (7.4, 3.3, 16.2), "M"),
    ((27.3, 9.8, 75.7), (9.1, 3.3, 25.2), "M"),
    ((18.5, 9.5, 36.3), (6.2, 3.2, 12.1), "M"),
    ((26.4, 9.5, 73.8), (8.8, 3.2, 24.6), "M"),
    ((16.7, 9.3, 29.9), (5.6, 3.1, 10.0), "M"),
    ((19.8, 9.1, 43.0), (6.6, 3.0, 14.3), "M"),
    ((23.6, 8.7, 63.7), (7.9, 2.9, 21.2), "M"),
];

/// Differential table: (senior adjusted point, bg adjusted point,
/// differential point, differential lo, differential hi).
const DIFFERENTIAL: [(f64, f64, f64, f64, f64); 24] = [
    (16.8, 4.7, 3.61, 1.27, 10.25),
    (30.5, 5.7, 5.38, 1.58, 18.32),
    (13.0, 3.6, 3.64, 1.26, 10.51),
    (9.8, 4.1, 2.38, 1.02, 5.55),
    (9.4, 3.5, 2.68, 1.24, 5.82),
    (5.2, 1.2, 4.30, 1.31, 14.15),
    (3.9, 1.1, 3.62, 1.25, 10.44),
    (1.9, 1.1, 1.70, 1.10, 2.63),
    (1.9, 1.2, 1.55, 1.01, 2.39),
    (1.7, 1.2, 1.40, 1.02, 1.92),
    (4.9, 2.0, 2.48, 1.02, 5.98),
    (1.8, 0.8, 2.32, 1.19, 4.55),
    (1.4, 0.5, 2.64, 1.31, 5.33),
    (2.1, 1.1, 1.96, 1.00, 3.86),
    (2.3, 0.8, 2.86, 1.12, 7.30),
    (1.0, 0.5, 2.01, 1.31, 3.10),
    (0.9, 0.5, 1.99, 1.28, 3.10),
    (2.4, 0.8, 3.22, 1.15, 9.03),
    (1.9, 0.9, 2.09, 1.08, 4.03),
    (1.8, 1.0, 1.76, 1.01, 3.07),
    (1.6, 0.9, 1.80, 1.12, 2.87),
    (1.7, 0.4, 4.75, 1.21, 18.72),
    (1.4, 0.5, 3.10, 1.12, 8.56),
    (1.3, 0.7, 1.75, 1.10, 2.78),
];

fn report(id: usize, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:2}: {status} — {name}{detail}");
}

#[test]
fn c01_bias_adjustment_relation() {
    let mu3 = BiasModel::new(3.0).unwrap();
    let mut worst = 0.0f64;
    for (raw, adj, _) in TOP20 {
        for (r, a) in [(raw.0, adj.0), (raw.1, adj.1), (raw.2, adj.2)] {
            worst = worst.max((bias_adjust(r, &mu3) - a).abs());
        }
    }
    let pass = worst <= 0.05;
    report(1, "bias adjustment: adjusted = raw / 3 (+-0.05 abs)", pass, &format!(", worst |err| = {worst:.4}"));
    assert!(pass);
}

#[test]
fn c02_classification_reproduction() {
    let thresholds = Thresholds::default();
    let mut pass = true;
    for (raw, _, label) in TOP20 {
        let level = classify_level(raw.1, &thresholds);
        if level.label() != label {
            pass = false;
            eprintln!("  raw_lo {} classified {:?}, table says {label}", raw.1, level);
        }
    }
    // the boundary pair directly
    pass &= classify_level(10.3, &thresholds) == ComorbidityLevel::High;
    pass &= classify_level(10.0, &thresholds) == ComorbidityLevel::Moderate;
    report(2, "H/M labels from raw lower bounds, incl. 10.3/10.0 boundary", pass, "");
    assert!(pass);
}

#[test]
fn c03_fcr_geometric_midpoint_identity() {
    // raw association intervals plus all differential intervals; the
    // one-decimal adjusted columns are raw/3 and carry no extra information
    let mut worst = 0.0f64;
    for (raw, _, _) in TOP20 {
        let (point, lo, hi) = raw;
        worst = worst.max((lo * hi - point * point).abs() / (point * point));
    }
    for (_, _, point, lo, hi) in DIFFERENTIAL {
        worst = worst.max((lo * hi - point * point).abs() / (point * point));
    }
    let pass = worst <= 0.01;
    report(3, "lower*upper = point^2 (+-1% rel) on 44 reported intervals", pass, &format!(", worst rel err = {:.4}", worst));
    assert!(pass);
}

#[test]
fn c04_differential_ratio_relation() {
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for (senior_adj, bg_adj, dc, _, _) in DIFFERENTIAL {
        let ratio = senior_adj / bg_adj;
        let rel = (ratio - dc).abs() / dc;
        worst = worst.max(rel);
        if rel > 0.02 {
            failures += 1;
            eprintln!("  {senior_adj}/{bg_adj} = {ratio:.3} vs reported {dc} (rel err {:.1}%)", rel * 100.0);
        }
    }
    let pass = failures == 0;
    report(4, "dc = senior_adj / bg_adj (+-2% rel) on all 24 rows", pass, &format!(", {failures}/24 rows out of tolerance, worst {:.1}%", worst * 100.0));
    assert!(pass, "{failures} of 24 rows exceed the 2% tolerance");
}

fn term(id: &str, rate: f64, or: f64, bias: f64) -> TermSpec {
    TermSpec {
        id: id.to_string(),
        description: format!("synthetic {id}"),
        rate,
        planted_or: or,
        planted_bias: bias,
    }
}

#[test]
fn c05_oracle_recovery_width_zero() {
    let bias = 3.0;
    let planted = [1.0, 3.0, 10.0, 30.0];
    let cfg = SynthConfig {
        name: "senior".into(),
        n_base: 5_000_000,
        n_condition: 20_000,
        terms: planted
            .iter()
            .enumerate()
            .map(|(i, &or)| term(&format!("T{i}"), 0.001 + 0.001 * i as f64, or, bias))
            .collect(),
        rounding_width: 0,
        seed: 17,
        stochastic: false,
    };
    let (pair, ledger) = generate_cohort_pair(&cfg).unwrap();
    for truth in &ledger {
        assert!(truth.table.cells().iter().all(|&c| c >= 50), "cells {:?}", truth.table);
    }
    let exported = round_export(&pair, 0).unwrap();
    let analysis = analyze_pair(
        &exported,
        &AnalysisConfig { width: 0, seed: 17, ..Default::default() },
    )
    .unwrap();

    let mut pass = true;
    for truth in &ledger {
        let record = &analysis.terms[&truth.term_id];
        let raw = record.raw_or();
        let adjusted = bias_adjust(raw, &BiasModel::new(bias).unwrap());
        let raw_target = truth.planted_or * bias;
        if (raw - raw_target).abs() / raw_target > 0.10
            || (adjusted - truth.planted_or).abs() / truth.planted_or > 0.10
        {
            pass = false;
            eprintln!("  {}: raw {raw:.2} (target {raw_target}), adj {adjusted:.2} (target {})", truth.term_id, truth.planted_or);
        }
    }
    report(5, "planted ORs {1,3,10,30} x bias 3 recovered (+-10%)", pass, "");
    assert!(pass);
}

#[test]
fn c06_censoring_coverage() {
    let n: u64 = 1_000_000;
    let n_cond: u64 = 4_000;
    let replicates = 500;
    let z = z_critical(0.05);
    let mut pass = true;
    let mut detail = String::new();
    for (level_idx, planted) in [1.0, 3.0, 10.0].into_iter().enumerate() {
        let truth = solve_cells_from_or(n, n_cond, 0.01, planted).unwrap();
        let true_lor = log_odds_ratio(&truth).unwrap();
        let mut covered = 0usize;
        for rep in 0..replicates {
            let mut rng = term_rng(1000 + level_idx as u64, &format!("rep{rep}"));
            let sampled = sample_table(&truth, &mut rng).unwrap();
            let counts = [
                n,
                n_cond,
                sampled.a + sampled.c,
                sampled.a,
            ]
            .map(|x| comorbid::cohort::RoundedCount::from_raw(round_to_ten(x)));
            let cfg = ImputationConfig { samples: 100, seed: 2000 + rep as u64, width: 5 };
            let pooled = impute_association(counts, &cfg, "coverage").unwrap();
            let (lo, hi) = (pooled.lor_adj - z * pooled.se_adj, pooled.lor_adj + z * pooled.se_adj);
            if lo <= true_lor && true_lor <= hi {
                covered += 1;
            }
        }
        let rate = covered as f64 / replicates as f64;
        detail.push_str(&format!(", OR={planted}: {:.1}%", rate * 100.0));
        if rate < 0.93 {
            pass = false;
        }
    }
    report(6, "95% augmented intervals cover the true OR in >=93% of 500 reps", pass, &detail);
    assert!(pass);
}

#[test]
fn c07_fdr_control_at_null_mu() {
    let mu = 3.0;
    let alpha = 0.05;
    let n: u64 = 2_000_000;
    let n_cond: u64 = 10_000;
    let n_terms = 2_000;
    let trials = 100;

    // all terms are null: planted OR equals the bias level mu
    let truths: Vec<_> = (0..n_terms)
        .map(|i| {
            let rate = 0.005 + 0.045 * (i as f64 / n_terms as f64);
            solve_cells_from_or(n, n_cond, rate, mu).unwrap()
        })
        .collect();

    let mut fdr_sum = 0.0;
    for trial in 0..trials {
        let mut pvals = Vec::with_capacity(n_terms);
        for (i, truth) in truths.iter().enumerate() {
            let mut rng = term_rng(trial as u64, &format!("fdr{i}"));
            let sampled = sample_table(truth, &mut rng).unwrap();
            let lor = log_odds_ratio(&sampled).unwrap();
            let se = comorbid::association::wald_standard_error(&sampled).unwrap();
            pvals.push(p_value_at_null(lor, se, mu).unwrap());
        }
        let rejected = bh_select_indices(&pvals, alpha).len();
        // every rejection is false: FDR contribution is V / max(R, 1)
        fdr_sum += if rejected > 0 { 1.0 } else { 0.0 };
    }
    // with every term null, V/R = 1 whenever R > 0
    let fdr = fdr_sum / trials as f64;
    let pass = fdr <= 0.07;
    report(7, "empirical FDR under the OR=mu null <= 0.07 (100 trials)", pass, &format!(", FDR = {fdr:.4}"));
    assert!(pass);
}

#[test]
fn c08_rubin_degeneracy_at_width_zero() {
    let cfg = SynthConfig {
        name: "fixture".into(),
        n_base: 500_000,
        n_condition: 3_000,
        terms: (0..20)
            .map(|i| term(&format!("T{i:02}"), 0.005 + 0.002 * i as f64, 1.0 + i as f64, 1.0))
            .collect(),
        rounding_width: 0,
        seed: 3,
        stochastic: false,
    };
    let (pair, _) = generate_cohort_pair(&cfg).unwrap();
    let mut pass = true;
    for term_id in pair.base.freq.keys() {
        let counts = pair.term_counts(term_id);
        let raw = counts.map(|c| c.reported());
        let table = build_contingency(raw[0], raw[1], raw[2], raw[3]).unwrap();
        if !table.is_valid() {
            continue;
        }
        let icfg = ImputationConfig { samples: 100, seed: 3, width: 0 };
        let pooled = impute_association(counts, &icfg, term_id).unwrap();
        let point_se = comorbid::association::wald_standard_error(&table).unwrap();
        let point_lor = log_odds_ratio(&table).unwrap();
        if pooled.se_adj != point_se || pooled.between != 0.0 || pooled.lor_adj != point_lor {
            pass = false;
            eprintln!("  {term_id}: se_adj {} vs {}, B {}", pooled.se_adj, point_se, pooled.between);
        }
    }
    report(8, "width 0: se_adj equals the Wald SE and B = 0 exactly", pass, "");
    assert!(pass);
}

#[test]
fn c09_bias_estimation_on_null_population() {
    let terms: Vec<TermSpec> = (0..500)
        .map(|i| term(&format!("T{i:03}"), 0.002 + 0.0001 * (i % 150) as f64, 1.0, 3.0))
        .collect();
    let cfg = SynthConfig {
        name: "null".into(),
        n_base: 3_000_000,
        n_condition: 30_000,
        terms,
        rounding_width: 0,
        seed: 23,
        stochastic: false,
    };
    let (pair, _) = generate_cohort_pair(&cfg).unwrap();
    let ors: Vec<f64> = pair
        .base
        .freq
        .keys()
        .map(|t| {
            let raw = pair.term_counts(t).map(|c| c.reported());
            let table = build_contingency(raw[0], raw[1], raw[2], raw[3]).unwrap();
            log_odds_ratio(&table).unwrap().exp2()
        })
        .collect();
    let est = estimate_selection_bias(&ors).unwrap();
    let pass = est.geometric_mean >= 2.8 && est.geometric_mean <= 3.4;
    report(9, "planted bias 3 estimated within [2.8, 3.4]", pass, &format!(", estimate = {:.3}", est.geometric_mean));
    assert!(pass);
}

#[test]
fn c10_end_to_end_determinism() {
    let senior_cfg = SynthConfig {
        name: "senior".into(),
        n_base: 1_000_000,
        n_condition: 5_000,
        terms: vec![
            term("T01", 0.02, 10.0, 3.0),
            term("T02", 0.03, 1.0, 3.0),
            term("T03", 0.01, 3.0, 3.0),
        ],
        rounding_width: 5,
        seed: 5,
        stochastic: false,
    };
    let bg_cfg = SynthConfig {
        name: "bg".into(),
        n_base: 2_500_000,
        n_condition: 12_000,
        terms: vec![
            term("T01", 0.02, 2.0, 3.0),
            term("T02", 0.03, 1.0, 3.0),
            term("T03", 0.01, 3.0, 3.0),
        ],
        rounding_width: 5,
        seed: 6,
        stochastic: false,
    };
    let senior = round_export(&generate_cohort_pair(&senior_cfg).unwrap().0, 5).unwrap();
    let bg = round_export(&generate_cohort_pair(&bg_cfg).unwrap().0, 5).unwrap();
    let cfg = AnalysisConfig { seed: 42, ..Default::default() };

    let snapshot = |dir: &std::path::Path| -> BTreeMap<String, Vec<u8>> {
        let mut files = BTreeMap::new();
        for entry in std::fs::read_dir(dir).unwrap() {
            let entry = entry.unwrap();
            files.insert(
                entry.file_name().to_string_lossy().to_string(),
                std::fs::read(entry.path()).unwrap(),
            );
        }
        files
    };

    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let senior_analysis = analyze_pair(&senior, &cfg).unwrap();
        let bg_analysis = analyze_pair(&bg, &cfg).unwrap();
        write_analyze_outputs(&senior_analysis, &cfg, dir.path()).unwrap();
        let diff = diff_populations(&senior_analysis, &bg_analysis, &cfg).unwrap();
        write_diff_outputs(&senior_analysis, &bg_analysis, &diff, &cfg, dir.path()).unwrap();
        runs.push(snapshot(dir.path()));
    }
    let pass = runs[0] == runs[1]
        && runs[0].len() == 6
        && runs[0].values().all(|bytes| !bytes.is_empty());
    report(10, "identical inputs + seed produce byte-identical outputs", pass, &format!(", {} files compared", runs[0].len()));
    assert!(pass);
}
