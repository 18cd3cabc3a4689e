//! Co-morbidity scores: log2 odds ratios, Wald standard errors, confidence
//! intervals, selection-bias adjustment and the Minor/Moderate/High labels.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::cohort::ContingencyTable;
use crate::error::{Error, Result};

/// A point estimate on the log2-odds-ratio scale with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationEstimate {
    pub lor: f64,
    pub se: f64,
}

impl AssociationEstimate {
    pub fn or_point(&self) -> f64 {
        self.lor.exp2()
    }
}

/// Two-sided interval specification: `z_alpha = Phi^-1(1 - alpha/2)`.
#[derive(Debug, Clone, Copy)]
pub struct IntervalSpec {
    pub alpha: f64,
    pub z_alpha: f64,
}

impl IntervalSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {alpha}")));
        }
        Ok(IntervalSpec {
            alpha,
            z_alpha: z_critical(alpha),
        })
    }
}

/// Critical value of the standard normal for a two-sided level-`alpha` test.
pub fn z_critical(alpha: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    normal.inverse_cdf(1.0 - alpha / 2.0)
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    normal.cdf(x)
}

/// Null odds-ratio level attributed to selection bias (division on the OR
/// scale, subtraction on the log scale).
#[derive(Debug, Clone, Copy)]
pub struct BiasModel {
    pub mu: f64,
}

impl BiasModel {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu >= 1.0) {
            return Err(Error::Config(format!("mu must be >= 1, got {mu}")));
        }
        Ok(BiasModel { mu })
    }
}

/// Null odds-ratio thresholds for the Minor/Moderate/High labels.
#[derive(Debug, Clone, Copy)]
pub struct Thresholds {
    pub minor: f64,
    pub moderate: f64,
    pub high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { minor: 3.0, moderate: 5.0, high: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ComorbidityLevel {
    NotSignificant,
    Minor,
    Moderate,
    High,
}

impl ComorbidityLevel {
    /// Table-style abbreviation: H, M, m, or empty.
    pub fn label(&self) -> &'static str {
        match self {
            ComorbidityLevel::High => "H",
            ComorbidityLevel::Moderate => "M",
            ComorbidityLevel::Minor => "m",
            ComorbidityLevel::NotSignificant => "",
        }
    }
}

/// The co-morbidity score C(t|Z): `log2((a*d) / (b*c))` over real-valued
/// cells (real-valued so continuity-corrected samples can reuse it).
pub fn log_odds_ratio_cells(cells: [f64; 4]) -> f64 {
    let [a, b, c, d] = cells;
    (a * d).log2() - (b * c).log2()
}

/// Wald standard error on the log2 scale:
/// `sqrt(1/a + 1/b + 1/c + 1/d) / ln(2)`.
pub fn wald_se_cells(cells: [f64; 4]) -> f64 {
    let sum: f64 = cells.iter().map(|x| 1.0 / x).sum();
    sum.sqrt() / std::f64::consts::LN_2
}

pub fn log_odds_ratio(table: &ContingencyTable) -> Result<f64> {
    if !table.is_valid() {
        return Err(Error::NonFinite);
    }
    Ok(log_odds_ratio_cells(table.cells().map(|x| x as f64)))
}

pub fn wald_standard_error(table: &ContingencyTable) -> Result<f64> {
    if !table.is_valid() {
        return Err(Error::NonFinite);
    }
    Ok(wald_se_cells(table.cells().map(|x| x as f64)))
}

/// Symmetric `1 - alpha` interval on the log2 scale.
pub fn confidence_interval(est: &AssociationEstimate, spec: &IntervalSpec) -> (f64, f64) {
    (
        est.lor - spec.z_alpha * est.se,
        est.lor + spec.z_alpha * est.se,
    )
}

/// Removes the expected selection-bias portion of an odds ratio. Applied
/// uniformly to point estimates and interval endpoints.
pub fn bias_adjust(or_value: f64, model: &BiasModel) -> f64 {
    or_value / model.mu
}

/// Classifies a term by the FDR-adjusted interval lower bound on the raw OR
/// scale. Strict inequalities at every threshold.
pub fn classify_level(or_min_raw: f64, thresholds: &Thresholds) -> ComorbidityLevel {
    if or_min_raw > thresholds.high {
        ComorbidityLevel::High
    } else if or_min_raw > thresholds.moderate {
        ComorbidityLevel::Moderate
    } else if or_min_raw > thresholds.minor {
        ComorbidityLevel::Minor
    } else {
        ComorbidityLevel::NotSignificant
    }
}

/// Geometric mean of the valid per-term OR point estimates, with the
/// quartile spread. A guideline for choosing the bias level `mu`.
#[derive(Debug, Clone, Copy)]
pub struct BiasEstimate {
    pub geometric_mean: f64,
    pub q25: f64,
    pub q75: f64,
}

pub fn estimate_selection_bias(or_points: &[f64]) -> Result<BiasEstimate> {
    if or_points.is_empty() {
        return Err(Error::Domain("no valid terms to estimate bias from".into()));
    }
    if or_points.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain("OR point estimates must be finite and positive".into()));
    }
    let mean_log: f64 = or_points.iter().map(|x| x.log2()).sum::<f64>() / or_points.len() as f64;
    let mut sorted = or_points.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(BiasEstimate {
        geometric_mean: mean_log.exp2(),
        q25: percentile(&sorted, 0.25),
        q75: percentile(&sorted, 0.75),
    })
}

// linear interpolation between order statistics; input sorted ascending
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
