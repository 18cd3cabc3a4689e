//! Cohort exports, contingency tables and per-term validity.
//!
//! A cohort export is an aggregate query result: a total record count plus a
//! term frequency table, with every count reported to the nearest ten. The
//! four observed aggregates for a (term, condition) pair determine the 2x2
//! contingency table exactly.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

pub type TermId = String;

/// A record count as reported by the export: rounded to the nearest ten,
/// so the true count lies in `[reported - 5, reported + 5]` (clamped at 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RoundedCount {
    reported: u64,
}

impl RoundedCount {
    /// Wraps a reported count without the mod-10 check. Used for exact
    /// (unrounded) synthetic exports analyzed with censoring width 0.
    pub fn from_raw(reported: u64) -> Self {
        RoundedCount { reported }
    }

    /// Wraps a reported count, enforcing the round-to-ten invariant.
    pub fn checked(reported: u64) -> Result<Self> {
        if reported % 10 != 0 {
            return Err(Error::Domain(format!(
                "count {reported} is not a multiple of 10"
            )));
        }
        Ok(RoundedCount { reported })
    }

    pub fn reported(&self) -> u64 {
        self.reported
    }

    /// Lower end of the censoring interval for a given half-width.
    pub fn lower(&self, width: u64) -> u64 {
        self.reported.saturating_sub(width)
    }

    /// Upper end of the censoring interval for a given half-width.
    pub fn upper(&self, width: u64) -> u64 {
        self.reported + width
    }
}

/// A named population: total record count plus term frequency table.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub name: String,
    pub total: RoundedCount,
    pub freq: BTreeMap<TermId, RoundedCount>,
    pub term_catalog: BTreeMap<TermId, String>,
}

impl Cohort {
    /// Checks the censoring-consistency invariant: no term frequency may
    /// exceed the total by more than one rounding step.
    pub fn validate(&self) -> Result<()> {
        for (term, count) in &self.freq {
            if count.reported() > self.total.reported() + 10 {
                return Err(Error::Domain(format!(
                    "term `{term}` count {} exceeds cohort total {} beyond censoring slack",
                    count.reported(),
                    self.total.reported()
                )));
            }
        }
        Ok(())
    }
}

/// A base population together with the subpopulation having the target
/// condition (e.g. Senior and SeniorIPV).
#[derive(Debug, Clone)]
pub struct PopulationPair {
    pub base: Cohort,
    pub condition: Cohort,
}

impl PopulationPair {
    pub fn new(base: Cohort, condition: Cohort) -> Result<Self> {
        if condition.total.reported() > base.total.reported() {
            return Err(Error::Config(format!(
                "condition cohort `{}` ({}) is larger than base cohort `{}` ({})",
                condition.name,
                condition.total.reported(),
                base.name,
                base.total.reported()
            )));
        }
        Ok(PopulationPair { base, condition })
    }

    /// Union of the base and condition term ids, with descriptions resolved
    /// in favor of the base cohort. Conflicts are logged.
    pub fn merged_terms(&self) -> BTreeMap<TermId, String> {
        let mut merged = self.base.term_catalog.clone();
        for (term, desc) in &self.condition.term_catalog {
            match merged.get(term) {
                None => {
                    merged.insert(term.clone(), desc.clone());
                }
                Some(base_desc) if base_desc != desc => {
                    log::warn!(
                        "term `{term}`: description conflict, keeping base cohort's \
                         (`{base_desc}` over `{desc}`)"
                    );
                }
                _ => {}
            }
        }
        merged
    }

    /// The four observed aggregates for one term, with missing terms
    /// materialized as reported 0.
    pub fn term_counts(&self, term: &str) -> [RoundedCount; 4] {
        let zero = RoundedCount::from_raw(0);
        [
            self.base.total,
            self.condition.total,
            self.base.freq.get(term).copied().unwrap_or(zero),
            self.condition.freq.get(term).copied().unwrap_or(zero),
        ]
    }
}

/// 2x2 contingency table for (term x condition) in one population.
/// `a` counts records with both, `d` records with neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn cells(&self) -> [u64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    /// A term is valid iff the point table yields a finite confidence
    /// interval, i.e. all four cells are at least 1.
    pub fn is_valid(&self) -> bool {
        self.cells().iter().all(|&x| x >= 1)
    }
}

/// Derives the exact cells from the four observed aggregates:
/// `b = n_cond - n_both`, `c = n_term - n_both`,
/// `d = n + n_both - n_cond - n_term`.
pub fn build_contingency(n: u64, n_cond: u64, n_term: u64, n_both: u64) -> Result<ContingencyTable> {
    let fail = |cell| Error::InconsistentMarginals {
        cell,
        n,
        n_cond,
        n_term,
        n_both,
    };
    let b = n_cond.checked_sub(n_both).ok_or_else(|| fail("b"))?;
    let c = n_term.checked_sub(n_both).ok_or_else(|| fail("c"))?;
    let d = (n + n_both)
        .checked_sub(n_cond + n_term)
        .ok_or_else(|| fail("d"))?;
    Ok(ContingencyTable { a: n_both, b, c, d })
}

/// How counts that are not multiples of ten are treated during parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Reject counts that are not multiples of ten.
    Strict,
    /// Round offending counts to the nearest ten with a warning.
    Round,
    /// Accept counts verbatim (unrounded exports analyzed with width 0).
    Exact,
}

/// Parses a cohort export: a UTF-8 CSV with header line
/// `#cohort=<name>,total=<int>`, column header `term_id,description,count`,
/// then one row per term.
pub fn parse_cohort_export<R: Read>(source: R, mode: ParseMode) -> Result<Cohort> {
    let mut reader = BufReader::new(source);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let header = header.trim_end();
    let (name, total) = parse_header(header)?;

    let wrap_count = |raw: u64, line: usize| -> Result<RoundedCount> {
        match mode {
            ParseMode::Strict => RoundedCount::checked(raw).map_err(|_| Error::Parse {
                line,
                msg: format!("count {raw} is not a multiple of 10 (strict mode)"),
            }),
            ParseMode::Round => {
                if raw % 10 != 0 {
                    let rounded = (raw + 5) / 10 * 10;
                    log::warn!("line {line}: rounding count {raw} to {rounded}");
                    Ok(RoundedCount::from_raw(rounded))
                } else {
                    Ok(RoundedCount::from_raw(raw))
                }
            }
            ParseMode::Exact => Ok(RoundedCount::from_raw(raw)),
        }
    };

    let total = wrap_count(total, 1)?;

    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);

    let mut freq = BTreeMap::new();
    let mut term_catalog = BTreeMap::new();
    for (idx, record) in csv_reader.records().enumerate() {
        // line 1 is the cohort header, line 2 the column header
        let line = idx + 3;
        let record = record.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let term_id = record[0].to_string();
        let description = record[1].to_string();
        let raw: i64 = record[2].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid count `{}`", &record[2]),
        })?;
        if raw < 0 {
            return Err(Error::Domain(format!(
                "negative count {raw} for term `{term_id}` at line {line}"
            )));
        }
        let count = wrap_count(raw as u64, line)?;
        if freq.insert(term_id.clone(), count).is_some() {
            return Err(Error::DuplicateTerm(term_id));
        }
        term_catalog.insert(term_id, description);
    }

    let cohort = Cohort {
        name,
        total,
        freq,
        term_catalog,
    };
    cohort.validate()?;
    Ok(cohort)
}

fn parse_header(header: &str) -> Result<(String, u64)> {
    let err = |msg: &str| Error::Parse {
        line: 1,
        msg: msg.to_string(),
    };
    let rest = header
        .strip_prefix("#cohort=")
        .ok_or_else(|| err("expected header `#cohort=<name>,total=<int>`"))?;
    let (name, total) = rest
        .rsplit_once(",total=")
        .ok_or_else(|| err("missing `,total=` in header"))?;
    let total: u64 = total
        .trim()
        .parse()
        .map_err(|_| err("invalid total count"))?;
    if name.is_empty() {
        return Err(err("empty cohort name"));
    }
    Ok((name.to_string(), total))
}

/// Serializes a cohort in the export format read by [`parse_cohort_export`].
/// Round-trips reported counts byte-exactly.
pub fn write_cohort_export<W: Write>(cohort: &Cohort, mut sink: W) -> Result<()> {
    writeln!(
        sink,
        "#cohort={},total={}",
        cohort.name,
        cohort.total.reported()
    )?;
    let mut csv_writer = csv::Writer::from_writer(sink);
    csv_writer.write_record(["term_id", "description", "count"])?;
    for (term, count) in &cohort.freq {
        let desc = cohort
            .term_catalog
            .get(term)
            .map(String::as_str)
            .unwrap_or("");
        csv_writer.write_record([term.as_str(), desc, &count.reported().to_string()])?;
    }
    csv_writer.flush()?;
    Ok(())
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse {
            line: 0,
            msg: e.to_string(),
        }
    }
}
