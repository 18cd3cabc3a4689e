//! Mining aggregate, privacy-rounded EHR cohort exports for terms co-morbid
//! with a target condition, with censoring-aware, multiplicity-adjusted
//! confidence intervals and differential comparison between two populations.
//!
//! The pipeline: parse cohort exports, derive exact contingency cells from
//! the four observed aggregates, propagate the round-to-ten measurement
//! error by Monte-Carlo multiple imputation, scan a logarithmic grid of
//! null odds-ratio levels with the Benjamini-Hochberg procedure to get
//! FCR-adjusted intervals, and classify or compare terms by the adjusted
//! interval lower bound.

pub mod association;
pub mod cohort;
pub mod differential;
pub mod error;
pub mod imputation;
pub mod multiplicity;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
