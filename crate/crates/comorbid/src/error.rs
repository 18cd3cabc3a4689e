use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate term id `{0}`")]
    DuplicateTerm(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inconsistent marginals: derived cell ({cell}) is negative for \
             (n={n}, n_cond={n_cond}, n_term={n_term}, n_both={n_both})")]
    InconsistentMarginals {
        cell: &'static str,
        n: u64,
        n_cond: u64,
        n_term: u64,
        n_both: u64,
    },

    #[error("non-finite estimate: contingency table has an empty cell")]
    NonFinite,

    #[error("censoring infeasible for term `{0}`: no consistent sample found")]
    CensoringInfeasible(String),

    #[error("degenerate estimate: standard error is zero")]
    Degenerate,

    #[error("term was not selected at any null level")]
    NotSelected,

    #[error("term `{0}` is not comparable: invalid in one of the populations")]
    NotComparable(String),

    #[error("infeasible planted effect for term `{0}`")]
    InfeasibleEffect(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
