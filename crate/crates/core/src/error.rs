use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("frequency {0:?} lies outside the lattice")]
    OutsideLattice(Vec<i64>),

    #[error("difference margin exhausted: need {needed}, symbol carries {available}")]
    MarginExhausted { needed: usize, available: usize },

    #[error("too few dyadic shells: need {needed}, found {found}")]
    TooFewShells { needed: usize, found: usize },

    #[error("no lattice point with |xi| >= {0}")]
    EmptyShell(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("operator is not hermitian (max defect {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not positive (min eigenvalue {0:.6e})")]
    NotPositive(f64),

    #[error("function undefined on the spectrum at eigenvalue {0:.6e}")]
    UndefinedOnSpectrum(f64),

    #[error("stability bound violated: dt * spectral radius = {product:.4} exceeds {limit:.4}")]
    Unstable { product: f64, limit: f64 },

    #[error("instability detected at t = {time:.6}: |v|^2 = {norm_sq:.6e} exceeds envelope {envelope:.6e}")]
    Diverged {
        time: f64,
        norm_sq: f64,
        envelope: f64,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
