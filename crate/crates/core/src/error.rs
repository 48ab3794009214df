use std::fmt;

/// Errors raised by the operators and oracles in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dense oracle for n = {n} exceeds the size guard {max}")]
    OracleTooLarge { n: usize, max: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("query {query} lies outside the grid span [{lo}, {hi}]")]
    OutsideSpan { query: f64, lo: f64, hi: f64 },
    #[error("frequency response has flavor {found}, expected {expected}")]
    WrongFlavor { expected: Flavor, found: Flavor },
    #[error("inducing matrix is near-singular (sigma_r = {0:e})")]
    SingularInducing(f64),
    #[error("power iteration did not converge (final relative residual {0:e})")]
    NonConvergence(f64),
    #[error("backward called without a cached forward pass")]
    MissingForwardCache,
    #[error("loss diverged (non-finite) at step {step}")]
    Divergence { step: usize },
    #[error("probe refused: {0}")]
    ProbeRefused(String),
    #[error("all-zero impulse response")]
    ZeroImpulse,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Flavor tag carried by a sampled frequency response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    /// Real samples of an even spectrum (input to the causal construction).
    RealEven,
    /// General complex samples, real at the DC and Nyquist bins.
    Complex,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flavor::RealEven => f.write_str("real-even"),
            Flavor::Complex => f.write_str("complex"),
        }
    }
}

pub(crate) fn ensure_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, actual })
    }
}

pub(crate) fn ensure_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
