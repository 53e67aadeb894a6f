//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by spectral evaluation, inference, and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpikeError {
    /// Evaluation point coincides with an atom of the bulk measure.
    #[error("evaluation point {alpha} is within 1e-12 of a bulk atom")]
    PoleAtAtom { alpha: f64 },

    /// The spike does not satisfy the distant-spike condition psi'(alpha) > 0.
    #[error("spike alpha={alpha} is not distant: psi'(alpha)={psi1} <= 0")]
    NotDistantSpike { alpha: f64, psi1: f64 },

    /// The requested point lies inside the bulk spectral support.
    #[error("z={z} lies inside the bulk support")]
    OutsideDomain { z: f64 },

    /// A root search exhausted its iteration budget.
    #[error("root search failed to converge after {iters} iterations")]
    NoConvergence { iters: usize },

    /// Two spikes map to (numerically) the same limit; covariances are undefined.
    #[error("spikes {k1} and {k2} are degenerate: |psi_k1 - psi_k2| < 1e-10")]
    DegenerateSpikes { k1: usize, k2: usize },

    /// The trailing-eigenvalue mean in the test statistic is not positive.
    #[error("trailing eigenvalue mean is not positive")]
    ZeroBulk,

    /// A signal-to-noise ratio is at or below the detection threshold 1 + sqrt(y).
    #[error("t={t} is at or below the detection threshold {threshold}")]
    BelowThreshold { t: f64, threshold: f64 },

    /// The critical-value search range [c, t_upper) is empty.
    #[error("empty search range: c={c} >= upper limit {upper}")]
    EmptyRange { c: f64, upper: f64 },

    /// A bulk eigenvalue coincides with a spike eigenvalue in the plug-in estimator.
    #[error("bulk eigenvalue {i} is within 1e-12 of spike eigenvalue {k}")]
    DegenerateEigenvalue { i: usize, k: usize },

    /// The plug-in noise estimate came out non-positive.
    #[error("estimated noise level is not positive")]
    NegativeNoiseEstimate,

    /// An estimated upper spike fell at or below the detection threshold.
    #[error("estimated t_{k}={t} is at or below the detection threshold {threshold}")]
    InsufficientSeparation { k: usize, t: f64, threshold: f64 },

    /// Input validation failure.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// I/O failure surfaced from report writers.
    #[error("i/o error: {0}")]
    Io(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SpikeError>;

impl From<std::io::Error> for SpikeError {
    fn from(e: std::io::Error) -> Self {
        SpikeError::Io(e.to_string())
    }
}
