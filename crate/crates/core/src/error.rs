use thiserror::Error;

use crate::fdtd::DftRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure kinds surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical instability: non-finite field detected at step {step}")]
    NumericalInstability { step: usize },

    #[error("stop criterion not reached after {steps} steps (decay ratio {decay_ratio:.3e})")]
    Timeout {
        steps: usize,
        decay_ratio: f64,
        /// Spectra accumulated up to the cap; usable as a truncated record.
        partial: Box<DftRecord>,
    },

    #[error("source spectrum ill-conditioned at {} frequencies (first {:?})", .frequencies.len(), .frequencies.first())]
    IllConditionedBand { frequencies: Vec<f64> },

    #[error("invalid vacuum reference: non-positive power at {} frequencies (first {:?})", .frequencies.len(), .frequencies.first())]
    InvalidReference { frequencies: Vec<f64> },

    #[error("spectrum not band-limited in window: edge ratios {low:.3e} / {high:.3e} exceed {limit}")]
    NonBandlimited { low: f64, high: f64, limit: f64 },

    #[error("frequency {frequency} outside tabulated band [{lo}, {hi}]")]
    OutOfBand { frequency: f64, lo: f64, hi: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (last iterate {re} {im:+}i, |Xi| = {residual:.3e})")]
    ConvergenceFailure {
        iterations: usize,
        re: f64,
        im: f64,
        residual: f64,
    },

    #[error("root count mismatch: argument principle counts {expected}, Newton found {found}")]
    MissedRoot { expected: i64, found: usize },

    #[error("frequency band too narrow: |a(0) - 1| = {deviation:.3e}")]
    BandCoverage { deviation: f64 },

    #[error("ambiguous peak: {count} significant maxima in window")]
    AmbiguousPeak { count: usize },

    #[error("poor Lorentzian fit: relative RMS residual {residual:.3e} (omega_c {omega_c}, Q {q_factor})")]
    PoorFit {
        residual: f64,
        omega_c: f64,
        q_factor: f64,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
