//! Error type shared by every module in the crate.

use thiserror::Error;

/// Everything that can go wrong in the numerical pipeline.
///
/// Variants carry the measured quantity that triggered the failure so that
/// callers (and test logs) can report how far out of range a value was.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NhjeError {
    /// A matrix or parameter contained NaN or infinity.
    #[error("non-finite entry encountered")]
    NonFinite,

    /// An operation required a traceless matrix and got one that is not.
    #[error("matrix is not traceless: |Tr| = {trace_abs:.3e} exceeds limit {limit:.3e}")]
    NotTraceless { trace_abs: f64, limit: f64 },

    /// A parameter violated its documented domain (negative rate, empty grid, ...).
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A time argument fell outside the protocol window [0, T].
    #[error("time {t} us outside protocol window [0, {t_max}] us")]
    TimeOutOfRange { t: f64, t_max: f64 },

    /// Survival probability underflowed: the postselected trajectory is extinct.
    #[error("survival underflow: S = {s:.3e}, state effectively extinct")]
    DegenerateSurvival { s: f64 },

    /// A transition table failed row normalization beyond tolerance.
    #[error("transition table rows not normalized: defect = {defect:.3e}")]
    UnnormalizedTable { defect: f64 },

    /// Phase unwrapping found two branch candidates too close to distinguish.
    #[error("phase branch ambiguity at t = {t} us (candidate gap {gap:.3e}); rerun with a finer grid")]
    BranchAmbiguity { t: f64, gap: f64 },

    /// A fixed-step integration failed its self-consistency accuracy probe.
    #[error("integration defect {defect:.3e} exceeds tolerance {tol:.3e}; increase the step count")]
    Accuracy { defect: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, NhjeError>;
