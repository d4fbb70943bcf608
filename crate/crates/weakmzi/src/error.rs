//! Crate-wide error type.

/// Everything that can go wrong in this crate.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A constructor or operation received an out-of-range argument.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Adaptive quadrature hit its subdivision budget before reaching the
    /// requested tolerance. The best available estimate is attached.
    #[error("quadrature did not converge (partial value {partial}, {subdivisions} subdivisions)")]
    QuadratureFailure { partial: f64, subdivisions: usize },

    /// Root bracketing failed: no sign change over the given interval.
    #[error("no sign change on bracket [{lo}, {hi}]: f(lo)={f_lo}, f(hi)={f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    /// The sampling grid misses too much of the density's mass.
    #[error("sampling grid covers only {covered} of declared mass {declared}")]
    DomainCoverage { covered: f64, declared: f64 },

    /// Weak value requested where the post-selection probability vanishes
    /// (detector D2 at phi = pi).
    #[error("weak value is singular: post-selection probability vanishes (D2 at phi = pi)")]
    SingularWeakValue,

    /// Convex weights requested in the wavenumber basis, where the defining
    /// denominator Phi_A(k) - Phi_B(k) is identically zero.
    #[error("convex weights are undefined in the wavenumber basis: Phi_A(k) = Phi_B(k) identically")]
    UndefinedWeights,

    /// A hidden-variable strategy tried to read information outside the past
    /// light cone of its current decision point.
    #[error("locality violation: {0}")]
    LocalityViolation(String),

    /// Histogram overlap requested for differently-binned histograms.
    #[error("histogram binning mismatch: {0}")]
    BinMismatch(String),

    /// A statistical verdict was requested with too little data to be
    /// meaningful.
    #[error("underpowered comparison: {0}")]
    Underpowered(String),
}

pub type Result<T> = std::result::Result<T, Error>;
