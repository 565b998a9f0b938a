use thiserror::Error;

pub type Result<T> = std::result::Result<T, DsaError>;

/// Broad classes used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Degeneracy,
    Io,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DsaError {
    #[error("invalid value for `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("degenerate pre-selection: B = 0, the difference signal d/B is undefined")]
    DegeneratePreselection,

    #[error("degenerate balance: B·y = 0, PSA and PSR counts balance in expectation and the ratio factors diverge")]
    DegenerateBalance,

    #[error("degenerate post-selection: the {channel} sub-ensemble has zero probability")]
    DegeneratePostselection { channel: Channel },

    #[error("singular bias: beta = {beta} coincides with eta = p_f/p_fbar")]
    SingularBias { beta: f64 },

    #[error("singular weak value: <f|i> = 0 (destructive interference of the PPS states)")]
    SingularWeakValue,

    #[error("balanced counts: n1 = {n1}, n2 = {n2} (|n1 - n2| < 1)")]
    BalancedCounts { n1: f64, n2: f64 },

    #[error("insufficient data: need at least 2 records per channel, got n1 = {n1}, n2 = {n2}")]
    InsufficientData { n1: f64, n2: f64 },

    #[error("singular bias at realized counts: |n1 - beta*n2| < 1 (n1 = {n1}, n2 = {n2}, beta = {beta})")]
    RealizedSingularBias { n1: f64, n2: f64, beta: f64 },

    #[error("zero sensitivity: the biased signal does not depend on d for this configuration")]
    ZeroSensitivity,

    #[error("seed reuse: seed {0} appears more than once")]
    SeedReuse(u64),

    #[error("batch mismatch: {0}")]
    ConfigMismatch(String),

    #[error("unknown quantity `{0}`")]
    UnknownQuantity(String),

    #[error("empty axis `{0}`")]
    EmptyAxis(String),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("non-finite result in {0}")]
    NonFinite(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Psa,
    Psr,
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Channel::Psa => f.write_str("PSA"),
            Channel::Psr => f.write_str("PSR"),
        }
    }
}

impl DsaError {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        DsaError::InvalidParameter {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Stable snake_case token, used in CSV sentinels (`DEGENERATE:<kind>`).
    pub fn kind(&self) -> &'static str {
        match self {
            DsaError::InvalidParameter { .. } => "invalid_parameter",
            DsaError::DegeneratePreselection => "degenerate_preselection",
            DsaError::DegenerateBalance => "degenerate_balance",
            DsaError::DegeneratePostselection { .. } => "degenerate_postselection",
            DsaError::SingularBias { .. } => "singular_bias",
            DsaError::SingularWeakValue => "singular_weak_value",
            DsaError::BalancedCounts { .. } => "balanced_counts",
            DsaError::InsufficientData { .. } => "insufficient_data",
            DsaError::RealizedSingularBias { .. } => "realized_singular_bias",
            DsaError::ZeroSensitivity => "zero_sensitivity",
            DsaError::SeedReuse(_) => "seed_reuse",
            DsaError::ConfigMismatch(_) => "config_mismatch",
            DsaError::UnknownQuantity(_) => "unknown_quantity",
            DsaError::EmptyAxis(_) => "empty_axis",
            DsaError::InvalidSweep(_) => "invalid_sweep",
            DsaError::NonFinite(_) => "non_finite",
            DsaError::Parse(_) => "parse",
            DsaError::Io(_) => "io",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            DsaError::InvalidParameter { .. }
            | DsaError::ConfigMismatch(_)
            | DsaError::UnknownQuantity(_)
            | DsaError::EmptyAxis(_)
            | DsaError::InvalidSweep(_)
            | DsaError::SeedReuse(_)
            | DsaError::Parse(_) => ErrorClass::Config,
            DsaError::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Degeneracy,
        }
    }

    /// True for structural singularities of the method (as opposed to bad input).
    pub fn is_degeneracy(&self) -> bool {
        self.class() == ErrorClass::Degeneracy
    }
}

/// Turns a non-finite value into an error so it never leaves an operation silently.
pub(crate) fn finite(value: f64, what: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(DsaError::NonFinite(what))
    }
}
