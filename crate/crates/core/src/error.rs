use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A probability or option delta outside the open interval the inverse needs.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract expired: t = {t} is not before expiry {expiry}")]
    Expired { t: f64, expiry: f64 },

    #[error("degenerate market: sigma_z and sigma_u are both zero")]
    DegenerateMarket,

    #[error("non-stationary parameters: |rho| = {rho} >= 1")]
    Nonstationary { rho: f64 },

    #[error("closed-form delta is singular (rho*sigma_u^2 == beta^2*sigma_z^2); use the autocovariance solve")]
    SingularFormula,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient overlap: {underlying} underlying and {deltas} delta observations share {joined} timestamps")]
    InsufficientOverlap {
        underlying: usize,
        deltas: usize,
        joined: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: row carries neither option_delta nor implied_vol")]
    UnusableRow { line: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
