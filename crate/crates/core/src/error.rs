use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("CFL violation: dt = {dt:e} exceeds dx/sqrt(E) = {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("non-finite field `{field}` in cell {cell} at t = {t}")]
    NonFiniteField {
        field: &'static str,
        cell: usize,
        t: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
