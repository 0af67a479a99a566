use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid load class: {0}")]
    InvalidLoadClass(String),

    #[error("invalid battery: {0}")]
    InvalidBattery(String),

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("normalization undefined: {0}")]
    Normalization(String),

    #[error("battery exceeds the maximal battery in {component}: {value} > {max}")]
    ExceedsMaximum {
        component: &'static str,
        value: f64,
        max: f64,
    },

    #[error("operation requires {0}")]
    Unsupported(&'static str),

    #[error("infeasible step: aggregate shortfall {shortfall}")]
    Infeasible { shortfall: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub(crate) fn check_range(what: &'static str, value: f64, lo: f64, hi: f64, tol: f64) -> Result<()> {
    if value.is_nan() || value < lo - tol || value > hi + tol {
        Err(Error::Domain { what, value, lo, hi })
    } else {
        Ok(())
    }
}
