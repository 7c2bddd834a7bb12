use thiserror::Error;

/// Errors raised by the analytic and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its valid range {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("index {k} exceeds trial count {m}")]
    IndexOutOfRange { k: u64, m: u64 },

    #[error("a distribution over {m} trials exceeds the supported size ({limit})")]
    TooLarge { m: u64, limit: u64 },

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("no crossover distance exists: {0}")]
    NoCrossover(String),

    #[error("multiplexing estimate overflows for rate {rate:e}")]
    Overflow { rate: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            range: "[0, inf)",
        })
    }
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            range: "(0, inf)",
        })
    }
}

pub(crate) fn at_least_one(name: &'static str, m: u64) -> Result<u64> {
    if m >= 1 {
        Ok(m)
    } else {
        Err(Error::Domain {
            name,
            value: m as f64,
            range: "[1, inf)",
        })
    }
}
