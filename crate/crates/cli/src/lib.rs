//! Library behind the `eegbench` binary: experiment configuration, the
//! method roster, dataset assembly, the repetition benchmark protocol, and
//! plot-data export. The binary is a thin argument-parsing shell so every
//! code path here is testable in-process.

pub mod commands;
pub mod config;
pub mod data;
pub mod manifest;
pub mod methods;
pub mod plots;

use std::fmt;

/// A problem with the experiment configuration rather than the run itself.
/// The binary maps this to exit code 2; everything else exits 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Build a config error as an `anyhow::Error` so callers can downcast.
pub fn config_error(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(message.into()))
}

/// Map each item to an output, in input order. Runs on the rayon pool when
/// the `parallel` feature is enabled, sequentially otherwise; both produce
/// the same vector.
pub(crate) fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Format a float for CSV output: shortest representation that parses back
/// to the same value, so identical numbers always serialize identically.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}
