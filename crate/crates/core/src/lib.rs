//! Time-series regression auditing.
//!
//! Detects spurious level-on-level regressions with residual
//! autocorrelation and unit-root diagnostics, then re-estimates the
//! relationship on differenced data and with ARMA(1,1) regression errors.

pub mod arimax;
pub mod audit;
pub mod diagnostics;
mod dual;
pub mod error;
pub mod montecarlo;
pub mod optim;
pub mod plot;
pub mod regress;
pub mod series;
pub mod stats;
pub mod unitroot;

pub use error::{Error, Result};
