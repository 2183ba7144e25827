//! Informed-trader detection for European-style options and their underlying.
//!
//! The crate is organised bottom-up:
//!
//! * [`gaussian`] – standard normal CDF and quantile.
//! * [`option`] – Black–Scholes prices, `d1`, deltas and the delta→quantile transform.
//! * [`market`] – the informed/noise order-flow simulator and its ARMA(1,1) reduction.
//! * [`arma`] – conditional-sum-of-squares ARMA(1,1) fitting and rolling windows.
//! * [`detector`] – the bivariate ARMA model, stationarity check and detection criteria.
//! * [`data`] – CSV ingestion, run configuration and report serialization.

pub mod arma;
pub mod data;
pub mod detector;
pub mod error;
pub mod gaussian;
pub mod market;
pub mod option;

pub use error::{Error, Result};
