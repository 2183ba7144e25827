//! Black–Scholes pricing for European options and the delta→quantile transform.
//!
//! For a call `Δ = Φ(d1)`, for a put `Δ = Φ(d1) − 1`, so `Φ⁻¹(Δ)` (call) and
//! `Φ⁻¹(Δ + 1)` (put) both recover `d1`. First differences of that quantile
//! are, to first order in the inverse time to expiry, the log return of the
//! underlying scaled by `1 / (σ√(T−t))`.
//!
//! All times are in years.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{cdf_unchecked, quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn code(self) -> &'static str {
        match self {
            OptionKind::Call => "C",
            OptionKind::Put => "P",
        }
    }
}

impl std::str::FromStr for OptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "C" | "c" | "call" | "Call" | "CALL" => Ok(OptionKind::Call),
            "P" | "p" | "put" | "Put" | "PUT" => Ok(OptionKind::Put),
            other => Err(Error::Input(format!("unknown option type {other:?}"))),
        }
    }
}

/// Contract terms of a European option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub kind: OptionKind,
    pub strike: f64,
    /// Expiry `T` in years on the same clock as observation times.
    pub expiry: f64,
    pub rate: f64,
    pub implied_vol: f64,
}

impl OptionSpec {
    pub fn new(kind: OptionKind, strike: f64, expiry: f64, rate: f64, implied_vol: f64) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::InvalidArgument(format!("strike must be positive, got {strike}")));
        }
        if !(expiry > 0.0 && expiry.is_finite()) {
            return Err(Error::InvalidArgument(format!("expiry must be positive, got {expiry}")));
        }
        if !(implied_vol > 0.0 && implied_vol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "implied volatility must be positive, got {implied_vol}"
            )));
        }
        if !rate.is_finite() {
            return Err(Error::InvalidArgument(format!("rate must be finite, got {rate}")));
        }
        Ok(Self {
            kind,
            strike,
            expiry,
            rate,
            implied_vol,
        })
    }

    /// `T − t`, rejecting observations at or after expiry.
    pub fn time_to_expiry(&self, t: f64) -> Result<f64> {
        let tau = self.expiry - t;
        if tau > 0.0 {
            Ok(tau)
        } else {
            Err(Error::Expired { t, expiry: self.expiry })
        }
    }

    /// `σ√(T−t)`, the common scale of every coefficient in the quantile equation.
    pub fn vol_scale(&self, t: f64) -> Result<f64> {
        Ok(self.implied_vol * self.time_to_expiry(t)?.sqrt())
    }
}

/// How the `(r + σ²/2)` drift enters a one-step change in `d1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    /// Multiply by the sampling interval in years.
    #[default]
    PerStep,
    /// Literal unit time step, as in the textbook derivation.
    UnitStep,
}

impl DriftMode {
    /// Effective step length for a sampling interval `h` (years).
    pub fn step(self, h: f64) -> f64 {
        match self {
            DriftMode::PerStep => h,
            DriftMode::UnitStep => 1.0,
        }
    }
}

/// Option delta observed at time `t`, optionally with the underlying price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaObservation {
    pub t: f64,
    pub delta: f64,
    pub underlying: Option<f64>,
}

fn check_price(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("underlying price must be positive, got {s}")))
    }
}

pub fn d1(s: f64, spec: &OptionSpec, t: f64) -> Result<f64> {
    check_price(s)?;
    let tau = spec.time_to_expiry(t)?;
    let sigma = spec.implied_vol;
    Ok(((s / spec.strike).ln() + (spec.rate + 0.5 * sigma * sigma) * tau) / (sigma * tau.sqrt()))
}

pub fn d2(s: f64, spec: &OptionSpec, t: f64) -> Result<f64> {
    let tau = spec.time_to_expiry(t)?;
    Ok(d1(s, spec, t)? - spec.implied_vol * tau.sqrt())
}

/// Black–Scholes value; puts through put–call parity.
pub fn price(s: f64, spec: &OptionSpec, t: f64) -> Result<f64> {
    let tau = spec.time_to_expiry(t)?;
    let d1 = d1(s, spec, t)?;
    let d2 = d1 - spec.implied_vol * tau.sqrt();
    let discounted_strike = spec.strike * (-spec.rate * tau).exp();
    let call = s * cdf_unchecked(d1) - discounted_strike * cdf_unchecked(d2);
    Ok(match spec.kind {
        OptionKind::Call => call,
        OptionKind::Put => call - s + discounted_strike,
    })
}

pub fn delta(s: f64, spec: &OptionSpec, t: f64) -> Result<f64> {
    let n1 = cdf_unchecked(d1(s, spec, t)?);
    Ok(match spec.kind {
        OptionKind::Call => n1,
        OptionKind::Put => n1 - 1.0,
    })
}

/// `Q_t = Φ⁻¹(Δ)` for calls and `Q̃_t = Φ⁻¹(Δ + 1)` for puts.
pub fn q_transform(delta: f64, kind: OptionKind) -> Result<f64> {
    let (p, lo, hi) = match kind {
        OptionKind::Call => (delta, 0.0, 1.0),
        OptionKind::Put => (delta + 1.0, -1.0, 0.0),
    };
    if !(delta > lo && delta < hi) {
        return Err(Error::Domain(format!(
            "{} delta {delta} is at or outside ({lo}, {hi}); too deep in or out of the money to invert",
            kind.code()
        )));
    }
    quantile(p)
}

/// First differences `Q_t − Q_{t−1}` of the transformed deltas.
pub fn delta_q_series(observations: &[DeltaObservation], kind: OptionKind) -> Result<Vec<f64>> {
    if observations.len() < 2 {
        return Err(Error::Input(format!(
            "need at least 2 delta observations, got {}",
            observations.len()
        )));
    }
    for pair in observations.windows(2) {
        if !(pair[1].t > pair[0].t) {
            return Err(Error::Input(format!(
                "observation times must be strictly increasing ({} then {})",
                pair[0].t, pair[1].t
            )));
        }
    }
    let q = observations
        .iter()
        .map(|o| q_transform(o.delta, kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(q.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Linearised one-step change of `d1` given the log return `delta_r`:
/// `[ΔR − (r + σ²/2)·step] / (σ√(T−t))`.
///
/// `step` is the drift step in years (see [`DriftMode::step`]).
pub fn approx_delta_d1(delta_r: f64, rate: f64, sigma: f64, time_to_expiry: f64, step: f64) -> Result<f64> {
    if !(time_to_expiry > 0.0) {
        return Err(Error::Expired {
            t: -time_to_expiry,
            expiry: 0.0,
        });
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    Ok((delta_r - (rate + 0.5 * sigma * sigma) * step) / (sigma * time_to_expiry.sqrt()))
}
