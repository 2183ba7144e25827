//! Browser bindings for the demo page in `www/`.
//!
//! Each export takes plain numbers and returns a JSON string, so the page
//! needs no generated TypeScript types. The `*_json` functions hold the logic
//! and are what the native tests exercise.

use informed_core::arma::MIN_WINDOW;
use informed_core::detector::{run_detection, DetectionConfig, PricePoint, Verdict};
use informed_core::market::{
    arma_from_structural, simulate, simulate_arma, ArmaParams, LambdaVariant, ReductionMethod, StructuralParams,
};
use informed_core::option::{d1, delta, q_transform, DeltaObservation, OptionKind, OptionSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_STEPS: usize = 20_000;

#[derive(Serialize)]
struct MarketPath {
    lambda: f64,
    log_prices: Vec<f64>,
    returns: Vec<f64>,
    psi: Vec<f64>,
    arma_rho: Option<f64>,
    arma_delta: Option<f64>,
    closed_form_delta: Option<f64>,
    consistent: Option<bool>,
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Simulated structural market with its ARMA(1,1) reduction.
#[allow(clippy::too_many_arguments)]
pub fn simulate_market_json(
    psi_bar: f64,
    rho: f64,
    beta: f64,
    sigma_z: f64,
    sigma_u: f64,
    lambda: f64,
    steps: usize,
    seed: u64,
) -> Result<String, String> {
    if steps > MAX_STEPS {
        return Err(format!("at most {MAX_STEPS} steps"));
    }
    let params = StructuralParams {
        psi_bar,
        rho,
        beta,
        sigma_z,
        sigma_u,
        s0: 100.0,
        horizon: steps.max(2),
        lambda: (lambda > 0.0).then_some(lambda),
    };
    let variant = LambdaVariant::Theorem;
    let market = simulate(&params, steps, seed, variant).map_err(|e| e.to_string())?;
    let reduced = arma_from_structural(&params, ReductionMethod::AutocovarianceSolve, variant).ok();
    to_json(&MarketPath {
        lambda: params.depth(variant).map_err(|e| e.to_string())?,
        log_prices: market.log_prices,
        returns: market.returns,
        psi: market.psi,
        arma_rho: reduced.map(|r| r.params.rho),
        arma_delta: reduced.map(|r| r.params.delta),
        closed_form_delta: reduced.and_then(|r| r.closed_form).map(|c| c.delta),
        consistent: reduced.map(|r| r.consistent),
    })
}

#[derive(Serialize)]
struct OptionCurve {
    spot: Vec<f64>,
    delta: Vec<f64>,
    q: Vec<Option<f64>>,
    d1: Vec<f64>,
}

/// Delta and its normal quantile for spot prices within four standard
/// deviations of log-moneyness around the strike.
pub fn option_curve_json(is_call: bool, strike: f64, tau: f64, rate: f64, vol: f64, points: usize) -> Result<String, String> {
    let kind = if is_call { OptionKind::Call } else { OptionKind::Put };
    let spec = OptionSpec::new(kind, strike, tau, rate, vol).map_err(|e| e.to_string())?;
    let points = points.clamp(2, 2_000);
    let mut curve = OptionCurve {
        spot: Vec::with_capacity(points),
        delta: Vec::with_capacity(points),
        q: Vec::with_capacity(points),
        d1: Vec::with_capacity(points),
    };
    let width = vol * tau.sqrt();
    for k in 0..points {
        let s = strike * (width * (-4.0 + 8.0 * k as f64 / (points - 1) as f64)).exp();
        let dl = delta(s, &spec, 0.0).map_err(|e| e.to_string())?;
        curve.spot.push(s);
        curve.delta.push(dl);
        curve.q.push(q_transform(dl, kind).ok());
        curve.d1.push(d1(s, &spec, 0.0).map_err(|e| e.to_string())?);
    }
    to_json(&curve)
}

#[derive(Serialize)]
struct DetectionSummary {
    verdict: Verdict,
    branch: String,
    sum_rho: f64,
    sum_delta: f64,
    windows_total: usize,
    windows_counted: usize,
    window_rho: Vec<f64>,
    window_delta: Vec<f64>,
    identified: Vec<bool>,
    messages: Vec<String>,
}

/// Detector run on a synthetic ARMA(1,1) return path with exact call deltas.
pub fn detect_synthetic_json(rho: f64, delta_ma: f64, n: usize, window: usize, seed: u64) -> Result<String, String> {
    if n > MAX_STEPS {
        return Err(format!("at most {MAX_STEPS} observations"));
    }
    if window < MIN_WINDOW {
        return Err(format!("window must be at least {MIN_WINDOW}"));
    }
    let arma = ArmaParams {
        gamma: 2e-5,
        rho,
        delta: delta_ma,
        sigma_eps2: 1e-6,
    };
    let returns = simulate_arma(&arma, n, seed).map_err(|e| e.to_string())?;
    let spec = OptionSpec::new(OptionKind::Call, 100.0, 1.0, 0.01, 0.2).map_err(|e| e.to_string())?;
    let h = 0.5 / n.max(1) as f64;
    let mut log_s = 100f64.ln();
    let mut prices = vec![PricePoint { t: 0.0, price: 100.0 }];
    for (k, r) in returns.iter().enumerate() {
        log_s += r;
        prices.push(PricePoint {
            t: (k + 1) as f64 * h,
            price: log_s.exp(),
        });
    }
    let deltas = prices
        .iter()
        .map(|p| {
            delta(p.price, &spec, p.t).map(|d| DeltaObservation {
                t: p.t,
                delta: d,
                underlying: Some(p.price),
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let config = DetectionConfig {
        window,
        ..DetectionConfig::default()
    };
    let report = run_detection(&prices, &deltas, &spec, &config).map_err(|e| e.to_string())?;
    to_json(&DetectionSummary {
        verdict: report.verdict,
        branch: report.branch.to_string(),
        sum_rho: report.sum_rho,
        sum_delta: report.sum_delta,
        windows_total: report.diagnostics.windows_total,
        windows_counted: report.diagnostics.windows_counted,
        window_rho: report.per_window.iter().map(|w| w.criterion_rho).collect(),
        window_delta: report.per_window.iter().map(|w| w.criterion_delta).collect(),
        identified: report.per_window.iter().map(|w| w.identified).collect(),
        messages: report.diagnostics.messages,
    })
}

#[wasm_bindgen(js_name = simulateMarket)]
#[allow(clippy::too_many_arguments)]
pub fn simulate_market(
    psi_bar: f64,
    rho: f64,
    beta: f64,
    sigma_z: f64,
    sigma_u: f64,
    lambda: f64,
    steps: usize,
    seed: u32,
) -> Result<String, JsError> {
    simulate_market_json(psi_bar, rho, beta, sigma_z, sigma_u, lambda, steps, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = optionCurve)]
pub fn option_curve(is_call: bool, strike: f64, tau: f64, rate: f64, vol: f64, points: usize) -> Result<String, JsError> {
    option_curve_json(is_call, strike, tau, rate, vol, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = detectSynthetic)]
pub fn detect_synthetic(rho: f64, delta_ma: f64, n: usize, window: usize, seed: u32) -> Result<String, JsError> {
    detect_synthetic_json(rho, delta_ma, n, window, u64::from(seed)).map_err(|e| JsError::new(&e))
}
