//! Mixed informed/noise trading model and its ARMA(1,1) reduction.
//!
//! The informed trader's log transaction size follows an AR(1),
//! `Ψ_t = Ψ̄ + ρΨ_{t−1} + z_t`, and is converted into order flow
//! `X_t = βΨ_t + u_t`. Log prices move by `ΔR_t = λX_t`. Since `ΔR_t` is an
//! AR(1) observed with white noise, it is an ARMA(1,1)
//!
//! ```text
//! ΔR_t = γ + ρΔR_{t−1} + ε_t + δε_{t−1}
//! ```
//!
//! whose `(δ, σ_ε²)` follow from matching the lag-0 and lag-1
//! autocovariances. [`arma_from_structural`] also evaluates the published
//! closed form for `δ`, which carries the opposite sign; both are returned and
//! disagreement is flagged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Steps simulated and discarded before the first recorded observation.
pub const BURN_IN: usize = 1_000;

/// Relative tolerance above which the two `δ` routes are reported as inconsistent.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaVariant {
    /// `βσ_z² / (βσ_z² + σ_u²)`
    Text,
    /// `4βσ_z² / (4βσ_z² + σ_u²)`
    #[default]
    Theorem,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    pub psi_bar: f64,
    pub rho: f64,
    pub beta: f64,
    pub sigma_z: f64,
    pub sigma_u: f64,
    pub s0: f64,
    /// Announcement horizon `T` in steps.
    pub horizon: usize,
    /// Market depth used instead of the formula when set.
    #[serde(default)]
    pub lambda: Option<f64>,
}

impl StructuralParams {
    pub fn validate(&self) -> Result<()> {
        if !self.rho.is_finite() || self.rho.abs() >= 1.0 {
            return Err(Error::Nonstationary { rho: self.rho });
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.sigma_z >= 0.0) || !(self.sigma_u >= 0.0) {
            return Err(Error::InvalidArgument("noise standard deviations must be non-negative".into()));
        }
        if !(self.s0 > 0.0) {
            return Err(Error::InvalidArgument(format!("S0 must be positive, got {}", self.s0)));
        }
        if self.horizon < 2 {
            return Err(Error::InvalidArgument(format!("horizon must be at least 2 steps, got {}", self.horizon)));
        }
        if !self.psi_bar.is_finite() {
            return Err(Error::InvalidArgument("psi_bar must be finite".into()));
        }
        if let Some(l) = self.lambda {
            if !l.is_finite() {
                return Err(Error::InvalidArgument(format!("lambda must be finite, got {l}")));
            }
        }
        Ok(())
    }

    /// The override if present, otherwise [`market_depth_lambda`].
    pub fn depth(&self, variant: LambdaVariant) -> Result<f64> {
        match self.lambda {
            Some(l) => Ok(l),
            None => market_depth_lambda(self, variant),
        }
    }
}

/// Market depth coefficient λ from the noise variances.
pub fn market_depth_lambda(params: &StructuralParams, variant: LambdaVariant) -> Result<f64> {
    let informed = params.beta * params.sigma_z * params.sigma_z;
    let informed = match variant {
        LambdaVariant::Text => informed,
        LambdaVariant::Theorem => 4.0 * informed,
    };
    let denom = informed + params.sigma_u * params.sigma_u;
    if denom <= 0.0 {
        return Err(Error::DegenerateMarket);
    }
    Ok(informed / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedMarket {
    pub psi: Vec<f64>,
    pub order_flow: Vec<f64>,
    /// `ln S_t` after each step; the pre-sample level is `ln S0`.
    pub log_prices: Vec<f64>,
    pub returns: Vec<f64>,
    pub seed: u64,
}

impl SimulatedMarket {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.log_prices.iter().map(|r| r.exp()).collect()
    }
}

/// Simulate `steps` observations of the informed/noise order-flow model.
///
/// `Ψ` starts at its stationary mean `Ψ̄/(1−ρ)` and [`BURN_IN`] steps are
/// discarded. Draws are `z_t` then `u_t` from one ChaCha8 stream, so the
/// output is bit-reproducible for a given seed.
pub fn simulate(params: &StructuralParams, steps: usize, seed: u64, variant: LambdaVariant) -> Result<SimulatedMarket> {
    params.validate()?;
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 steps, got {steps}")));
    }
    let lambda = params.depth(variant)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi_t = params.psi_bar / (1.0 - params.rho);
    let mut log_price = params.s0.ln();

    let mut market = SimulatedMarket {
        psi: Vec::with_capacity(steps),
        order_flow: Vec::with_capacity(steps),
        log_prices: Vec::with_capacity(steps),
        returns: Vec::with_capacity(steps),
        seed,
    };
    for step in 0..BURN_IN + steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        let u: f64 = StandardNormal.sample(&mut rng);
        psi_t = params.psi_bar + params.rho * psi_t + params.sigma_z * z;
        let x = params.beta * psi_t + params.sigma_u * u;
        if step < BURN_IN {
            continue;
        }
        let r = lambda * x;
        log_price += r;
        market.psi.push(psi_t);
        market.order_flow.push(x);
        market.log_prices.push(log_price);
        market.returns.push(r);
    }
    Ok(market)
}

/// `γ = λβ(1−ρ)(ln S_T − ln S0)/T`.
pub fn gamma_from_structural(params: &StructuralParams, s_t: f64, variant: LambdaVariant) -> Result<f64> {
    if !(s_t > 0.0) || !(params.s0 > 0.0) {
        return Err(Error::Domain(format!("prices must be positive (S0 = {}, S_T = {s_t})", params.s0)));
    }
    if params.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let lambda = params.depth(variant)?;
    Ok(lambda * params.beta * (1.0 - params.rho) * (s_t.ln() - params.s0.ln()) / params.horizon as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmaParams {
    pub gamma: f64,
    pub rho: f64,
    pub delta: f64,
    pub sigma_eps2: f64,
}

impl ArmaParams {
    pub fn validate(&self) -> Result<()> {
        if !self.rho.is_finite() || self.rho.abs() >= 1.0 {
            return Err(Error::Nonstationary { rho: self.rho });
        }
        if !self.delta.is_finite() || self.delta.abs() > 1.0 {
            return Err(Error::InvalidArgument(format!("|delta| must be at most 1, got {}", self.delta)));
        }
        if !(self.sigma_eps2 >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument("sigma_eps2 must be non-negative and gamma finite".into()));
        }
        Ok(())
    }

    /// Unconditional mean `γ / (1 − ρ)`.
    pub fn mean(&self) -> f64 {
        self.gamma / (1.0 - self.rho)
    }
}

/// Autocovariance of the ARMA(1,1) at `lag`: the closed forms for lags 0
/// and 1, then `V_k = ρ V_{k−1}`.
pub fn theoretical_autocovariance(arma: &ArmaParams, lag: usize) -> Result<f64> {
    let (rho, delta, s2) = (arma.rho, arma.delta, arma.sigma_eps2);
    if !rho.is_finite() || rho.abs() >= 1.0 {
        return Err(Error::Nonstationary { rho });
    }
    let denom = 1.0 - rho * rho;
    Ok(match lag {
        0 => s2 * (1.0 + delta * delta + 2.0 * rho * delta) / denom,
        _ => {
            let v1 = s2 * (rho + rho * delta * delta + rho * rho * delta + delta) / denom;
            v1 * rho.powi(lag as i32 - 1)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReductionMethod {
    ClosedForm,
    AutocovarianceSolve,
}

/// Both routes from structural to ARMA parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmaReduction {
    /// Parameters from the requested method.
    pub params: ArmaParams,
    pub method: ReductionMethod,
    /// `None` when the published formula's denominator vanishes.
    pub closed_form: Option<ArmaParams>,
    pub solved: ArmaParams,
    /// The root `1/δ` that the invertibility condition discards.
    pub discarded_root: Option<f64>,
    /// True when the two routes agree on `δ` and `σ_ε²` within [`CONSISTENCY_TOLERANCE`].
    pub consistent: bool,
}

/// Process autocovariances `(V0, V1)` of `ΔR` implied by the structural model.
pub fn structural_autocovariances(params: &StructuralParams, variant: LambdaVariant) -> Result<(f64, f64)> {
    params.validate()?;
    let lambda = params.depth(variant)?;
    let l2 = lambda * lambda;
    let informed = params.beta * params.beta * params.sigma_z * params.sigma_z / (1.0 - params.rho * params.rho);
    Ok((
        l2 * (informed + params.sigma_u * params.sigma_u),
        l2 * informed * params.rho,
    ))
}

fn closed_form(params: &StructuralParams, lambda: f64) -> Option<ArmaParams> {
    let (rho, su2) = (params.rho, params.sigma_u * params.sigma_u);
    let bz2 = params.beta * params.beta * params.sigma_z * params.sigma_z;
    let denom = 2.0 * rho * su2 - 2.0 * bz2;
    if denom == 0.0 {
        return None;
    }
    let root = (4.0 * bz2 + su2 * (1.0 - rho) * (1.0 - rho)).sqrt();
    let delta = (su2 * (1.0 + rho * rho) + 2.0 * bz2 - (1.0 + rho) * params.sigma_u * root) / denom;
    let sigma_eps2 =
        lambda * lambda * bz2 * (1.0 + rho * rho) / (rho * delta * delta + rho * rho * delta + rho + delta);
    Some(ArmaParams {
        gamma: lambda * params.beta * params.psi_bar,
        rho,
        delta,
        sigma_eps2,
    })
}

/// Solve `V1/V0 = (ρ + ρδ² + ρ²δ + δ)/(1 + δ² + 2ρδ)` for the invertible `δ`.
///
/// Returns `(δ, σ_ε², discarded root)`. The quadratic has equal leading and
/// constant coefficients, so its roots are reciprocal.
pub fn solve_ma_from_autocovariances(rho: f64, v0: f64, v1: f64) -> Result<(f64, f64, Option<f64>)> {
    if !(v0 > 0.0) {
        return Err(Error::DegenerateData(format!("lag-0 autocovariance must be positive, got {v0}")));
    }
    if rho.abs() >= 1.0 {
        return Err(Error::Nonstationary { rho });
    }
    let ratio = v1 / v0;
    let a = rho - ratio;
    let b = 1.0 + rho * rho - 2.0 * rho * ratio;
    let (delta, other) = if a.abs() <= 1e-15 * b.abs() {
        (0.0, None)
    } else {
        let disc = (b * b - 4.0 * a * a).max(0.0).sqrt();
        let delta = -2.0 * a / (b + disc);
        (delta, if delta != 0.0 { Some(1.0 / delta) } else { None })
    };
    let sigma_eps2 = v0 * (1.0 - rho * rho) / (1.0 + delta * delta + 2.0 * rho * delta);
    Ok((delta, sigma_eps2, other))
}

/// Map structural parameters to ARMA(1,1) parameters.
///
/// The intercept is `λβΨ̄`, the exact intercept of the simulated return process.
pub fn arma_from_structural(
    params: &StructuralParams,
    method: ReductionMethod,
    variant: LambdaVariant,
) -> Result<ArmaReduction> {
    params.validate()?;
    if !(params.sigma_u > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_u must be positive, got {}", params.sigma_u)));
    }
    let lambda = params.depth(variant)?;
    // δ depends only on V1/V0, so solve before scaling by λ² (λ may be 0).
    let (v0, v1) = structural_autocovariances(params, variant)?;
    let (v0, v1) = if lambda != 0.0 {
        (v0 / (lambda * lambda), v1 / (lambda * lambda))
    } else {
        let lambda_one = StructuralParams { lambda: Some(1.0), ..*params };
        structural_autocovariances(&lambda_one, variant)?
    };
    let (delta, sigma_eps2, discarded_root) = solve_ma_from_autocovariances(params.rho, v0, v1)?;
    let sigma_eps2 = sigma_eps2 * lambda * lambda;
    let solved = ArmaParams {
        gamma: lambda * params.beta * params.psi_bar,
        rho: params.rho,
        delta,
        sigma_eps2,
    };
    let closed = closed_form(params, lambda);
    let consistent = closed.is_some_and(|c| {
        let scale = 1.0f64.max(sigma_eps2.abs());
        (c.delta - delta).abs() <= CONSISTENCY_TOLERANCE && (c.sigma_eps2 - sigma_eps2).abs() <= CONSISTENCY_TOLERANCE * scale
    });
    let chosen = match method {
        ReductionMethod::ClosedForm => closed.ok_or(Error::SingularFormula)?,
        ReductionMethod::AutocovarianceSolve => solved,
    };
    Ok(ArmaReduction {
        params: chosen,
        method,
        closed_form: closed,
        solved,
        discarded_root,
        consistent,
    })
}

/// Simulate `n` observations of an ARMA(1,1) with Gaussian innovations,
/// started at its mean and burnt in for [`BURN_IN`] steps.
pub fn simulate_arma(arma: &ArmaParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    if arma.rho.abs() >= 1.0 {
        return Err(Error::Nonstationary { rho: arma.rho });
    }
    let sd = arma.sigma_eps2.max(0.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x_prev = arma.mean();
    let mut e_prev = 0.0;
    let mut out = Vec::with_capacity(n);
    for step in 0..BURN_IN + n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let e = sd * z;
        let x = arma.gamma + arma.rho * x_prev + e + arma.delta * e_prev;
        if step >= BURN_IN {
            out.push(x);
        }
        x_prev = x;
        e_prev = e;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arma::sample_autocovariance;
    use proptest::prelude::*;

    fn params(rho: f64, beta: f64, sigma_z: f64, sigma_u: f64) -> StructuralParams {
        StructuralParams {
            psi_bar: 0.0,
            rho,
            beta,
            sigma_z,
            sigma_u,
            s0: 100.0,
            horizon: 100,
            lambda: None,
        }
    }

    #[test]
    fn lambda_examples() {
        for variant in [LambdaVariant::Text, LambdaVariant::Theorem] {
            assert_eq!(market_depth_lambda(&params(0.5, 1.0, 0.0, 1.0), variant).unwrap(), 0.0);
        }
        let p = params(0.5, 1.0, 1.0, 1.0);
        assert_eq!(market_depth_lambda(&p, LambdaVariant::Text).unwrap(), 0.5);
        assert_eq!(market_depth_lambda(&p, LambdaVariant::Theorem).unwrap(), 0.8);
        assert!(matches!(
            market_depth_lambda(&params(0.5, 1.0, 0.0, 0.0), LambdaVariant::Theorem),
            Err(Error::DegenerateMarket)
        ));
    }

    #[test]
    fn noise_free_market_returns_are_constant() {
        let p = StructuralParams {
            psi_bar: 0.3,
            lambda: Some(0.5),
            ..params(0.4, 2.0, 0.0, 0.0)
        };
        let m = simulate(&p, 50, 1, LambdaVariant::Theorem).unwrap();
        let expected = 0.5 * 2.0 * 0.3 / (1.0 - 0.4);
        assert!(m.returns.iter().all(|r| (r - expected).abs() < 1e-12));
        // Without an explicit depth both formulas are 0/0.
        let p = StructuralParams { lambda: None, ..p };
        assert!(matches!(simulate(&p, 50, 1, LambdaVariant::Theorem), Err(Error::DegenerateMarket)));
    }

    #[test]
    fn simulate_rejects_nonstationary() {
        assert!(matches!(
            simulate(&params(1.0, 1.0, 1.0, 1.0), 10, 0, LambdaVariant::Theorem),
            Err(Error::Nonstationary { .. })
        ));
    }

    #[test]
    fn simulate_is_reproducible_and_consistent() {
        let p = params(0.6, 1.0, 0.02, 0.01);
        let a = simulate(&p, 500, 42, LambdaVariant::Theorem).unwrap();
        let b = simulate(&p, 500, 42, LambdaVariant::Theorem).unwrap();
        assert_eq!(a, b);
        let c = simulate(&p, 500, 43, LambdaVariant::Theorem).unwrap();
        assert_ne!(a.returns, c.returns);
        assert_eq!(a.log_prices.len(), 500);
        for t in 1..500 {
            assert!((a.returns[t] - (a.log_prices[t] - a.log_prices[t - 1])).abs() < 1e-12);
        }
        let lambda = p.depth(LambdaVariant::Theorem).unwrap();
        for t in 0..500 {
            assert!((a.order_flow[t] - p.beta * a.psi[t]).abs() < 10.0 * p.sigma_u);
            assert!((a.returns[t] - lambda * a.order_flow[t]).abs() < 1e-15);
        }
    }

    #[test]
    fn informed_free_returns_are_white() {
        let p = StructuralParams {
            lambda: Some(0.3),
            ..params(0.5, 1.0, 0.0, 1.0)
        };
        let m = simulate(&p, 10_000, 9, LambdaVariant::Theorem).unwrap();
        let r1 = sample_autocovariance(&m.returns, 1).unwrap() / sample_autocovariance(&m.returns, 0).unwrap();
        assert!(r1.abs() < 0.03, "lag-1 autocorrelation {r1}");
    }

    #[test]
    fn sample_variance_matches_theory() {
        let p = params(0.6, 1.0, 0.02, 0.01);
        let m = simulate(&p, 20_000, 5, LambdaVariant::Theorem).unwrap();
        let arma = arma_from_structural(&p, ReductionMethod::AutocovarianceSolve, LambdaVariant::Theorem)
            .unwrap()
            .params;
        let v0 = theoretical_autocovariance(&arma, 0).unwrap();
        let sample = sample_autocovariance(&m.returns, 0).unwrap();
        assert!((sample / v0 - 1.0).abs() < 0.05, "sample {sample}, theory {v0}");
    }

    #[test]
    fn gamma_examples() {
        let p = StructuralParams {
            lambda: Some(0.5),
            ..params(0.2, 1.0, 1.0, 1.0)
        };
        assert_eq!(gamma_from_structural(&p, 100.0, LambdaVariant::Theorem).unwrap(), 0.0);
        let g = gamma_from_structural(&p, 110.0, LambdaVariant::Theorem).unwrap();
        assert!((g - 3.812_407_192_172_998e-4).abs() < 1e-15);
        let near_unit = StructuralParams { rho: 0.999_999, ..p };
        assert!(gamma_from_structural(&near_unit, 110.0, LambdaVariant::Theorem).unwrap().abs() < 1e-8);
        assert!(matches!(gamma_from_structural(&p, 0.0, LambdaVariant::Theorem), Err(Error::Domain(_))));
    }

    #[test]
    fn autocovariance_examples() {
        let white = ArmaParams { gamma: 0.0, rho: 0.0, delta: 0.0, sigma_eps2: 1.0 };
        assert_eq!(theoretical_autocovariance(&white, 0).unwrap(), 1.0);
        assert_eq!(theoretical_autocovariance(&white, 1).unwrap(), 0.0);
        let ma = ArmaParams { delta: 1.0, ..white };
        assert_eq!(theoretical_autocovariance(&ma, 0).unwrap(), 2.0);
        assert_eq!(theoretical_autocovariance(&ma, 1).unwrap(), 1.0);
        let arma = ArmaParams { rho: 0.6, delta: -0.3, ..white };
        assert!((theoretical_autocovariance(&arma, 0).unwrap() - 0.73 / 0.64).abs() < 1e-14);
        assert!((theoretical_autocovariance(&arma, 1).unwrap() - 0.246 / 0.64).abs() < 1e-14);
        let bad = ArmaParams { rho: 1.0, ..white };
        assert!(matches!(theoretical_autocovariance(&bad, 0), Err(Error::Nonstationary { .. })));
    }

    #[test]
    fn autocovariance_matches_long_simulation() {
        let arma = ArmaParams { gamma: 0.0, rho: 0.6, delta: -0.3, sigma_eps2: 1.0 };
        let x = simulate_arma(&arma, 1_000_000, 3).unwrap();
        for lag in 0..3 {
            let sample = sample_autocovariance(&x, lag).unwrap();
            let theory = theoretical_autocovariance(&arma, lag).unwrap();
            assert!((sample - theory).abs() < 0.01, "lag {lag}: {sample} vs {theory}");
        }
    }

    #[test]
    fn white_noise_reduction_signs() {
        let p = params(0.5, 1.0, 0.0, 1.0);
        let solved = arma_from_structural(&p, ReductionMethod::AutocovarianceSolve, LambdaVariant::Theorem).unwrap();
        assert_eq!(solved.params.delta, -0.5);
        let closed = arma_from_structural(&p, ReductionMethod::ClosedForm, LambdaVariant::Theorem).unwrap();
        assert_eq!(closed.params.delta, 0.5);
        assert!(!closed.consistent);
    }

    #[test]
    fn zero_rho_uses_linear_branch() {
        let p = params(0.0, 1.5, 0.3, 0.2);
        let red = arma_from_structural(&p, ReductionMethod::AutocovarianceSolve, LambdaVariant::Theorem).unwrap();
        assert_eq!(red.params.delta, 0.0);
        assert!(red.discarded_root.is_none());
        let lambda = p.depth(LambdaVariant::Theorem).unwrap();
        let expected = lambda * lambda * (1.5f64.powi(2) * 0.09 + 0.04);
        assert!((red.params.sigma_eps2 - expected).abs() < 1e-15);
    }

    #[test]
    fn singular_closed_form() {
        // rho * sigma_u^2 == beta^2 * sigma_z^2
        let p = params(0.25, 1.0, 0.5, 1.0);
        assert!(matches!(
            arma_from_structural(&p, ReductionMethod::ClosedForm, LambdaVariant::Theorem),
            Err(Error::SingularFormula)
        ));
        let red = arma_from_structural(&p, ReductionMethod::AutocovarianceSolve, LambdaVariant::Theorem).unwrap();
        assert!(red.closed_form.is_none());
        assert!(!red.consistent);
    }

    /// Independent route: factor the MA part `λβz_t + λu_t − λρu_{t−1}` directly.
    fn ma_factorisation(p: &StructuralParams) -> (f64, f64) {
        let lambda = p.depth(LambdaVariant::Theorem).unwrap();
        let l2 = lambda * lambda;
        let c0 = l2 * (p.beta.powi(2) * p.sigma_z.powi(2) + p.sigma_u.powi(2) * (1.0 + p.rho * p.rho));
        let c1 = -l2 * p.rho * p.sigma_u.powi(2);
        if c1 == 0.0 {
            return (0.0, c0);
        }
        let delta = (c0 - (c0 * c0 - 4.0 * c1 * c1).sqrt()) / (2.0 * c1);
        (delta, c0 / (1.0 + delta * delta))
    }

    proptest! {
        #[test]
        fn solve_agrees_with_ma_factorisation(
            rho in -0.95f64..0.95, beta in 0.1f64..3.0, sigma_z in 0.0f64..2.0, sigma_u in 0.05f64..2.0,
        ) {
            let p = params(rho, beta, sigma_z, sigma_u);
            let red = arma_from_structural(&p, ReductionMethod::AutocovarianceSolve, LambdaVariant::Theorem).unwrap();
            let (delta, s2) = ma_factorisation(&p);
            prop_assert!((red.params.delta - delta).abs() < 1e-9);
            prop_assert!((red.params.sigma_eps2 - s2).abs() <= 1e-9 * s2.max(1e-12));
            prop_assert!(red.params.delta.abs() <= 1.0);
            if let Some(other) = red.discarded_root {
                prop_assert!((other * red.params.delta - 1.0).abs() < 1e-10);
            }
            // The solved ARMA reproduces the structural autocovariances.
            let (v0, v1) = structural_autocovariances(&p, LambdaVariant::Theorem).unwrap();
            let t0 = theoretical_autocovariance(&red.params, 0).unwrap();
            let t1 = theoretical_autocovariance(&red.params, 1).unwrap();
            prop_assert!((t0 - v0).abs() <= 1e-9 * v0);
            prop_assert!((t1 - v1).abs() <= 1e-9 * v0);
        }
    }
}
