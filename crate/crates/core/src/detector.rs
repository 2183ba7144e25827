//! Bivariate ARMA for `(ΔQ_t, ΔR_t)` and the informed-trading criteria.
//!
//! Writing the return equation next to its image under the delta quantile
//! transform gives
//!
//! ```text
//! X_t = A_t + X_{t−1}B + Γ_t ε_{t−1} + H_t ε_t,   X_t = (ΔQ_t, ΔR_t)
//! ```
//!
//! with `B = [[0, 0], [ρ/s, ρ]]` and `s = σ√(T−t)` (row-vector convention).
//! `B` has eigenvalues `{0, ρ}`, so the system is stationary iff `|ρ| < 1`.
//!
//! Detection works on rolling windows. Each window fits the return ARMA,
//! regresses `ΔQ` on `[1, ΔR_{t−1}, ε̂_t, ε̂_{t−1}]`, and contributes the
//! implied `(ρ, δ)` to the decisive sums when it passes the gates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arma::{fit_arma11, ArmaFit, IDENTIFIABILITY_Z, MIN_SERIES_LEN, MIN_WINDOW};
use crate::error::{Error, Result};
use crate::market::ArmaParams;
use crate::option::{q_transform, DeltaObservation, DriftMode, OptionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarmaModel {
    /// `A_t`
    pub intercept: [f64; 2],
    /// `B`, indexed `[row][col]`
    pub ar: [[f64; 2]; 2],
    /// `Γ_t`
    pub ma: [f64; 2],
    /// `H_t`
    pub noise: [f64; 2],
    pub sigma: f64,
    pub time_to_expiry: f64,
}

/// Assemble the bivariate model at one time to expiry.
///
/// `sampling_interval` is the observation spacing in years; `drift` decides
/// whether the `(r + σ²/2)` shift uses it or a unit step.
pub fn build_varma(
    arma: &ArmaParams,
    spec: &OptionSpec,
    time_to_expiry: f64,
    drift: DriftMode,
    sampling_interval: f64,
) -> Result<VarmaModel> {
    if !(time_to_expiry > 0.0) {
        return Err(Error::Expired {
            t: spec.expiry - time_to_expiry,
            expiry: spec.expiry,
        });
    }
    let sigma = spec.implied_vol;
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let s = sigma * time_to_expiry.sqrt();
    let shift = (spec.rate + 0.5 * sigma * sigma) * drift.step(sampling_interval);
    Ok(VarmaModel {
        intercept: [(arma.gamma - shift) / s, arma.gamma],
        ar: [[0.0, 0.0], [arma.rho / s, arma.rho]],
        ma: [arma.delta / s, arma.delta],
        noise: [1.0 / s, 1.0],
        sigma,
        time_to_expiry,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stationarity {
    Stationary,
    Nonstationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityCheck {
    pub status: Stationarity,
    /// Eigenvalues of `B` as `(re, im)`.
    pub eigenvalues: [(f64, f64); 2],
    pub max_modulus: f64,
}

/// Eigenvalues of a real 2×2 matrix from its characteristic polynomial.
pub fn eigenvalues_2x2(m: &[[f64; 2]; 2]) -> [(f64, f64); 2] {
    let half_trace = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = half_trace * half_trace - det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        [(half_trace - root, 0.0), (half_trace + root, 0.0)]
    } else {
        let root = (-disc).sqrt();
        [(half_trace, -root), (half_trace, root)]
    }
}

pub fn stationarity_check(model: &VarmaModel) -> StationarityCheck {
    let eigenvalues = eigenvalues_2x2(&model.ar);
    let max_modulus = eigenvalues
        .iter()
        .map(|(re, im)| re.hypot(*im))
        .fold(0.0, f64::max);
    StationarityCheck {
        status: if max_modulus < 1.0 {
            Stationarity::Stationary
        } else {
            Stationarity::Nonstationary
        },
        eigenvalues,
        max_modulus,
    }
}

/// Coefficients of the quantile-difference regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileRegression {
    /// Intercept of `ΔQ` at the reference scale.
    pub intercept: f64,
    /// Coefficient on `ΔR_{t−1}`, i.e. `ρ/(σ√(T−t))`.
    pub ar_load: f64,
    /// Coefficient on `ε̂_{t−1}`, i.e. `δ/(σ√(T−t))`.
    pub ma_load: f64,
    /// Coefficient on `ε̂_t`, i.e. `1/(σ√(T−t))`.
    pub noise_load: f64,
    pub implied_rho: f64,
    pub implied_delta: f64,
    /// Return-equation intercept implied by the regression intercept and the drift shift.
    pub implied_gamma: f64,
    /// `σ√(T−t)` at the reference (last) row.
    pub scale: f64,
    pub ar_t_stat: f64,
    pub ma_t_stat: f64,
    pub stage1_converged: bool,
}

fn solve_linear<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col] == 0.0 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let tail: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Two-stage estimate of the quantile-difference regression.
///
/// Stage 1 fits the return ARMA to `delta_r`. Stage 2 regresses
/// `s_t·ΔQ_t` on `[1, ΔR_{t−1}, ε̂_t, ε̂_{t−1}]` by least squares, where
/// `scales[t] = σ√(T−t)` for row `t` (constant scales reduce to a plain
/// regression of `ΔQ_t`). Loads are reported at the last row's scale.
/// `drift_shift` is `(r + σ²/2)·step`.
pub fn estimate_quantile_regression(delta_q: &[f64], delta_r: &[f64], scales: &[f64], drift_shift: f64) -> Result<(QuantileRegression, ArmaFit)> {
    let n = delta_r.len();
    if delta_q.len() != n || scales.len() != n {
        return Err(Error::Input(format!(
            "misaligned series: {} quantile differences, {} returns, {} scales",
            delta_q.len(),
            n,
            scales.len()
        )));
    }
    if n < MIN_SERIES_LEN {
        return Err(Error::Input(format!("need at least {MIN_SERIES_LEN} observations, got {n}")));
    }
    if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument("scales must be positive and finite".into()));
    }
    if delta_q.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateData("quantile differences contain missing values".into()));
    }
    let fit = fit_arma11(delta_r)?;

    let mut xtx = [[0.0; 4]; 4];
    let mut xty = [0.0; 4];
    let mut rows = Vec::with_capacity(n - 1);
    for t in 1..n {
        let eps = fit.residuals[t - 1];
        let eps_prev = if t >= 2 { fit.residuals[t - 2] } else { 0.0 };
        let x = [1.0, delta_r[t - 1], eps, eps_prev];
        let y = scales[t] * delta_q[t];
        for i in 0..4 {
            xty[i] += x[i] * y;
            for j in 0..4 {
                xtx[i][j] += x[i] * x[j];
            }
        }
        rows.push((x, y));
    }
    let beta = solve_linear(xtx, xty)
        .ok_or_else(|| Error::DegenerateData("quantile regression design is singular".into()))?;
    let dof = (rows.len() as f64 - 4.0).max(1.0);
    let rss: f64 = rows
        .iter()
        .map(|(x, y)| {
            let fitted: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (y - fitted).powi(2)
        })
        .sum();
    let s2 = rss / dof;
    let t_stat = |k: usize| {
        let mut unit = [0.0; 4];
        unit[k] = 1.0;
        let var = solve_linear(xtx, unit).map(|col| col[k] * s2).unwrap_or(f64::NAN);
        if var > 0.0 {
            beta[k] / var.sqrt()
        } else if beta[k] == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(beta[k])
        }
    };
    let scale = scales[n - 1];
    let coefficients = QuantileRegression {
        intercept: beta[0] / scale,
        ar_load: beta[1] / scale,
        ma_load: beta[3] / scale,
        noise_load: beta[2] / scale,
        implied_rho: beta[1],
        implied_delta: beta[3],
        implied_gamma: beta[0] + drift_shift,
        scale,
        ar_t_stat: t_stat(1),
        ma_t_stat: t_stat(3),
        stage1_converged: fit.converged,
    };
    Ok((coefficients, fit))
}

/// Outcome of the pointwise or decisive criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Detected,
    NotDetected,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Detected => "detected",
            Verdict::NotDetected => "not_detected",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    A,
    B,
    None,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::A => "a",
            Branch::B => "b",
            Branch::None => "none",
        })
    }
}

/// Informed trading at a single time: `ρ < 0` with `0 < δ < −ρ`, or
/// `ρ > 0` with `−1 < δ < −ρ`.
pub fn pointwise_criterion(rho: f64, delta: f64) -> Result<Verdict> {
    if !rho.is_finite() || rho.abs() >= 1.0 {
        return Err(Error::Nonstationary { rho });
    }
    let detected = (rho < 0.0 && 0.0 < delta && delta < -rho) || (rho > 0.0 && -1.0 < delta && delta < -rho);
    Ok(if detected { Verdict::Detected } else { Verdict::NotDetected })
}

/// Branch of the decisive criterion satisfied by the window sums.
pub fn decisive_branch(sum_rho: f64, sum_delta: f64) -> Branch {
    let opposite = sum_rho * sum_delta < 0.0;
    if opposite && sum_rho < 0.0 && sum_rho.abs() > sum_delta.abs() {
        Branch::A
    } else if opposite && sum_rho > 0.0 && sum_rho.abs() < sum_delta.abs() {
        Branch::B
    } else {
        Branch::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionConfig {
    /// `γ̄ ≠ 0` is read as `|γ̄| > gamma_tolerance · σ̂_ε`.
    pub gamma_tolerance: f64,
    /// Minimum `|lag-1 autocorrelation|·√n` for a window's `(ρ̄, δ̄)` to count.
    pub identifiability_z: f64,
}

impl Default for CriterionConfig {
    fn default() -> Self {
        Self {
            gamma_tolerance: 1e-12,
            identifiability_z: IDENTIFIABILITY_Z,
        }
    }
}

/// Everything the criterion needs from one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub window_start: usize,
    /// Stage-1 return ARMA.
    pub arma: ArmaParams,
    /// Values entering the decisive sums (the quantile regression's implied
    /// `ρ`, `δ` when available, otherwise the return ARMA's).
    pub criterion_rho: f64,
    pub criterion_delta: f64,
    pub identification_score: f64,
    pub converged: bool,
    pub stationary: bool,
}

impl WindowEstimate {
    pub fn from_fit(fit: &ArmaFit) -> Self {
        Self {
            window_start: fit.window_start,
            arma: fit.params,
            criterion_rho: fit.params.rho,
            criterion_delta: fit.params.delta,
            identification_score: fit.identification_score(),
            converged: fit.converged,
            stationary: fit.params.rho.abs() < 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_start: usize,
    pub gamma: f64,
    pub rho: f64,
    pub delta: f64,
    pub criterion_rho: f64,
    pub criterion_delta: f64,
    pub gamma_gate: bool,
    pub stationary: bool,
    pub identified: bool,
    pub pointwise: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedWindow {
    pub window_start: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub windows_total: usize,
    pub windows_admitted: usize,
    pub windows_counted: usize,
    pub gamma_gate_failures: usize,
    pub stationarity_failures: usize,
    pub identifiability_warnings: usize,
    pub nonconverged: usize,
    pub skipped: Vec<SkippedWindow>,
    pub skipped_timestamps: Vec<usize>,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub per_window: Vec<WindowReport>,
    pub sum_rho: f64,
    pub sum_delta: f64,
    pub branch: Branch,
    pub verdict: Verdict,
    pub diagnostics: Diagnostics,
}

/// Apply the gates and the decisive criterion to per-window estimates.
///
/// Windows failing `γ̄ ≠ 0` or `|ρ̄| < 1` are excluded. Admitted windows whose
/// roots nearly cancel are white noise to the estimator and add nothing to
/// the sums. No admitted windows gives an inconclusive verdict.
pub fn decide(windows: &[WindowEstimate], config: &CriterionConfig) -> DetectionReport {
    let mut diagnostics = Diagnostics {
        windows_total: windows.len(),
        ..Diagnostics::default()
    };
    let (mut sum_rho, mut sum_delta) = (0.0, 0.0);
    let mut per_window = Vec::with_capacity(windows.len());
    for w in windows {
        let magnitude = w.arma.sigma_eps2.max(0.0).sqrt();
        let gamma_gate = w.arma.gamma.abs() > config.gamma_tolerance * magnitude;
        let stationary = w.stationary && w.arma.rho.abs() < 1.0;
        let identified = w.identification_score >= config.identifiability_z;
        if !gamma_gate {
            diagnostics.gamma_gate_failures += 1;
        }
        if !stationary {
            diagnostics.stationarity_failures += 1;
        }
        if !w.converged {
            diagnostics.nonconverged += 1;
        }
        if gamma_gate && stationary {
            diagnostics.windows_admitted += 1;
            if identified {
                diagnostics.windows_counted += 1;
                sum_rho += w.criterion_rho;
                sum_delta += w.criterion_delta;
            } else {
                diagnostics.identifiability_warnings += 1;
            }
        }
        let pointwise = pointwise_criterion(w.criterion_rho, w.criterion_delta).unwrap_or(Verdict::Inconclusive);
        per_window.push(WindowReport {
            window_start: w.window_start,
            gamma: w.arma.gamma,
            rho: w.arma.rho,
            delta: w.arma.delta,
            criterion_rho: w.criterion_rho,
            criterion_delta: w.criterion_delta,
            gamma_gate,
            stationary,
            identified,
            pointwise,
        });
    }
    let (branch, verdict) = if diagnostics.windows_admitted == 0 {
        diagnostics.messages.push("no window passed the gates".into());
        (Branch::None, Verdict::Inconclusive)
    } else {
        let branch = decisive_branch(sum_rho, sum_delta);
        let verdict = if branch == Branch::None {
            Verdict::NotDetected
        } else {
            Verdict::Detected
        };
        (branch, verdict)
    };
    if diagnostics.windows_admitted > 0 && diagnostics.windows_counted == 0 {
        diagnostics
            .messages
            .push("every admitted window is consistent with white-noise returns".into());
    }
    DetectionReport {
        per_window,
        sum_rho,
        sum_delta,
        branch,
        verdict,
        diagnostics,
    }
}

/// Decisive criterion over return-ARMA fits alone.
pub fn decisive_criterion(fits: &[ArmaFit], config: &CriterionConfig) -> DetectionReport {
    let windows: Vec<WindowEstimate> = fits.iter().map(WindowEstimate::from_fit).collect();
    decide(&windows, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub t: f64,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub window: usize,
    pub drift: DriftMode,
    pub criterion: CriterionConfig,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            window: 100,
            drift: DriftMode::PerStep,
            criterion: CriterionConfig::default(),
        }
    }
}

/// Joined, differenced inputs of a detection run.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSeries {
    pub times: Vec<f64>,
    /// `ΔR_k = ln S_{k+1} − ln S_k`
    pub delta_r: Vec<f64>,
    /// `ΔQ_k`, NaN when either quote could not be inverted.
    pub delta_q: Vec<f64>,
    /// `σ√(T − t_{k+1})`, NaN at or after expiry.
    pub scales: Vec<f64>,
    pub skipped_timestamps: Vec<usize>,
}

/// Inner-join prices and deltas on exactly equal times and difference them.
///
/// `vols`, when given, holds one implied volatility per delta observation
/// and replaces the contract volatility in `σ√(T−t)`.
pub fn align(
    underlying: &[PricePoint],
    deltas: &[DeltaObservation],
    vols: Option<&[f64]>,
    spec: &OptionSpec,
) -> Result<AlignedSeries> {
    if let Some(v) = vols {
        if v.len() != deltas.len() {
            return Err(Error::Input(format!(
                "{} implied vols for {} delta observations",
                v.len(),
                deltas.len()
            )));
        }
    }
    let mut prices: Vec<PricePoint> = underlying.to_vec();
    prices.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut joined: Vec<(f64, f64, f64, f64)> = Vec::new();
    for (k, obs) in deltas.iter().enumerate() {
        if let Ok(i) = prices.binary_search_by(|p| p.t.total_cmp(&obs.t)) {
            let vol = vols.map_or(spec.implied_vol, |v| v[k]);
            joined.push((obs.t, prices[i].price, obs.delta, vol));
        }
    }
    if joined.len() < 2 {
        return Err(Error::InsufficientOverlap {
            underlying: underlying.len(),
            deltas: deltas.len(),
            joined: joined.len(),
        });
    }
    joined.sort_by(|a, b| a.0.total_cmp(&b.0));
    if joined.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Input("duplicate timestamps in delta observations".into()));
    }
    if let Some(bad) = joined.iter().find(|j| !(j.1 > 0.0 && j.1.is_finite())) {
        return Err(Error::Input(format!("non-positive underlying price {} at t = {}", bad.1, bad.0)));
    }
    let mut skipped = Vec::new();
    let q: Vec<f64> = joined
        .iter()
        .enumerate()
        .map(|(i, &(t, _, d, _))| match (q_transform(d, spec.kind), spec.time_to_expiry(t)) {
            (Ok(q), Ok(_)) => q,
            _ => {
                skipped.push(i);
                f64::NAN
            }
        })
        .collect();
    let times: Vec<f64> = joined.iter().map(|j| j.0).collect();
    let delta_r = joined.windows(2).map(|w| w[1].1.ln() - w[0].1.ln()).collect();
    let delta_q = q.windows(2).map(|w| w[1] - w[0]).collect();
    let scales = joined[1..]
        .iter()
        .map(|&(t, _, _, vol)| match spec.time_to_expiry(t) {
            Ok(tau) if vol > 0.0 && vol.is_finite() => vol * tau.sqrt(),
            _ => f64::NAN,
        })
        .collect();
    Ok(AlignedSeries {
        times,
        delta_r,
        delta_q,
        scales,
        skipped_timestamps: skipped,
    })
}

/// Full pipeline: join, transform, rolling two-stage estimation, gates and
/// the decisive criterion.
pub fn run_detection(
    underlying: &[PricePoint],
    deltas: &[DeltaObservation],
    spec: &OptionSpec,
    config: &DetectionConfig,
) -> Result<DetectionReport> {
    run_detection_with_vols(underlying, deltas, None, spec, config)
}

/// [`run_detection`] with a per-observation implied volatility.
pub fn run_detection_with_vols(
    underlying: &[PricePoint],
    deltas: &[DeltaObservation],
    vols: Option<&[f64]>,
    spec: &OptionSpec,
    config: &DetectionConfig,
) -> Result<DetectionReport> {
    let m = config.window;
    if m < MIN_WINDOW {
        return Err(Error::Config(format!("window m = {m} is below the minimum {MIN_WINDOW}")));
    }
    let aligned = align(underlying, deltas, vols, spec)?;
    let joined = aligned.times.len();
    if joined < m + 2 {
        let mut report = decide(&[], &config.criterion);
        report.diagnostics.skipped_timestamps = aligned.skipped_timestamps;
        report.diagnostics.messages = vec![format!(
            "insufficient windows: {joined} joined observations, window m = {m} needs at least {}",
            m + 2
        )];
        return Ok(report);
    }

    let count = aligned.delta_r.len() - m;
    let outcomes: Vec<std::result::Result<WindowEstimate, SkippedWindow>> = (0..count)
        .into_par_iter()
        .map(|s| estimate_window(&aligned, spec, config, s))
        .collect();

    let mut windows = Vec::with_capacity(count);
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(w) => windows.push(w),
            Err(s) => skipped.push(s),
        }
    }
    let mut report = decide(&windows, &config.criterion);
    report.diagnostics.windows_total = count;
    report.diagnostics.skipped = skipped;
    report.diagnostics.skipped_timestamps = aligned.skipped_timestamps;
    Ok(report)
}

fn estimate_window(
    aligned: &AlignedSeries,
    spec: &OptionSpec,
    config: &DetectionConfig,
    start: usize,
) -> std::result::Result<WindowEstimate, SkippedWindow> {
    let end = start + config.window;
    let skip = |reason: String| SkippedWindow {
        window_start: start,
        reason,
    };
    let range = start..=end;
    let (dr, dq, scales) = (
        &aligned.delta_r[range.clone()],
        &aligned.delta_q[range.clone()],
        &aligned.scales[range],
    );
    if dq.iter().chain(scales).chain(dr).any(|v| !v.is_finite()) {
        return Err(skip("missing value inside window".into()));
    }
    let times = &aligned.times[start..=end + 1];
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let sigma = spec.implied_vol;
    let drift_shift = (spec.rate + 0.5 * sigma * sigma) * config.drift.step(h);
    let (regression, fit) = estimate_quantile_regression(dq, dr, scales, drift_shift).map_err(|e| skip(e.to_string()))?;
    let tau = spec
        .time_to_expiry(times[times.len() - 1])
        .map_err(|e| skip(e.to_string()))?;
    let model = build_varma(&fit.params, spec, tau, config.drift, h).map_err(|e| skip(e.to_string()))?;
    let stationary = stationarity_check(&model).status == Stationarity::Stationary;
    Ok(WindowEstimate {
        window_start: start,
        arma: fit.params,
        criterion_rho: regression.implied_rho,
        criterion_delta: regression.implied_delta,
        identification_score: fit.identification_score(),
        converged: fit.converged,
        stationary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::simulate_arma;
    use crate::option::{delta, OptionKind};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn arma(rho: f64, delta: f64) -> ArmaParams {
        ArmaParams {
            gamma: 1e-4,
            rho,
            delta,
            sigma_eps2: 1e-6,
        }
    }

    fn spec() -> OptionSpec {
        OptionSpec::new(OptionKind::Call, 8650.0, 7.0 / 360.0, 0.01, 0.2087).unwrap()
    }

    fn uniform(rho: f64, delta: f64, count: usize) -> Vec<WindowEstimate> {
        (0..count)
            .map(|k| WindowEstimate {
                window_start: k,
                arma: arma(rho, delta),
                criterion_rho: rho,
                criterion_delta: delta,
                identification_score: 10.0,
                converged: true,
                stationary: true,
            })
            .collect()
    }

    #[test]
    fn varma_layout() {
        let m = build_varma(&arma(0.0, 0.4), &spec(), 1.0, DriftMode::PerStep, 1.0 / 360.0).unwrap();
        assert_eq!(m.ar, [[0.0, 0.0], [0.0, 0.0]]);

        // σ√(T−t) = 1
        let unit = OptionSpec::new(OptionKind::Call, 100.0, 2.0, 0.03, 1.0).unwrap();
        let a = arma(0.3, -0.2);
        let m = build_varma(&a, &unit, 1.0, DriftMode::UnitStep, 1.0 / 360.0).unwrap();
        assert_eq!(m.ar[1], [0.3, 0.3]);
        assert_eq!(m.ma, [-0.2, -0.2]);
        assert_eq!(m.noise, [1.0, 1.0]);
        assert!((m.intercept[0] - (a.gamma - 0.53)).abs() < 1e-15);
        assert_eq!(m.intercept[1], a.gamma);

        let m = build_varma(&arma(-0.21, -1.0), &spec(), 2.0 / 360.0, DriftMode::PerStep, 1.0 / 360.0).unwrap();
        let inv_scale = 64.285_615_069_471_67;
        assert!((m.ar[1][0] - -0.21 * inv_scale).abs() < 1e-9);
        assert_eq!(m.ar[1][1], -0.21);
        assert_eq!(m.ar[0], [0.0, 0.0]);

        assert!(matches!(
            build_varma(&a, &spec(), 0.0, DriftMode::PerStep, 1.0),
            Err(Error::Expired { .. })
        ));
    }

    #[test]
    fn stationarity_examples() {
        let check = |rho: f64| stationarity_check(&build_varma(&arma(rho, 0.0), &spec(), 0.01, DriftMode::PerStep, 0.001).unwrap());
        let c = check(0.5);
        assert_eq!(c.status, Stationarity::Stationary);
        assert_eq!(c.eigenvalues, [(0.0, 0.0), (0.5, 0.0)]);
        assert_eq!(check(1.2).status, Stationarity::Nonstationary);
        let c = check(-0.999);
        assert_eq!(c.status, Stationarity::Stationary);
        assert!((c.max_modulus - 0.999).abs() < 1e-15);
    }

    #[test]
    fn complex_eigenvalues() {
        let rot = [[0.0, -0.5], [0.5, 0.0]];
        let ev = eigenvalues_2x2(&rot);
        assert_eq!(ev, [(0.0, -0.5), (0.0, 0.5)]);
    }

    #[test]
    fn pointwise_examples() {
        assert_eq!(pointwise_criterion(-0.5, 0.3).unwrap(), Verdict::Detected);
        assert_eq!(pointwise_criterion(0.4, -0.7).unwrap(), Verdict::Detected);
        assert_eq!(pointwise_criterion(-0.21, -1.0).unwrap(), Verdict::NotDetected);
        assert_eq!(pointwise_criterion(0.0, -0.5).unwrap(), Verdict::NotDetected);
        assert!(matches!(pointwise_criterion(1.0, 0.0), Err(Error::Nonstationary { .. })));
    }

    #[test]
    fn decisive_examples() {
        let cfg = CriterionConfig::default();
        let r = decide(&uniform(-0.5, 0.3, 7), &cfg);
        assert_eq!((r.branch, r.verdict), (Branch::A, Verdict::Detected));
        let r = decide(&uniform(-0.21, -1.0, 7), &cfg);
        assert_eq!((r.branch, r.verdict), (Branch::None, Verdict::NotDetected));
        let r = decide(&uniform(0.4, -0.2, 7), &cfg);
        assert_eq!((r.branch, r.verdict), (Branch::None, Verdict::NotDetected));
        let r = decide(&uniform(0.4, -0.7, 7), &cfg);
        assert_eq!((r.branch, r.verdict), (Branch::B, Verdict::Detected));
        assert!((r.sum_rho - 2.8).abs() < 1e-12);
        let r = decide(&[], &cfg);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn gates_exclude_windows() {
        let cfg = CriterionConfig::default();
        let mut w = uniform(-0.5, 0.3, 3);
        w[0].arma.gamma = 0.0;
        w[1].stationary = false;
        let r = decide(&w, &cfg);
        assert_eq!(r.diagnostics.gamma_gate_failures, 1);
        assert_eq!(r.diagnostics.stationarity_failures, 1);
        assert_eq!(r.diagnostics.windows_admitted, 1);
        assert!((r.sum_rho + 0.5).abs() < 1e-15);
        let mut w = uniform(-0.5, 0.3, 2);
        w.iter_mut().for_each(|x| x.arma.gamma = 0.0);
        assert_eq!(decide(&w, &cfg).verdict, Verdict::Inconclusive);
    }

    #[test]
    fn cancelling_windows_do_not_count() {
        let cfg = CriterionConfig::default();
        let mut w = uniform(-0.5, 0.45, 4);
        w.iter_mut().for_each(|x| x.identification_score = 1.0);
        let r = decide(&w, &cfg);
        assert_eq!(r.verdict, Verdict::NotDetected);
        assert_eq!(r.diagnostics.identifiability_warnings, 4);
        assert_eq!((r.sum_rho, r.sum_delta), (0.0, 0.0));
    }

    fn noise(n: usize, seed: u64, sd: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect()
    }

    #[test]
    fn quantile_regression_self_consistency() {
        let returns = simulate_arma(&arma(0.5, -0.2), 2_000, 1).unwrap();
        let (sigma, tau, h, r) = (0.25, 0.5, 1.0 / 360.0, 0.02);
        let s = sigma * f64::sqrt(tau);
        let shift = (r + 0.5 * sigma * sigma) * h;
        let dq: Vec<f64> = returns.iter().map(|x| (x - shift) / s).collect();
        let scales = vec![s; dq.len()];
        let (c, fit) = estimate_quantile_regression(&dq, &returns, &scales, shift).unwrap();
        assert!((c.ar_load - fit.params.rho / s).abs() < 1e-8 * (fit.params.rho / s).abs().max(1.0));
        assert!((c.implied_rho - fit.params.rho).abs() < 1e-8);
        assert!((c.implied_delta - fit.params.delta).abs() < 1e-8);
        assert!((c.noise_load - 1.0 / s).abs() < 1e-8);
        assert!((c.implied_gamma - fit.params.gamma).abs() < 1e-10);

        // Doubling the scale leaves the loads alone and doubles the implied values.
        let doubled = vec![2.0 * s; dq.len()];
        let (d, _) = estimate_quantile_regression(&dq, &returns, &doubled, shift).unwrap();
        assert!((d.ar_load - c.ar_load).abs() < 1e-9 * c.ar_load.abs());
        assert!((d.implied_rho - 2.0 * c.implied_rho).abs() < 1e-9);
    }

    #[test]
    fn quantile_regression_null_regression() {
        for seed in 0..10 {
            let returns = simulate_arma(&arma(0.5, -0.2), 2_000, 100 + seed).unwrap();
            let dq = noise(2_000, 200 + seed, 1.0);
            let (c, _) = estimate_quantile_regression(&dq, &returns, &vec![0.1; 2_000], 0.0).unwrap();
            assert!(c.ar_t_stat.abs() < 3.0 && c.ma_t_stat.abs() < 3.0, "seed {seed}: {c:?}");
        }
    }

    #[test]
    fn quantile_regression_rejects_misaligned() {
        let x = noise(50, 1, 1.0);
        assert!(matches!(estimate_quantile_regression(&x[..49], &x, &[1.0; 50], 0.0), Err(Error::Input(_))));
        assert!(matches!(estimate_quantile_regression(&x, &x, &[1.0; 49], 0.0), Err(Error::Input(_))));
    }

    fn market_inputs(returns: &[f64], spec: &OptionSpec, h: f64) -> (Vec<PricePoint>, Vec<DeltaObservation>) {
        let mut log_s = spec.strike.ln();
        let mut prices = vec![PricePoint { t: 0.0, price: spec.strike }];
        for (k, r) in returns.iter().enumerate() {
            log_s += r;
            prices.push(PricePoint {
                t: (k + 1) as f64 * h,
                price: log_s.exp(),
            });
        }
        let deltas = prices
            .iter()
            .map(|p| DeltaObservation {
                t: p.t,
                delta: delta(p.price, spec, p.t).unwrap(),
                underlying: Some(p.price),
            })
            .collect();
        (prices, deltas)
    }

    #[test]
    fn detection_on_branch_a_market() {
        let returns = simulate_arma(&arma(-0.5, 0.3), 1_200, 9).unwrap();
        let h = 1.0 / 2_000.0;
        let spec = OptionSpec::new(OptionKind::Call, 100.0, 1.0, 0.01, 0.2).unwrap();
        let (prices, deltas) = market_inputs(&returns, &spec, h);
        let config = DetectionConfig {
            window: 400,
            ..DetectionConfig::default()
        };
        let report = run_detection(&prices, &deltas, &spec, &config).unwrap();
        assert_eq!(report.diagnostics.windows_total, 1_200 - 400);
        assert_eq!(report.verdict, Verdict::Detected, "{:?}", report.diagnostics);
        assert_eq!(report.branch, Branch::A);
        for w in report.per_window.iter().take(50) {
            assert!((w.criterion_rho - w.rho).abs() < 0.07);
        }

        // Uniformly rescaled prices give the same verdict and sums.
        let scaled: Vec<PricePoint> = prices.iter().map(|p| PricePoint { price: 3.0 * p.price, ..*p }).collect();
        let again = run_detection(&scaled, &deltas, &spec, &config).unwrap();
        assert_eq!(again.verdict, report.verdict);
        assert!((again.sum_rho - report.sum_rho).abs() < 1e-6 * report.sum_rho.abs());
    }

    #[test]
    fn per_row_vols_scale_windows() {
        let returns = simulate_arma(&arma(-0.5, 0.3), 300, 21).unwrap();
        let spec = OptionSpec::new(OptionKind::Call, 100.0, 1.0, 0.01, 0.2).unwrap();
        let (prices, deltas) = market_inputs(&returns, &spec, 1e-3);
        let config = DetectionConfig { window: 100, ..DetectionConfig::default() };
        let plain = run_detection(&prices, &deltas, &spec, &config).unwrap();
        let same = vec![0.2; deltas.len()];
        assert_eq!(run_detection_with_vols(&prices, &deltas, Some(&same), &spec, &config).unwrap(), plain);

        let doubled = vec![0.4; deltas.len()];
        let scaled = run_detection_with_vols(&prices, &deltas, Some(&doubled), &spec, &config).unwrap();
        for (a, b) in plain.per_window.iter().zip(&scaled.per_window) {
            assert!((b.criterion_rho - 2.0 * a.criterion_rho).abs() < 1e-9);
        }
        assert!(matches!(
            run_detection_with_vols(&prices, &deltas, Some(&same[1..]), &spec, &config),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn short_sample_is_inconclusive() {
        let spec = spec();
        let h = 1.0 / 360.0;
        let deltas: Vec<DeltaObservation> = [0.19, 0.38, 0.33, 0.31, 0.29, 0.27]
            .iter()
            .enumerate()
            .map(|(i, &d)| DeltaObservation { t: (i + 1) as f64 * h, delta: d, underlying: None })
            .collect();
        let prices: Vec<PricePoint> = (0..6)
            .map(|i| PricePoint { t: (i + 1) as f64 * h, price: 8_500.0 + 20.0 * i as f64 })
            .collect();
        let report = run_detection(&prices, &deltas, &spec, &DetectionConfig::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Inconclusive);
        assert!(report.diagnostics.messages[0].starts_with("insufficient windows"));
    }

    #[test]
    fn join_statistics_on_no_overlap() {
        let prices = vec![PricePoint { t: 0.0, price: 1.0 }, PricePoint { t: 1.0, price: 1.0 }];
        let deltas = vec![DeltaObservation { t: 0.5, delta: 0.5, underlying: None }];
        match run_detection(&prices, &deltas, &spec(), &DetectionConfig::default()) {
            Err(Error::InsufficientOverlap { underlying: 2, deltas: 1, joined: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bound_deltas_invalidate_their_windows() {
        let returns = simulate_arma(&arma(-0.5, 0.3), 80, 4).unwrap();
        let spec = OptionSpec::new(OptionKind::Call, 100.0, 1.0, 0.01, 0.2).unwrap();
        let (prices, mut deltas) = market_inputs(&returns, &spec, 1e-3);
        deltas[70].delta = 1.0;
        let config = DetectionConfig { window: 40, ..DetectionConfig::default() };
        let report = run_detection(&prices, &deltas, &spec, &config).unwrap();
        assert_eq!(report.diagnostics.skipped_timestamps, vec![70]);
        // ΔQ indices 69 and 70 touch timestamp 70; windows [s, s+40] covering either are skipped.
        let skipped: Vec<usize> = report.diagnostics.skipped.iter().map(|s| s.window_start).collect();
        assert_eq!(skipped, (29..=39).collect::<Vec<_>>());
        assert_eq!(report.per_window.len(), 29);
    }

    proptest! {
        #[test]
        fn eigenvalues_are_zero_and_rho(rho in -2.0f64..2.0, scale in 0.01f64..10.0) {
            let model = VarmaModel {
                intercept: [0.0; 2],
                ar: [[0.0, 0.0], [rho / scale, rho]],
                ma: [0.0; 2],
                noise: [1.0 / scale, 1.0],
                sigma: 0.2,
                time_to_expiry: 1.0,
            };
            let c = stationarity_check(&model);
            let mut ev = [c.eigenvalues[0].0, c.eigenvalues[1].0];
            ev.sort_by(f64::total_cmp);
            let mut expected = [0.0, rho];
            expected.sort_by(f64::total_cmp);
            prop_assert!((ev[0] - expected[0]).abs() < 1e-12 && (ev[1] - expected[1]).abs() < 1e-12);
            prop_assert_eq!(c.status == Stationarity::Stationary, rho.abs() < 1.0);
        }

        #[test]
        fn duplicating_windows_keeps_verdict(
            pairs in proptest::collection::vec((-0.99f64..0.99, -1.0f64..1.0), 1..30),
        ) {
            let windows: Vec<WindowEstimate> = pairs
                .iter()
                .enumerate()
                .map(|(k, &(r, d))| WindowEstimate {
                    window_start: k,
                    arma: arma(r, d),
                    criterion_rho: r,
                    criterion_delta: d,
                    identification_score: 10.0,
                    converged: true,
                    stationary: true,
                })
                .collect();
            let cfg = CriterionConfig::default();
            let once = decide(&windows, &cfg);
            let twice: Vec<WindowEstimate> = windows.iter().chain(windows.iter()).copied().collect();
            let doubled = decide(&twice, &cfg);
            prop_assert_eq!(once.verdict, doubled.verdict);
            prop_assert_eq!(once.branch, doubled.branch);
        }

        #[test]
        fn pointwise_and_decisive_agree_in_branch_a(rho in -0.99f64..-0.01, frac in 0.01f64..0.99, n in 1usize..20) {
            let delta = -rho * frac;
            prop_assert_eq!(pointwise_criterion(rho, delta).unwrap(), Verdict::Detected);
            prop_assert_eq!(decide(&uniform(rho, delta, n), &CriterionConfig::default()).verdict, Verdict::Detected);
        }

        #[test]
        fn pointwise_and_decisive_agree_in_branch_b(rho in 0.01f64..0.99, t in 0.01f64..0.99) {
            // -1 < δ < -ρ, so |δ| > |ρ| throughout.
            let delta = -rho - t * (1.0 - rho);
            prop_assume!(delta > -1.0);
            prop_assert_eq!(pointwise_criterion(rho, delta).unwrap(), Verdict::Detected);
            prop_assert_eq!(decide(&uniform(rho, delta, 3), &CriterionConfig::default()).branch, Branch::B);
        }
    }
}
