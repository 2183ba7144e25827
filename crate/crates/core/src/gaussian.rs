//! Standard normal distribution function and its inverse.
//!
//! `std_normal_cdf` is evaluated through the complementary error function so
//! that both tails keep full relative precision. `std_normal_quantile` starts
//! from Acklam's rational approximation (relative error below 1.15e-9) and
//! applies one Newton step against the CDF, which brings the result to
//! within a few ulps over the whole open interval.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// A probability strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!(
                "probability {value} is outside the open interval (0, 1)"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF `Φ(x)`.
///
/// The result can round to exactly 0 or 1 far in the tails, which is why it
/// is returned as a plain `f64` rather than a [`Probability`].
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "normal CDF needs a finite argument, got {x}"
        )));
    }
    Ok(cdf_unchecked(x))
}

#[inline]
pub(crate) fn cdf_unchecked(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse standard normal CDF `Φ⁻¹(p)`.
pub fn std_normal_quantile(p: Probability) -> f64 {
    let p = p.value();
    if p > 0.5 {
        // 1 - p is exact here, so the upper half mirrors the lower half bit for bit.
        -lower_quantile(1.0 - p)
    } else {
        lower_quantile(p)
    }
}

/// Convenience wrapper validating a raw `f64` before inverting it.
pub fn quantile(p: f64) -> Result<f64> {
    Probability::new(p).map(std_normal_quantile)
}

const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_690e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

// p in (0, 0.5]
fn lower_quantile(p: f64) -> f64 {
    let x0 = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let density = std_normal_pdf(x0);
    if density > 0.0 {
        x0 - (cdf_unchecked(x0) - p) / density
    } else {
        x0
    }
}
