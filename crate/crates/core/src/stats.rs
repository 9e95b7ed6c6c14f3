//! Scalar distribution helpers used by the likelihood and the tests.

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::gamma_ur;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - 0.5 * LN_2PI).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// log Φ(x), accurate deep in the left tail where Φ underflows.
pub fn norm_logcdf(x: f64) -> f64 {
    if x > -30.0 {
        let c = norm_cdf(x);
        if x > 5.0 {
            // Φ close to one, use log1p on the upper tail
            (-0.5 * erfc(x * FRAC_1_SQRT_2)).ln_1p()
        } else {
            c.ln()
        }
    } else {
        // Mills-ratio asymptotic series
        let x2 = x * x;
        let s = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - 0.5 * LN_2PI - (-x).ln() + s.ln()
    }
}

/// Inverse standard normal CDF.
pub fn norm_ppf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Draw from N(m, s²) truncated to (−∞, 0] by inversion of the uniform `u`.
pub fn trunc_normal_upper(m: f64, s: f64, u: f64) -> f64 {
    let a = -m / s;
    let z = if a > -30.0 {
        let pa = norm_cdf(a);
        let target = u * pa;
        if target <= 0.0 {
            a
        } else {
            norm_ppf(target).min(a)
        }
    } else {
        // exponential approximation to the far tail
        a + u.max(f64::MIN_POSITIVE).ln() / (-a)
    };
    m + s * z
}

/// Upper tail of the chi-square distribution.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0)
}

/// Numerically stable log(Σ exp(xᵢ) wᵢ) for nonnegative weights.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
