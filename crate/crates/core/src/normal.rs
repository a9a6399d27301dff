//! Standard normal distribution helpers.
//!
//! `cdf` and `quantile` are evaluated through `erfc` so that both tails keep
//! full relative precision. `quantile` refines the `erfc_inv` approximation
//! with Halley steps against libm's `erfc`, which is accurate to about one ulp.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

/// ln(sqrt(2π))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate for large positive x.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// ln Φ(x), finite far into the lower tail.
pub fn ln_cdf(x: f64) -> f64 {
    if x > -30.0 {
        cdf(x).ln()
    } else {
        // Asymptotic Mills-ratio expansion.
        let z2 = 1.0 / (x * x);
        -0.5 * x * x - (-x).ln() - LN_SQRT_2PI
            + (1.0 - z2 + 3.0 * z2 * z2 - 15.0 * z2 * z2 * z2).ln()
    }
}

/// Φ⁻¹(p) with Φ⁻¹(0) = −∞ and Φ⁻¹(1) = +∞.
pub fn quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p < 0.5 {
        -upper_quantile(p)
    } else {
        upper_quantile(1.0 - p)
    }
}

/// x > 0 with 1 − Φ(x) = q, for q ∈ (0, 0.5].
fn upper_quantile(q: f64) -> f64 {
    let mut x = SQRT_2 * erfc_inv(2.0 * q);
    // Halley steps on f(x) = sf(x) − q.
    for _ in 0..2 {
        let dens = pdf(x);
        if !(dens > 0.0) {
            break;
        }
        let r = (sf(x) - q) / dens;
        x += r / (1.0 + 0.5 * x * r);
    }
    x
}
