//! Univariate truncated standard normal draws.
//!
//! Inverse-CDF sampling, evaluated in the lower tail for numerical accuracy,
//! with Robert's (1995) rejection samplers where the CDF underflows.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use statrs::function::erf::{erfc, erfc_inv};

use std::f64::consts::SQRT_2;

/// Below this tail mass the inverse CDF loses too much precision.
const TAIL_MASS: f64 = 1e-12;

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Draw from `N(0, 1)` restricted to `[lo, hi]`. Either bound may be infinite.
pub fn truncated_std_normal<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
    if lo == hi {
        return lo;
    }
    if lo >= 0.0 {
        // Reflect the upper tail into the lower one.
        return -truncated_std_normal(-hi, -lo, rng);
    }
    if hi > 0.0 {
        // The interval straddles zero, so the CDF is well conditioned.
        return inverse_cdf(lo, hi, rng);
    }
    // Entire interval in the lower tail.
    if std_normal_cdf(hi) > TAIL_MASS {
        inverse_cdf(lo, hi, rng)
    } else {
        -robert_tail(-hi, -lo, rng)
    }
}

fn inverse_cdf<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    let (p_lo, p_hi) = (std_normal_cdf(lo), std_normal_cdf(hi));
    let u: f64 = rng.random();
    let p = p_lo + u * (p_hi - p_lo);
    let x = std_normal_quantile(p.max(f64::MIN_POSITIVE));
    x.clamp(lo, hi)
}

/// `N(0, 1)` restricted to `[a, b]` with `0 <= a < b`, `a` far in the tail.
fn robert_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    if b - a < 1.0 / alpha {
        // Narrow band: uniform proposal.
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            let u: f64 = rng.random();
            if u.ln() <= 0.5 * (a * a - z * z) {
                return z;
            }
        }
    }
    let exp = Exp::new(alpha).expect("positive rate");
    loop {
        let z = a + exp.sample(rng);
        if z > b {
            continue;
        }
        let u: f64 = rng.random();
        if u.ln() <= -0.5 * (z - alpha) * (z - alpha) {
            return z;
        }
    }
}

/// Draw from `N(mean, sd²)` restricted to `(0, ∞)`.
pub fn positive_normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    let z = truncated_std_normal(-mean / sd, f64::INFINITY, rng);
    (mean + sd * z).max(f64::MIN_POSITIVE)
}
