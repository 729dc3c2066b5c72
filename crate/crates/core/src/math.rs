//! Standard normal helpers and small numeric utilities.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use std::sync::OnceLock;

fn std_normal() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(|| Normal::new(0.0, 1.0).expect("unit normal"))
}

pub fn norm_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn norm_pdf(x: f64) -> f64 {
    std_normal().pdf(x)
}

/// Inverse of the standard normal cdf. `p` must lie in (0, 1).
pub fn norm_ppf(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Neumaier-compensated sum over a fixed iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[inline]
pub fn pos(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
pub fn neg(x: f64) -> f64 {
    (-x).max(0.0)
}

/// Basis points per unit.
pub const BP: f64 = 1e4;
