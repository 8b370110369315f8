//! Standard normal distribution.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `N(x)` through the complementary error function, so both tails keep full
/// relative accuracy (absolute error below 1e-16).
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Density of a log-normal variable with `ln L ~ N(mu, sigma^2)`.
pub fn lognormal_pdf(l: f64, mu: f64, sigma: f64) -> f64 {
    let z = (l.ln() - mu) / sigma;
    pdf(z) / (sigma * l)
}
