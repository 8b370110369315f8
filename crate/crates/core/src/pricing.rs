//! Caplets, Black implied volatility and Libor payments in arrears.

use rayon::prelude::*;

use crate::curve::YieldCurve;
use crate::distribution::{equivalent_lognormal_variance, LiborMixture};
use crate::error::{ModelError, Result};
use crate::normal;
use crate::solver::ModelSolution;
use crate::wide::WideReal;

/// Lowest and highest volatility searched by the implied-vol inversion.
pub const VOL_BRACKET: (f64, f64) = (1e-6, 10.0);

/// Undiscounted Black call `F N(d1) - K N(d2)` with total log-deviation
/// `stdev = sigma sqrt(t)`.
pub fn black_call(forward: f64, strike: f64, stdev: f64) -> f64 {
    if stdev <= 0.0 {
        return (forward - strike).max(0.0);
    }
    let d1 = ((forward / strike).ln() + 0.5 * stdev * stdev) / stdev;
    forward * normal::cdf(d1) - strike * normal::cdf(d1 - stdev)
}

/// Discounted Black caplet price per unit notional (no accrual factor).
pub fn black_price(forward: f64, strike: f64, vol: f64, expiry: f64, discount: f64) -> f64 {
    discount * black_call(forward, strike, vol * expiry.sqrt())
}

/// Black volatility reproducing `price`; zero at the intrinsic value.
pub fn black_implied_vol(
    price: f64,
    forward: f64,
    strike: f64,
    expiry: f64,
    discount: f64,
) -> Result<f64> {
    let intrinsic = discount * (forward - strike).max(0.0);
    let upper = discount * forward;
    let scale = discount * forward;
    let price_tol = 1e-12 * scale;
    if !(price.is_finite() && expiry > 0.0) || price < intrinsic - price_tol || price >= upper {
        return Err(ModelError::NoImpliedVol {
            price,
            lower: intrinsic,
            upper,
        });
    }
    let (mut lo, mut hi) = VOL_BRACKET;
    let f = |s: f64| black_price(forward, strike, s, expiry, discount) - price;
    if f(lo) >= 0.0 {
        // at or below the price of an almost deterministic forward
        if price - intrinsic <= price_tol {
            return Ok(0.0);
        }
        return Ok(lo);
    }
    if f(hi) < 0.0 {
        return Err(ModelError::NoImpliedVol {
            price,
            lower: black_price(forward, strike, lo, expiry, discount),
            upper: black_price(forward, strike, hi, expiry, discount),
        });
    }
    let sqrt_t = expiry.sqrt();
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = f(s);
        if v.abs() <= 1e-15 * scale || hi - lo <= 1e-15 * s {
            break;
        }
        if v > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        // Newton step, kept only while it stays inside the bracket
        let stdev = s * sqrt_t;
        let d1 = ((forward / strike).ln() + 0.5 * stdev * stdev) / stdev;
        let vega = discount * forward * normal::pdf(d1) * sqrt_t;
        let newton = s - v / vega;
        s = if vega > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapletQuote {
    pub horizon: usize,
    pub strike: f64,
    pub price: f64,
    pub forward: f64,
    /// `None` when the price admits no Black volatility (e.g. at `t = 0`).
    pub sigma_bs: Option<f64>,
}

/// Caplet on `L_i` paid at `t_{i+1}`: a weighted sum of Black prices, one per
/// mixture component, all with width `psi sqrt(t_i)`.
pub fn caplet_price(sol: &ModelSolution, i: usize, strike: f64) -> Result<f64> {
    if strike.is_nan() || strike <= 0.0 {
        return Err(ModelError::Domain(format!(
            "strike must be positive, got {strike}"
        )));
    }
    let curve = sol.curve();
    let discount = curve.discount(i + 1);
    let mix = match LiborMixture::new(sol, i) {
        Ok(m) => m,
        Err(ModelError::PointMass) => {
            return Ok(discount * (curve.forward_libor(i) - strike).max(0.0));
        }
        Err(e) => return Err(e),
    };
    let stdev = mix.width();
    let ln_k = strike.ln();
    let means = mix.component_means();
    let mut total = 0.0;
    for ((w, mean), log_mean) in mix.wide_weights().iter().zip(&means).zip(mix.log_means()) {
        // ln F_j = mu_j + stdev^2 / 2
        let d1 = (log_mean + 0.5 * stdev * stdev - ln_k) / stdev + 0.5 * stdev;
        let weighted_forward = (w * mean).to_f64();
        total += weighted_forward * normal::cdf(d1) - strike * w.to_f64() * normal::cdf(d1 - stdev);
    }
    Ok(discount * total)
}

pub fn caplet_quote(sol: &ModelSolution, i: usize, strike: f64) -> Result<CapletQuote> {
    let curve = sol.curve();
    let price = caplet_price(sol, i, strike)?;
    let forward = curve.forward_libor(i);
    let expiry = curve.tenor().date(i);
    let sigma_bs = black_implied_vol(price, forward, strike, expiry, curve.discount(i + 1)).ok();
    Ok(CapletQuote {
        horizon: i,
        strike,
        price,
        forward,
        sigma_bs,
    })
}

/// Quotes across a strike grid, priced in parallel.
pub fn smile(sol: &ModelSolution, i: usize, strikes: &[f64]) -> Result<Vec<CapletQuote>> {
    if strikes.iter().any(|&k| k.is_nan() || k <= 0.0) || strikes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ModelError::InvalidArgument(
            "strikes must be positive and strictly ascending".into(),
        ));
    }
    strikes
        .par_iter()
        .map(|&k| caplet_quote(sol, i, k))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrearsQuote {
    pub horizon: usize,
    pub price: f64,
    /// `e^{sigma_LN^2 t_i}`.
    pub convexity_factor: f64,
    pub sigma_ln: f64,
    /// Price if `L_i` were exactly log-normal with volatility `psi` in its
    /// forward measure.
    pub reference: f64,
    /// `E_n[L_i^2 \hat P_{i,i+1}] = \tilde L_i^2 e^{psi^2 t_i} f^(i)(e^{2 psi^2 t_i})`.
    pub quadratic_kernel: f64,
}

fn arrears_horizon(sol: &ModelSolution, i: usize) -> Result<()> {
    if i + 2 > sol.n() {
        return Err(ModelError::HorizonOutOfRange {
            horizon: i,
            first: sol.first_horizon(),
            last: sol.n() - 2,
        });
    }
    sol.coefficients(i).map(|_| ())
}

/// Arrears price from the generating function at `e^{psi^2 t}` and `e^{2 psi^2 t}`.
pub fn arrears_price_kernel_form(sol: &ModelSolution, i: usize) -> Result<WideReal> {
    arrears_horizon(sol, i)?;
    let p = sol.precision();
    let curve = sol.curve();
    let lt = wide_libor_tau(curve, i, p);
    let gf = sol.generating_function(i)?;
    let var =
        WideReal::from_f64(sol.psi(), p).square() * WideReal::from_f64(curve.tenor().date(i), p);
    let precision = |source| ModelError::Precision { horizon: i, source };
    let g1 = var.exp().map_err(precision)?;
    let g2 = var.mul_pow2(1).exp().map_err(precision)?;
    let f1 = gf.eval_real(&g1);
    let f2 = gf.eval_real(&g2);
    let rebased = &curve.rebased_wide(p)[i + 1];
    let convexity = rebased * &lt.square() * &g1 * &f2 / f1.square();
    Ok(WideReal::from_f64(curve.discount(i + 1), p) * (lt + convexity))
}

/// Arrears price through the equivalent log-normal variance.
pub fn arrears_price_variance_form(sol: &ModelSolution, i: usize) -> Result<WideReal> {
    arrears_horizon(sol, i)?;
    let p = sol.precision();
    let curve = sol.curve();
    let lt = wide_libor_tau(curve, i, p);
    let factor = equivalent_lognormal_variance(sol, i)?
        .exp()
        .map_err(|source| ModelError::Precision { horizon: i, source })?;
    Ok(WideReal::from_f64(curve.discount(i + 1), p) * &lt * (WideReal::one(p) + &lt * &factor))
}

fn wide_libor_tau(curve: &YieldCurve, i: usize, p: u32) -> WideReal {
    curve.forward_libor_wide(i, p) * WideReal::from_f64(curve.tenor().accrual(i), p)
}

pub fn arrears_price(sol: &ModelSolution, i: usize) -> Result<ArrearsQuote> {
    let price = arrears_price_kernel_form(sol, i)?;
    let curve = sol.curve();
    let p = sol.precision();
    let t = curve.tenor().date(i);
    let variance = equivalent_lognormal_variance(sol, i)?;
    let var = WideReal::from_f64(sol.psi(), p).square() * WideReal::from_f64(t, p);
    let gf = sol.generating_function(i)?;
    let precision = |source| ModelError::Precision { horizon: i, source };
    let kernel = sol.adjusted_libor(i)?.square()
        * var.exp().map_err(precision)?
        * gf.eval_real(&var.mul_pow2(1).exp().map_err(precision)?);
    Ok(ArrearsQuote {
        horizon: i,
        price: price.to_f64(),
        convexity_factor: variance.exp().map_err(precision)?.to_f64(),
        sigma_ln: if t > 0.0 {
            (variance.to_f64() / t).sqrt()
        } else {
            0.0
        },
        reference: arrears_reference_lognormal(curve, i, sol.psi()),
        quadratic_kernel: kernel.to_f64(),
    })
}

/// Arrears price when `L_i` is log-normal with volatility `psi` in its own
/// forward measure.
pub fn arrears_reference_lognormal(curve: &YieldCurve, i: usize, psi: f64) -> f64 {
    let lt = curve.forward_libor(i) * curve.tenor().accrual(i);
    let t = curve.tenor().date(i);
    curve.discount(i + 1) * lt * (1.0 + lt * (psi * psi * t).exp())
}
