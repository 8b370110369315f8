//! Libor law in its own forward measure.
//!
//! Changing from the terminal measure to `P_{i+1}` multiplies the Gaussian
//! density of the Markov state by `\hat P_{i,i+1}(x) / \hat P_{0,i+1}`, which
//! is a sum of exponentials in `x`. Each term shifts the Gaussian, so the
//! Libor density is a mixture of log-normals with a common width.

use num_complex::Complex64;

use crate::curve::YieldCurve;
use crate::error::{ModelError, Result};
use crate::normal;
use crate::quadrature::{integrate, Estimate, Tolerance};
use crate::solver::{solve_to_horizon, ModelSolution};
use crate::wide::WideReal;

/// Default cap on the order of reported moments.
pub const DEFAULT_MAX_MOMENT: usize = 8;

/// Half-width, in component widths, of the integration window.
const WINDOW: f64 = 12.0;

#[derive(Clone, Debug)]
pub struct LiborMixture {
    horizon: usize,
    psi: f64,
    weights: Vec<f64>,
    wide_weights: Vec<WideReal>,
    log_means: Vec<f64>,
    width: f64,
    adjusted_libor: WideReal,
    growth: WideReal,
}

impl LiborMixture {
    pub fn new(sol: &ModelSolution, i: usize) -> Result<Self> {
        let psi = sol.psi();
        if psi == 0.0 {
            return Err(ModelError::PointMass);
        }
        let t = sol.curve().tenor().date(i);
        if t == 0.0 {
            // L_0 is known today
            return Err(ModelError::PointMass);
        }
        let p = sol.precision();
        let coeffs = sol.coefficients(i)?;
        let norm = &sol.curve().rebased_wide(p)[i + 1];
        let wide_weights: Vec<WideReal> = coeffs.iter().map(|c| c / norm).collect();
        let lt = sol.adjusted_libor(i)?.clone();
        let ln_lt = lt.ln()?.to_f64();
        let var = psi * psi * t;
        let log_means = (0..coeffs.len())
            .map(|j| ln_lt + (j as f64 - 0.5) * var)
            .collect();
        let growth = (WideReal::from_f64(psi, p).square() * WideReal::from_f64(t, p)).exp()?;
        Ok(LiborMixture {
            horizon: i,
            psi,
            weights: wide_weights.iter().map(WideReal::to_f64).collect(),
            wide_weights,
            log_means,
            width: psi * t.sqrt(),
            adjusted_libor: lt,
            growth,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn wide_weights(&self) -> &[WideReal] {
        &self.wide_weights
    }

    /// `ln` of the log-normal location parameters.
    pub fn log_means(&self) -> &[f64] {
        &self.log_means
    }

    /// Common log-width `psi sqrt(t_i)`.
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Component means `\tilde L_i e^{j psi^2 t_i}`.
    pub fn component_means(&self) -> Vec<WideReal> {
        let mut out = Vec::with_capacity(self.len());
        let mut m = self.adjusted_libor.clone();
        for _ in 0..self.len() {
            out.push(m.clone());
            m = &m * &self.growth;
        }
        out
    }

    pub fn weight_sum(&self) -> WideReal {
        self.wide_weights.iter().cloned().sum()
    }

    /// Mixture mean at working precision.
    pub fn mean(&self) -> WideReal {
        self.wide_weights
            .iter()
            .zip(self.component_means())
            .map(|(w, m)| w * &m)
            .sum()
    }

    pub fn pdf(&self, l: f64) -> Result<f64> {
        if l.is_nan() || l <= 0.0 {
            return Err(ModelError::Domain(format!("density needs L > 0, got {l}")));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.log_means)
            .map(|(w, mu)| w * normal::lognormal_pdf(l, *mu, self.width))
            .sum())
    }

    /// `P(L <= k)` in the forward measure.
    pub fn cdf(&self, k: f64) -> f64 {
        if k <= 0.0 {
            return 0.0;
        }
        let lk = k.ln();
        self.weights
            .iter()
            .zip(&self.log_means)
            .map(|(w, mu)| w * normal::cdf((lk - mu) / self.width))
            .sum()
    }

    /// Log-Libor range carrying all but a negligible part of the mass.
    pub fn log_support(&self) -> (f64, f64) {
        let first = self.log_means[0];
        let last = *self.log_means.last().expect("non-empty");
        (first - WINDOW * self.width, last + WINDOW * self.width)
    }

    /// `E_{i+1}[g(L)]` by adaptive quadrature in `y = ln L`.
    pub fn expectation<T: crate::quadrature::Integrand>(
        &self,
        mut g: impl FnMut(f64) -> T,
        tol: Tolerance,
    ) -> Result<Estimate<T>> {
        let (lo, hi) = self.log_support();
        let pieces = 4 * self.len() + 8;
        integrate(
            |y| {
                let l = y.exp();
                let dens: f64 = self
                    .weights
                    .iter()
                    .zip(&self.log_means)
                    .map(|(w, mu)| w * normal::pdf((y - mu) / self.width))
                    .sum::<f64>()
                    / self.width;
                g(l) * dens
            },
            lo,
            hi,
            pieces,
            tol,
        )
    }

    /// `E_{i+1}[e^{iuL}]`, integrated directly since the moment series
    /// need not converge.
    pub fn characteristic_function(&self, u: f64) -> Result<Complex64> {
        let tol = Tolerance {
            abs: 1e-13,
            rel: 1e-11,
            max_intervals: 20_000,
        };
        let est = self.expectation(|l| Complex64::new(0.0, u * l).exp(), tol)?;
        Ok(est.value)
    }
}

/// Density through the Markov state: `L = \tilde L_i e^{psi x - psi^2 t_i / 2}`
/// inverted for `x_0(L)`, times the measure-change factor.
pub fn direct_density(sol: &ModelSolution, i: usize, l: f64) -> Result<f64> {
    if l.is_nan() || l <= 0.0 {
        return Err(ModelError::Domain(format!("density needs L > 0, got {l}")));
    }
    let psi = sol.psi();
    if psi == 0.0 {
        return Err(ModelError::PointMass);
    }
    let t = sol.curve().tenor().date(i);
    if t == 0.0 {
        return Err(ModelError::PointMass);
    }
    let lt = sol.adjusted_libor(i)?;
    let ln_ratio = (WideReal::from_f64(l, sol.precision()) / lt).ln()?.to_f64();
    let x0 = ln_ratio / psi + 0.5 * psi * t;
    let bond = sol.rebased_bond_wide(i, x0)?.ln()?.to_f64();
    let log_gauss = -0.5 * x0 * x0 / t - 0.5 * (2.0 * std::f64::consts::PI * t).ln();
    let log_value = log_gauss + bond - (psi * l * sol.curve().rebased(i + 1)).ln();
    Ok(log_value.exp())
}

/// `M_j = \tilde L_i^j e^{j(j-1) psi^2 t_i / 2} f^(i)(e^{j psi^2 t_i}) / \hat P_{0,i+1}`.
pub fn moment(sol: &ModelSolution, i: usize, j: u32) -> Result<WideReal> {
    let p = sol.precision();
    if j == 0 {
        return Ok(WideReal::one(p));
    }
    let precision = |source| ModelError::Precision { horizon: i, source };
    let var = WideReal::from_f64(sol.psi(), p).square()
        * WideReal::from_f64(sol.curve().tenor().date(i), p);
    let jw = WideReal::from_i64(j as i64, p);
    let gf = sol.generating_function(i)?;
    let kernel = gf.eval_real(&(&var * &jw).exp().map_err(precision)?);
    let convexity = (&var * &WideReal::from_i64((j as i64) * (j as i64 - 1), p))
        .mul_pow2(-1)
        .exp()
        .map_err(precision)?;
    let value =
        sol.adjusted_libor(i)?.powi(j) * convexity * kernel / &sol.curve().rebased_wide(p)[i + 1];
    value.check_range().map_err(precision)
}

#[derive(Clone, Debug)]
pub struct MomentReport {
    pub horizon: usize,
    pub moments: Vec<WideReal>,
    pub sigma_ln: f64,
}

pub fn moment_report(sol: &ModelSolution, i: usize, j_max: u32) -> Result<MomentReport> {
    let moments = (0..=j_max)
        .map(|j| moment(sol, i, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentReport {
        horizon: i,
        moments,
        sigma_ln: equivalent_lognormal_vol(sol, i)?,
    })
}

/// `sigma_LN^2 t_i = ln(M_2 / M_1^2)` at working precision.
pub fn equivalent_lognormal_variance(sol: &ModelSolution, i: usize) -> Result<WideReal> {
    let m1 = moment(sol, i, 1)?;
    let m2 = moment(sol, i, 2)?;
    let v = (m2 / m1.square()).ln()?;
    // rounding can leave a tiny negative value at zero volatility
    Ok(if v.is_negative() {
        WideReal::zero(v.precision())
    } else {
        v
    })
}

pub fn equivalent_lognormal_vol(sol: &ModelSolution, i: usize) -> Result<f64> {
    let t = sol.curve().tenor().date(i);
    if t == 0.0 {
        return Err(ModelError::Domain("no volatility at t = 0".into()));
    }
    Ok((equivalent_lognormal_variance(sol, i)?.to_f64() / t).sqrt())
}

/// Upper end of the Libor support in the large-volatility limit.
pub fn lmax(curve: &YieldCurve, i: usize) -> Result<f64> {
    let n = curve.n();
    if i + 2 > n {
        return Err(ModelError::HorizonOutOfRange {
            horizon: i,
            first: 0,
            last: n.saturating_sub(2),
        });
    }
    let gap = curve.rebased(i) - curve.rebased(i + 1);
    let next_gap = curve.rebased(i + 1) - curve.rebased(i + 2);
    Ok(gap / (next_gap * curve.tenor().accrual(i)))
}

/// `sigma_LN` on a grid of volatilities, solved in parallel.
pub fn sigma_ln_curve(
    curve: &YieldCurve,
    i: usize,
    psis: &[f64],
    precision_bits: u32,
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    psis.par_iter()
        .map(|&psi| {
            let sol = solve_to_horizon(curve, psi, precision_bits, i)?;
            if psi == 0.0 {
                return Ok(0.0);
            }
            equivalent_lognormal_vol(&sol, i)
        })
        .collect()
}

/// Vertex of the parabola through three equally spaced samples.
fn parabola_vertex(x: f64, h: f64, a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom == 0.0 {
        x
    } else {
        x + 0.5 * h * (a - c) / denom
    }
}

/// The two turning points of a sampled `sigma_LN(psi)` curve on a uniform
/// grid: the onset of the steep rise (largest upward curvature before the
/// peak) and the first local maximum. `None` when there is no interior peak.
pub fn sigma_ln_turning_points(psis: &[f64], sigmas: &[f64]) -> Option<(f64, f64)> {
    if psis.len() < 5 {
        return None;
    }
    let h = psis[1] - psis[0];
    let peak_k =
        (1..sigmas.len() - 1).find(|&k| sigmas[k] > sigmas[k - 1] && sigmas[k] >= sigmas[k + 1])?;
    let peak = parabola_vertex(
        psis[peak_k],
        h,
        sigmas[peak_k - 1],
        sigmas[peak_k],
        sigmas[peak_k + 1],
    );

    let curvature: Vec<f64> = (1..peak_k)
        .map(|k| sigmas[k - 1] - 2.0 * sigmas[k] + sigmas[k + 1])
        .collect();
    let (m, _) = curvature
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let onset = if m == 0 || m + 1 == curvature.len() {
        psis[m + 1]
    } else {
        parabola_vertex(
            psis[m + 1],
            h,
            curvature[m - 1],
            curvature[m],
            curvature[m + 1],
        )
    };
    Some((onset, peak))
}
