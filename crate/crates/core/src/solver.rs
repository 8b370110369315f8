//! Exact solution of the model by backward recursion.
//!
//! At horizon `i` the one-step rebased bond is
//! `\hat P_{i,i+1}(x) = sum_j c_j^(i) exp(j psi x - (j psi)^2 t_i / 2)`
//! and the Libor is `L_i(x) = \tilde L_i exp(psi x - psi^2 t_i / 2)`.
//! Starting from `c^(n-1) = (1)` the coefficients obey
//! `c_j^(i) = c_j^(i+1) + \tilde L_{i+1} tau_{i+1} c_{j-1}^(i+1) e^{(j-1) psi^2 t_{i+1}}`
//! and `\tilde L_i` follows from the FRA price once
//! `N_i = f^(i)(e^{psi^2 t_i})` is known. Every term is positive, so the
//! recursion never cancels; extended precision is needed only because the
//! coefficients span many orders of magnitude at high volatility.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curve::{ModelParams, TenorStructure, YieldCurve};
use crate::error::{ModelError, Result};
use crate::wide::{WideComplex, WideError, WideReal};

/// Polynomial `f^(i)(x) = sum_j c_j^(i) x^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratingFunction {
    horizon: usize,
    coeffs: Vec<WideReal>,
}

impl GeneratingFunction {
    pub fn new(horizon: usize, coeffs: Vec<WideReal>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(ModelError::InvalidArgument(
                "a generating function needs at least one coefficient".into(),
            ));
        }
        Ok(GeneratingFunction { horizon, coeffs })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coefficients(&self) -> &[WideReal] {
        &self.coeffs
    }

    pub fn precision(&self) -> u32 {
        self.coeffs[0].precision()
    }

    pub fn eval_real(&self, x: &WideReal) -> WideReal {
        let mut acc = self.coeffs.last().expect("non-empty").clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = &(&acc * x) + c;
        }
        acc
    }

    pub fn eval(&self, z: &WideComplex) -> WideComplex {
        let mut acc = WideComplex::from_real(self.coeffs.last().expect("non-empty").clone());
        for c in self.coeffs.iter().rev().skip(1) {
            let prod = &acc * z;
            acc = WideComplex::new(&prod.re + c, prod.im);
        }
        acc
    }

    /// Evaluates in extended precision and rounds the result to double.
    pub fn eval_c64(&self, z: Complex64) -> Complex64 {
        self.eval(&WideComplex::from_c64(z, self.precision()))
            .to_c64()
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.eval_real(&WideReal::from_f64(x, self.precision()))
            .to_f64()
    }

    /// Derivative polynomial coefficients `j c_j`, `j >= 1`.
    pub fn derivative(&self) -> Vec<WideReal> {
        let p = self.precision();
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, c)| c * &WideReal::from_i64(j as i64, p))
            .collect()
    }
}

/// Full or partial (`i >= first_horizon`) solution for one volatility.
#[derive(Clone, Debug)]
pub struct ModelSolution {
    params: ModelParams,
    curve: YieldCurve,
    first: usize,
    coeffs: Vec<Vec<WideReal>>,
    adjusted_libors: Vec<WideReal>,
    normalizations: Vec<WideReal>,
}

/// Solves all horizons `0..n`.
pub fn solve(curve: &YieldCurve, psi: f64, precision_bits: u32) -> Result<ModelSolution> {
    solve_to_horizon(curve, psi, precision_bits, 0)
}

/// Runs the backward recursion only down to `first_horizon`; the horizons
/// below it are never needed for quantities at `i >= first_horizon`.
pub fn solve_to_horizon(
    curve: &YieldCurve,
    psi: f64,
    precision_bits: u32,
    first_horizon: usize,
) -> Result<ModelSolution> {
    let params = ModelParams::new(psi, curve.n(), precision_bits)?;
    let n = params.n;
    if first_horizon >= n {
        return Err(ModelError::HorizonOutOfRange {
            horizon: first_horizon,
            first: 0,
            last: n - 1,
        });
    }
    let p = precision_bits;
    let tenor = curve.tenor();
    let rebased = curve.rebased_wide(p);
    let psi2 = WideReal::from_f64(psi, p).square();
    let one = WideReal::one(p);
    let precision_err =
        |horizon: usize| move |source: WideError| ModelError::Precision { horizon, source };

    let count = n - first_horizon;
    let mut coeffs: Vec<Vec<WideReal>> = vec![Vec::new(); count];
    let mut libors: Vec<WideReal> = vec![WideReal::zero(p); count];
    let mut norms: Vec<WideReal> = vec![WideReal::zero(p); count];

    let tau_last = WideReal::from_f64(tenor.accrual(n - 1), p);
    coeffs[count - 1] = vec![one.clone()];
    libors[count - 1] = &(&rebased[n - 1] - &one) / &tau_last;
    norms[count - 1] = one.clone();

    // e^{psi^2 t_{i+1}}, carried from one step to the next
    let mut growth_next = (&psi2 * &WideReal::from_f64(tenor.date(n - 1), p))
        .exp()
        .map_err(precision_err(n - 1))?;

    for i in (first_horizon..n - 1).rev() {
        let k = i - first_horizon;
        let prev = &coeffs[k + 1];
        let a = &libors[k + 1] * &WideReal::from_f64(tenor.accrual(i + 1), p);
        let mut next = Vec::with_capacity(n - i);
        next.push(prev[0].clone());
        let mut power = one.clone();
        for j in 1..n - i {
            let shifted = &(&a * &prev[j - 1]) * &power;
            let v = if j < prev.len() {
                &prev[j] + &shifted
            } else {
                shifted
            };
            next.push(v);
            if j + 1 < n - i {
                power = &power * &growth_next;
            }
        }
        let lead = next.last().expect("non-empty").clone();
        lead.check_range().map_err(precision_err(i))?;

        let growth = (&psi2 * &WideReal::from_f64(tenor.date(i), p))
            .exp()
            .map_err(precision_err(i))?;
        let gf = GeneratingFunction {
            horizon: i,
            coeffs: next,
        };
        let norm = gf
            .eval_real(&growth)
            .check_range()
            .map_err(precision_err(i))?;
        let tau = WideReal::from_f64(tenor.accrual(i), p);
        let libor = (&(&rebased[i] - &rebased[i + 1]) / &(&norm * &tau))
            .check_range()
            .map_err(precision_err(i))?;
        coeffs[k] = gf.coeffs;
        norms[k] = norm;
        libors[k] = libor;
        growth_next = growth;
    }

    Ok(ModelSolution {
        params,
        curve: curve.clone(),
        first: first_horizon,
        coeffs,
        adjusted_libors: libors,
        normalizations: norms,
    })
}

impl ModelSolution {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn curve(&self) -> &YieldCurve {
        &self.curve
    }

    pub fn psi(&self) -> f64 {
        self.params.psi
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn precision(&self) -> u32 {
        self.params.precision_bits
    }

    /// Smallest horizon carried by this solution.
    pub fn first_horizon(&self) -> usize {
        self.first
    }

    fn slot(&self, i: usize) -> Result<usize> {
        if i < self.first || i >= self.params.n {
            return Err(ModelError::HorizonOutOfRange {
                horizon: i,
                first: self.first,
                last: self.params.n - 1,
            });
        }
        Ok(i - self.first)
    }

    pub fn coefficients(&self, i: usize) -> Result<&[WideReal]> {
        Ok(&self.coeffs[self.slot(i)?])
    }

    pub fn adjusted_libor(&self, i: usize) -> Result<&WideReal> {
        Ok(&self.adjusted_libors[self.slot(i)?])
    }

    pub fn normalization(&self, i: usize) -> Result<&WideReal> {
        Ok(&self.normalizations[self.slot(i)?])
    }

    pub fn generating_function(&self, i: usize) -> Result<GeneratingFunction> {
        Ok(GeneratingFunction {
            horizon: i,
            coeffs: self.coefficients(i)?.to_vec(),
        })
    }

    /// `psi^2 t_i` at working precision.
    pub(crate) fn wide_variance(&self, i: usize) -> WideReal {
        let p = self.precision();
        WideReal::from_f64(self.psi(), p).square()
            * WideReal::from_f64(self.curve.tenor().date(i), p)
    }

    /// One-step rebased bond `\hat P_{i,i+1}(x)` at Markov state `x`.
    pub fn rebased_bond_wide(&self, i: usize, x: f64) -> Result<WideReal> {
        let c = self.coefficients(i)?;
        let p = self.precision();
        let psi = WideReal::from_f64(self.psi(), p);
        let var = self.wide_variance(i);
        // term_j = c_j y^j g_j with y = e^{psi x}, g_j = e^{-j^2 var / 2}
        let y = (&psi * &WideReal::from_f64(x, p)).exp()?;
        let half_var = var.mul_pow2(-1);
        let step = (-&half_var).exp()?;
        let step2 = (-&var).exp()?;
        let mut sum = c[0].clone();
        let mut yj = WideReal::one(p);
        let mut g = WideReal::one(p);
        let mut ratio = step.clone();
        for cj in &c[1..] {
            yj = &yj * &y;
            g = &g * &ratio;
            ratio = &ratio * &step2;
            sum = &sum + &(&(cj * &yj) * &g);
        }
        Ok(sum)
    }

    pub fn rebased_bond(&self, i: usize, x: f64) -> Result<f64> {
        Ok(self.rebased_bond_wide(i, x)?.to_f64())
    }

    /// `f^(i)(e^{psi phi t_i})`, the terminal-measure expectation of
    /// `\hat P_{i,i+1}` weighted by a log-normal factor of volatility `phi`.
    pub fn convexity_expectation(&self, i: usize, phi: f64) -> Result<WideReal> {
        let gf = self.generating_function(i)?;
        let p = self.precision();
        let arg = WideReal::from_f64(self.psi(), p)
            * WideReal::from_f64(phi, p)
            * WideReal::from_f64(self.curve.tenor().date(i), p);
        let x = arg
            .exp()
            .map_err(|source| ModelError::Precision { horizon: i, source })?;
        Ok(gf.eval_real(&x))
    }

    /// `|sum_j c_j^(i) - \hat P_{0,i+1}| / \hat P_{0,i+1}`.
    pub fn sum_rule_residual(&self, i: usize) -> Result<WideReal> {
        let sum: WideReal = self.coefficients(i)?.iter().cloned().sum();
        let target = &self.curve.rebased_wide(self.precision())[i + 1];
        Ok((&(&sum - target) / target).abs())
    }

    /// Relative gap between `\tilde L_i tau_i N_i` and `\hat P_{0,i} - \hat P_{0,i+1}`.
    pub fn fra_residual(&self, i: usize) -> Result<WideReal> {
        let p = self.precision();
        let rebased = self.curve.rebased_wide(p);
        let target = &rebased[i] - &rebased[i + 1];
        let value = self.adjusted_libor(i)?
            * self.normalization(i)?
            * WideReal::from_f64(self.curve.tenor().accrual(i), p);
        Ok((&(&value - &target) / &target).abs())
    }

    pub fn to_json(&self) -> SolutionJson {
        let digits = WideReal::round_trip_digits(self.precision());
        let s = |v: &WideReal| v.to_sci_string(digits);
        SolutionJson {
            psi: self.psi(),
            precision_bits: self.precision(),
            dates: self.curve.tenor().dates().to_vec(),
            discount_factors: self.curve.discount_factors().to_vec(),
            horizons: (self.first..self.n())
                .map(|i| {
                    let k = i - self.first;
                    HorizonJson {
                        i,
                        coefficients: self.coeffs[k].iter().map(s).collect(),
                        adjusted_libor: s(&self.adjusted_libors[k]),
                        normalization: s(&self.normalizations[k]),
                    }
                })
                .collect(),
        }
    }

    pub fn from_json(doc: &SolutionJson) -> Result<Self> {
        let tenor = TenorStructure::from_dates(doc.dates.clone())?;
        let curve = YieldCurve::from_discount_factors(tenor, doc.discount_factors.clone())?;
        let params = ModelParams::new(doc.psi, curve.n(), doc.precision_bits)?;
        let n = params.n;
        let p = doc.precision_bits;
        let first = doc
            .horizons
            .first()
            .map(|h| h.i)
            .ok_or_else(|| ModelError::Parse("solution has no horizons".into()))?;
        let expected: Vec<usize> = (first..n).collect();
        let found: Vec<usize> = doc.horizons.iter().map(|h| h.i).collect();
        if expected != found {
            return Err(ModelError::Parse(format!(
                "horizons must run contiguously from {first} to {}",
                n - 1
            )));
        }
        let parse = |s: &String| WideReal::parse_decimal(s, p).map_err(ModelError::from);
        let mut coeffs = Vec::with_capacity(n - first);
        let mut libors = Vec::with_capacity(n - first);
        let mut norms = Vec::with_capacity(n - first);
        for h in &doc.horizons {
            if h.coefficients.len() != n - h.i {
                return Err(ModelError::Parse(format!(
                    "horizon {} needs {} coefficients, found {}",
                    h.i,
                    n - h.i,
                    h.coefficients.len()
                )));
            }
            coeffs.push(
                h.coefficients
                    .iter()
                    .map(parse)
                    .collect::<Result<Vec<_>>>()?,
            );
            libors.push(parse(&h.adjusted_libor)?);
            norms.push(parse(&h.normalization)?);
        }
        Ok(ModelSolution {
            params,
            curve,
            first,
            coeffs,
            adjusted_libors: libors,
            normalizations: norms,
        })
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &self.to_json())?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let doc: SolutionJson = serde_json::from_reader(std::io::BufReader::new(file))?;
        Self::from_json(&doc)
    }
}

/// Serialized solution. Wide values are decimal strings with enough digits
/// to reload bit-exactly at `precision_bits`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionJson {
    pub psi: f64,
    pub precision_bits: u32,
    pub dates: Vec<f64>,
    pub discount_factors: Vec<f64>,
    pub horizons: Vec<HorizonJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonJson {
    pub i: usize,
    pub coefficients: Vec<String>,
    pub adjusted_libor: String,
    pub normalization: String,
}

/// Zero- and infinite-volatility generating functions at one horizon.
#[derive(Clone, Debug)]
pub struct Limits {
    pub zero_vol: GeneratingFunction,
    pub infinite_vol: GeneratingFunction,
    curve: YieldCurve,
}

pub fn limits(curve: &YieldCurve, i: usize, precision_bits: u32) -> Result<Limits> {
    let n = curve.n();
    if i >= n {
        return Err(ModelError::HorizonOutOfRange {
            horizon: i,
            first: 0,
            last: n - 1,
        });
    }
    let p = precision_bits;
    let one = WideReal::one(p);
    let rebased = curve.rebased_wide(p);

    // prod_{j>i} (1 + L_j tau_j x)
    let mut zero = vec![one.clone()];
    for j in i + 1..n {
        let a = curve.forward_libor_wide(j, p) * WideReal::from_f64(curve.tenor().accrual(j), p);
        let mut next = zero.clone();
        next.push(WideReal::zero(p));
        for (k, c) in zero.iter().enumerate() {
            next[k + 1] = &next[k + 1] + &(c * &a);
        }
        zero = next;
    }

    let mut infinite = vec![one];
    for k in 1..n - i {
        infinite.push(&rebased[n - k] - &rebased[n - k + 1]);
    }

    Ok(Limits {
        zero_vol: GeneratingFunction {
            horizon: i,
            coeffs: zero,
        },
        infinite_vol: GeneratingFunction {
            horizon: i,
            coeffs: infinite,
        },
        curve: curve.clone(),
    })
}

impl Limits {
    /// Large-volatility form of `\tilde L_i`: only the leading term of
    /// `f^(i)` survives in `N_i`.
    pub fn asymptotic_adjusted_libor(&self, psi: f64) -> Result<WideReal> {
        let i = self.infinite_vol.horizon;
        let gf = &self.infinite_vol;
        let p = gf.precision();
        let rebased = self.curve.rebased_wide(p);
        let tenor = self.curve.tenor();
        let lead = gf.coefficients().last().expect("non-empty");
        let exponent = -(WideReal::from_f64(psi, p).square()
            * WideReal::from_f64(tenor.date(i), p)
            * WideReal::from_i64(gf.degree() as i64, p));
        let decay = exponent
            .exp()
            .map_err(|source| ModelError::Precision { horizon: i, source })?;
        Ok(
            &(&rebased[i] - &rebased[i + 1]) / &(lead * &WideReal::from_f64(tenor.accrual(i), p))
                * decay,
        )
    }
}

/// `L_i^fwd e^{mu_i t_i}` with the drift frozen at today's forwards.
pub fn frozen_drift_libors(curve: &YieldCurve, psi: f64) -> Vec<f64> {
    let n = curve.n();
    let tenor = curve.tenor();
    let fwd = curve.forward_libors();
    let mut out = vec![0.0; n];
    let mut drift_sum = 0.0;
    for i in (0..n).rev() {
        let mu = -psi * psi * drift_sum;
        out[i] = fwd[i] * (mu * tenor.date(i)).exp();
        let tau = tenor.accrual(i);
        drift_sum += tau * fwd[i] / (1.0 + fwd[i] * tau);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> YieldCurve {
        YieldCurve::flat(0.05, TenorStructure::uniform(40, 0.25).unwrap()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn zero_vol_reproduces_forwards() {
        let c = fixture();
        let sol = solve(&c, 0.0, 256).unwrap();
        for (i, fwd) in c.forward_libors().iter().enumerate() {
            assert!(rel(sol.adjusted_libor(i).unwrap().to_f64(), *fwd) < 1e-14);
        }
    }

    #[test]
    fn last_horizon_is_trivial() {
        let c = fixture();
        let sol = solve(&c, 0.3, 256).unwrap();
        assert_eq!(sol.coefficients(39).unwrap(), &[WideReal::one(256)]);
        assert!(
            rel(
                sol.adjusted_libor(39).unwrap().to_f64(),
                c.forward_libor(39)
            ) < 1e-14
        );
        assert_eq!(sol.generating_function(39).unwrap().degree(), 0);
        assert_eq!(sol.generating_function(30).unwrap().degree(), 9);
        assert!(matches!(
            sol.coefficients(40),
            Err(ModelError::HorizonOutOfRange { .. })
        ));
    }

    #[test]
    fn three_period_table_matches_hand_expansion() {
        // n = 3 by hand: P_{1,2} = 1 + L_2 tau, P_{0,1} = E[(1 + L_1 tau)(1 + L_2 tau)]
        let tau = 0.5;
        let psi: f64 = 0.2;
        let c = YieldCurve::flat(0.04, TenorStructure::uniform(3, tau).unwrap()).unwrap();
        let ph: Vec<f64> = (0..=3).map(|k| c.rebased(k)).collect();
        let t1 = tau;
        let l2 = (ph[2] - 1.0) / tau;
        let n1 = 1.0 + l2 * tau * (psi * psi * t1).exp();
        let l1 = (ph[1] - ph[2]) / (n1 * tau);
        let table0 = [
            1.0,
            l1 * tau + l2 * tau,
            l1 * l2 * tau * tau * (psi * psi * t1).exp(),
        ];
        let n0 = table0.iter().sum::<f64>();
        let l0 = (ph[0] - ph[1]) / (n0 * tau);

        let sol = solve(&c, psi, 256).unwrap();
        let got0: Vec<f64> = sol
            .coefficients(0)
            .unwrap()
            .iter()
            .map(|v| v.to_f64())
            .collect();
        for (g, e) in got0.iter().zip(table0) {
            assert!(rel(*g, e) < 1e-14, "{g} vs {e}");
        }
        assert!(rel(sol.coefficients(1).unwrap()[1].to_f64(), l2 * tau) < 1e-14);
        assert!(rel(sol.adjusted_libor(2).unwrap().to_f64(), l2) < 1e-14);
        assert!(rel(sol.adjusted_libor(1).unwrap().to_f64(), l1) < 1e-14);
        assert!(rel(sol.adjusted_libor(0).unwrap().to_f64(), l0) < 1e-14);
        assert!(rel(sol.normalization(1).unwrap().to_f64(), n1) < 1e-14);
    }

    #[test]
    fn sum_rule_and_fra_identity() {
        let c = fixture();
        for psi in [0.1, 0.3, 0.5, 1.0] {
            let sol = solve(&c, psi, 256).unwrap();
            for i in 0..40 {
                assert!(
                    sol.sum_rule_residual(i).unwrap().to_f64() < 1e-40,
                    "psi {psi} i {i}"
                );
                assert!(sol.fra_residual(i).unwrap().to_f64() < 1e-40);
                assert_eq!(sol.coefficients(i).unwrap()[0], WideReal::one(256));
                assert!(sol.coefficients(i).unwrap().iter().all(|v| v.is_positive()));
                assert!(sol.adjusted_libor(i).unwrap().is_positive());
                let floor = &c.rebased_wide(256)[i + 1];
                assert!(
                    sol.normalization(i).unwrap()
                        >= &(floor * &WideReal::from_f64(1.0 - 1e-60, 256))
                );
            }
        }
    }

    #[test]
    fn partial_solve_agrees_with_full() {
        let c = fixture();
        let full = solve(&c, 0.35, 256).unwrap();
        let part = solve_to_horizon(&c, 0.35, 256, 30).unwrap();
        for i in 30..40 {
            assert_eq!(full.coefficients(i).unwrap(), part.coefficients(i).unwrap());
            assert_eq!(
                full.adjusted_libor(i).unwrap(),
                part.adjusted_libor(i).unwrap()
            );
        }
        assert!(part.coefficients(29).is_err());
    }

    #[test]
    fn normalization_is_monotone_in_psi() {
        let c = fixture();
        for i in [0usize, 10, 30, 38] {
            let mut prev = 0.0;
            for k in 0..=40 {
                let psi = k as f64 * 0.025;
                let sol = solve_to_horizon(&c, psi, 256, i).unwrap();
                let ni = sol.normalization(i).unwrap().to_f64();
                assert!(ni >= prev * (1.0 - 1e-15), "i {i} psi {psi}");
                prev = ni;
            }
        }
    }

    #[test]
    fn evaluation_at_special_points() {
        let c = fixture();
        let sol = solve(&c, 0.25, 256).unwrap();
        for i in [0usize, 20, 30, 39] {
            let gf = sol.generating_function(i).unwrap();
            assert_eq!(gf.eval_real(&WideReal::zero(256)), WideReal::one(256));
            let at_one = gf.eval_real(&WideReal::one(256)).to_f64();
            assert!(rel(at_one, c.rebased(i + 1)) < 1e-15);
            let growth = sol.wide_variance(i).exp().unwrap();
            assert_eq!(&gf.eval_real(&growth), sol.normalization(i).unwrap());
            let z = gf.eval(&WideComplex::from_real(growth));
            assert!(z.im.is_zero());
            assert_eq!(&z.re, sol.normalization(i).unwrap());
        }
    }

    #[test]
    fn convexity_expectation_kernels() {
        let c = fixture();
        let psi = 0.3;
        let sol = solve(&c, psi, 256).unwrap();
        let i = 30;
        assert!(
            rel(
                sol.convexity_expectation(i, 0.0).unwrap().to_f64(),
                c.rebased(31)
            ) < 1e-15
        );
        assert_eq!(
            &sol.convexity_expectation(i, psi).unwrap(),
            sol.normalization(i).unwrap()
        );
        let gf = sol.generating_function(i).unwrap();
        let x2 = sol.wide_variance(i).mul_pow2(1).exp().unwrap();
        let m2 = sol.convexity_expectation(i, 2.0 * psi).unwrap();
        assert!(((&m2 - &gf.eval_real(&x2)) / &m2).abs().to_f64() < 1e-60);
    }

    #[test]
    fn rebased_bond_values() {
        let c = fixture();
        let flat = solve(&c, 0.0, 256).unwrap();
        for x in [-3.0, 0.0, 2.5] {
            assert!(rel(flat.rebased_bond(20, x).unwrap(), c.rebased(21)) < 1e-15);
        }
        let sol = solve(&c, 0.2, 256).unwrap();
        assert_eq!(sol.rebased_bond(39, 1.7).unwrap(), 1.0);

        let t = 7.5;
        let coeffs: Vec<f64> = sol
            .coefficients(30)
            .unwrap()
            .iter()
            .map(|v| v.to_f64())
            .collect();
        for x in [0.0, -1.0, 1.3] {
            let naive: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(j, cj)| {
                    let jp = j as f64 * 0.2;
                    cj * (jp * x - 0.5 * jp * jp * t).exp()
                })
                .sum();
            assert!(rel(sol.rebased_bond(30, x).unwrap(), naive) < 1e-13);
        }
    }

    #[test]
    fn limits_structure() {
        let c = fixture();
        for i in [0usize, 30, 39] {
            let lim = limits(&c, i, 256).unwrap();
            let at_one = lim.zero_vol.eval_real(&WideReal::one(256)).to_f64();
            assert!(rel(at_one, c.rebased(i + 1)) < 1e-15);
            let at_one = lim.infinite_vol.eval_real(&WideReal::one(256)).to_f64();
            assert!(rel(at_one, c.rebased(i + 1)) < 1e-15);
            assert_eq!(lim.zero_vol.degree(), 39 - i);
            assert_eq!(lim.infinite_vol.degree(), 39 - i);
        }
        let lim = limits(&c, 30, 256).unwrap();
        let lead = lim.infinite_vol.coefficients().last().unwrap().to_f64();
        assert!(rel(lead, c.rebased(31) - c.rebased(32)) < 1e-12);

        // the zero-vol limit is the psi = 0 solution
        let sol0 = solve(&c, 0.0, 256).unwrap();
        for (a, b) in lim
            .zero_vol
            .coefficients()
            .iter()
            .zip(sol0.coefficients(30).unwrap())
        {
            assert!(((a - b) / b).abs().to_f64() < 1e-60);
        }
    }

    #[test]
    fn large_vol_asymptotics() {
        let c = fixture();
        let sol = solve(&c, 1.0, 256).unwrap();
        let lim = limits(&c, 30, 256).unwrap();
        let ratio = (sol.adjusted_libor(30).unwrap()
            / &lim.asymptotic_adjusted_libor(1.0).unwrap())
            .to_f64();
        assert!((ratio - 1.0).abs() < 0.2, "{ratio}");
        // the coefficients themselves approach the infinite-vol table
        let sol = solve(&c, 2.0, 256).unwrap();
        let gf = sol.generating_function(30).unwrap();
        let scaled = gf.coefficients().last().unwrap().to_f64();
        let lead = lim.infinite_vol.coefficients().last().unwrap().to_f64();
        assert!(scaled > 0.0 && lead > 0.0);
    }

    #[test]
    fn frozen_drift_reference() {
        let c = fixture();
        let fwd = c.forward_libors();
        let fd0 = frozen_drift_libors(&c, 0.0);
        assert!(fd0.iter().zip(&fwd).all(|(a, b)| a == b));
        let fd = frozen_drift_libors(&c, 0.3);
        assert_eq!(fd[39], fwd[39]);
        assert_eq!(fd[0], fwd[0]);
        assert!(fd[1..39].iter().zip(&fwd[1..]).all(|(a, b)| a < b));

        let mut gaps = Vec::new();
        for psi in [0.05, 0.1] {
            let sol = solve(&c, psi, 256).unwrap();
            let exact = sol.adjusted_libor(30).unwrap().to_f64();
            gaps.push(rel(frozen_drift_libors(&c, psi)[30], exact));
        }
        // quartic scaling: halving psi shrinks the gap about sixteenfold
        let order = (gaps[1] / gaps[0]).log2();
        assert!((order - 4.0).abs() < 0.3, "gaps {gaps:?}");
    }

    #[test]
    fn precision_exhaustion_names_the_horizon() {
        let c = fixture();
        match solve(&c, 4000.0, 256) {
            Err(ModelError::Precision { horizon, .. }) => assert!(horizon < 40),
            other => panic!("expected precision error, got {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let c = fixture();
        let sol = solve_to_horizon(&c, 0.33, 256, 25).unwrap();
        let doc = sol.to_json();
        let text = serde_json::to_string(&doc).unwrap();
        let back = ModelSolution::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.first_horizon(), 25);
        assert_eq!(back.curve(), sol.curve());
        for i in 25..40 {
            assert_eq!(back.coefficients(i).unwrap(), sol.coefficients(i).unwrap());
            assert_eq!(
                back.adjusted_libor(i).unwrap(),
                sol.adjusted_libor(i).unwrap()
            );
            assert_eq!(
                back.normalization(i).unwrap(),
                sol.normalization(i).unwrap()
            );
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sol.json");
        sol.save_json(&path).unwrap();
        let back = ModelSolution::load_json(&path).unwrap();
        assert_eq!(
            back.coefficients(30).unwrap(),
            sol.coefficients(30).unwrap()
        );
        assert_eq!(back.curve(), sol.curve());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn horner_matches_power_sum(coeffs in prop::collection::vec(0.01f64..10.0, 6), x in -3.0f64..3.0) {
            let p = 256;
            let cw: Vec<WideReal> = coeffs.iter().map(|&v| WideReal::from_f64(v, p)).collect();
            let gf = GeneratingFunction::new(0, cw.clone()).unwrap();
            let xw = WideReal::from_f64(x, p);
            let naive: WideReal = cw.iter().enumerate().map(|(j, c)| c * &xw.powi(j as u32)).sum();
            let got = gf.eval_real(&xw);
            let scale: WideReal = cw.iter().enumerate().map(|(j, c)| c * &xw.abs().powi(j as u32)).sum();
            prop_assert!(((&got - &naive) / &scale).abs().to_f64() < 1e-30);
        }

        #[test]
        fn sum_rule_holds_for_random_curves(
            r0 in 0.005f64..0.12,
            tau in prop::sample::select(vec![0.25f64, 0.5, 1.0]),
            n in 2usize..25,
            psi in 0.0f64..1.0,
        ) {
            let c = YieldCurve::flat(r0, TenorStructure::uniform(n, tau).unwrap()).unwrap();
            let sol = solve(&c, psi, 256).unwrap();
            for i in 0..n {
                prop_assert!(sol.sum_rule_residual(i).unwrap().to_f64() < 1e-40);
                prop_assert!(sol.fra_residual(i).unwrap().to_f64() < 1e-40);
            }
        }
    }
}
