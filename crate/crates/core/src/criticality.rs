//! Complex zeros of the generating function and the critical volatility.
//!
//! `N_i = f^(i)(e^{psi^2 t_i})` is analytic in `psi` as long as the zeros of
//! `f^(i)` stay away from the evaluation point. When the zeros close in on
//! the positive real axis at `x_*`, every expectation `f^(i)(e^{psi phi t_i})`
//! with `e^{psi phi t_i}` beyond `x_*` changes behaviour abruptly.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::curve::{TenorStructure, YieldCurve};
use crate::error::{ModelError, Result};
use crate::solver::{solve_to_horizon, GeneratingFunction, ModelSolution};
use crate::wide::{WideComplex, WideReal};

const MAX_ITERATIONS: usize = 2000;

/// Step of the volatility grid used by the sweeps.
pub const DEFAULT_GRID_STEP: f64 = 0.0025;

/// A uniform volatility grid `lo, lo + step, ..., <= hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl PsiRange {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo && step > 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(ModelError::InvalidArgument(format!(
                "bad volatility range {lo}:{hi}:{step}"
            )));
        }
        Ok(PsiRange { lo, hi, step })
    }

    pub fn points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=count)
            .map(|k| self.lo + k as f64 * self.step)
            .collect()
    }
}

impl Default for PsiRange {
    fn default() -> Self {
        PsiRange {
            lo: 0.02,
            hi: 1.2,
            step: DEFAULT_GRID_STEP,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ZeroSet {
    pub horizon: usize,
    pub psi: Option<f64>,
    pub zeros: Vec<WideComplex>,
    /// `max_k |f(z_k)| / |c_deg|`.
    pub residual: f64,
}

/// Aberth-Ehrlich correction for root `k`: `w / (1 - w sum_m 1/(z_k - z_m))`
/// with the Newton step `w = f/f'`.
fn aberth_step_f64(b: &[f64], db: &[f64], z: &[Complex64], k: usize) -> (Complex64, f64, f64) {
    let zk = z[k];
    let horner = |c: &[f64], x: Complex64| {
        c.iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &v| acc * x + v)
    };
    let value = horner(b, zk);
    let bound = b
        .iter()
        .rev()
        .fold(0.0, |acc, &v| acc * zk.norm() + v.abs());
    let newton = value / horner(db, zk);
    let repulsion: Complex64 = z
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != k)
        .map(|(_, zm)| 1.0 / (zk - zm))
        .sum();
    (newton / (1.0 - newton * repulsion), value.norm(), bound)
}

/// Double-precision Aberth on the rescaled polynomial `sum_j b_j y^j`,
/// `b_j = c_j R^j / max`. `None` when the scaled coefficients leave the
/// double range or the iteration does not settle.
fn warm_start(c: &[WideReal], radius: &WideReal) -> Option<Vec<Complex64>> {
    let deg = c.len() - 1;
    let mut scaled = Vec::with_capacity(c.len());
    let mut power = WideReal::one(radius.precision());
    for cj in c {
        scaled.push(cj * &power);
        power = &power * radius;
    }
    let top = scaled
        .iter()
        .map(WideReal::abs)
        .fold(WideReal::zero(radius.precision()), |a, b| {
            if b > a {
                b
            } else {
                a
            }
        });
    let b: Vec<f64> = scaled.iter().map(|v| (v / &top).to_f64()).collect();
    if b.iter().any(|v| !v.is_finite() || v.abs() < 1e-280) {
        return None;
    }
    let db: Vec<f64> = b
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, v)| j as f64 * v)
        .collect();
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| Complex64::from_polar(1.0, (2.0 * PI * k as f64 + 0.7) / deg as f64))
        .collect();
    let mut done = vec![false; deg];
    for _ in 0..500 {
        for k in 0..deg {
            if done[k] {
                continue;
            }
            let (step, value, bound) = aberth_step_f64(&b, &db, &z, k);
            if !step.re.is_finite() || !step.im.is_finite() {
                return None;
            }
            z[k] -= step;
            if value <= 8.0 * (deg + 1) as f64 * f64::EPSILON * bound
                || step.norm() <= 4.0 * f64::EPSILON * z[k].norm()
            {
                done[k] = true;
            }
        }
        if done.iter().all(|&d| d) {
            return Some(z);
        }
    }
    None
}

/// All zeros by the Aberth-Ehrlich simultaneous iteration. Seeds lie on the
/// circle of radius `|c_0/c_deg|^{1/deg}`, rotated off the real axis; a double
/// precision pass on the rescaled polynomial supplies the starting points for
/// the extended-precision pass when it can. A root is accepted once its step
/// is negligible or `|f(z)|` is down to the rounding level of the Horner sum.
pub fn find_zeros(gf: &GeneratingFunction) -> Result<ZeroSet> {
    let deg = gf.degree();
    if deg == 0 {
        return Err(ModelError::InvalidArgument(
            "a constant polynomial has no zeros".into(),
        ));
    }
    let p = gf.precision();
    let c = gf.coefficients();
    let lead = &c[deg];
    let radius = ((c[0].abs().ln()? - lead.abs().ln()?).to_f64() / deg as f64).exp();
    let wide_radius = WideReal::from_f64(radius, p);
    let seeds: Vec<Complex64> = match warm_start(c, &wide_radius) {
        Some(y) => y,
        None => (0..deg)
            .map(|k| Complex64::from_polar(1.0, (2.0 * PI * k as f64 + 0.7) / deg as f64))
            .collect(),
    };
    let mut z: Vec<WideComplex> = seeds
        .iter()
        .map(|y| WideComplex::from_c64(*y, p).scale(&wide_radius))
        .collect();

    let derivative = GeneratingFunction::new(gf.horizon(), gf.derivative())?;
    let magnitudes = GeneratingFunction::new(gf.horizon(), c.iter().map(WideReal::abs).collect())?;
    let one = WideComplex::one(p);
    let step_tol = WideReal::one(p).mul_pow2(-2 * (p as i64 - 12));
    let rounding = WideReal::from_i64(4 * (deg as i64 + 1), p).mul_pow2(-(p as i64));
    let rounding2 = rounding.square();
    let mut done = vec![false; deg];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && !done.iter().all(|&d| d) {
        iterations += 1;
        for k in 0..deg {
            if done[k] {
                continue;
            }
            let value = gf.eval(&z[k]);
            let bound = magnitudes.eval_real(&z[k].abs());
            if value.norm_sqr() <= &bound.square() * &rounding2 {
                done[k] = true;
                continue;
            }
            let newton = &value / &derivative.eval(&z[k]);
            let mut repulsion = WideComplex::zero(p);
            for (m, zm) in z.iter().enumerate() {
                if m != k {
                    repulsion = &repulsion + &(&one / &(&z[k] - zm));
                }
            }
            let step = &newton / &(&one - &(&newton * &repulsion));
            if step.norm_sqr() <= &z[k].norm_sqr() * &step_tol {
                done[k] = true;
            }
            z[k] = &z[k] - &step;
        }
    }

    let lead_abs = lead.abs();
    let residual = z
        .iter()
        .map(|zk| (gf.eval(zk).abs() / &lead_abs).to_f64())
        .fold(0.0, f64::max);
    if !done.iter().all(|&d| d) {
        return Err(ModelError::RootFinding {
            iterations,
            residual,
        });
    }
    z.sort_by(|a, b| {
        a.arg()
            .abs()
            .total_cmp(&b.arg().abs())
            .then(b.arg().total_cmp(&a.arg()))
    });
    Ok(ZeroSet {
        horizon: gf.horizon(),
        psi: None,
        zeros: z,
        residual,
    })
}

/// Zeros of `f^(i)` for a solved model.
pub fn zeros_at(sol: &ModelSolution, i: usize) -> Result<ZeroSet> {
    let mut zs = find_zeros(&sol.generating_function(i)?)?;
    zs.psi = Some(sol.psi());
    Ok(zs)
}

impl ZeroSet {
    pub fn len(&self) -> usize {
        self.zeros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeros.is_empty()
    }

    pub fn zeros_c64(&self) -> Vec<Complex64> {
        self.zeros.iter().map(WideComplex::to_c64).collect()
    }

    /// Every zero has a partner within relative distance `tol` of its conjugate.
    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        let tol2 = WideReal::from_f64(tol * tol, self.precision());
        self.zeros.iter().all(|z| {
            let target = z.conj();
            let scale = z.norm_sqr();
            self.zeros
                .iter()
                .any(|w| (w - &target).norm_sqr() <= &scale * &tol2)
        })
    }

    fn precision(&self) -> u32 {
        self.zeros.first().map(WideComplex::precision).unwrap_or(53)
    }

    pub fn min_abs_arg(&self) -> f64 {
        self.zeros
            .iter()
            .map(|z| z.arg().abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest relative coefficient error of `c_deg prod_k (x - z_k)`.
    pub fn reconstruction_residual(&self, gf: &GeneratingFunction) -> f64 {
        let p = self.precision();
        let mut poly = vec![WideComplex::one(p)];
        for zk in &self.zeros {
            let mut next = vec![WideComplex::zero(p); poly.len() + 1];
            for (j, a) in poly.iter().enumerate() {
                next[j + 1] = &next[j + 1] + a;
                next[j] = &next[j] - &(a * zk);
            }
            poly = next;
        }
        let coeffs = gf.coefficients();
        let lead = &coeffs[coeffs.len() - 1];
        coeffs
            .iter()
            .zip(&poly)
            .map(|(c, r)| {
                let rebuilt = r.scale(lead);
                let diff = WideComplex::new(&rebuilt.re - c, rebuilt.im);
                (diff.abs() / c.abs()).to_f64()
            })
            .fold(0.0, f64::max)
    }

    /// Default surround threshold: one angular spacing of the zeros.
    pub fn default_gap(&self) -> f64 {
        2.0 * PI / self.len().max(1) as f64
    }

    /// Modulus of the zero closest in angle to the positive axis, when that
    /// angle is below `theta_gap`.
    pub fn pinch_point_with_gap(&self, theta_gap: f64) -> Option<f64> {
        let nearest = self
            .zeros
            .iter()
            .min_by(|a, b| a.arg().abs().total_cmp(&b.arg().abs()))?;
        if nearest.arg().abs() < theta_gap {
            Some(nearest.abs().to_f64())
        } else {
            None
        }
    }

    pub fn pinch_point(&self) -> Option<f64> {
        self.pinch_point_with_gap(self.default_gap())
    }
}

/// `ln N_i` across a volatility grid, solved in parallel.
pub fn log_normalization_curve(
    curve: &YieldCurve,
    i: usize,
    psis: &[f64],
    precision_bits: u32,
) -> Result<Vec<f64>> {
    psis.par_iter()
        .map(|&psi| {
            let sol = solve_to_horizon(curve, psi, precision_bits, i)?;
            Ok(sol.normalization(i)?.ln()?.to_f64())
        })
        .collect()
}

/// Volatility of maximal curvature of `ln N_i`, refined by a parabola
/// through the three grid points around the maximum.
pub fn critical_vol_exact(
    curve: &YieldCurve,
    i: usize,
    range: PsiRange,
    precision_bits: u32,
) -> Result<f64> {
    let psis = range.points();
    if psis.len() < 5 {
        return Err(ModelError::InvalidArgument(
            "volatility grid too short".into(),
        ));
    }
    let h = range.step;
    let ln_n = log_normalization_curve(curve, i, &psis, precision_bits)?;
    let d2: Vec<f64> = (1..ln_n.len() - 1)
        .map(|k| (ln_n[k - 1] - 2.0 * ln_n[k] + ln_n[k + 1]) / (h * h))
        .collect();
    let (m, _) = d2
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if m == 0 || m + 1 == d2.len() {
        return Err(ModelError::BoundaryMaximum { psi: psis[m + 1] });
    }
    let (a, b, c) = (d2[m - 1], d2[m], d2[m + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom != 0.0 {
        0.5 * h * (a - c) / denom
    } else {
        0.0
    };
    Ok(psis[m + 1] + shift)
}

/// Closed-form estimates for a flat curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproxCritical {
    /// From the zero radius of the infinite-volatility generating function;
    /// `None` when that radius lies inside the unit circle.
    pub zero_radius: Option<f64>,
    /// `psi^2 = ln(1 / (r0 tau)) / (i (n-i-1) tau)`.
    pub simplified: f64,
}

pub fn critical_vol_approx(r0: f64, tau: f64, i: usize, n: usize) -> Result<ApproxCritical> {
    if i == 0 || i + 1 >= n {
        return Err(ModelError::InvalidArgument(format!(
            "no critical volatility for i = {i}, n = {n}"
        )));
    }
    let rt = r0 * tau;
    if !(rt > 0.0 && rt < 1.0) {
        return Err(ModelError::InvalidArgument(format!(
            "need 0 < r0 tau < 1, got {rt}"
        )));
    }
    let d = (n - i - 1) as f64;
    let t = i as f64 * tau;
    let simplified = ((1.0 / rt).ln() / (i as f64 * d * tau)).sqrt();
    let exponent = (1.0 / -(-rt).exp_m1()).ln() / d - rt;
    let zero_radius = (exponent > 0.0).then(|| (exponent / t).sqrt());
    Ok(ApproxCritical {
        zero_radius,
        simplified,
    })
}

/// Pinch point of `f^(i)` at one volatility.
pub fn pinch_at(
    curve: &YieldCurve,
    i: usize,
    psi: f64,
    precision_bits: u32,
) -> Result<Option<f64>> {
    let sol = solve_to_horizon(curve, psi, precision_bits, i)?;
    Ok(zeros_at(&sol, i)?.pinch_point())
}

/// `ln x_*(psi) - j psi^2 t_i`, or `None` where the pinch is undefined.
fn crossing_gap(
    curve: &YieldCurve,
    i: usize,
    j: u32,
    psi: f64,
    precision_bits: u32,
) -> Result<Option<f64>> {
    let t = curve.tenor().date(i);
    Ok(pinch_at(curve, i, psi, precision_bits)?.map(|x| x.ln() - j as f64 * psi * psi * t))
}

fn first_crossing(psis: &[f64], gaps: &[Option<f64>]) -> Option<(f64, f64)> {
    let first = gaps.iter().position(Option::is_some)?;
    if gaps[first]? <= 0.0 {
        // already past the circle when the zeros first surround the axis
        return None;
    }
    let mut last_positive = psis[first];
    for k in first + 1..psis.len() {
        match gaps[k] {
            Some(g) if g <= 0.0 => return Some((last_positive, psis[k])),
            Some(_) => last_positive = psis[k],
            None => {}
        }
    }
    None
}

/// Volatility at which `x_*(psi) = e^{j psi^2 t_i}`: the non-analyticity of
/// the `j`-th Libor moment. `None` when no crossing occurs inside `range`.
pub fn moment_critical_vol(
    curve: &YieldCurve,
    i: usize,
    j: u32,
    range: PsiRange,
    precision_bits: u32,
) -> Result<Option<f64>> {
    if j == 0 {
        return Err(ModelError::InvalidArgument(
            "moment order must be >= 1".into(),
        ));
    }
    let psis = range.points();
    let gaps = psis
        .par_iter()
        .map(|&psi| crossing_gap(curve, i, j, psi, precision_bits))
        .collect::<Result<Vec<_>>>()?;
    match first_crossing(&psis, &gaps) {
        None => Ok(None),
        Some((lo, hi)) => bisect_crossing(curve, i, j, lo, hi, precision_bits).map(Some),
    }
}

fn bisect_crossing(
    curve: &YieldCurve,
    i: usize,
    j: u32,
    mut lo: f64,
    mut hi: f64,
    precision_bits: u32,
) -> Result<f64> {
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        match crossing_gap(curve, i, j, mid, precision_bits)? {
            Some(g) if g <= 0.0 => hi = mid,
            // an undefined pinch means the zeros have not closed in yet
            _ => lo = mid,
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `psi_cr^(j)` for `j = 1..=j_max` from one shared scan of the pinch point.
pub fn moment_critical_vols(
    curve: &YieldCurve,
    i: usize,
    j_max: u32,
    range: PsiRange,
    precision_bits: u32,
) -> Result<Vec<(u32, Option<f64>)>> {
    let psis = range.points();
    let t = curve.tenor().date(i);
    let pinches = psis
        .par_iter()
        .map(|&psi| pinch_at(curve, i, psi, precision_bits))
        .collect::<Result<Vec<_>>>()?;
    (1..=j_max)
        .map(|j| {
            let gaps: Vec<Option<f64>> = pinches
                .iter()
                .zip(&psis)
                .map(|(x, psi)| x.map(|x| x.ln() - j as f64 * psi * psi * t))
                .collect();
            let root = match first_crossing(&psis, &gaps) {
                None => None,
                Some((lo, hi)) => Some(bisect_crossing(curve, i, j, lo, hi, precision_bits)?),
            };
            Ok((j, root))
        })
        .collect()
}

/// Largest moment order with a transition, assuming orders above the first
/// missing one have none either.
pub fn max_transitioning_moment(vols: &[(u32, Option<f64>)]) -> Option<u32> {
    vols.iter()
        .take_while(|(_, v)| v.is_some())
        .map(|(j, _)| *j)
        .last()
}

#[derive(Clone, Debug)]
pub struct CriticalityReport {
    pub horizon: usize,
    pub psi: f64,
    pub zeros: ZeroSet,
    pub pinch: Option<f64>,
    /// `None` when the curvature maximum sits on the edge of the range.
    pub psi_cr_exact: Option<f64>,
    pub approx: Option<ApproxCritical>,
    /// `(j, psi_cr^(j))` for `j = 2..=j_max`.
    pub moment_vols: Vec<(u32, Option<f64>)>,
    pub j0: Option<u32>,
}

/// Zeros and pinch point at `psi`, plus the critical volatilities at `i`.
/// The closed-form estimates use the average continuously-compounded rate
/// of the curve, exact for a flat curve with a uniform grid.
pub fn criticality_report(
    curve: &YieldCurve,
    i: usize,
    psi: f64,
    j_max: u32,
    range: PsiRange,
    precision_bits: u32,
) -> Result<CriticalityReport> {
    let sol = solve_to_horizon(curve, psi, precision_bits, i)?;
    let zeros = zeros_at(&sol, i)?;
    let pinch = zeros.pinch_point();
    let psi_cr_exact = critical_vol_exact(curve, i, range, precision_bits).ok();
    let tenor = curve.tenor();
    let n = curve.n();
    let uniform = tenor
        .accruals()
        .windows(2)
        .all(|w| (w[0] - w[1]).abs() < 1e-12);
    let approx = if uniform {
        let r0 = -curve.discount(n).ln() / tenor.date(n);
        critical_vol_approx(r0, tenor.accrual(0), i, n).ok()
    } else {
        None
    };
    let mut moment_vols = moment_critical_vols(curve, i, j_max, range, precision_bits)?;
    moment_vols.retain(|(j, _)| *j >= 2);
    let j0 = max_transitioning_moment(&moment_vols);
    Ok(CriticalityReport {
        horizon: i,
        psi,
        zeros,
        pinch,
        psi_cr_exact,
        approx,
        moment_vols,
        j0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseRow {
    pub r0: f64,
    pub tau: f64,
    pub exact: Option<f64>,
    pub zero_radius: Option<f64>,
    pub simplified: Option<f64>,
}

/// Critical volatility on an `(r0, tau)` grid for a Libor fixing at
/// `fixing_time` on a flat curve spanning `total_time`. Cells that fail are
/// left empty.
pub fn phase_boundary(
    r0_grid: &[f64],
    tau_grid: &[f64],
    fixing_time: f64,
    total_time: f64,
    range: PsiRange,
    precision_bits: u32,
) -> Vec<PhaseRow> {
    let cells: Vec<(f64, f64)> = r0_grid
        .iter()
        .flat_map(|&r0| tau_grid.iter().map(move |&tau| (r0, tau)))
        .collect();
    cells
        .par_iter()
        .map(|&(r0, tau)| {
            let n = (total_time / tau).round() as usize;
            let i = (fixing_time / tau).round() as usize;
            let approx = critical_vol_approx(r0, tau, i, n).ok();
            let exact = TenorStructure::uniform(n, tau)
                .and_then(|t| YieldCurve::flat(r0, t))
                .and_then(|c| critical_vol_exact(&c, i, range, precision_bits))
                .ok();
            PhaseRow {
                r0,
                tau,
                exact,
                zero_radius: approx.and_then(|a| a.zero_radius),
                simplified: approx.map(|a| a.simplified),
            }
        })
        .collect()
}
