//! Independent reference computations used by the acceptance suite. Nothing
//! here calls the crate's solver or quadrature.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Nodes and weights for `E[g(Z)]`, `Z ~ N(0, 1)`, by Newton iteration on the
/// Hermite recurrence.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let pim4 = PI.powf(-0.25);
    let mut z = 0.0f64;
    for k in 0..m.div_ceil(2) {
        z = match k {
            0 => (2.0 * m as f64 + 1.0).sqrt() - 1.85575 * (2.0 * m as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (m as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[k - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=m {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j - 1) as f64 / j as f64).sqrt() * p3;
            }
            pp = (2.0 * m as f64).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() < 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[k] = z;
        x[m - 1 - k] = -z;
        w[k] = 2.0 / (pp * pp);
        w[m - 1 - k] = w[k];
    }
    // physicists' weight e^{-x^2} to the standard normal
    let nodes = x.iter().map(|v| v * 2f64.sqrt()).collect();
    let weights = w.iter().map(|v| v / PI.sqrt()).collect();
    (nodes, weights)
}

/// The model solved by brute force: every conditional expectation of the
/// martingale condition done by nested Gauss-Hermite quadrature on the
/// terminal-measure Brownian driver.
pub struct MartingaleOracle {
    pub dates: Vec<f64>,
    pub discount_factors: Vec<f64>,
    pub psi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `\tilde L_i`, filled backwards.
    pub adjusted_libors: Vec<f64>,
    pub normalizations: Vec<f64>,
}

impl MartingaleOracle {
    pub fn new(dates: &[f64], discount_factors: &[f64], psi: f64, order: usize) -> Self {
        let n = dates.len() - 1;
        let (nodes, weights) = gauss_hermite(order);
        let mut me = MartingaleOracle {
            dates: dates.to_vec(),
            discount_factors: discount_factors.to_vec(),
            psi,
            nodes,
            weights,
            adjusted_libors: vec![f64::NAN; n],
            normalizations: vec![f64::NAN; n],
        };
        let pn = discount_factors[n];
        for i in (0..n).rev() {
            let t = dates[i];
            let norm = if t == 0.0 {
                me.bond(i, 0.0)
            } else {
                me.expect(t.sqrt(), 0.0, |y| {
                    (psi * y - 0.5 * psi * psi * t).exp() * me.bond(i, y)
                })
            };
            let tau = dates[i + 1] - dates[i];
            me.normalizations[i] = norm;
            me.adjusted_libors[i] =
                (discount_factors[i] - discount_factors[i + 1]) / pn / (tau * norm);
        }
        me
    }

    fn expect(&self, sd: f64, mean: f64, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * g(mean + sd * z))
            .sum()
    }

    fn libor(&self, k: usize, y: f64) -> f64 {
        let t = self.dates[k];
        self.adjusted_libors[k] * (self.psi * y - 0.5 * self.psi * self.psi * t).exp()
    }

    /// `\hat P_{i,i+1}(x)` as the conditional expectation of
    /// `\hat P_{i+1,i+1}(x_{i+1}) = (1 + tau L_{i+1}) \hat P_{i+1,i+2}`.
    pub fn bond(&self, i: usize, x: f64) -> f64 {
        let n = self.dates.len() - 1;
        if i + 1 == n {
            return 1.0;
        }
        let k = i + 1;
        let tau = self.dates[k + 1] - self.dates[k];
        let sd = (self.dates[k] - self.dates[i]).sqrt();
        self.expect(sd, x, |y| (1.0 + tau * self.libor(k, y)) * self.bond(k, y))
    }
}

/// Composite Simpson rule with `2 * half_panels` intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, half_panels: usize) -> f64 {
    let m = 2 * half_panels;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for k in 1..m {
        let x = a + k as f64 * h;
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// `ln \hat P_{i,i+1}(x) = ln sum_j c_j e^{j psi x - j^2 psi^2 t / 2}` from
/// natural logs of the coefficients.
pub fn log_bond(log_coeffs: &[f64], psi: f64, t: f64, x: f64) -> f64 {
    let terms: Vec<f64> = log_coeffs
        .iter()
        .enumerate()
        .map(|(j, lc)| {
            let a = j as f64 * psi;
            lc + a * x - 0.5 * a * a * t
        })
        .collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + terms.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

pub fn log_normal_density(x: f64, t: f64) -> f64 {
    -0.5 * x * x / t - 0.5 * (2.0 * PI * t).ln()
}

#[test]
fn hermite_rule_integrates_moments() {
    let (x, w) = gauss_hermite(40);
    let m = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
    assert!((m(0) - 1.0).abs() < 1e-14);
    assert!(m(1).abs() < 1e-14);
    assert!((m(2) - 1.0).abs() < 1e-13);
    assert!((m(4) - 3.0).abs() < 1e-12);
    let e: f64 = x.iter().zip(&w).map(|(x, w)| w * (0.7 * x).exp()).sum();
    assert!((e / (0.245f64).exp() - 1.0).abs() < 1e-14);
}
