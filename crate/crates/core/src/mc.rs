//! Terminal-measure Monte Carlo of the Markov driver.
//!
//! Under the terminal measure the driver is a Brownian motion, so only its
//! values at the tenor dates are simulated. Path `k` draws its increments
//! from a ChaCha8 stream keyed by `(seed, k)`, two 64-bit words per normal
//! deviate, so each `(seed, path, date)` maps to a fixed position in the
//! stream and results do not depend on how paths are spread over threads.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::TenorStructure;
use crate::error::{ModelError, Result};
use crate::pricing::caplet_price;
use crate::solver::ModelSolution;

/// Paths per parallel work item.
const CHUNK: usize = 4096;

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, cosine branch only
    let scale = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * scale;
    let u2 = (rng.next_u64() >> 11) as f64 * scale;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[derive(Clone, Debug)]
pub struct PathSet {
    seed: u64,
    n_paths: usize,
    dates: Vec<f64>,
    /// Row-major: `values[path * dates.len() + date]`.
    values: Vec<f64>,
}

pub fn simulate_paths(seed: u64, n_paths: usize, tenor: &TenorStructure) -> Result<PathSet> {
    if n_paths == 0 {
        return Err(ModelError::InvalidArgument("need at least one path".into()));
    }
    let dates = tenor.dates().to_vec();
    let width = dates.len();
    let sqrt_tau: Vec<f64> = tenor.accruals().iter().map(|t| t.sqrt()).collect();
    let mut values = vec![0.0; n_paths * width];
    values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(path, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            let mut x = 0.0;
            row[0] = 0.0;
            for (d, s) in sqrt_tau.iter().enumerate() {
                x += s * standard_normal(&mut rng);
                row[d + 1] = x;
            }
        });
    Ok(PathSet {
        seed,
        n_paths,
        dates,
        values,
    })
}

impl PathSet {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    pub fn value(&self, path: usize, date: usize) -> f64 {
        self.values[path * self.dates.len() + date]
    }

    /// Driver values at date `date` across all paths.
    pub fn at_date(&self, date: usize) -> Vec<f64> {
        (0..self.n_paths).map(|k| self.value(k, date)).collect()
    }
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Sample mean and standard error, accumulated in fixed-size chunks that are
/// combined in a fixed order.
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    // shifted by the first sample so constant data gives exactly zero spread
    let shift = samples[0];
    let sums: Vec<f64> = samples
        .par_chunks(CHUNK)
        .map(|c| pairwise_sum(&c.iter().map(|v| v - shift).collect::<Vec<_>>()))
        .collect();
    let offset = pairwise_sum(&sums) / n as f64;
    if n < 2 {
        return (shift, 0.0);
    }
    let squares: Vec<f64> = samples
        .par_chunks(CHUNK)
        .map(|c| {
            pairwise_sum(
                &c.iter()
                    .map(|v| (v - shift - offset).powi(2))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let variance = pairwise_sum(&squares) / (n - 1) as f64;
    (shift + offset, (variance / n as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub analytic: f64,
    /// `estimate / analytic`, defined for a positive reference.
    pub ratio: Option<f64>,
}

impl McEstimate {
    fn new(samples: &[f64], analytic: f64) -> Self {
        let (estimate, std_error) = mean_and_stderr(samples);
        McEstimate {
            estimate,
            std_error,
            n_paths: samples.len(),
            analytic,
            ratio: (analytic > 0.0).then(|| estimate / analytic),
        }
    }

    /// Distance of the ratio from 1 in standard errors of the ratio.
    pub fn sigmas_from_one(&self) -> Option<f64> {
        let r = self.ratio?;
        let se = self.std_error / self.analytic;
        Some(if se > 0.0 {
            (r - 1.0).abs() / se
        } else if r == 1.0 {
            0.0
        } else {
            f64::INFINITY
        })
    }
}

/// Double-precision view of `\hat P_{i,i+1}(x) e^{phi x - phi^2 t_i / 2}`:
/// log-coefficients and the drift of each exponential.
struct BondKernel {
    log_coeffs: Vec<f64>,
    psi: f64,
    t: f64,
}

impl BondKernel {
    fn new(sol: &ModelSolution, i: usize) -> Result<Self> {
        let log_coeffs = sol
            .coefficients(i)?
            .iter()
            .map(|c| c.ln().map(|v| v.to_f64()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(BondKernel {
            log_coeffs,
            psi: sol.psi(),
            t: sol.curve().tenor().date(i),
        })
    }

    /// `ln(\hat P_{i,i+1}(x)) + extra x - extra^2 t / 2` by log-sum-exp.
    fn log_value(&self, x: f64, extra: f64) -> f64 {
        let terms: Vec<f64> = self
            .log_coeffs
            .iter()
            .enumerate()
            .map(|(j, lc)| {
                let a = j as f64 * self.psi;
                lc + a * x - 0.5 * a * a * self.t
            })
            .collect();
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.iter().map(|v| (v - top).exp()).sum();
        top + sum.ln() + extra * x - 0.5 * extra * extra * self.t
    }
}

/// Sample mean of `\hat P_{i,i+1}(x_i) e^{psi x_i - psi^2 t_i / 2}` against
/// the exact `N_i`.
pub fn mc_estimate_normalization(
    sol: &ModelSolution,
    paths: &PathSet,
    i: usize,
) -> Result<McEstimate> {
    let kernel = BondKernel::new(sol, i)?;
    let psi = sol.psi();
    let samples: Vec<f64> = paths
        .at_date(i)
        .par_iter()
        .map(|&x| kernel.log_value(x, psi).exp())
        .collect();
    Ok(McEstimate::new(&samples, sol.normalization(i)?.to_f64()))
}

/// Caplet as `P_{0,n} E_n[(L_i(x_i) - K)^+ \hat P_{i,i+1}(x_i)]`.
pub fn mc_caplet(
    sol: &ModelSolution,
    paths: &PathSet,
    i: usize,
    strike: f64,
) -> Result<McEstimate> {
    if strike.is_nan() || strike <= 0.0 {
        return Err(ModelError::Domain(format!(
            "strike must be positive, got {strike}"
        )));
    }
    let kernel = BondKernel::new(sol, i)?;
    let psi = sol.psi();
    let t = kernel.t;
    let ln_lt = sol.adjusted_libor(i)?.ln()?.to_f64();
    let pn = sol.curve().discount(sol.n());
    let samples: Vec<f64> = paths
        .at_date(i)
        .par_iter()
        .map(|&x| {
            let libor = (ln_lt + psi * x - 0.5 * psi * psi * t).exp();
            if libor <= strike {
                0.0
            } else {
                pn * (libor - strike) * kernel.log_value(x, 0.0).exp()
            }
        })
        .collect();
    Ok(McEstimate::new(&samples, caplet_price(sol, i, strike)?))
}

/// Local maximum of the `N_i` integrand in the driver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrandPeak {
    pub x: f64,
    /// `x / sqrt(t_i)`.
    pub x_in_sd: f64,
    pub log_density: f64,
    /// Share of `N_i` carried by the region around this peak.
    pub weight: f64,
    /// Probability that a terminal-measure sample lands beyond the dip
    /// separating this peak from the origin.
    pub sampling_probability: f64,
}

/// Local maxima of `n(x; t_i) \hat P_{i,i+1}(x) e^{psi x - psi^2 t_i / 2}` on
/// a grid over `[-span, span]` standard deviations, ordered by position.
pub fn integrand_peaks(
    sol: &ModelSolution,
    i: usize,
    span: f64,
    points: usize,
) -> Result<Vec<IntegrandPeak>> {
    let kernel = BondKernel::new(sol, i)?;
    let t = kernel.t;
    if t == 0.0 {
        return Err(ModelError::Domain("no spread at t = 0".into()));
    }
    let sd = t.sqrt();
    let h = 2.0 * span * sd / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|k| -span * sd + k as f64 * h).collect();
    let logs: Vec<f64> = xs
        .iter()
        .map(|&x| {
            -0.5 * x * x / t - 0.5 * (2.0 * std::f64::consts::PI * t).ln()
                + kernel.log_value(x, sol.psi())
        })
        .collect();
    let norm = sol.normalization(i)?.to_f64();
    let peaks: Vec<usize> = (1..points - 1)
        .filter(|&k| logs[k] > logs[k - 1] && logs[k] >= logs[k + 1])
        .collect();
    // basins split at the lowest point between neighbouring peaks
    let mut splits = vec![0usize];
    for w in peaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dip = (a..=b)
            .min_by(|&p, &q| logs[p].total_cmp(&logs[q]))
            .expect("non-empty");
        splits.push(dip);
    }
    splits.push(points - 1);
    Ok(peaks
        .iter()
        .enumerate()
        .map(|(k, &idx)| {
            let (lo, hi) = (splits[k], splits[k + 1]);
            let mass: f64 = (lo..hi).map(|m| logs[m].exp() * h).sum();
            // the basin edge nearest the origin
            let sampling_probability = if xs[idx] >= 0.0 {
                crate::normal::cdf(-xs[lo].max(0.0) / sd)
            } else {
                crate::normal::cdf(xs[hi].min(0.0) / sd)
            };
            IntegrandPeak {
                x: xs[idx],
                x_in_sd: xs[idx] / sd,
                log_density: logs[idx],
                weight: mass / norm,
                sampling_probability,
            }
        })
        .collect())
}

/// The peak farthest from the origin when there is more than one.
pub fn secondary_peak(sol: &ModelSolution, i: usize) -> Result<Option<IntegrandPeak>> {
    let peaks = integrand_peaks(sol, i, 40.0, 16_001)?;
    if peaks.len() < 2 {
        return Ok(None);
    }
    Ok(peaks
        .into_iter()
        .max_by(|a, b| a.x.abs().total_cmp(&b.x.abs())))
}

/// Serialized comparison between simulation and the exact value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub psi: f64,
    pub i: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub analytic: f64,
    pub ratio: Option<f64>,
}

impl McReport {
    pub fn new(psi: f64, i: usize, seed: u64, est: &McEstimate) -> Self {
        McReport {
            psi,
            i,
            n_paths: est.n_paths,
            seed,
            estimate: est.estimate,
            stderr: est.std_error,
            analytic: est.analytic,
            ratio: est.ratio,
        }
    }
}
