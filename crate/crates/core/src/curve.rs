//! Tenor grid, initial yield curve and model parameters.

use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{ModelError, Result};
use crate::wide::WideReal;

/// Simulation dates `0 = t_0 < t_1 < ... < t_n` in year fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct TenorStructure {
    dates: Vec<f64>,
    accruals: Vec<f64>,
}

impl TenorStructure {
    /// Equally spaced grid `{0, tau, ..., n tau}`.
    pub fn uniform(n: usize, tau: f64) -> Result<Self> {
        if n < 2 {
            return Err(ModelError::InvalidArgument(format!(
                "need at least 2 periods, got {n}"
            )));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(ModelError::InvalidArgument(format!(
                "accrual must be positive, got {tau}"
            )));
        }
        let dates = (0..=n).map(|k| k as f64 * tau).collect();
        Ok(TenorStructure {
            dates,
            accruals: vec![tau; n],
        })
    }

    pub fn from_dates(dates: Vec<f64>) -> Result<Self> {
        if dates.len() < 3 {
            return Err(ModelError::InvalidArgument(
                "need at least 3 dates (2 periods)".into(),
            ));
        }
        if dates[0] != 0.0 {
            return Err(ModelError::InvalidArgument(format!(
                "first date must be 0, got {}",
                dates[0]
            )));
        }
        let accruals: Vec<f64> = dates.windows(2).map(|w| w[1] - w[0]).collect();
        if dates.iter().any(|t| !t.is_finite()) || accruals.iter().any(|&a| a <= 0.0) {
            return Err(ModelError::InvalidArgument(
                "dates must be finite and strictly increasing".into(),
            ));
        }
        Ok(TenorStructure { dates, accruals })
    }

    /// Number of periods `n`.
    pub fn n(&self) -> usize {
        self.accruals.len()
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    pub fn accruals(&self) -> &[f64] {
        &self.accruals
    }

    pub fn date(&self, i: usize) -> f64 {
        self.dates[i]
    }

    pub fn accrual(&self, i: usize) -> f64 {
        self.accruals[i]
    }
}

/// Discount factors `P_{0,i}` on a tenor grid, with the numeraire-rebased
/// bonds `P_{0,i} / P_{0,n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct YieldCurve {
    tenor: TenorStructure,
    discount_factors: Vec<f64>,
    rebased: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct CurveRow {
    t: f64,
    df: f64,
}

impl YieldCurve {
    /// Constant continuously-compounded short rate: `P_{0,i} = exp(-r0 t_i)`.
    pub fn flat(r0: f64, tenor: TenorStructure) -> Result<Self> {
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(ModelError::InvalidArgument(format!(
                "short rate must be positive, got {r0}"
            )));
        }
        let dfs = tenor.dates().iter().map(|t| (-r0 * t).exp()).collect();
        Self::from_discount_factors(tenor, dfs)
    }

    /// Validates positivity and strict decrease (positive forwards).
    pub fn from_discount_factors(
        tenor: TenorStructure,
        discount_factors: Vec<f64>,
    ) -> Result<Self> {
        if discount_factors.len() != tenor.dates().len() {
            return Err(ModelError::InvalidArgument(format!(
                "{} discount factors for {} dates",
                discount_factors.len(),
                tenor.dates().len()
            )));
        }
        if discount_factors
            .iter()
            .any(|d| !(d.is_finite() && *d > 0.0))
        {
            return Err(ModelError::InvalidArgument(
                "discount factors must be finite and positive".into(),
            ));
        }
        if (discount_factors[0] - 1.0).abs() > 1e-12 {
            return Err(ModelError::InvalidArgument(format!(
                "P(0,0) must be 1, got {}",
                discount_factors[0]
            )));
        }
        if let Some(index) = discount_factors.windows(2).position(|w| w[1] >= w[0]) {
            return Err(ModelError::NonPositiveForward { index });
        }
        let last = *discount_factors.last().expect("non-empty");
        let rebased = discount_factors.iter().map(|d| d / last).collect();
        Ok(YieldCurve {
            tenor,
            discount_factors,
            rebased,
        })
    }

    /// Log-linear interpolation of `(t, df)` nodes onto the tenor grid.
    ///
    /// An implicit node `(0, 1)` is added when the first node is after 0.
    /// Grid dates beyond the last node are rejected.
    pub fn from_points(tenor: TenorStructure, points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(ModelError::InvalidArgument("no curve points".into()));
        }
        let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(points.len() + 1);
        if points[0].0 > 0.0 {
            nodes.push((0.0, 0.0));
        }
        for &(t, df) in points {
            if !(t.is_finite() && t >= 0.0 && df.is_finite() && df > 0.0) {
                return Err(ModelError::InvalidArgument(format!(
                    "bad curve node ({t}, {df})"
                )));
            }
            if let Some(&(prev, _)) = nodes.last() {
                if t <= prev {
                    return Err(ModelError::InvalidArgument(
                        "curve nodes must be strictly ascending in t".into(),
                    ));
                }
            }
            nodes.push((t, df.ln()));
        }
        let horizon = nodes.last().expect("non-empty").0;
        let mut dfs = Vec::with_capacity(tenor.dates().len());
        for &t in tenor.dates() {
            if t > horizon * (1.0 + 1e-12) {
                return Err(ModelError::InvalidArgument(format!(
                    "grid date {t} beyond the last curve node {horizon}"
                )));
            }
            let k = nodes.partition_point(|&(tk, _)| tk < t);
            let log_df = if k == 0 {
                nodes[0].1
            } else if k == nodes.len() {
                nodes[k - 1].1
            } else {
                let (t0, l0) = nodes[k - 1];
                let (t1, l1) = nodes[k];
                l0 + (l1 - l0) * (t - t0) / (t1 - t0)
            };
            dfs.push(log_df.exp());
        }
        Self::from_discount_factors(tenor, dfs)
    }

    /// Strict CSV reader: header `t,df`, ascending rows, decimal numbers.
    pub fn read_csv<R: Read>(tenor: TenorStructure, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "df" {
            return Err(ModelError::Parse(format!(
                "curve CSV header must be `t,df`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut points = Vec::new();
        for row in rdr.deserialize() {
            let row: CurveRow = row?;
            if !row.t.is_finite() || !row.df.is_finite() || row.df <= 0.0 {
                return Err(ModelError::Parse(format!(
                    "invalid curve row t={}, df={}",
                    row.t, row.df
                )));
            }
            points.push((row.t, row.df));
        }
        Self::from_points(tenor, &points)
    }

    pub fn load_csv(tenor: TenorStructure, path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(tenor, std::fs::File::open(path)?)
    }

    pub fn tenor(&self) -> &TenorStructure {
        &self.tenor
    }

    pub fn n(&self) -> usize {
        self.tenor.n()
    }

    pub fn discount(&self, i: usize) -> f64 {
        self.discount_factors[i]
    }

    pub fn discount_factors(&self) -> &[f64] {
        &self.discount_factors
    }

    /// `\hat P_{0,i} = P_{0,i} / P_{0,n}`.
    pub fn rebased(&self, i: usize) -> f64 {
        self.rebased[i]
    }

    /// Rebased bonds computed at `precision` bits from the stored discount
    /// factors (treated as exact).
    pub fn rebased_wide(&self, precision: u32) -> Vec<WideReal> {
        let last = WideReal::from_f64(*self.discount_factors.last().expect("non-empty"), precision);
        self.discount_factors
            .iter()
            .map(|&d| &WideReal::from_f64(d, precision) / &last)
            .collect()
    }

    /// `L_i^fwd = (P_{0,i}/P_{0,i+1} - 1) / tau_i`.
    pub fn forward_libor(&self, i: usize) -> f64 {
        (self.discount_factors[i] / self.discount_factors[i + 1] - 1.0) / self.tenor.accrual(i)
    }

    pub fn forward_libors(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.forward_libor(i)).collect()
    }

    /// Forward Libor at `precision` bits.
    pub fn forward_libor_wide(&self, i: usize, precision: u32) -> WideReal {
        let p0 = WideReal::from_f64(self.discount_factors[i], precision);
        let p1 = WideReal::from_f64(self.discount_factors[i + 1], precision);
        let tau = WideReal::from_f64(self.tenor.accrual(i), precision);
        &(&(&p0 / &p1) - &WideReal::one(precision)) / &tau
    }
}

/// Volatility, grid size and arithmetic width of one model run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub psi: f64,
    pub n: usize,
    pub precision_bits: u32,
}

impl ModelParams {
    pub fn new(psi: f64, n: usize, precision_bits: u32) -> Result<Self> {
        if !(psi.is_finite() && psi >= 0.0) {
            return Err(ModelError::InvalidArgument(format!(
                "volatility must be non-negative, got {psi}"
            )));
        }
        if n < 2 {
            return Err(ModelError::InvalidArgument(format!(
                "n must be >= 2, got {n}"
            )));
        }
        if precision_bits < 53 {
            return Err(ModelError::InvalidArgument(format!(
                "precision must be at least 53 bits, got {precision_bits}"
            )));
        }
        Ok(ModelParams {
            psi,
            n,
            precision_bits,
        })
    }
}
