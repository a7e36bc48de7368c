use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::savgol::SavitzkyGolay;
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Pointwise estimates of `C` and its first three derivatives with 95%
/// intervals. `edge_mask[i]` marks boundary-affected points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeEstimate {
    pub times: Vec<f64>,
    /// `[C, C', C'', C''']`, each one value per grid point.
    pub values: [Vec<f64>; 4],
    /// `(lower, upper)` per order and point.
    pub intervals: [Vec<(f64, f64)>; 4],
    pub edge_mask: Vec<bool>,
}

impl DerivativeEstimate {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn c(&self) -> &[f64] {
        &self.values[0]
    }

    pub fn c1(&self) -> &[f64] {
        &self.values[1]
    }

    pub fn c2(&self) -> &[f64] {
        &self.values[2]
    }

    pub fn c3(&self) -> &[f64] {
        &self.values[3]
    }

    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        self.edge_mask
            .iter()
            .enumerate()
            .filter(|(_, &edge)| !edge)
            .map(|(i, _)| i)
    }

    /// Estimates with zero-width intervals, e.g. exact analytic derivatives.
    pub fn exact(times: Vec<f64>, values: [Vec<f64>; 4]) -> Self {
        let intervals = values
            .clone()
            .map(|v| v.into_iter().map(|x| (x, x)).collect());
        let edge_mask = vec![false; times.len()];
        DerivativeEstimate {
            times,
            values,
            intervals,
            edge_mask,
        }
    }

    /// Savitzky-Golay estimates of orders 0..=3.
    ///
    /// Intervals assume homoscedastic noise whose variance is estimated from
    /// interior smoothing residuals, inflated by `1 / (1 - w0)` for the
    /// smoother's own degrees of freedom.
    pub fn from_savgol(series: &TimeSeries, sg: &SavitzkyGolay) -> Result<Self> {
        let h = series.uniform_spacing()?;
        let y = series.values();
        let n = y.len();
        let plans = (0..4)
            .map(|d| sg.plan(n, d))
            .collect::<Result<Vec<_>>>()?;

        let values: [Vec<f64>; 4] = std::array::from_fn(|d| {
            let scale = h.powi(d as i32).recip();
            plans[d].apply(y).into_iter().map(|v| v * scale).collect()
        });
        let edge_mask: Vec<bool> = (0..n).map(|i| plans[0].is_edge(i)).collect();

        let m = sg.half_width();
        let w0 = plans[0].interior_weights()[m];
        let interior: Vec<usize> = (0..n).filter(|&i| !edge_mask[i]).collect();
        let sigma2 = if interior.is_empty() || w0 >= 1.0 {
            0.0
        } else {
            interior
                .iter()
                .map(|&i| (y[i] - values[0][i]).powi(2))
                .sum::<f64>()
                / (interior.len() as f64 * (1.0 - w0))
        };
        let sigma = sigma2.sqrt();

        let intervals: [Vec<(f64, f64)>; 4] = std::array::from_fn(|d| {
            let scale = h.powi(d as i32).recip();
            (0..n)
                .map(|i| {
                    let (_, w) = plans[d].weights_at(i);
                    let norm = w.iter().map(|c| c * c).sum::<f64>().sqrt();
                    let half = Z95 * sigma * norm * scale;
                    (values[d][i] - half, values[d][i] + half)
                })
                .collect()
        });

        Ok(DerivativeEstimate {
            times: series.times().to_vec(),
            values,
            intervals,
            edge_mask,
        })
    }

    /// CSV with header `t,c,c1,c2,c3,c3_lo,c3_hi,edge`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,c,c1,c2,c3,c3_lo,c3_hi,edge\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.times[i],
                self.values[0][i],
                self.values[1][i],
                self.values[2][i],
                self.values[3][i],
                self.intervals[3][i].0,
                self.intervals[3][i].1,
                self.edge_mask[i]
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}
