//! Savitzky-Golay smoothing and differentiation on uniform grids.
//!
//! Coefficients come from a QR least-squares solve of the local Vandermonde
//! system in index units, then are scaled by `h^-order`. Points closer than
//! half a window to either end get a one-sided fit over the truncated window
//! (never shorter than `poly_order + 1` points) and are flagged in the edge
//! mask by callers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavitzkyGolay {
    pub window: usize,
    pub poly_order: usize,
}

impl SavitzkyGolay {
    pub fn new(window: usize, poly_order: usize) -> Result<Self> {
        let sg = SavitzkyGolay { window, poly_order };
        sg.check()?;
        Ok(sg)
    }

    /// `max(11, round(n / 10))` made odd, order 4.
    pub fn default_for_len(n: usize) -> Self {
        let mut window = ((n as f64) / 10.0).round() as usize;
        if window.is_multiple_of(2) {
            window += 1;
        }
        SavitzkyGolay {
            window: window.max(11),
            poly_order: 4,
        }
    }

    pub fn half_width(&self) -> usize {
        self.window / 2
    }

    fn check(&self) -> Result<()> {
        if self.window < 5 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidOrder(format!(
                "window must be odd and >= 5, got {}",
                self.window
            )));
        }
        if self.poly_order >= self.window {
            return Err(Error::InvalidOrder(format!(
                "poly_order {} must be below window {}",
                self.poly_order, self.window
            )));
        }
        Ok(())
    }

    fn check_for(&self, n: usize, order: usize) -> Result<()> {
        self.check()?;
        if self.window > n {
            return Err(Error::WindowTooLarge {
                window: self.window,
                len: n,
            });
        }
        if order > self.poly_order {
            return Err(Error::OrderExceedsPoly {
                order,
                poly_order: self.poly_order,
            });
        }
        Ok(())
    }

    /// Convolution weights (index units, unscaled) for every output position.
    pub fn plan(&self, n: usize, order: usize) -> Result<FilterPlan> {
        self.check_for(n, order)?;
        let m = self.half_width();
        let offsets: Vec<f64> = (0..self.window).map(|k| k as f64 - m as f64).collect();
        let interior = local_fit_weights(&offsets, self.poly_order, order);

        let mut left = Vec::with_capacity(m);
        let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
        for i in 0..m {
            let len = (i + m + 1).max(self.poly_order + 1).min(n);
            let offsets: Vec<f64> = (0..len).map(|k| k as f64 - i as f64).collect();
            left.push(local_fit_weights(&offsets, self.poly_order, order));
        }
        // Right edge is the mirror image of the left edge.
        let right = left
            .iter()
            .map(|w| w.iter().rev().map(|c| sign * c).collect())
            .collect();
        Ok(FilterPlan {
            n,
            half_width: m,
            interior,
            left,
            right,
        })
    }

    pub fn smooth(&self, series: &TimeSeries) -> Result<TimeSeries> {
        self.derivative(series, 0)
    }

    /// Derivative of order `order` (0 = smoothing) in physical time units.
    pub fn derivative(&self, series: &TimeSeries, order: usize) -> Result<TimeSeries> {
        let h = series.uniform_spacing()?;
        let plan = self.plan(series.len(), order)?;
        let scale = h.powi(order as i32).recip();
        let values = plan.apply(series.values()).into_iter().map(|v| v * scale).collect();
        series.with_values(values)
    }
}

/// Precomputed weights for one (window, order, derivative, length) combination.
#[derive(Debug, Clone)]
pub struct FilterPlan {
    n: usize,
    half_width: usize,
    interior: Vec<f64>,
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
}

impl FilterPlan {
    pub fn interior_weights(&self) -> &[f64] {
        &self.interior
    }

    /// Weights for output `i` and the index of the first input they touch.
    pub fn weights_at(&self, i: usize) -> (usize, &[f64]) {
        let m = self.half_width;
        if i < m {
            let w = &self.left[i];
            (0, w)
        } else if i + m >= self.n {
            let w = &self.right[self.n - 1 - i];
            (self.n - w.len(), w)
        } else {
            (i - m, &self.interior)
        }
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n, "plan built for a different length");
        (0..self.n)
            .map(|i| {
                let (start, w) = self.weights_at(i);
                w.iter().zip(&y[start..]).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub fn is_edge(&self, i: usize) -> bool {
        i < self.half_width || i + self.half_width >= self.n
    }
}

/// Weights `w` with `sum_k w_k y_k` equal to the `deriv`-th derivative at
/// offset 0 of the least-squares polynomial through `(offsets_k, y_k)`.
pub(crate) fn local_fit_weights(offsets: &[f64], poly_order: usize, deriv: usize) -> Vec<f64> {
    let rows = offsets.len();
    let cols = poly_order + 1;
    let scale = offsets.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    let vander = DMatrix::from_fn(rows, cols, |r, c| (offsets[r] / scale).powi(c as i32));
    let qr = vander.qr();
    let r = qr.r();
    let q = qr.q();
    // Row `deriv` of R^-1 Q^T: solve R^T z = e_deriv, then w = Q z.
    let mut e = DVector::zeros(cols);
    e[deriv] = 1.0;
    let z = r
        .transpose()
        .solve_lower_triangular(&e)
        .expect("Vandermonde with distinct nodes has full rank");
    let w = q * z;
    let factorial: f64 = (1..=deriv).map(|k| k as f64).product();
    let factor = factorial / scale.powi(deriv as i32);
    w.iter().map(|v| v * factor).collect()
}
