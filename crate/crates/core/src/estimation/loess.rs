//! Local-linear LOESS with tricube weights. Smoothing only; derivatives of
//! order three are never taken from this path.

use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub fn loess_smooth(series: &TimeSeries, span: f64) -> Result<TimeSeries> {
    let n = series.len();
    if !(span > 0.0 && span <= 1.0) {
        return Err(Error::InvalidOrder(format!("span must lie in (0, 1], got {span}")));
    }
    if span * (n as f64) < 4.0 {
        return Err(Error::SpanTooSmall { span, len: n });
    }
    let q = ((span * n as f64).ceil() as usize).min(n);
    let t = series.times();
    let y = series.values();

    let mut out = Vec::with_capacity(n);
    let mut lo = 0usize;
    for i in 0..n {
        // Slide the q-nearest-neighbour window [lo, lo + q) so it stays
        // centred on t[i] as tightly as possible.
        while lo + q < n && t[lo + q] - t[i] < t[i] - t[lo] {
            lo += 1;
        }
        let hi = lo + q;
        let radius = (t[i] - t[lo]).max(t[hi - 1] - t[i]) * 1.000_001;

        let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in lo..hi {
            let dx = t[j] - t[i];
            let u = (dx.abs() / radius).min(1.0);
            let w = (1.0 - u * u * u).powi(3);
            sw += w;
            sx += w * dx;
            sy += w * y[j];
            sxx += w * dx * dx;
            sxy += w * dx * y[j];
        }
        let det = sw * sxx - sx * sx;
        let fitted = if det.abs() > 1e-14 * sw * sxx.max(f64::MIN_POSITIVE) {
            (sxx * sy - sx * sxy) / det
        } else {
            sy / sw
        };
        out.push(fitted);
    }
    series.with_values(out)
}
