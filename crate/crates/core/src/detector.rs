//! Hybrid jolt detector.
//!
//! The detection signal is `S(t) = d^2/dt^2 ln C(t)`, the slope of the
//! relative growth rate. It is zero for any exponential and positive exactly
//! where doubling times shrink. Three sub-scores summarise `S` over the
//! non-edge points:
//!
//! * peak: `max(S) / (1.4826 MAD(S))`, divided by `threshold_peak` and
//!   squashed by `x / (1 + x)`
//! * pattern: best Pearson correlation of `S` with a smootherstep rise at
//!   widths `n/4`, `n/2`, `3n/4` over every lag, clamped to `[0, 1]`
//! * duration: longest run of `S > 0` as a fraction of the points, divided by
//!   `min_duration_frac` and capped at 1
//!
//! Significance comes from a residual permutation test against an
//! exponential null (a straight line in log space). A series is flagged when
//! the weighted score reaches `decision_threshold` and `p <= alpha_sig`.

use std::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{loess_smooth, SavitzkyGolay, SmootherConfig};
use crate::growth::smootherstep;
use crate::rng;
use crate::series::TimeSeries;

pub const MIN_SERIES_LEN: usize = 32;
pub const MIN_PERMUTATIONS: usize = 99;
pub const MIN_SIGNAL_POINTS: usize = 8;
/// Local polynomial order of the default detection filter. Order 2 has about
/// a quarter of the order-4 noise on second derivatives.
pub const DETECTION_POLY_ORDER: usize = 2;
const MAD_TO_SIGMA: f64 = 1.4826;
/// Signal values within this multiple of the worst-case rounding bound are
/// set to exactly zero, so a noiseless exponential yields `S == 0`.
const SNAP_REL: f64 = 1e-10;

/// Statistic used by the permutation test. Both are linear in `ln C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationStatistic {
    /// Twice the quadratic coefficient of a global least-squares fit to
    /// `ln C`. For `ln C = a + bt + ct^2` it equals `S = 2c` exactly.
    #[default]
    Curvature,
    /// Mean of `S` over non-edge points.
    MeanSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// `None` picks a Savitzky-Golay filter of order [`DETECTION_POLY_ORDER`]
    /// with the length-based default window.
    pub smoother: Option<SmootherConfig>,
    pub threshold_peak: f64,
    /// Validated and reported; the pattern score enters the combination directly.
    pub threshold_pattern: f64,
    pub min_duration_frac: f64,
    /// Weights of the peak, pattern and duration scores.
    pub combine_weights: [f64; 3],
    pub decision_threshold: f64,
    pub n_perm: usize,
    pub alpha_sig: f64,
    pub statistic: PermutationStatistic,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            smoother: None,
            threshold_peak: 1.5,
            threshold_pattern: 0.5,
            min_duration_frac: 0.25,
            combine_weights: [1.0 / 3.0; 3],
            decision_threshold: 0.5,
            n_perm: 499,
            alpha_sig: 0.05,
            statistic: PermutationStatistic::Curvature,
            seed: 0,
        }
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidConfig(msg)
}

impl DetectorConfig {
    pub fn with_window(mut self, window: usize) -> Self {
        let poly_order = match self.smoother {
            Some(SmootherConfig::SavitzkyGolay { poly_order, .. }) => poly_order,
            _ => DETECTION_POLY_ORDER,
        };
        self.smoother = Some(SmootherConfig::SavitzkyGolay { window, poly_order });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_perm < MIN_PERMUTATIONS {
            return Err(Error::TooFewPermutations(self.n_perm));
        }
        if !(self.threshold_peak > 0.0 && self.threshold_peak.is_finite()) {
            return Err(invalid(format!("threshold_peak must be > 0, got {}", self.threshold_peak)));
        }
        if !(0.0..=1.0).contains(&self.threshold_pattern) {
            return Err(invalid(format!(
                "threshold_pattern must lie in [0, 1], got {}",
                self.threshold_pattern
            )));
        }
        if !(self.min_duration_frac > 0.0 && self.min_duration_frac <= 1.0) {
            return Err(invalid(format!(
                "min_duration_frac must lie in (0, 1], got {}",
                self.min_duration_frac
            )));
        }
        let w = self.combine_weights;
        if w.iter().any(|&u| !(u >= 0.0 && u.is_finite())) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(invalid(format!(
                "combine_weights must be non-negative and sum to 1, got {w:?}"
            )));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(invalid(format!(
                "decision_threshold must lie in (0, 1), got {}",
                self.decision_threshold
            )));
        }
        if !(self.alpha_sig > 0.0 && self.alpha_sig < 1.0) {
            return Err(invalid(format!("alpha_sig must lie in (0, 1), got {}", self.alpha_sig)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubScores {
    pub peak: f64,
    pub pattern: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub verdict: bool,
    pub score: f64,
    pub sub_scores: SubScores,
    pub intervals: Vec<(f64, f64)>,
    pub p_value: f64,
    /// Per-point `S(t)`; `null` on edge points.
    pub signal: Vec<Option<f64>>,
}

impl DetectionResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `S(t)` with its valid (non-edge) index range.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSignal {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub valid: Range<usize>,
}

impl DetectionSignal {
    pub fn unmasked(&self) -> &[f64] {
        &self.values[self.valid.clone()]
    }

    pub fn masked_values(&self) -> Vec<Option<f64>> {
        (0..self.values.len())
            .map(|i| self.valid.contains(&i).then(|| self.values[i]))
            .collect()
    }
}

fn resolve_filter(n: usize, smoother: Option<SmootherConfig>) -> Result<SavitzkyGolay> {
    match smoother {
        Some(SmootherConfig::SavitzkyGolay { window, poly_order }) => SavitzkyGolay::new(window, poly_order),
        _ => Ok(SavitzkyGolay {
            poly_order: DETECTION_POLY_ORDER,
            ..SavitzkyGolay::default_for_len(n)
        }),
    }
}

fn spread_scale(y: &[f64]) -> f64 {
    let (lo, hi, abs) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY, 0.0f64), |(lo, hi, a), &v| {
        (lo.min(v), hi.max(v), a.max(v.abs()))
    });
    (hi - lo).max(1e-6 * abs)
}

/// Second derivative of `ln C` on non-edge points.
///
/// With a LOESS smoother the log values are smoothed first and then
/// differentiated with the default detection filter.
pub fn detection_signal(series: &TimeSeries, smoother: Option<SmootherConfig>) -> Result<DetectionSignal> {
    let logs = series.log_transform()?;
    let n = logs.len();
    let sg = resolve_filter(n, smoother)?;
    let input = match smoother {
        Some(SmootherConfig::Loess { span }) => loess_smooth(&logs, span)?,
        _ => logs,
    };
    let h = input.uniform_spacing()?;
    let plan = sg.plan(n, 2)?;
    let m = sg.half_width();
    let y = input.values();
    let l1: f64 = plan.interior_weights().iter().map(|w| w.abs()).sum();
    let tol = SNAP_REL * l1 * spread_scale(y) / (h * h);
    let values = plan
        .apply(y)
        .into_iter()
        .map(|v| {
            let s = v / (h * h);
            if s.abs() <= tol {
                0.0
            } else {
                s
            }
        })
        .collect();
    Ok(DetectionSignal {
        times: input.times().to_vec(),
        values,
        valid: m..n - m,
    })
}

fn require_points(s: &[f64]) -> Result<()> {
    if s.len() < MIN_SIGNAL_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_SIGNAL_POINTS,
            got: s.len(),
        });
    }
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn squash(x: f64) -> f64 {
    if x.is_infinite() {
        1.0
    } else {
        x / (1.0 + x)
    }
}

/// Zero-variance threshold relative to the signal's magnitude.
fn degenerate_scale(s: &[f64]) -> f64 {
    1e-9 * s.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

pub fn peak_ratio_score(s: &[f64], threshold_peak: f64) -> Result<f64> {
    require_points(s)?;
    let peak = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak <= 0.0 {
        return Ok(0.0);
    }
    let mut work = s.to_vec();
    let med = median(&mut work);
    work.iter_mut().for_each(|v| *v = (*v - med).abs());
    let scale = MAD_TO_SIGMA * median(&mut work);
    let raw = if scale <= degenerate_scale(s) {
        f64::INFINITY
    } else {
        peak / scale
    };
    Ok(squash(raw / threshold_peak))
}

/// Smootherstep rise starting at index `start` over `width` points: zero
/// before, one after.
fn template(len: usize, start: isize, width: usize) -> impl Iterator<Item = f64> {
    let span = (width - 1).max(1) as f64;
    (0..len).map(move |i| smootherstep((i as isize - start) as f64 / span))
}

pub fn pattern_match_score(s: &[f64]) -> Result<f64> {
    require_points(s)?;
    let n = s.len();
    let mean = s.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = s.iter().map(|v| v - mean).collect();
    let ss = centred.iter().map(|v| v * v).sum::<f64>();
    let sd = (ss / n as f64).sqrt();
    if sd <= degenerate_scale(s) {
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    for width in [n / 4, n / 2, 3 * n / 4] {
        let width = width.max(2);
        for start in -(width as isize - 1)..n as isize {
            let tpl: Vec<f64> = template(n, start, width).collect();
            let tm = tpl.iter().sum::<f64>() / n as f64;
            let (mut cov, mut tt) = (0.0, 0.0);
            for (c, t) in centred.iter().zip(&tpl) {
                let d = t - tm;
                cov += c * d;
                tt += d * d;
            }
            if tt <= 1e-12 * n as f64 {
                continue;
            }
            best = best.max(cov / (ss * tt).sqrt());
        }
    }
    Ok(best.clamp(0.0, 1.0))
}

/// Maximal runs of `S > 0` as index ranges.
fn positive_runs(s: &[f64]) -> Vec<Range<usize>> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &v) in s.iter().enumerate() {
        match (v > 0.0, start) {
            (true, None) => start = Some(i),
            (false, Some(a)) => {
                runs.push(a..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        runs.push(a..s.len());
    }
    runs
}

pub fn duration_score(s: &[f64], min_duration_frac: f64) -> Result<f64> {
    require_points(s)?;
    let longest = positive_runs(s).iter().map(|r| r.len()).max().unwrap_or(0);
    let frac = longest as f64 / s.len() as f64;
    Ok((frac / min_duration_frac).min(1.0))
}

/// Linear functional `kappa` with `statistic = kappa . ln C`. Both choices
/// annihilate constants and straight lines.
fn statistic_weights(
    n: usize,
    h: f64,
    statistic: PermutationStatistic,
    smoother: Option<SmootherConfig>,
) -> Result<Vec<f64>> {
    match statistic {
        PermutationStatistic::Curvature => {
            let c = (n as f64 - 1.0) / 2.0;
            let u2: Vec<f64> = (0..n).map(|i| (i as f64 - c).powi(2)).collect();
            let mean = u2.iter().sum::<f64>() / n as f64;
            let q: Vec<f64> = u2.iter().map(|v| v - mean).collect();
            let qq = q.iter().map(|v| v * v).sum::<f64>();
            Ok(q.iter().map(|v| 2.0 * v / (qq * h * h)).collect())
        }
        PermutationStatistic::MeanSignal => {
            let sg = resolve_filter(n, smoother)?;
            let plan = sg.plan(n, 2)?;
            let m = sg.half_width();
            let w = plan.interior_weights();
            let count = (n - 2 * m) as f64;
            let mut kappa = vec![0.0; n];
            for i in m..n - m {
                for (k, wk) in w.iter().enumerate() {
                    kappa[i - m + k] += wk / (count * h * h);
                }
            }
            Ok(kappa)
        }
    }
}

/// Residuals of the least-squares line through `ln C` against the sample
/// index. Rounding-level residuals are set to zero.
fn null_residuals(logs: &[f64]) -> Vec<f64> {
    let n = logs.len();
    let c = (n as f64 - 1.0) / 2.0;
    let mean = logs.iter().sum::<f64>() / n as f64;
    let (mut suy, mut suu) = (0.0, 0.0);
    for (i, y) in logs.iter().enumerate() {
        let u = i as f64 - c;
        suy += u * (y - mean);
        suu += u * u;
    }
    let slope = suy / suu;
    let tol = SNAP_REL * spread_scale(logs);
    logs.iter()
        .enumerate()
        .map(|(i, y)| {
            let r = y - mean - slope * (i as f64 - c);
            if r.abs() <= tol {
                0.0
            } else {
                r
            }
        })
        .collect()
}

/// Residual permutation p-value against the exponential null.
///
/// Surrogates are the fitted line plus permuted residuals. Since both
/// statistics are linear and annihilate the line, each surrogate statistic
/// is `kappa . permuted residuals`, computed directly.
pub fn permutation_test(series: &TimeSeries, config: &DetectorConfig) -> Result<f64> {
    if config.n_perm < MIN_PERMUTATIONS {
        return Err(Error::TooFewPermutations(config.n_perm));
    }
    let logs = series.log_transform()?;
    let h = logs.uniform_spacing()?;
    let kappa = statistic_weights(logs.len(), h, config.statistic, config.smoother)?;
    let mut resid = null_residuals(logs.values());
    let dot = |r: &[f64]| r.iter().zip(&kappa).map(|(a, b)| a * b).sum::<f64>();
    let observed = dot(&resid);
    let mut exceed = 0usize;
    for b in 0..config.n_perm {
        let mut rng = rng::rng_for(config.seed, &[b as u64]);
        resid.shuffle(&mut rng);
        if dot(&resid) >= observed {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (config.n_perm + 1) as f64)
}

pub fn hybrid_detect(series: &TimeSeries, config: &DetectorConfig) -> Result<DetectionResult> {
    config.validate()?;
    if series.len() < MIN_SERIES_LEN {
        return Err(Error::SeriesTooShort {
            needed: MIN_SERIES_LEN,
            got: series.len(),
        });
    }
    let signal = detection_signal(series, config.smoother)?;
    let s = signal.unmasked();
    let sub_scores = SubScores {
        peak: peak_ratio_score(s, config.threshold_peak)?,
        pattern: pattern_match_score(s)?,
        duration: duration_score(s, config.min_duration_frac)?,
    };
    let [u_peak, u_pattern, u_duration] = config.combine_weights;
    let score = (u_peak * sub_scores.peak + u_pattern * sub_scores.pattern + u_duration * sub_scores.duration)
        .clamp(0.0, 1.0);
    let p_value = permutation_test(series, config)?;

    let min_len = config.min_duration_frac * s.len() as f64;
    let offset = signal.valid.start;
    let intervals = positive_runs(s)
        .into_iter()
        .filter(|r| r.len() as f64 >= min_len)
        .map(|r| (signal.times[offset + r.start], signal.times[offset + r.end - 1]))
        .collect();

    Ok(DetectionResult {
        verdict: score >= config.decision_threshold && p_value <= config.alpha_sig,
        score,
        sub_scores,
        intervals,
        p_value,
        signal: signal.masked_values(),
    })
}
