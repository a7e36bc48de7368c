//! Residual bootstrap for derivative confidence intervals.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::derivatives::DerivativeEstimate;
use super::fit::{derivatives_from_model, fit_candidate, ModelCandidate};
use super::savgol::{FilterPlan, SavitzkyGolay};
use crate::error::{Error, Result};
use crate::rng;
use crate::series::TimeSeries;

pub const MIN_BOOTSTRAP: usize = 200;

/// How derivatives are produced from a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pipeline {
    SavitzkyGolay { window: usize, poly_order: usize },
    Model { candidate: ModelCandidate },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// Multiplicative when every value is positive, additive otherwise.
    #[default]
    Auto,
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    pub seed: u64,
    #[serde(default)]
    pub residuals: ResidualMode,
}

impl BootstrapConfig {
    pub fn new(n_boot: usize, seed: u64) -> Self {
        BootstrapConfig {
            n_boot,
            seed,
            residuals: ResidualMode::Auto,
        }
    }
}

enum Estimator {
    SavGol { plans: Vec<FilterPlan>, h: f64 },
    Model { candidate: ModelCandidate },
}

impl Estimator {
    fn estimate(&self, series: &TimeSeries) -> Result<[Vec<f64>; 4]> {
        match self {
            Estimator::SavGol { plans, h } => Ok(std::array::from_fn(|d| {
                let scale = h.powi(d as i32).recip();
                plans[d].apply(series.values()).into_iter().map(|v| v * scale).collect()
            })),
            Estimator::Model { candidate } => {
                let model = fit_candidate(series, *candidate)?;
                Ok(derivatives_from_model(&model, series.times())?.values)
            }
        }
    }
}

/// Fit once, resample the (leverage-corrected, centred) residuals with
/// replacement, refit, and take pointwise 2.5% / 97.5% percentiles of the
/// replicate derivatives. Point estimates come from the original fit.
pub fn bootstrap_derivative_ci(
    series: &TimeSeries,
    pipeline: Pipeline,
    config: BootstrapConfig,
) -> Result<DerivativeEstimate> {
    if config.n_boot < MIN_BOOTSTRAP {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP} replicates, got {}",
            config.n_boot
        )));
    }
    let n = series.len();
    let (estimator, base, leverage) = match pipeline {
        Pipeline::SavitzkyGolay { window, poly_order } => {
            let sg = SavitzkyGolay::new(window, poly_order)?;
            let base = DerivativeEstimate::from_savgol(series, &sg)?;
            let plans = (0..4).map(|d| sg.plan(n, d)).collect::<Result<Vec<_>>>()?;
            let leverage = (0..n)
                .map(|i| {
                    let (start, w) = plans[0].weights_at(i);
                    w[i - start]
                })
                .collect::<Vec<_>>();
            let h = series.uniform_spacing()?;
            (Estimator::SavGol { plans, h }, base, leverage)
        }
        Pipeline::Model { candidate } => {
            let model = fit_candidate(series, candidate)?;
            let base = derivatives_from_model(&model, series.times())?;
            let leverage = series.times().iter().map(|&t| model.leverage(t)).collect();
            (Estimator::Model { candidate }, base, leverage)
        }
    };

    let fitted = base.c();
    let y = series.values();
    let multiplicative = match config.residuals {
        ResidualMode::Multiplicative => true,
        ResidualMode::Additive => false,
        ResidualMode::Auto => y.iter().chain(fitted).all(|&v| v > 0.0),
    };
    let mut resid: Vec<f64> = (0..n)
        .map(|i| {
            let raw = if multiplicative {
                y[i] / fitted[i] - 1.0
            } else {
                y[i] - fitted[i]
            };
            raw / (1.0 - leverage[i]).max(1e-3).sqrt()
        })
        .collect();
    let mean = resid.iter().sum::<f64>() / n as f64;
    resid.iter_mut().for_each(|r| *r -= mean);

    let replicates = (0..config.n_boot)
        .map(|b| {
            let mut rng = rng::rng_for(config.seed, &[b as u64]);
            let values = (0..n)
                .map(|i| {
                    let r = resid[rng.random_range(0..n)];
                    if multiplicative {
                        fitted[i] * (1.0 + r)
                    } else {
                        fitted[i] + r
                    }
                })
                .collect();
            estimator.estimate(&series.with_values(values)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = base.clone();
    let mut column = vec![0.0; config.n_boot];
    for d in 0..4 {
        for i in 0..n {
            for (slot, rep) in column.iter_mut().zip(&replicates) {
                *slot = rep[d][i];
            }
            column.sort_by(f64::total_cmp);
            let est = base.values[d][i];
            let lo = quantile_sorted(&column, 0.025).min(est);
            let hi = quantile_sorted(&column, 0.975).max(est);
            out.intervals[d][i] = (lo, hi);
        }
    }
    Ok(out)
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_polynomial_gives_degenerate_intervals() {
        let s = TimeSeries::from_fn(0.0, 9.9, 100, |t| 1.0 + 0.5 * t + 0.1 * t.powi(3)).unwrap();
        for pipeline in [
            Pipeline::SavitzkyGolay {
                window: 11,
                poly_order: 4,
            },
            Pipeline::Model {
                candidate: ModelCandidate::polynomial(3),
            },
        ] {
            let est = bootstrap_derivative_ci(&s, pipeline, BootstrapConfig::new(200, 1)).unwrap();
            for i in est.interior().collect::<Vec<_>>() {
                for d in 0..4 {
                    let (lo, hi) = est.intervals[d][i];
                    assert!(hi - lo < 1e-6, "{pipeline:?} d{d} i{i}: {}", hi - lo);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_intervals() {
        let s = TimeSeries::from_fn(0.0, 9.9, 100, |t| 1.0 + t + 0.2 * (5.0 * t).sin()).unwrap();
        let p = Pipeline::SavitzkyGolay {
            window: 11,
            poly_order: 4,
        };
        let a = bootstrap_derivative_ci(&s, p, BootstrapConfig::new(200, 5)).unwrap();
        let b = bootstrap_derivative_ci(&s, p, BootstrapConfig::new(200, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_replicates() {
        let s = TimeSeries::from_fn(0.0, 9.9, 100, |t| 1.0 + t).unwrap();
        let p = Pipeline::SavitzkyGolay {
            window: 11,
            poly_order: 4,
        };
        assert!(bootstrap_derivative_ci(&s, p, BootstrapConfig::new(199, 5)).is_err());
    }
}
