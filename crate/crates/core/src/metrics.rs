//! Pointwise jolt metrics computed from derivative estimates.
//!
//! * `J(t) = C'''(t) / C(t)` (units time^-3)
//! * `J_N(t) = C'''(t) C(t) / (C'(t) C''(t))`, dimensionless, exactly 1 for
//!   any pure exponential
//! * `alpha(t) = C'(t) / C(t)` and doubling time `ln 2 / alpha(t)`
//!
//! `J_N` is masked where `|C'|` or `|C''|` falls below `1e-8` times that
//! derivative's RMS over interior points; doubling time is masked where
//! `alpha <= 0`. Masked entries are `None` and downstream statistics skip them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::DerivativeEstimate;
use crate::growth::{self, InteractionSpec, ResourceSchedule};
use crate::series::{fmt_opt, TimeSeries};

pub const SINGULARITY_REL_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoltMetrics {
    pub times: Vec<f64>,
    pub jolt: Vec<f64>,
    pub dimensionless: Vec<Option<f64>>,
    pub alpha: Vec<f64>,
    pub doubling_time: Vec<Option<f64>>,
    pub singular_mask: Vec<bool>,
}

fn check_positive(d: &DerivativeEstimate) -> Result<()> {
    match d.c().iter().position(|&c| !(c > 0.0)) {
        Some(index) => Err(Error::NonPositiveCapability {
            index,
            value: d.c()[index],
        }),
        None => Ok(()),
    }
}

pub fn jolt_magnitude(d: &DerivativeEstimate) -> Result<Vec<f64>> {
    check_positive(d)?;
    Ok(d.c3().iter().zip(d.c()).map(|(c3, c)| c3 / c).collect())
}

fn interior_rms(d: &DerivativeEstimate, values: &[f64]) -> f64 {
    let mut idx: Vec<usize> = d.interior().collect();
    if idx.is_empty() {
        idx = (0..values.len()).collect();
    }
    (idx.iter().map(|&i| values[i] * values[i]).sum::<f64>() / idx.len() as f64).sqrt()
}

/// `J_N` per point, `None` where the guard masks it.
pub fn dimensionless_jolt(d: &DerivativeEstimate) -> Vec<Option<f64>> {
    let eps1 = SINGULARITY_REL_EPS * interior_rms(d, d.c1());
    let eps2 = SINGULARITY_REL_EPS * interior_rms(d, d.c2());
    (0..d.len())
        .map(|i| {
            let (c, c1, c2, c3) = (d.c()[i], d.c1()[i], d.c2()[i], d.c3()[i]);
            (c1.abs() > eps1 && c2.abs() > eps2).then(|| c3 * c / (c1 * c2))
        })
        .collect()
}

/// `alpha = C'/C` and `ln 2 / alpha` where `alpha > 0`.
pub fn growth_and_doubling(d: &DerivativeEstimate) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    check_positive(d)?;
    let alpha: Vec<f64> = d.c1().iter().zip(d.c()).map(|(c1, c)| c1 / c).collect();
    let doubling = alpha
        .iter()
        .map(|&a| (a > 0.0).then(|| std::f64::consts::LN_2 / a))
        .collect();
    Ok((alpha, doubling))
}

/// Resource-damped jolt. Shares its implementation with the generators.
pub fn effective_jolt(jolt: &TimeSeries, schedule: &ResourceSchedule) -> Result<TimeSeries> {
    growth::apply_resource_damping(jolt, schedule)
}

/// Weighted factor jolts plus interaction terms.
pub fn composite_jolt(
    contributions: &[(f64, &TimeSeries)],
    interaction: &InteractionSpec,
) -> Result<TimeSeries> {
    growth::compose(contributions, interaction)
}

impl JoltMetrics {
    pub fn compute(d: &DerivativeEstimate) -> Result<Self> {
        let jolt = jolt_magnitude(d)?;
        let dimensionless = dimensionless_jolt(d);
        let (alpha, doubling_time) = growth_and_doubling(d)?;
        let singular_mask = dimensionless.iter().map(Option::is_none).collect();
        Ok(JoltMetrics {
            times: d.times.clone(),
            jolt,
            dimensionless,
            alpha,
            doubling_time,
            singular_mask,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with header `t,J,JN,alpha,t_double,singular`; masked values are `NaN`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,J,JN,alpha,t_double,singular\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.times[i],
                self.jolt[i],
                fmt_opt(self.dimensionless[i]),
                self.alpha[i],
                fmt_opt(self.doubling_time[i]),
                self.singular_mask[i]
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::Family;
    use crate::series::linspace;

    fn analytic(family: &Family, times: &[f64]) -> DerivativeEstimate {
        let mut values: [Vec<f64>; 4] = Default::default();
        for &t in times {
            let d = family.analytic_derivatives(t).unwrap();
            for k in 0..4 {
                values[k].push(d[k]);
            }
        }
        DerivativeEstimate::exact(times.to_vec(), values)
    }

    fn poly(times: &[f64], coeffs: [f64; 4]) -> DerivativeEstimate {
        // coeffs for 1, t, t^2, t^3
        let [a, b, c, e] = coeffs;
        let mut values: [Vec<f64>; 4] = Default::default();
        for &t in times {
            values[0].push(a + b * t + c * t * t + e * t.powi(3));
            values[1].push(b + 2.0 * c * t + 3.0 * e * t * t);
            values[2].push(2.0 * c + 6.0 * e * t);
            values[3].push(6.0 * e);
        }
        DerivativeEstimate::exact(times.to_vec(), values)
    }

    #[test]
    fn exponential_jolt_is_k_cubed() {
        let d = analytic(&Family::Exponential { c0: 2.0, k: 0.1 }, &linspace(0.0, 20.0, 21));
        for j in jolt_magnitude(&d).unwrap() {
            assert!((j - 0.001).abs() < 1e-15);
        }
        for jn in dimensionless_jolt(&d) {
            assert!((jn.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_and_cubic_jolt() {
        let times = linspace(0.0, 3.0, 4);
        let q = poly(&times, [1.0, 0.0, 1.0, 0.0]);
        assert!(jolt_magnitude(&q).unwrap().iter().all(|&j| j == 0.0));
        let c = poly(&times, [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(jolt_magnitude(&c).unwrap()[1], 3.0);
    }

    #[test]
    fn logistic_inflection_is_masked() {
        let family = Family::Logistic {
            capacity: 100.0,
            rate: 1.0,
            midpoint: 5.0,
        };
        let times = linspace(0.0, 10.0, 21);
        let jn = dimensionless_jolt(&analytic(&family, &times));
        assert!(jn[10].is_none());
        assert!(jn[3].is_some());
    }

    #[test]
    fn log_quadratic_dimensionless_jolt_near_origin() {
        for b in [0.005, 0.01, 0.02] {
            let family = Family::LogQuadratic { c0: 1.0, a: 0.0, b };
            let times = [-1e-3, 1e-3, 2.0, 10.0];
            let d = analytic(&family, &times);
            let jn = dimensionless_jolt(&d);
            for (t, v) in times.iter().zip(jn) {
                let oracle = (3.0 + 2.0 * b * t * t) / (1.0 + 2.0 * b * t * t);
                assert!((v.unwrap() - oracle).abs() < 1e-9);
            }
            // t = 0 itself is a removable 0/0 and gets masked.
            let at_zero = analytic(&family, &[-1.0, 0.0, 1.0]);
            assert!(dimensionless_jolt(&at_zero)[1].is_none());
        }
    }

    #[test]
    fn doubling_time_examples() {
        let k = std::f64::consts::LN_2 / 10.0;
        let d = analytic(&Family::Exponential { c0: 1.0, k }, &linspace(0.0, 5.0, 6));
        let (_, dt) = growth_and_doubling(&d).unwrap();
        assert!(dt.iter().all(|v| (v.unwrap() - 10.0).abs() < 1e-12));

        let lq = Family::LogQuadratic { c0: 1.0, a: 0.0, b: 0.01 };
        let (_, dt) = growth_and_doubling(&analytic(&lq, &[10.0])).unwrap();
        assert!((dt[0].unwrap() - 3.4657).abs() < 1e-4);
        assert!((dt[0].unwrap() - std::f64::consts::LN_2 / 0.2).abs() < 1e-9);

        let declining = analytic(&Family::Exponential { c0: 1.0, k: -0.1 }, &[0.0, 1.0]);
        let (alpha, dt) = growth_and_doubling(&declining).unwrap();
        assert!(alpha.iter().all(|&a| a < 0.0));
        assert!(dt.iter().all(Option::is_none));
    }

    #[test]
    fn non_positive_capability_rejected() {
        let d = poly(&[0.0, 1.0], [-1.0, 1.0, 0.0, 0.0]);
        assert!(matches!(jolt_magnitude(&d), Err(Error::NonPositiveCapability { index: 0, .. })));
    }

    #[test]
    fn effective_and_composite_examples() {
        let j = TimeSeries::from_fn(0.0, 1.0, 3, |_| 1.0).unwrap();
        let quarter = ResourceSchedule::new(j.with_values(vec![0.25; 3]).unwrap(), 1.0).unwrap();
        let eff = effective_jolt(&j, &quarter).unwrap();
        assert!(eff.values().iter().all(|&v| (v - 0.75).abs() < 1e-12));
        let total = composite_jolt(&[(2.0, &j)], &InteractionSpec::none()).unwrap();
        assert!(total.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn csv_has_expected_header() {
        let d = analytic(&Family::Exponential { c0: 1.0, k: -0.1 }, &[0.0, 1.0]);
        let m = JoltMetrics::compute(&d).unwrap();
        let csv = m.to_csv_string();
        assert!(csv.starts_with("t,J,JN,alpha,t_double,singular\n"));
        assert!(csv.lines().nth(1).unwrap().contains("NaN"));
    }
}
