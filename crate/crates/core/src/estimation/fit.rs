//! Global least-squares models (polynomials and cubic regression splines)
//! with AIC/BIC/cross-validation model selection and analytic derivatives.
//!
//! Fits go through a QR factorisation of the design matrix, evaluated in a
//! centred and scaled abscissa `x = (t - center) / scale` on [-1, 1].
//! Models may be fitted to `ln C`; their information criteria then include
//! the Jacobian term so they compare directly against linear-space fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::derivatives::{DerivativeEstimate, Z95};
use crate::error::{Error, Result};
use crate::series::{Positivity, TimeSeries};

/// Normal-equation condition numbers above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;
const CV_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    Polynomial { degree: usize },
    /// Cubic regression spline with equally spaced interior knots.
    CubicSpline { interior_knots: usize },
}

impl ModelKind {
    pub fn n_params(&self) -> usize {
        match *self {
            ModelKind::Polynomial { degree } => degree + 1,
            ModelKind::CubicSpline { interior_knots } => 4 + interior_knots,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCandidate {
    pub kind: ModelKind,
    #[serde(default)]
    pub log_space: bool,
}

impl ModelCandidate {
    pub fn polynomial(degree: usize) -> Self {
        ModelCandidate {
            kind: ModelKind::Polynomial { degree },
            log_space: false,
        }
    }

    pub fn spline(interior_knots: usize) -> Self {
        ModelCandidate {
            kind: ModelKind::CubicSpline { interior_knots },
            log_space: false,
        }
    }

    pub fn in_log_space(mut self) -> Self {
        self.log_space = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Aic,
    #[default]
    Bic,
    Cv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_obs: usize,
    pub n_params: usize,
    pub rss: f64,
    pub aic: f64,
    pub bic: f64,
    /// Mean squared prediction error over contiguous 5-fold blocks, in the
    /// original value space. Infinite if a fold could not be fitted.
    pub cv: f64,
}

impl FitDiagnostics {
    pub fn score(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
            Criterion::Cv => self.cv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTest {
    /// Power of the centred abscissa this coefficient multiplies.
    pub power: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    /// Two-sided p-value under Student's t with `n - p` degrees of freedom.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitModel {
    pub candidate: ModelCandidate,
    center: f64,
    scale: f64,
    range: (f64, f64),
    knots: Vec<f64>,
    coefficients: Vec<f64>,
    /// Row-major `(X^T X)^-1`; the coefficient covariance is `sigma2` times this.
    xtx_inv: Vec<f64>,
    sigma2: f64,
    pub diagnostics: FitDiagnostics,
}

/// Result of [`fit_model`]: the selected fit plus every candidate's fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelection {
    pub criterion: Criterion,
    pub best: FitModel,
    pub candidates: Vec<FitModel>,
}

struct Basis {
    kind: ModelKind,
    knots: Vec<f64>,
}

impl Basis {
    fn new(kind: ModelKind) -> Self {
        let knots = match kind {
            ModelKind::Polynomial { .. } => Vec::new(),
            ModelKind::CubicSpline { interior_knots } => (1..=interior_knots)
                .map(|j| -1.0 + 2.0 * j as f64 / (interior_knots + 1) as f64)
                .collect(),
        };
        Basis { kind, knots }
    }

    fn with_knots(kind: ModelKind, knots: &[f64]) -> Self {
        Basis {
            kind,
            knots: knots.to_vec(),
        }
    }

    fn len(&self) -> usize {
        self.kind.n_params()
    }

    /// `d^deriv/dx^deriv` of every basis function at `x`.
    fn row(&self, x: f64, deriv: usize) -> Vec<f64> {
        let poly_degree = match self.kind {
            ModelKind::Polynomial { degree } => degree,
            ModelKind::CubicSpline { .. } => 3,
        };
        let mut row: Vec<f64> = (0..=poly_degree).map(|k| power_deriv(x, k, deriv)).collect();
        for &knot in &self.knots {
            let u = (x - knot).max(0.0);
            let v = match deriv {
                0 => u * u * u,
                1 => 3.0 * u * u,
                2 => 6.0 * u,
                3
                    if x > knot => {
                        6.0
                    }
                _ => 0.0,
            };
            row.push(v);
        }
        row
    }
}

fn power_deriv(x: f64, k: usize, deriv: usize) -> f64 {
    if deriv > k {
        return 0.0;
    }
    let falling: f64 = ((k - deriv + 1)..=k).map(|j| j as f64).product();
    falling * x.powi((k - deriv) as i32)
}

struct LstsqFit {
    coefficients: DVector<f64>,
    r_inv: DMatrix<f64>,
    rss: f64,
}

fn lstsq(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<LstsqFit> {
    let p = design.ncols();
    let sv = design.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 {
        (smax / smin).powi(2)
    } else {
        f64::INFINITY
    };
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::IllConditioned { condition })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::IllConditioned { condition })?;
    let resid = y - design * &coefficients;
    Ok(LstsqFit {
        coefficients,
        r_inv,
        rss: resid.norm_squared(),
    })
}

fn design_matrix(basis: &Basis, xs: &[f64]) -> DMatrix<f64> {
    let p = basis.len();
    let mut m = DMatrix::zeros(xs.len(), p);
    for (r, &x) in xs.iter().enumerate() {
        for (c, v) in basis.row(x, 0).into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    m
}

/// Fits one candidate by least squares on the full series.
pub fn fit_candidate(series: &TimeSeries, candidate: ModelCandidate) -> Result<FitModel> {
    let n = series.len();
    let p = candidate.kind.n_params();
    if n < p + 2 {
        return Err(Error::InsufficientData { needed: p + 2, got: n });
    }
    let t = series.times();
    let (lo, hi) = (t[0], t[n - 1]);
    let center = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);
    let xs: Vec<f64> = t.iter().map(|&ti| (ti - center) / scale).collect();

    let targets: Vec<f64> = if candidate.log_space {
        series.validate(Positivity::Required)?;
        series.values().iter().map(|v| v.ln()).collect()
    } else {
        series.values().to_vec()
    };
    let basis = Basis::new(candidate.kind);
    let design = design_matrix(&basis, &xs);
    let y = DVector::from_column_slice(&targets);
    let fit = lstsq(&design, &y)?;

    let dof = (n - p) as f64;
    let sigma2 = fit.rss / dof;
    let xtx_inv = &fit.r_inv * fit.r_inv.transpose();

    // Residuals at rounding level would otherwise make ln(RSS) arbitrary.
    let peak = targets.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rss_floor = n as f64 * (1e-12 * peak.max(f64::MIN_POSITIVE)).powi(2);
    let rss_eff = fit.rss.max(rss_floor);
    let jacobian = if candidate.log_space {
        2.0 * targets.iter().sum::<f64>()
    } else {
        0.0
    };
    let k = (p + 1) as f64;
    let nf = n as f64;
    let base = nf * (rss_eff / nf).ln() + jacobian;
    let cv = cross_validate(&basis, &xs, &targets, series.values(), candidate.log_space);

    Ok(FitModel {
        candidate,
        center,
        scale,
        range: (lo, hi),
        knots: basis.knots.clone(),
        coefficients: fit.coefficients.iter().copied().collect(),
        xtx_inv: xtx_inv.transpose().iter().copied().collect(),
        sigma2,
        diagnostics: FitDiagnostics {
            n_obs: n,
            n_params: p,
            rss: fit.rss,
            aic: base + 2.0 * k,
            bic: base + k * nf.ln(),
            cv,
        },
    })
}

fn cross_validate(basis: &Basis, xs: &[f64], targets: &[f64], raw: &[f64], log_space: bool) -> f64 {
    let n = xs.len();
    let p = basis.len();
    let mut sse = 0.0;
    for fold in 0..CV_FOLDS {
        let start = fold * n / CV_FOLDS;
        let end = (fold + 1) * n / CV_FOLDS;
        let train: Vec<usize> = (0..n).filter(|&i| i < start || i >= end).collect();
        if train.len() < p + 1 {
            return f64::INFINITY;
        }
        let txs: Vec<f64> = train.iter().map(|&i| xs[i]).collect();
        let ty = DVector::from_iterator(train.len(), train.iter().map(|&i| targets[i]));
        let Ok(fit) = lstsq(&design_matrix(basis, &txs), &ty) else {
            return f64::INFINITY;
        };
        for i in start..end {
            let pred: f64 = basis
                .row(xs[i], 0)
                .iter()
                .zip(fit.coefficients.iter())
                .map(|(a, b)| a * b)
                .sum();
            let pred = if log_space { pred.exp() } else { pred };
            sse += (pred - raw[i]).powi(2);
        }
    }
    sse / n as f64
}

/// Fits every candidate and returns the one minimising `criterion`.
/// Ties go to the earlier candidate.
pub fn fit_model(
    series: &TimeSeries,
    candidates: &[ModelCandidate],
    criterion: Criterion,
) -> Result<ModelSelection> {
    let Some(max_p) = candidates.iter().map(|c| c.kind.n_params()).max() else {
        return Err(Error::InvalidSpec("no model candidates given".into()));
    };
    if series.len() < max_p + 2 {
        return Err(Error::InsufficientData {
            needed: max_p + 2,
            got: series.len(),
        });
    }
    let fits = candidates
        .iter()
        .map(|&c| fit_candidate(series, c))
        .collect::<Result<Vec<_>>>()?;
    let best = fits
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.diagnostics
                .score(criterion)
                .total_cmp(&b.diagnostics.score(criterion))
                .then(ia.cmp(ib))
        })
        .map(|(_, f)| f.clone())
        .expect("candidates is non-empty");
    Ok(ModelSelection {
        criterion,
        best,
        candidates: fits,
    })
}

impl FitModel {
    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    fn basis(&self) -> Basis {
        Basis::with_knots(self.candidate.kind, &self.knots)
    }

    fn check_range(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.range;
        let slack = 1e-12 * (hi - lo);
        if t < lo - slack || t > hi + slack || !t.is_finite() {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        Ok(())
    }

    /// Basis rows for derivatives 0..=3 at `t`, in physical time units.
    fn rows(&self, t: f64) -> [Vec<f64>; 4] {
        let basis = self.basis();
        let x = (t - self.center) / self.scale;
        std::array::from_fn(|d| {
            let s = self.scale.powi(d as i32).recip();
            basis.row(x, d).into_iter().map(|v| v * s).collect()
        })
    }

    fn dot(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    fn quadratic_form(&self, grad: &[f64]) -> f64 {
        let p = grad.len();
        let mut total = 0.0;
        for r in 0..p {
            for c in 0..p {
                total += grad[r] * self.xtx_inv[r * p + c] * grad[c];
            }
        }
        total.max(0.0)
    }

    fn variance(&self, grad: &[f64]) -> f64 {
        self.sigma2 * self.quadratic_form(grad)
    }

    /// Hat-matrix diagonal for an observation at `t`.
    pub fn leverage(&self, t: f64) -> f64 {
        self.quadratic_form(&self.rows(t)[0])
    }

    /// Fitted relation evaluated at `t`: `ln C` for log-space models, `C` otherwise.
    pub fn predict(&self, t: f64) -> Result<f64> {
        self.check_range(t)?;
        let rows = self.rows(t);
        Ok(self.dot(&rows[0]))
    }

    /// `[C, C', C'', C''']` at `t` with delta-method standard errors.
    pub fn derivatives_at(&self, t: f64) -> Result<([f64; 4], [f64; 4])> {
        self.check_range(t)?;
        let rows = self.rows(t);
        let g: [f64; 4] = std::array::from_fn(|d| self.dot(&rows[d]));
        if !self.candidate.log_space {
            let se = std::array::from_fn(|d| self.variance(&rows[d]).sqrt());
            return Ok((g, se));
        }
        let c = g[0].exp();
        let c1 = c * g[1];
        let c2 = c * (g[2] + g[1] * g[1]);
        let c3 = c * (g[3] + 3.0 * g[1] * g[2] + g[1].powi(3));
        let p = rows[0].len();
        let grads: [Vec<f64>; 4] = [
            (0..p).map(|k| c * rows[0][k]).collect(),
            (0..p).map(|k| c1 * rows[0][k] + c * rows[1][k]).collect(),
            (0..p)
                .map(|k| c2 * rows[0][k] + c * (rows[2][k] + 2.0 * g[1] * rows[1][k]))
                .collect(),
            (0..p)
                .map(|k| {
                    c3 * rows[0][k]
                        + c * (rows[3][k]
                            + 3.0 * g[2] * rows[1][k]
                            + 3.0 * g[1] * rows[2][k]
                            + 3.0 * g[1] * g[1] * rows[1][k])
                })
                .collect(),
        ];
        let se = std::array::from_fn(|d| self.variance(&grads[d]).sqrt());
        Ok(([c, c1, c2, c3], se))
    }

    /// Coefficients in powers of raw `t` (polynomial models only).
    pub fn power_coefficients(&self) -> Option<Vec<f64>> {
        let ModelKind::Polynomial { degree } = self.candidate.kind else {
            return None;
        };
        // sum_k a_k ((t - c) / s)^k expanded binomially.
        let mut out = vec![0.0; degree + 1];
        for (k, &a) in self.coefficients.iter().enumerate() {
            let ak = a / self.scale.powi(k as i32);
            for j in 0..=k {
                out[j] += ak * binomial(k, j) * (-self.center).powi((k - j) as i32);
            }
        }
        Some(out)
    }

    /// t-tests on coefficients of order >= 3 in the centred polynomial basis,
    /// where coefficient `k` is proportional to the k-th derivative at the
    /// centre of the fitted range.
    pub fn coefficient_tests(&self) -> Vec<CoefficientTest> {
        let ModelKind::Polynomial { degree } = self.candidate.kind else {
            return Vec::new();
        };
        let p = self.coefficients.len();
        let dof = (self.diagnostics.n_obs - p) as f64;
        let Ok(dist) = StudentsT::new(0.0, 1.0, dof) else {
            return Vec::new();
        };
        (3..=degree)
            .map(|k| {
                let estimate = self.coefficients[k];
                let std_error = (self.sigma2 * self.xtx_inv[k * p + k]).max(0.0).sqrt();
                let t_stat = if std_error > 0.0 {
                    estimate / std_error
                } else if estimate == 0.0 {
                    0.0
                } else {
                    estimate.signum() * f64::INFINITY
                };
                let p_value = if t_stat.is_finite() {
                    2.0 * (1.0 - dist.cdf(t_stat.abs()))
                } else {
                    0.0
                };
                CoefficientTest {
                    power: k,
                    estimate,
                    std_error,
                    t_stat,
                    p_value,
                }
            })
            .collect()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Analytic derivatives of `model` on `grid`, with 95% delta-method intervals.
pub fn derivatives_from_model(model: &FitModel, grid: &[f64]) -> Result<DerivativeEstimate> {
    let mut values: [Vec<f64>; 4] = Default::default();
    let mut intervals: [Vec<(f64, f64)>; 4] = Default::default();
    for &t in grid {
        let (est, se) = model.derivatives_at(t)?;
        for d in 0..4 {
            values[d].push(est[d]);
            intervals[d].push((est[d] - Z95 * se[d], est[d] + Z95 * se[d]));
        }
    }
    Ok(DerivativeEstimate {
        times: grid.to_vec(),
        values,
        intervals,
        edge_mask: vec![false; grid.len()],
    })
}
