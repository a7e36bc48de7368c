//! Synthetic capability trajectories.
//!
//! Closed-form generators for exponential, logistic and log-quadratic growth,
//! a localized jolt injected into any of those, and weighted composites with
//! interaction terms. The composite jolt sum and the resource-damped jolt
//! live here too so that generators and metrics share one implementation.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::series::{linspace, Positivity, TimeSeries};

const NOISE_STREAM: u64 = 0x6e_6f69_7365;

/// Quintic smoothstep `6x^5 - 15x^4 + 10x^3`, clamped to [0, 1]. C² at both ends.
pub fn smootherstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (x * (6.0 * x - 15.0) + 10.0)
}

/// Antiderivative of [`smootherstep`] with value 0 at x = 0, valid on all of R.
fn smootherstep_integral(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        x - 0.5
    } else {
        x.powi(4) * (x * (x - 3.0) + 2.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    None,
    Low,
    Medium,
    High,
    Sigma(f64),
}

impl NoiseLevel {
    /// Relative standard deviation of the multiplicative noise.
    pub fn sigma(self) -> f64 {
        match self {
            NoiseLevel::None => 0.0,
            NoiseLevel::Low => 0.01,
            NoiseLevel::Medium => 0.05,
            NoiseLevel::High => 0.10,
            NoiseLevel::Sigma(s) => s,
        }
    }

    pub fn name(self) -> String {
        match self {
            NoiseLevel::None => "None".into(),
            NoiseLevel::Low => "Low".into(),
            NoiseLevel::Medium => "Medium".into(),
            NoiseLevel::High => "High".into(),
            NoiseLevel::Sigma(s) => format!("sigma={s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub level: NoiseLevel,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        level: NoiseLevel::None,
        seed: 0,
    };

    pub fn new(level: NoiseLevel, seed: u64) -> Self {
        NoiseSpec { level, seed }
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::NONE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
}

impl Grid {
    pub fn new(t_start: f64, t_end: f64, n_points: usize) -> Self {
        Grid {
            t_start,
            t_end,
            n_points,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        linspace(self.t_start, self.t_end, self.n_points)
    }

    fn validate(&self) -> Result<()> {
        if self.n_points < 8 {
            return Err(Error::InvalidSpec(format!(
                "grid needs at least 8 points, got {}",
                self.n_points
            )));
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_end > self.t_start) {
            return Err(Error::InvalidSpec("grid must satisfy t_start < t_end".into()));
        }
        Ok(())
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid::new(0.0, 20.0, 200)
    }
}

/// Values of a pairwise interaction term on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Samples {
    Constant(f64),
    Sampled(Vec<f64>),
}

impl Samples {
    fn at(&self, index: usize) -> f64 {
        match self {
            Samples::Constant(v) => *v,
            Samples::Sampled(v) => v[index],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionTerm {
    pub i: usize,
    pub j: usize,
    pub values: Samples,
}

/// Ordered-pair interaction terms `I_ij(t)`; absent pairs are zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSpec {
    #[serde(default)]
    pub terms: Vec<InteractionTerm>,
}

impl InteractionSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_term(mut self, i: usize, j: usize, values: Samples) -> Self {
        self.terms.push(InteractionTerm { i, j, values });
        self
    }

    fn validate(&self, n_factors: usize, n_points: usize) -> Result<()> {
        for term in &self.terms {
            if term.i == term.j || term.i >= n_factors || term.j >= n_factors {
                return Err(Error::InvalidSpec(format!(
                    "interaction ({}, {}) must name two distinct factors below {n_factors}",
                    term.i, term.j
                )));
            }
            match &term.values {
                Samples::Constant(v) if !v.is_finite() => {
                    return Err(Error::InvalidSpec("interaction value not finite".into()))
                }
                Samples::Sampled(v) if v.len() != n_points => return Err(Error::GridMismatch),
                Samples::Sampled(v) if v.iter().any(|x| !x.is_finite()) => {
                    return Err(Error::InvalidSpec("interaction value not finite".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// `sum_{i != j} I_ij(t)` at grid index `index`.
    fn total_at(&self, index: usize) -> f64 {
        self.terms.iter().map(|t| t.values.at(index)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Factor {
    pub weight: f64,
    pub family: Family,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// `C0 exp(k t)`
    Exponential { c0: f64, k: f64 },
    /// `L / (1 + exp(-r (t - t0)))`
    Logistic {
        capacity: f64,
        rate: f64,
        midpoint: f64,
    },
    /// `C0 exp(a t + b t^2)`
    LogQuadratic { c0: f64, a: f64, b: f64 },
    /// The base's growth rate is multiplied by `1 + s*smootherstep` over
    /// `[jolt_start, jolt_end]` and by `1 + s` afterwards.
    InjectedJolt {
        base: Box<Family>,
        jolt_start: f64,
        jolt_end: f64,
        ramp_strength: f64,
    },
    /// `sum_i w_i C_i(t)` plus the triple integral of the interaction terms.
    Composite {
        factors: Vec<Factor>,
        #[serde(default)]
        interaction: InteractionSpec,
    },
}

impl Family {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        match self {
            Family::Exponential { c0, k } => {
                if !(*c0 > 0.0 && c0.is_finite()) {
                    return bad("exponential c0 must be positive");
                }
                if !k.is_finite() {
                    return bad("exponential k must be finite");
                }
            }
            Family::Logistic {
                capacity,
                rate,
                midpoint,
            } => {
                if !(*capacity > 0.0 && capacity.is_finite()) {
                    return bad("logistic capacity must be positive");
                }
                if !(*rate > 0.0 && rate.is_finite()) {
                    return bad("logistic rate must be positive");
                }
                if !midpoint.is_finite() {
                    return bad("logistic midpoint must be finite");
                }
            }
            Family::LogQuadratic { c0, a, b } => {
                if !(*c0 > 0.0 && c0.is_finite()) {
                    return bad("log-quadratic c0 must be positive");
                }
                if !(a.is_finite() && b.is_finite()) {
                    return bad("log-quadratic coefficients must be finite");
                }
            }
            Family::InjectedJolt {
                base,
                jolt_start,
                jolt_end,
                ramp_strength,
            } => {
                if matches!(**base, Family::Composite { .. }) {
                    return bad("injected jolt needs a closed-form base");
                }
                base.validate()?;
                if !(jolt_start.is_finite() && jolt_end.is_finite() && jolt_end > jolt_start) {
                    return bad("injected jolt needs jolt_start < jolt_end");
                }
                if !(*ramp_strength >= 0.0 && ramp_strength.is_finite()) {
                    return bad("ramp_strength must be non-negative");
                }
            }
            Family::Composite { factors, .. } => {
                if factors.is_empty() {
                    return bad("composite needs at least one factor");
                }
                for f in factors {
                    if !f.weight.is_finite() {
                        return bad("composite weights must be finite");
                    }
                    f.family.validate()?;
                }
            }
        }
        Ok(())
    }

    /// `ln C(t)` for closed-form families.
    fn log_value(&self, t: f64) -> f64 {
        match self {
            Family::Exponential { c0, k } => c0.ln() + k * t,
            Family::Logistic {
                capacity,
                rate,
                midpoint,
            } => capacity.ln() - softplus(-rate * (t - midpoint)),
            Family::LogQuadratic { c0, a, b } => c0.ln() + a * t + b * t * t,
            Family::InjectedJolt {
                base,
                jolt_start,
                jolt_end,
                ramp_strength,
            } => {
                let ramp_end = t.min(*jolt_end);
                let mut extra = 0.0;
                if ramp_end > *jolt_start {
                    let width = jolt_end - jolt_start;
                    extra += gauss_legendre(*jolt_start, ramp_end, 16, |u| {
                        base.growth_rate(u) * smootherstep((u - jolt_start) / width)
                    });
                }
                if t > *jolt_end {
                    extra += base.log_value(t) - base.log_value(*jolt_end);
                }
                base.log_value(t) + ramp_strength * extra
            }
            Family::Composite { .. } => unreachable!("composite is sampled on a grid"),
        }
    }

    /// Relative growth rate `C'/C` for closed-form families.
    fn growth_rate(&self, t: f64) -> f64 {
        match self {
            Family::Exponential { k, .. } => *k,
            Family::Logistic { rate, midpoint, .. } => rate * (1.0 - sigmoid(rate * (t - midpoint))),
            Family::LogQuadratic { a, b, .. } => a + 2.0 * b * t,
            Family::InjectedJolt {
                base,
                jolt_start,
                jolt_end,
                ramp_strength,
            } => {
                let ramp = smootherstep((t - jolt_start) / (jolt_end - jolt_start));
                base.growth_rate(t) * (1.0 + ramp_strength * ramp)
            }
            Family::Composite { .. } => unreachable!("composite is sampled on a grid"),
        }
    }

    /// Analytic `(C, C', C'', C''')` at `t`, where a closed form exists.
    pub fn analytic_derivatives(&self, t: f64) -> Option<[f64; 4]> {
        match self {
            Family::Exponential { c0, k } => {
                let c = c0 * (k * t).exp();
                Some([c, k * c, k * k * c, k * k * k * c])
            }
            Family::Logistic {
                capacity,
                rate,
                midpoint,
            } => {
                let s = sigmoid(rate * (t - midpoint));
                let core = capacity * s * (1.0 - s);
                Some([
                    capacity * s,
                    rate * core,
                    rate * rate * core * (1.0 - 2.0 * s),
                    rate.powi(3) * core * (1.0 - 6.0 * s + 6.0 * s * s),
                ])
            }
            Family::LogQuadratic { c0, a, b } => {
                let c = c0 * (a * t + b * t * t).exp();
                let g1 = a + 2.0 * b * t;
                let g2 = 2.0 * b;
                Some([c, c * g1, c * (g2 + g1 * g1), c * (3.0 * g1 * g2 + g1.powi(3))])
            }
            _ => None,
        }
    }

    /// Ground-truth label for closed-form families; composites are measured.
    fn structural_label(&self) -> Option<bool> {
        match self {
            Family::Exponential { .. } | Family::Logistic { .. } => Some(false),
            Family::LogQuadratic { b, .. } => Some(*b > 0.0),
            Family::InjectedJolt { ramp_strength, .. } => Some(*ramp_strength > 0.0),
            Family::Composite { .. } => None,
        }
    }

    fn sample(&self, times: &[f64]) -> Result<Vec<f64>> {
        match self {
            Family::Composite {
                factors,
                interaction,
            } => {
                interaction.validate(factors.len(), times.len())?;
                let mut total = vec![0.0; times.len()];
                for f in factors {
                    let values = f.family.sample(times)?;
                    for (acc, v) in total.iter_mut().zip(values) {
                        *acc += f.weight * v;
                    }
                }
                let jerk: Vec<f64> = (0..times.len()).map(|i| interaction.total_at(i)).collect();
                if jerk.iter().any(|&v| v != 0.0) {
                    let accel = cumulative_trapezoid(times, &jerk);
                    let vel = cumulative_trapezoid(times, &accel);
                    let pos = cumulative_trapezoid(times, &vel);
                    for (acc, p) in total.iter_mut().zip(pos) {
                        *acc += p;
                    }
                }
                if let Some(index) = total.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidSpec(format!(
                        "composite capability is not positive at grid index {index}"
                    )));
                }
                Ok(total)
            }
            _ => {
                let values: Vec<f64> = times.iter().map(|&t| self.log_value(t).exp()).collect();
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidSpec(
                        "trajectory overflows or underflows on this grid".into(),
                    ));
                }
                Ok(values)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthModelSpec {
    pub family: Family,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl GrowthModelSpec {
    pub fn new(family: Family, grid: Grid, noise: NoiseSpec) -> Self {
        GrowthModelSpec {
            family,
            grid,
            noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.family.validate()?;
        let sigma = self.noise.level.sigma();
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidSpec("noise sigma must be non-negative".into()));
        }
        Ok(())
    }

    /// Whether the family is superexponential by construction.
    ///
    /// Composites are labelled jolting when `alpha'(t) > 0` over a single run
    /// covering at least half of the grid.
    pub fn label(&self) -> Result<bool> {
        self.validate()?;
        if let Some(label) = self.family.structural_label() {
            return Ok(label);
        }
        let clean = self.noiseless()?;
        let times = clean.times();
        let logs: Vec<f64> = clean.values().iter().map(|v| v.ln()).collect();
        let n = logs.len();
        let mut run = 0usize;
        let mut best = 0usize;
        for i in 1..n - 1 {
            let h0 = times[i] - times[i - 1];
            let h1 = times[i + 1] - times[i];
            let curvature = 2.0
                * ((logs[i + 1] - logs[i]) / h1 - (logs[i] - logs[i - 1]) / h0)
                / (h0 + h1);
            let scale = 1e-10 * (logs[i].abs() + 1.0) / (h0 * h1);
            if curvature > scale {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        Ok(2 * best >= n - 2)
    }

    pub fn noiseless(&self) -> Result<TimeSeries> {
        self.validate()?;
        let times = self.grid.times();
        let values = self.family.sample(&times)?;
        TimeSeries::new(times, values)
    }

    /// Noiseless trajectory followed by multiplicative noise, plus the label.
    pub fn generate(&self) -> Result<(TimeSeries, bool)> {
        let clean = self.noiseless()?;
        let label = self.label()?;
        Ok((add_noise(&clean, &self.noise)?, label))
    }
}

/// Multiplies each value by `1 + eps`, `eps ~ N(0, sigma)`, redrawing any
/// `eps` that would make the value non-positive.
pub fn add_noise(series: &TimeSeries, noise: &NoiseSpec) -> Result<TimeSeries> {
    series.validate(Positivity::Required)?;
    let sigma = noise.level.sigma();
    if sigma == 0.0 {
        return Ok(series.clone());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidSpec(format!("noise sigma {sigma}: {e}")))?;
    let mut rng = rng::rng_for(noise.seed, &[NOISE_STREAM]);
    let values = series
        .values()
        .iter()
        .map(|&v| loop {
            let factor = 1.0 + normal.sample(&mut rng);
            if factor > 0.0 {
                break v * factor;
            }
        })
        .collect();
    series.with_values(values)
}

/// Pointwise `sum_i w_i C'''_i(t) + sum_{i != j} I_ij(t)`.
pub fn compose(factors: &[(f64, &TimeSeries)], interaction: &InteractionSpec) -> Result<TimeSeries> {
    let Some((_, first)) = factors.first() else {
        return Err(Error::InvalidSpec("compose needs at least one factor".into()));
    };
    if factors.iter().any(|(_, s)| !s.same_grid(first)) {
        return Err(Error::GridMismatch);
    }
    interaction.validate(factors.len(), first.len())?;
    let values = (0..first.len())
        .map(|i| {
            factors.iter().map(|(w, s)| w * s.values()[i]).sum::<f64>() + interaction.total_at(i)
        })
        .collect();
    first.with_values(values)
}

/// Scalar limiting-resource usage `R(t)` on a grid, capped by `R_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceSchedule {
    usage: TimeSeries,
    r_max: f64,
}

impl ResourceSchedule {
    pub fn new(usage: TimeSeries, r_max: f64) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidSpec("R_max must be positive".into()));
        }
        for (index, &r) in usage.values().iter().enumerate() {
            if r > r_max {
                return Err(Error::ScheduleViolation {
                    index,
                    usage: r,
                    max: r_max,
                });
            }
            if r < 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "resource usage {r} is negative at index {index}"
                )));
            }
        }
        Ok(ResourceSchedule { usage, r_max })
    }

    pub fn usage(&self) -> &TimeSeries {
        &self.usage
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }
}

/// `J_eff(t) = J(t) (R_max - R(t)) / R_max`.
pub fn apply_resource_damping(jolt: &TimeSeries, schedule: &ResourceSchedule) -> Result<TimeSeries> {
    if !jolt.same_grid(&schedule.usage) {
        return Err(Error::GridMismatch);
    }
    let r_max = schedule.r_max;
    let values = jolt
        .values()
        .iter()
        .zip(schedule.usage.values())
        .map(|(j, r)| j * (r_max - r) / r_max)
        .collect();
    jolt.with_values(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Intervention {
    /// Values multiplied by `factor` from `at` onwards.
    StepChange { at: f64, factor: f64 },
    /// Growth exponent multiplied by a factor ramping smoothly from 1 to
    /// `target_factor` over `[start, end]`.
    EfficiencyRamp {
        start: f64,
        end: f64,
        target_factor: f64,
    },
}

pub fn inject_intervention(base: &TimeSeries, intervention: Intervention) -> Result<TimeSeries> {
    base.validate(Positivity::Required)?;
    match intervention {
        Intervention::StepChange { at, factor } => {
            if !(factor >= 1.0 && factor.is_finite() && at.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "step factor must be >= 1, got {factor}"
                )));
            }
            let values = base
                .times()
                .iter()
                .zip(base.values())
                .map(|(&t, &v)| if t >= at { v * factor } else { v })
                .collect();
            base.with_values(values)
        }
        Intervention::EfficiencyRamp {
            start,
            end,
            target_factor,
        } => {
            if !(start.is_finite() && end.is_finite() && end > start) {
                return Err(Error::InvalidSpec("ramp needs start < end".into()));
            }
            if !(target_factor > 0.0 && target_factor.is_finite()) {
                return Err(Error::InvalidSpec("ramp target factor must be positive".into()));
            }
            let width = end - start;
            let times = base.times();
            let logs: Vec<f64> = base.values().iter().map(|v| v.ln()).collect();
            let mut out = Vec::with_capacity(logs.len());
            let mut acc = logs[0];
            out.push(acc.exp());
            for i in 1..logs.len() {
                let (ta, tb) = (times[i - 1], times[i]);
                let ramp_mean = width
                    * (smootherstep_integral((tb - start) / width)
                        - smootherstep_integral((ta - start) / width))
                    / (tb - ta);
                acc += (logs[i] - logs[i - 1]) * (1.0 + (target_factor - 1.0) * ramp_mean);
                out.push(acc.exp());
            }
            base.with_values(out)
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Composite 8-point Gauss-Legendre over `pieces` equal sub-intervals.
fn gauss_legendre(a: f64, b: f64, pieces: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / pieces as f64;
    let mut total = 0.0;
    for p in 0..pieces {
        let mid = a + h * (p as f64 + 0.5);
        let half = 0.5 * h;
        for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
            total += w * (f(mid - half * x) + f(mid + half * x)) * half;
        }
    }
    total
}

fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..values.len() {
        acc += 0.5 * (values[i] + values[i - 1]) * (times[i] - times[i - 1]);
        out.push(acc);
    }
    out
}
