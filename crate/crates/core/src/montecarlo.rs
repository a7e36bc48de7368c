//! Monte Carlo validation of the detector on labelled synthetic trajectories.
//!
//! Every trial draws its model parameters, noise and permutation seed from a
//! stream derived from `(master seed, cell id, class, trial index)`. The cell
//! id identifies the data (one per noise level), so every configuration in a
//! sweep is scored on the same trajectories. Tallies are integer sums, which
//! makes results independent of thread count and scheduling.

use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::detector::{hybrid_detect, DetectorConfig};
use crate::error::{Error, Result};
use crate::estimation::{SmootherConfig, Z95};
use crate::growth::{add_noise, Family, GrowthModelSpec, Grid, NoiseLevel, NoiseSpec};
use crate::rng::{self, Rng};
use crate::series::TimeSeries;

/// Accuracy weights of TPR and TNR.
pub const CLASS_WEIGHTS: [f64; 2] = [0.5, 0.5];
pub const DEFAULT_BUDGET: usize = 64;

/// A model parameter: a constant or `U[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Fixed(f64),
    Uniform([f64; 2]),
}

impl Param {
    fn sample(self, rng: &mut Rng) -> f64 {
        match self {
            Param::Fixed(v) => v,
            Param::Uniform([lo, hi]) if lo == hi => lo,
            Param::Uniform([lo, hi]) => rng.random_range(lo..hi),
        }
    }

    fn validate(self, name: &str) -> Result<()> {
        let ok = match self {
            Param::Fixed(v) => v.is_finite(),
            Param::Uniform([lo, hi]) => lo.is_finite() && hi.is_finite() && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad range for {name}: {self:?}")))
        }
    }
}

/// Parameter distribution over one model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpecTemplate {
    Exponential {
        c0: Param,
        k: Param,
    },
    Logistic {
        capacity: Param,
        rate: Param,
        midpoint: Param,
    },
    LogQuadratic {
        c0: Param,
        a: Param,
        b: Param,
    },
    /// An exponential whose growth rate ramps up by `ramp_strength` over
    /// `[jolt_start, jolt_start + jolt_length]`.
    InjectedJolt {
        c0: Param,
        k: Param,
        jolt_start: Param,
        jolt_length: Param,
        ramp_strength: Param,
    },
    Fixed {
        family: Family,
    },
}

impl SpecTemplate {
    fn params(&self) -> Vec<(&'static str, Param)> {
        match *self {
            SpecTemplate::Exponential { c0, k } => vec![("c0", c0), ("k", k)],
            SpecTemplate::Logistic {
                capacity,
                rate,
                midpoint,
            } => vec![("capacity", capacity), ("rate", rate), ("midpoint", midpoint)],
            SpecTemplate::LogQuadratic { c0, a, b } => vec![("c0", c0), ("a", a), ("b", b)],
            SpecTemplate::InjectedJolt {
                c0,
                k,
                jolt_start,
                jolt_length,
                ramp_strength,
            } => vec![
                ("c0", c0),
                ("k", k),
                ("jolt_start", jolt_start),
                ("jolt_length", jolt_length),
                ("ramp_strength", ramp_strength),
            ],
            SpecTemplate::Fixed { .. } => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params().into_iter().try_for_each(|(name, p)| p.validate(name))
    }

    pub fn sample(&self, rng: &mut Rng) -> Family {
        match self {
            SpecTemplate::Exponential { c0, k } => Family::Exponential {
                c0: c0.sample(rng),
                k: k.sample(rng),
            },
            SpecTemplate::Logistic {
                capacity,
                rate,
                midpoint,
            } => Family::Logistic {
                capacity: capacity.sample(rng),
                rate: rate.sample(rng),
                midpoint: midpoint.sample(rng),
            },
            SpecTemplate::LogQuadratic { c0, a, b } => Family::LogQuadratic {
                c0: c0.sample(rng),
                a: a.sample(rng),
                b: b.sample(rng),
            },
            SpecTemplate::InjectedJolt {
                c0,
                k,
                jolt_start,
                jolt_length,
                ramp_strength,
            } => {
                let base = Family::Exponential {
                    c0: c0.sample(rng),
                    k: k.sample(rng),
                };
                let start = jolt_start.sample(rng);
                let length = jolt_length.sample(rng);
                Family::InjectedJolt {
                    base: Box::new(base),
                    jolt_start: start,
                    jolt_end: start + length,
                    ramp_strength: ramp_strength.sample(rng),
                }
            }
            SpecTemplate::Fixed { family } => family.clone(),
        }
    }
}

pub fn default_positives() -> Vec<SpecTemplate> {
    vec![
        SpecTemplate::LogQuadratic {
            c0: Param::Fixed(1.0),
            a: Param::Uniform([0.0, 0.05]),
            b: Param::Uniform([0.005, 0.02]),
        },
        SpecTemplate::InjectedJolt {
            c0: Param::Fixed(1.0),
            k: Param::Uniform([0.03, 0.12]),
            jolt_start: Param::Uniform([3.0, 8.0]),
            jolt_length: Param::Uniform([4.0, 8.0]),
            ramp_strength: Param::Uniform([1.0, 2.0]),
        },
    ]
}

pub fn default_negatives() -> Vec<SpecTemplate> {
    vec![
        SpecTemplate::Exponential {
            c0: Param::Uniform([0.5, 2.0]),
            k: Param::Uniform([0.03, 0.12]),
        },
        SpecTemplate::Logistic {
            capacity: Param::Uniform([50.0, 200.0]),
            rate: Param::Uniform([0.5, 1.5]),
            midpoint: Param::Uniform([6.0, 14.0]),
        },
    ]
}

/// Score and p-value of one detection; the verdict is left to the config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub score: f64,
    pub p_value: f64,
}

impl Evaluation {
    pub fn verdict(&self, decision_threshold: f64, alpha_sig: f64) -> bool {
        self.score >= decision_threshold && self.p_value <= alpha_sig
    }
}

pub trait Detector: Sync {
    fn evaluate(&self, series: &TimeSeries, config: &DetectorConfig) -> Result<Evaluation>;
}

pub struct HybridDetector;

impl Detector for HybridDetector {
    fn evaluate(&self, series: &TimeSeries, config: &DetectorConfig) -> Result<Evaluation> {
        let r = hybrid_detect(series, config)?;
        Ok(Evaluation {
            score: r.score,
            p_value: r.p_value,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCCell {
    pub positives: Vec<SpecTemplate>,
    pub negatives: Vec<SpecTemplate>,
    pub grid: Grid,
    pub noise: NoiseLevel,
    pub detector: DetectorConfig,
    /// Trials per class.
    pub n_trials: usize,
    pub seed: u64,
    pub cell_id: u64,
}

impl MCCell {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidConfig("n_trials must be at least 1".into()));
        }
        if self.positives.is_empty() || self.negatives.is_empty() {
            return Err(Error::InvalidConfig("both classes need at least one model".into()));
        }
        self.positives.iter().chain(&self.negatives).try_for_each(SpecTemplate::validate)?;
        self.detector.validate()
    }

    /// Series for trial `index` of the given class, with the permutation
    /// seed its detector should use. Models cycle through the class list.
    pub fn trial(&self, positive: bool, index: usize) -> Result<(TimeSeries, u64)> {
        let class = u64::from(positive);
        let seed = rng::derive_seed(self.seed, &[self.cell_id, class, index as u64]);
        let mut params = rng::rng_for(seed, &[0]);
        let templates = if positive { &self.positives } else { &self.negatives };
        let family = templates[index % templates.len()].sample(&mut params);
        let spec = GrowthModelSpec::new(family, self.grid, NoiseSpec::NONE);
        let noisy = add_noise(&spec.noiseless()?, &NoiseSpec::new(self.noise, rng::derive_seed(seed, &[1])))?;
        Ok((noisy, rng::derive_seed(seed, &[2])))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Trials whose estimation failed; already counted as negative verdicts.
    #[serde(default)]
    pub failed: u64,
}

impl ConfusionCounts {
    fn record(&mut self, positive: bool, verdict: bool) {
        match (positive, verdict) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
        self.failed += other.failed;
        self
    }
}

/// `(decision_threshold, alpha_sig)` pairs scored from shared evaluations.
type Decision = (f64, f64);

fn tally(cell: &MCCell, detector: &dyn Detector, decisions: &[Decision]) -> Result<Vec<ConfusionCounts>> {
    cell.validate()?;
    let n = cell.n_trials;
    let job = |k: usize| {
        let positive = k < n;
        let index = if positive { k } else { k - n };
        let evaluation = cell.trial(positive, index).and_then(|(series, seed)| {
            let config = DetectorConfig { seed, ..cell.detector };
            detector.evaluate(&series, &config)
        });
        let mut counts = vec![ConfusionCounts::default(); decisions.len()];
        for (c, &(threshold, alpha)) in counts.iter_mut().zip(decisions) {
            match &evaluation {
                Ok(e) => c.record(positive, e.verdict(threshold, alpha)),
                Err(_) => {
                    c.record(positive, false);
                    c.failed += 1;
                }
            }
        }
        counts
    };
    let merge = |a: Vec<ConfusionCounts>, b: Vec<ConfusionCounts>| {
        a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect::<Vec<_>>()
    };
    let zero = || vec![ConfusionCounts::default(); decisions.len()];

    #[cfg(feature = "parallel")]
    let counts = {
        use rayon::prelude::*;
        (0..2 * n).into_par_iter().map(job).reduce(zero, merge)
    };
    #[cfg(not(feature = "parallel"))]
    let counts = (0..2 * n).map(job).fold(zero(), merge);

    Ok(counts)
}

/// Runs every trial of the cell. Failed trials count as negative verdicts.
pub fn run_cell(cell: &MCCell, detector: &dyn Detector) -> Result<ConfusionCounts> {
    let decision = (cell.detector.decision_threshold, cell.detector.alpha_sig);
    Ok(tally(cell, detector, &[decision])?[0])
}

/// Wilson score interval for `successes / n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub tpr: f64,
    pub fpr: f64,
    pub tnr: f64,
    pub fnr: f64,
    pub accuracy: f64,
    pub error_rate: f64,
    pub tpr_ci: (f64, f64),
    pub fpr_ci: (f64, f64),
}

pub fn summarize(counts: &ConfusionCounts) -> Result<RateSummary> {
    let pos = counts.tp + counts.fn_;
    let neg = counts.fp + counts.tn;
    if pos == 0 || neg == 0 {
        return Err(Error::EmptyCell);
    }
    let tpr = counts.tp as f64 / pos as f64;
    let fpr = counts.fp as f64 / neg as f64;
    let tnr = 1.0 - fpr;
    let accuracy = CLASS_WEIGHTS[0] * tpr + CLASS_WEIGHTS[1] * tnr;
    Ok(RateSummary {
        tpr,
        fpr,
        tnr,
        fnr: 1.0 - tpr,
        accuracy,
        error_rate: 1.0 - accuracy,
        tpr_ci: wilson_interval(counts.tp, pos, Z95),
        fpr_ci: wilson_interval(counts.fp, neg, Z95),
    })
}

/// TPR floor and FPR ceiling for one noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateTarget {
    pub noise: NoiseLevel,
    pub min_tpr: f64,
    pub max_fpr: f64,
}

impl RateTarget {
    /// Point estimates on the right side of both bounds.
    pub fn met(&self, s: &RateSummary) -> bool {
        s.tpr >= self.min_tpr && s.fpr <= self.max_fpr
    }

    /// Both bounds inside or beyond the 95% Wilson intervals.
    pub fn met_within_ci(&self, s: &RateSummary) -> bool {
        s.tpr_ci.1 >= self.min_tpr && s.fpr_ci.0 <= self.max_fpr
    }
}

pub fn default_targets() -> Vec<RateTarget> {
    [(NoiseLevel::Low, 0.95, 0.05), (NoiseLevel::Medium, 0.92, 0.08), (NoiseLevel::High, 0.85, 0.15)]
        .into_iter()
        .map(|(noise, min_tpr, max_fpr)| RateTarget {
            noise,
            min_tpr,
            max_fpr,
        })
        .collect()
}

/// A labelled population evaluated at several noise levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub positives: Vec<SpecTemplate>,
    pub negatives: Vec<SpecTemplate>,
    pub grid: Grid,
    pub noise_levels: Vec<NoiseLevel>,
    pub n_trials: usize,
    pub seed: u64,
    pub detector: DetectorConfig,
    pub targets: Vec<RateTarget>,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            positives: default_positives(),
            negatives: default_negatives(),
            grid: Grid::default(),
            noise_levels: vec![NoiseLevel::Low, NoiseLevel::Medium, NoiseLevel::High],
            n_trials: 1000,
            seed: 20240601,
            detector: DetectorConfig::default(),
            targets: default_targets(),
        }
    }
}

impl Experiment {
    pub fn cell(&self, level: usize, detector: DetectorConfig) -> MCCell {
        MCCell {
            positives: self.positives.clone(),
            negatives: self.negatives.clone(),
            grid: self.grid,
            noise: self.noise_levels[level],
            detector,
            n_trials: self.n_trials,
            seed: self.seed,
            cell_id: level as u64,
        }
    }

    fn target_for(&self, noise: NoiseLevel) -> Option<RateTarget> {
        self.targets.iter().copied().find(|t| t.noise == noise)
    }

    fn row(&self, noise: NoiseLevel, counts: ConfusionCounts) -> Result<NoiseRow> {
        let summary = summarize(&counts)?;
        let target = self.target_for(noise);
        Ok(NoiseRow {
            noise_level: noise.name(),
            sigma: noise.sigma(),
            counts,
            meets_target: target.map(|t| t.met(&summary)),
            meets_target_ci: target.map(|t| t.met_within_ci(&summary)),
            summary,
            target,
        })
    }

    /// One run of the configured detector per noise level.
    pub fn run(&self, detector: &dyn Detector) -> Result<Vec<NoiseRow>> {
        if self.noise_levels.is_empty() {
            return Err(Error::InvalidConfig("noise_levels is empty".into()));
        }
        (0..self.noise_levels.len())
            .map(|level| {
                let counts = run_cell(&self.cell(level, self.detector), detector)?;
                self.row(self.noise_levels[level], counts)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub noise_level: String,
    pub sigma: f64,
    pub counts: ConfusionCounts,
    pub summary: RateSummary,
    pub target: Option<RateTarget>,
    pub meets_target: Option<bool>,
    pub meets_target_ci: Option<bool>,
}

/// CSV `noise_level,TPR,FPR,TPR_lo,TPR_hi,FPR_lo,FPR_hi`.
pub fn table1_csv(rows: &[NoiseRow]) -> String {
    let mut out = String::from("noise_level,TPR,FPR,TPR_lo,TPR_hi,FPR_lo,FPR_hi\n");
    for r in rows {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.noise_level, s.tpr, s.fpr, s.tpr_ci.0, s.tpr_ci.1, s.fpr_ci.0, s.fpr_ci.1
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Window,
    PolyOrder,
    ThresholdPeak,
    MinDurationFrac,
    DecisionThreshold,
    AlphaSig,
    NPerm,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Window => "window",
            SweepParam::PolyOrder => "poly_order",
            SweepParam::ThresholdPeak => "threshold_peak",
            SweepParam::MinDurationFrac => "min_duration_frac",
            SweepParam::DecisionThreshold => "decision_threshold",
            SweepParam::AlphaSig => "alpha_sig",
            SweepParam::NPerm => "n_perm",
        }
    }

    fn apply(self, config: &mut DetectorConfig, value: f64) -> Result<()> {
        let integer = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidConfig(format!("{} needs an integer, got {value}", self.name())))
            }
        };
        match self {
            SweepParam::Window => *config = config.with_window(integer()?),
            SweepParam::PolyOrder => {
                let order = integer()?;
                let window = match config.smoother {
                    Some(SmootherConfig::SavitzkyGolay { window, .. }) => window,
                    _ => {
                        return Err(Error::InvalidConfig(
                            "poly_order sweeps need a window axis or an explicit smoother".into(),
                        ))
                    }
                };
                config.smoother = Some(SmootherConfig::SavitzkyGolay {
                    window,
                    poly_order: order,
                });
            }
            SweepParam::ThresholdPeak => config.threshold_peak = value,
            SweepParam::MinDurationFrac => config.min_duration_frac = value,
            SweepParam::DecisionThreshold => config.decision_threshold = value,
            SweepParam::AlphaSig => config.alpha_sig = value,
            SweepParam::NPerm => config.n_perm = integer()?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axes: Vec<SweepAxis>,
    /// Largest number of configurations a sweep may run.
    pub budget: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            axes: vec![
                SweepAxis {
                    param: SweepParam::Window,
                    values: vec![7.0, 11.0, 15.0, 21.0],
                },
                SweepAxis {
                    param: SweepParam::DecisionThreshold,
                    values: vec![0.3, 0.4, 0.5, 0.6, 0.7],
                },
            ],
            budget: DEFAULT_BUDGET,
        }
    }
}

impl SweepConfig {
    /// Axis value combinations in row-major order (last axis fastest).
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        if self.axes.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one axis".into()));
        }
        for axis in &self.axes {
            if axis.values.len() < 2 {
                return Err(Error::InvalidConfig(format!(
                    "sweep axis {} needs at least two values",
                    axis.param.name()
                )));
            }
        }
        let cells: usize = self.axes.iter().map(|a| a.values.len()).product();
        if cells > self.budget {
            return Err(Error::BudgetExceeded {
                cells,
                budget: self.budget,
            });
        }
        let mut points = vec![Vec::new()];
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub values: Vec<f64>,
    pub detector: DetectorConfig,
    pub rows: Vec<NoiseRow>,
    pub mean_error_rate: f64,
    pub mean_fpr: f64,
    pub meets_targets: bool,
    pub meets_targets_ci: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axes: Vec<String>,
    pub points: Vec<SweepPoint>,
    /// Index of the lowest mean error rate; ties go to the lower mean FPR,
    /// then the lower first-axis value.
    pub best: usize,
}

impl SweepReport {
    pub fn best_point(&self) -> &SweepPoint {
        &self.points[self.best]
    }

    /// Long format: axis columns, `noise_level`, then `tpr,fpr,error_rate`.
    pub fn heatmap_csv(&self) -> String {
        let mut out = self.axes.join(",");
        out.push_str(",noise_level,tpr,fpr,error_rate\n");
        for p in &self.points {
            for r in &p.rows {
                for v in &p.values {
                    let _ = write!(out, "{v},");
                }
                let s = &r.summary;
                let _ = writeln!(out, "{},{},{},{}", r.noise_level, s.tpr, s.fpr, s.error_rate);
            }
        }
        out
    }
}

/// Runs every grid configuration at every noise level of `experiment`.
///
/// Configurations that differ only in `decision_threshold` or `alpha_sig`
/// share one detector evaluation per trial.
pub fn sweep(experiment: &Experiment, grid: &SweepConfig, detector: &dyn Detector) -> Result<SweepReport> {
    let points = grid.points()?;
    let configs = points
        .iter()
        .map(|values| {
            let mut c = experiment.detector;
            for (axis, &v) in grid.axes.iter().zip(values) {
                axis.param.apply(&mut c, v)?;
            }
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;

    // Group by everything that affects the evaluation itself.
    let evaluation_key = |c: &DetectorConfig| DetectorConfig {
        decision_threshold: 0.5,
        alpha_sig: 0.05,
        ..*c
    };
    let mut groups: Vec<(DetectorConfig, Vec<usize>)> = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        let key = evaluation_key(c);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(i),
            None => groups.push((key, vec![i])),
        }
    }

    let levels = experiment.noise_levels.len();
    if levels == 0 {
        return Err(Error::InvalidConfig("noise_levels is empty".into()));
    }
    let mut counts = vec![vec![ConfusionCounts::default(); levels]; configs.len()];
    for (key, members) in &groups {
        let decisions: Vec<Decision> = members
            .iter()
            .map(|&i| (configs[i].decision_threshold, configs[i].alpha_sig))
            .collect();
        for level in 0..levels {
            let tallied = tally(&experiment.cell(level, *key), detector, &decisions)?;
            for (&i, c) in members.iter().zip(tallied) {
                counts[i][level] = c;
            }
        }
    }

    let mut out = Vec::with_capacity(configs.len());
    for ((values, detector), per_level) in points.into_iter().zip(configs).zip(counts) {
        let rows = experiment
            .noise_levels
            .iter()
            .zip(per_level)
            .map(|(&noise, c)| experiment.row(noise, c))
            .collect::<Result<Vec<_>>>()?;
        let mean = |f: fn(&RateSummary) -> f64| rows.iter().map(|r| f(&r.summary)).sum::<f64>() / levels as f64;
        out.push(SweepPoint {
            mean_error_rate: mean(|s| s.error_rate),
            mean_fpr: mean(|s| s.fpr),
            meets_targets: rows.iter().all(|r| r.meets_target != Some(false)),
            meets_targets_ci: rows.iter().all(|r| r.meets_target_ci != Some(false)),
            values,
            detector,
            rows,
        });
    }
    let best = (0..out.len())
        .min_by(|&a, &b| {
            let (pa, pb) = (&out[a], &out[b]);
            pa.mean_error_rate
                .total_cmp(&pb.mean_error_rate)
                .then(pa.mean_fpr.total_cmp(&pb.mean_fpr))
                .then(pa.values[0].total_cmp(&pb.values[0]))
        })
        .expect("sweep has at least one point");
    Ok(SweepReport {
        axes: grid.axes.iter().map(|a| a.param.name().to_string()).collect(),
        points: out,
        best,
    })
}

/// Run metadata shared by the Monte Carlo reports. Callers add a timestamp.
pub fn report_metadata(experiment: &Experiment) -> serde_json::Value {
    serde_json::json!({
        "seed": experiment.seed,
        "n_trials_per_class": experiment.n_trials,
        "grid": experiment.grid,
        "noise_levels": experiment.noise_levels,
        "specs": {
            "positives": experiment.positives,
            "negatives": experiment.negatives,
        },
        "detector": experiment.detector,
        "targets": experiment.targets,
        "class_weights": { "tpr": CLASS_WEIGHTS[0], "tnr": CLASS_WEIGHTS[1] },
        "versions": { "joltlab": env!("CARGO_PKG_VERSION") },
    })
}
