//! Run configuration, read from a TOML file. Every key has a default and
//! unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use joltlab::detector::DetectorConfig;
use joltlab::estimation::SmootherConfig;
use joltlab::growth::{Family, Grid, NoiseLevel};
use joltlab::montecarlo::{self, Experiment, RateTarget, SpecTemplate, SweepConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 means all available cores.
    pub jobs: usize,
    /// Monte Carlo trials per class.
    pub trials: usize,
    pub generate: GenerateConfig,
    pub estimation: EstimationConfig,
    pub detector: DetectorConfig,
    pub population: PopulationConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let experiment = Experiment::default();
        RunConfig {
            seed: experiment.seed,
            out: PathBuf::from("out"),
            jobs: 0,
            trials: experiment.n_trials,
            generate: GenerateConfig::default(),
            estimation: EstimationConfig::default(),
            detector: DetectorConfig::default(),
            population: PopulationConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub family: Family,
    pub grid: Grid,
    pub noise: NoiseLevel,
    /// Number of independent noisy draws.
    pub count: usize,
    /// File stem for outputs.
    pub name: String,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            family: Family::LogQuadratic {
                c0: 1.0,
                a: 0.0,
                b: 0.01,
            },
            grid: Grid::default(),
            noise: NoiseLevel::None,
            count: 1,
            name: "series".into(),
        }
    }
}

/// Derivative estimation used for the metrics CSV. `None` uses the
/// length-based Savitzky-Golay default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub smoother: Option<SmootherConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub positives: Vec<SpecTemplate>,
    pub negatives: Vec<SpecTemplate>,
    pub grid: Grid,
    pub noise_levels: Vec<NoiseLevel>,
    pub targets: Vec<RateTarget>,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        let e = Experiment::default();
        PopulationConfig {
            positives: e.positives,
            negatives: e.negatives,
            grid: e.grid,
            noise_levels: e.noise_levels,
            targets: montecarlo::default_targets(),
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub trials: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(out) = &overrides.out {
            config.out = out.clone();
        }
        if let Some(jobs) = overrides.jobs {
            config.jobs = jobs;
        }
        if let Some(trials) = overrides.trials {
            config.trials = trials;
        }
        if config.trials == 0 {
            return Err(CliError::usage("trials must be at least 1"));
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn experiment(&self) -> Experiment {
        let p = &self.population;
        Experiment {
            positives: p.positives.clone(),
            negatives: p.negatives.clone(),
            grid: p.grid,
            noise_levels: p.noise_levels.clone(),
            n_trials: self.trials,
            seed: self.seed,
            detector: self.detector,
            targets: p.targets.clone(),
        }
    }

    /// Detector settings for single-series commands, seeded from the run seed.
    pub fn detector_for_run(&self) -> DetectorConfig {
        DetectorConfig {
            seed: self.seed,
            ..self.detector
        }
    }
}
