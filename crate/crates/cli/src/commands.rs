use std::fs;
use std::path::{Path, PathBuf};

use joltlab::detector::hybrid_detect;
use joltlab::estimation::{DerivativeEstimate, SavitzkyGolay, SmootherConfig};
use joltlab::growth::{GrowthModelSpec, NoiseSpec};
use joltlab::metrics::JoltMetrics;
use joltlab::montecarlo::{self, HybridDetector, NoiseRow};
use joltlab::rng::derive_seed;
use joltlab::{Positivity, TimeSeries};
use serde_json::{json, Value};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::config::RunConfig;
use crate::error::CliError;

/// Files written by one command, removed again if the command fails.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)
            .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, contents)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn discard(self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn with_outputs<T>(
    dir: &Path,
    body: impl FnOnce(&mut Outputs) -> Result<T, CliError>,
) -> Result<T, CliError> {
    let mut outputs = Outputs::new(dir)?;
    match body(&mut outputs) {
        Ok(v) => Ok(v),
        Err(e) => {
            outputs.discard();
            Err(e)
        }
    }
}

fn pretty(value: &impl serde::Serialize) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::numerical(e.to_string()))
}

fn timestamp() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .unwrap_or_else(|_| "unknown".into())
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}

fn read_series(path: &Path) -> Result<TimeSeries, CliError> {
    let series = TimeSeries::read_csv(path)?;
    series.validate(Positivity::Required)?;
    Ok(series)
}

fn derivatives(config: &RunConfig, series: &TimeSeries) -> Result<DerivativeEstimate, CliError> {
    let sg = match config.estimation.smoother {
        None => SavitzkyGolay::default_for_len(series.len()),
        Some(SmootherConfig::SavitzkyGolay { window, poly_order }) => SavitzkyGolay::new(window, poly_order)?,
        Some(SmootherConfig::Loess { .. }) => {
            return Err(CliError::usage(
                "metrics need third derivatives; use a savitzky_golay smoother for estimation",
            ))
        }
    };
    Ok(DerivativeEstimate::from_savgol(series, &sg)?)
}

fn report(config: &RunConfig, command: &str, results: Value) -> Value {
    let mut report = montecarlo::report_metadata(&config.experiment());
    report["command"] = json!(command);
    report["versions"]["joltlab-cli"] = json!(env!("CARGO_PKG_VERSION"));
    report["results"] = results;
    report["timestamp"] = json!(timestamp());
    report
}

fn warn_failures(rows: &[NoiseRow]) {
    for r in rows {
        if r.counts.failed > 0 {
            eprintln!(
                "warning: {} trials failed at {} noise and were scored as negative",
                r.counts.failed, r.noise_level
            );
        }
    }
}

pub fn cmd_generate(config: &RunConfig) -> Result<(), CliError> {
    let g = &config.generate;
    if g.count == 0 {
        return Err(CliError::usage("generate.count must be at least 1"));
    }
    with_outputs(&config.out, |out| {
        for i in 0..g.count {
            let noise_seed = derive_seed(config.seed, &[i as u64]);
            let spec = GrowthModelSpec::new(g.family.clone(), g.grid, NoiseSpec::new(g.noise, noise_seed));
            let (series, label) = spec.generate()?;
            let stem = if g.count == 1 {
                g.name.clone()
            } else {
                format!("{}_{i:03}", g.name)
            };
            let csv = out.write(&format!("{stem}.csv"), series.to_csv_string())?;
            let sidecar = json!({
                "spec": spec,
                "seed": config.seed,
                "noise_seed": noise_seed,
                "index": i,
                "label": label,
            });
            out.write(&format!("{stem}.json"), pretty(&sidecar)?)?;
            println!("{}  label={label}", csv.display());
        }
        Ok(())
    })
}

pub fn cmd_detect(config: &RunConfig, input: &Path) -> Result<(), CliError> {
    let series = read_series(input)?;
    let result = hybrid_detect(&series, &config.detector_for_run())?;
    let metrics = JoltMetrics::compute(&derivatives(config, &series)?)?;
    with_outputs(&config.out, |out| {
        out.write("detection.json", result.to_json()?)?;
        out.write("metrics.csv", metrics.to_csv_string())?;
        Ok(())
    })?;
    println!(
        "verdict={} score={:.4} p_value={:.4} intervals={}",
        result.verdict,
        result.score,
        result.p_value,
        result.intervals.len()
    );
    Ok(())
}

pub fn cmd_metrics(config: &RunConfig, input: &Path) -> Result<(), CliError> {
    let series = read_series(input)?;
    let d = derivatives(config, &series)?;
    let metrics = JoltMetrics::compute(&d)?;
    with_outputs(&config.out, |out| {
        out.write("derivatives.csv", d.to_csv_string())?;
        out.write("metrics.csv", metrics.to_csv_string())?;
        Ok(())
    })
}

pub fn cmd_mc(config: &RunConfig) -> Result<(), CliError> {
    let experiment = config.experiment();
    let rows = in_pool(config.jobs, || experiment.run(&HybridDetector))??;
    warn_failures(&rows);
    let table = montecarlo::table1_csv(&rows);
    let results = serde_json::to_value(&rows).map_err(|e| CliError::numerical(e.to_string()))?;
    with_outputs(&config.out, |out| {
        out.write("table1.csv", &table)?;
        out.write("report.json", pretty(&report(config, "mc", results))?)?;
        Ok(())
    })?;
    print!("{table}");
    Ok(())
}

pub fn cmd_sweep(config: &RunConfig) -> Result<(), CliError> {
    let experiment = config.experiment();
    let sweep = in_pool(config.jobs, || montecarlo::sweep(&experiment, &config.sweep, &HybridDetector))??;
    for p in &sweep.points {
        warn_failures(&p.rows);
    }
    let heatmap = sweep.heatmap_csv();
    let results = serde_json::to_value(&sweep).map_err(|e| CliError::numerical(e.to_string()))?;
    with_outputs(&config.out, |out| {
        out.write("heatmap.csv", &heatmap)?;
        out.write("report.json", pretty(&report(config, "sweep", results))?)?;
        Ok(())
    })?;
    let best = sweep.best_point();
    let axes: Vec<String> = sweep
        .axes
        .iter()
        .zip(&best.values)
        .map(|(a, v)| format!("{a}={v}"))
        .collect();
    println!(
        "best: {}  mean_error_rate={:.4}  meets_targets={}  meets_targets_ci={}",
        axes.join(" "),
        best.mean_error_rate,
        best.meets_targets,
        best.meets_targets_ci
    );
    Ok(())
}
