//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any fails. Tolerances are constants next to each check.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use joltlab::detector::{hybrid_detect, permutation_test, DetectorConfig};
use joltlab::estimation::{DerivativeEstimate, SavitzkyGolay};
use joltlab::growth::{
    add_noise, apply_resource_damping, compose, Family, Grid, GrowthModelSpec, InteractionSpec, NoiseLevel,
    NoiseSpec, ResourceSchedule, Samples,
};
use joltlab::metrics::{composite_jolt, effective_jolt, JoltMetrics};
use joltlab::montecarlo::{self, Experiment, HybridDetector, SweepConfig};
use joltlab::rng::{derive_seed, rng_for};
use joltlab::TimeSeries;
use rand::Rng as _;
use serde_json::Value;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn noiseless(family: Family, grid: Grid) -> TimeSeries {
    GrowthModelSpec::new(family, grid, NoiseSpec::default())
        .noiseless()
        .unwrap()
}

fn default_detector() -> DetectorConfig {
    DetectorConfig::default()
}

/// Table-level rate targets on the default sweep, judged within the 95% Wilson CI.
fn criterion_1() -> Outcome {
    let experiment = Experiment::default();
    assert_eq!(experiment.n_trials, 1000);
    let report = montecarlo::sweep(&experiment, &SweepConfig::default(), &HybridDetector).unwrap();
    let cells = report.points.len();
    let best = report.best_point();
    let rates: Vec<String> = best
        .rows
        .iter()
        .map(|r| format!("{} {:.3}/{:.3}", r.noise_level, r.summary.tpr, r.summary.fpr))
        .collect();
    let passing_ci = report.points.iter().filter(|p| p.meets_targets_ci).count();
    let passing_point = report.points.iter().filter(|p| p.meets_targets).count();
    check(
        cells <= 20 && passing_ci > 0,
        format!(
            "{cells} cells, {passing_ci} meet targets within CI, {passing_point} on point estimates; best {:?}: {}",
            best.values,
            rates.join(", ")
        ),
    )
}

/// Exponentials have J_N = 1 and are never flagged.
fn criterion_2() -> Outcome {
    const ANALYTIC_TOL: f64 = 1e-9;
    const PIPELINE_TOL: f64 = 0.05;
    const MAX_SCORE: f64 = 0.25;
    let mut rng = rng_for(2, &[]);
    let grid = Grid::default();
    let (mut worst_analytic, mut worst_pipeline, mut worst_score) = (0f64, 0f64, 0f64);
    let mut flagged = 0;
    for _ in 0..50 {
        let c0 = rng.random_range(0.1..10.0);
        let k = rng.random_range(0.02..0.3);
        let family = Family::Exponential { c0, k };
        for t in grid.times() {
            let [c, c1, c2, c3] = family.analytic_derivatives(t).unwrap();
            worst_analytic = worst_analytic.max((c3 * c / (c1 * c2) - 1.0).abs());
        }
        let series = noiseless(family, grid);
        let d = DerivativeEstimate::from_savgol(&series, &SavitzkyGolay::default_for_len(series.len())).unwrap();
        let m = JoltMetrics::compute(&d).unwrap();
        for i in d.interior() {
            let jn = m.dimensionless[i].expect("exponential J_N is never singular");
            worst_pipeline = worst_pipeline.max((jn - 1.0).abs());
        }
        let r = hybrid_detect(&series, &default_detector()).unwrap();
        worst_score = worst_score.max(r.score);
        flagged += usize::from(r.verdict);
    }
    check(
        worst_analytic <= ANALYTIC_TOL && worst_pipeline <= PIPELINE_TOL && worst_score < MAX_SCORE && flagged == 0,
        format!(
            "max |J_N-1| analytic {worst_analytic:.1e}, pipeline {worst_pipeline:.2e}; max score {worst_score:.3}; {flagged} flagged"
        ),
    )
}

/// LogQuadratic with a = 0: J_N(0) = 3, shrinking doubling time, flagged.
fn criterion_3() -> Outcome {
    const JN_TOL: f64 = 0.15;
    let grid = Grid::new(-10.0, 10.0, 201);
    let zero = 100;
    let mut details = Vec::new();
    let mut ok = true;
    for b in [0.005, 0.01, 0.02] {
        let series = noiseless(Family::LogQuadratic { c0: 1.0, a: 0.0, b }, grid);
        assert!(series.times()[zero].abs() < 1e-12);
        let d = DerivativeEstimate::from_savgol(&series, &SavitzkyGolay::default_for_len(series.len())).unwrap();
        let m = JoltMetrics::compute(&d).unwrap();
        // C' vanishes at t = 0, so the point itself is masked as singular and
        // the estimate there is the mean of its two neighbours.
        let masked = m.dimensionless[zero].is_none();
        let jn0 = match m.dimensionless[zero] {
            Some(v) => v,
            None => (m.dimensionless[zero - 1].unwrap() + m.dimensionless[zero + 1].unwrap()) / 2.0,
        };
        let defined: Vec<f64> = d.interior().filter_map(|i| m.doubling_time[i]).collect();
        let decreasing = defined.len() > 50 && defined.windows(2).all(|w| w[1] < w[0]);
        let verdict = hybrid_detect(&series, &default_detector()).unwrap().verdict;
        ok &= (jn0 - 3.0).abs() <= JN_TOL && decreasing && verdict;
        details.push(format!(
            "b={b}: J_N(0)={jn0:.4} (masked={masked}) doubling decreasing on {} points={decreasing} verdict={verdict}",
            defined.len()
        ));
    }
    check(ok, details.join("; "))
}

/// Savitzky-Golay reproduces polynomials of degree <= order exactly.
fn criterion_4() -> Outcome {
    const REPRO_TOL: f64 = 1e-10;
    const WEIGHT_TOL: f64 = 1e-12;
    let mut rng = rng_for(4, &[]);
    let mut worst = 0f64;
    for window in [5, 7, 11, 21] {
        for order in [2, 3, 4] {
            let sg = SavitzkyGolay::new(window, order).unwrap();
            for degree in 0..=order {
                let coef: Vec<f64> = (0..=degree).map(|_| rng.random_range(-2.0..2.0)).collect();
                let series = TimeSeries::from_fn(-1.0, 1.0, 2 * window + 3, |t| poly(&coef, 0, t)).unwrap();
                for deriv in 0..=order {
                    let est = sg.derivative(&series, deriv).unwrap();
                    let scale = series.times().iter().map(|&t| poly(&coef, deriv, t).abs()).fold(1.0, f64::max);
                    for (&t, &v) in series.times().iter().zip(est.values()) {
                        worst = worst.max((v - poly(&coef, deriv, t)).abs() / scale);
                    }
                }
            }
        }
    }
    let plan = SavitzkyGolay::new(5, 2).unwrap().plan(5, 0).unwrap();
    let oracle = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|w| w / 35.0);
    let weight_err = plan
        .interior_weights()
        .iter()
        .zip(oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        worst <= REPRO_TOL && weight_err <= WEIGHT_TOL,
        format!("max reproduction error {worst:.1e} (scaled), w5/p2 weight error {weight_err:.1e}"),
    )
}

/// `deriv`-th derivative of `sum coef[i] t^i`.
fn poly(coef: &[f64], deriv: usize, t: f64) -> f64 {
    coef.iter()
        .enumerate()
        .skip(deriv)
        .map(|(i, c)| {
            let falling: f64 = ((i - deriv + 1)..=i).map(|j| j as f64).product();
            c * falling * t.powi((i - deriv) as i32)
        })
        .sum()
}

/// Third-derivative accuracy and finite-difference agreement on an exponential.
fn criterion_5() -> Outcome {
    const C3_RMSE: f64 = 0.02;
    const FD_RMS: f64 = 0.01;
    let (k, h, n) = (0.1, 0.1, 200);
    let series = TimeSeries::from_fn(0.0, h * (n - 1) as f64, n, |t| (k * t).exp()).unwrap();
    let sg = SavitzkyGolay::new(11, 4).unwrap();
    let d = DerivativeEstimate::from_savgol(&series, &sg).unwrap();
    let interior: Vec<usize> = d.interior().collect();
    let rel = |num: f64, den: f64| (num / den - 1.0).powi(2);
    let c3_rmse = (interior
        .iter()
        .map(|&i| rel(d.c3()[i], k.powi(3) * series.values()[i]))
        .sum::<f64>()
        / interior.len() as f64)
        .sqrt();
    let smooth = d.c();
    let inner: Vec<usize> = interior.iter().copied().filter(|&i| i > 0 && i + 1 < n).collect();
    let fd_rms = (inner
        .iter()
        .map(|&i| rel((smooth[i + 1] - smooth[i - 1]) / (2.0 * h), d.c1()[i]))
        .sum::<f64>()
        / inner.len() as f64)
        .sqrt();
    check(
        c3_rmse <= C3_RMSE && fd_rms <= FD_RMS,
        format!("C''' relative RMSE {c3_rmse:.2e}, finite difference vs order-1 RMS {fd_rms:.2e}"),
    )
}

/// Permutation test size under the exponential null.
fn criterion_6() -> Outcome {
    const REPS: u64 = 1000;
    const RANGE: (f64, f64) = (0.03, 0.07);
    let grid = Grid::default();
    let mut rejections = 0;
    for r in 0..REPS {
        let mut rng = rng_for(6, &[r]);
        let family = Family::Exponential {
            c0: rng.random_range(0.5..2.0),
            k: rng.random_range(0.03..0.12),
        };
        let clean = noiseless(family, grid);
        let series = add_noise(&clean, &NoiseSpec::new(NoiseLevel::Medium, derive_seed(6, &[r, 1]))).unwrap();
        let config = DetectorConfig {
            n_perm: 199,
            seed: derive_seed(6, &[r, 2]),
            ..default_detector()
        };
        let p = permutation_test(&series, &config).unwrap();
        rejections += usize::from(p <= 0.05);
    }
    let rate = rejections as f64 / REPS as f64;
    check(
        (RANGE.0..=RANGE.1).contains(&rate),
        format!("rejection rate {rate:.3} over {REPS} replications at n_perm 199"),
    )
}

/// Weighted-sum and damping identities, exactly.
fn criterion_7() -> Outcome {
    const TOL: f64 = 1e-12;
    let grid = Grid::new(0.0, 10.0, 50);
    let constant = |v: f64| TimeSeries::from_fn(0.0, 10.0, 50, |_| v).unwrap();
    let wavy = TimeSeries::from_fn(0.0, 10.0, 50, |t| 0.4 + 0.3 * t.sin()).unwrap();
    let max_err = |s: &TimeSeries, want: &dyn Fn(usize) -> f64| {
        s.values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - want(i)).abs())
            .fold(0.0, f64::max)
    };
    let none = InteractionSpec::none();
    let half = InteractionSpec::none()
        .with_term(0, 1, Samples::Constant(0.5))
        .with_term(1, 0, Samples::Constant(0.5));
    let (two, four) = (constant(2.0), constant(4.0));

    let mut errs = vec![
        ("identity", max_err(&compose(&[(1.0, &wavy)], &none).unwrap(), &|i| wavy.values()[i])),
        (
            "weighted mean",
            max_err(&compose(&[(0.5, &two), (0.5, &four)], &none).unwrap(), &|_| 3.0),
        ),
        (
            "with interaction",
            max_err(&compose(&[(0.5, &two), (0.5, &four)], &half).unwrap(), &|_| 4.0),
        ),
        (
            "metric entry point",
            max_err(&composite_jolt(&[(0.5, &two), (0.5, &four)], &half).unwrap(), &|_| 4.0),
        ),
    ];
    let r_max = 3.0;
    let schedule = |r: f64| ResourceSchedule::new(constant(r), r_max).unwrap();
    let j = TimeSeries::new(grid.times(), wavy.values().to_vec()).unwrap();
    errs.push(("saturation", max_err(&apply_resource_damping(&j, &schedule(r_max)).unwrap(), &|_| 0.0)));
    errs.push((
        "no damping",
        max_err(&apply_resource_damping(&j, &schedule(0.0)).unwrap(), &|i| j.values()[i]),
    ));
    errs.push((
        "substitution",
        max_err(&effective_jolt(&constant(0.4), &schedule(r_max / 2.0)).unwrap(), &|_| 0.2),
    ));
    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let failing: Vec<&str> = errs.iter().filter(|e| e.1 > TOL).map(|e| e.0).collect();
    check(
        failing.is_empty(),
        format!("{} identities, max error {worst:.1e}; failing {failing:?}", errs.len()),
    )
}

fn run_mc(dir: &Path, jobs: &str) {
    let out = Command::new(env!("CARGO_BIN_EXE_joltlab"))
        .args(["--seed", "11", "--trials", "40", "--jobs", jobs, "--out"])
        .arg(dir)
        .arg("mc")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn report_without_timestamp(dir: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

/// `mc` output does not depend on the worker count.
fn criterion_8() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_mc(a.path(), "1");
    run_mc(b.path(), "8");
    let table_same = fs::read(a.path().join("table1.csv")).unwrap() == fs::read(b.path().join("table1.csv")).unwrap();
    let report_same = report_without_timestamp(a.path()) == report_without_timestamp(b.path());
    check(
        table_same && report_same,
        format!("--jobs 1 vs 8: table1.csv identical={table_same}, report.json identical={report_same}"),
    )
}

/// Rescaling values or shifting time leaves the detection unchanged.
fn criterion_9() -> Outcome {
    const TOL: f64 = 1e-9;
    let grid = Grid::default();
    let families = [
        Family::Exponential { c0: 1.3, k: 0.08 },
        Family::LogQuadratic { c0: 1.0, a: 0.02, b: 0.01 },
        Family::Logistic {
            capacity: 100.0,
            rate: 0.8,
            midpoint: 9.0,
        },
    ];
    let mut worst = 0f64;
    let mut verdicts_match = true;
    let mut cases = 0;
    for (f, family) in families.into_iter().enumerate() {
        for level in [NoiseLevel::None, NoiseLevel::Low, NoiseLevel::High] {
            let spec = GrowthModelSpec::new(family.clone(), grid, NoiseSpec::new(level, f as u64));
            let (series, _) = spec.generate().unwrap();
            let config = DetectorConfig {
                seed: 9,
                ..default_detector()
            };
            let base = hybrid_detect(&series, &config).unwrap();
            let scaled = series.with_values(series.values().iter().map(|v| v * 1e6).collect()).unwrap();
            let shifted = TimeSeries::new(series.times().iter().map(|t| t + 1000.0).collect(), series.values().to_vec())
                .unwrap();
            for other in [scaled, shifted] {
                let r = hybrid_detect(&other, &config).unwrap();
                verdicts_match &= r.verdict == base.verdict;
                worst = worst.max((r.score - base.score).abs()).max((r.p_value - base.p_value).abs());
                cases += 1;
            }
        }
    }
    check(
        verdicts_match && worst <= TOL,
        format!("{cases} transformed series, verdicts match={verdicts_match}, max score/p difference {worst:.1e}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
