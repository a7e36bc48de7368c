use approx::assert_relative_eq;
use joltlab::detector::{hybrid_detect, DetectorConfig};
use joltlab::estimation::{bootstrap_derivative_ci, BootstrapConfig, DerivativeEstimate, Pipeline};
use joltlab::growth::{
    apply_resource_damping, compose, Family, Grid, GrowthModelSpec, InteractionSpec, NoiseLevel, NoiseSpec,
    ResourceSchedule, Samples,
};
use joltlab::metrics::JoltMetrics;
use joltlab::montecarlo::{Experiment, HybridDetector};
use joltlab::TimeSeries;
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        (0.1..5.0f64, 0.02..0.2f64).prop_map(|(c0, k)| Family::Exponential { c0, k }),
        (0.1..5.0f64, 0.0..0.05f64, 0.002..0.02f64).prop_map(|(c0, a, b)| Family::LogQuadratic { c0, a, b }),
        (20.0..200.0f64, 0.4..1.5f64, 5.0..15.0f64).prop_map(|(capacity, rate, midpoint)| Family::Logistic {
            capacity,
            rate,
            midpoint
        }),
    ]
}

fn noisy(family: Family, sigma: f64, seed: u64) -> TimeSeries {
    let spec = GrowthModelSpec::new(family, Grid::default(), NoiseSpec::new(NoiseLevel::Sigma(sigma), seed));
    spec.generate().unwrap().0
}

fn quick_detector(seed: u64) -> DetectorConfig {
    DetectorConfig {
        n_perm: 199,
        seed,
        ..DetectorConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn detection_is_scale_and_shift_invariant(
        family in family(),
        sigma in 0.0..0.1f64,
        seed in any::<u64>(),
        scale in prop_oneof![Just(1e-6), Just(1e6), 0.01..100.0f64],
        shift in -1000.0..1000.0f64,
    ) {
        let series = noisy(family, sigma, seed);
        let config = quick_detector(seed);
        let base = hybrid_detect(&series, &config).unwrap();
        let scaled = series.with_values(series.values().iter().map(|v| v * scale).collect()).unwrap();
        let shifted =
            TimeSeries::new(series.times().iter().map(|t| t + shift).collect(), series.values().to_vec()).unwrap();
        for other in [scaled, shifted] {
            let r = hybrid_detect(&other, &config).unwrap();
            prop_assert_eq!(r.verdict, base.verdict);
            prop_assert!((r.score - base.score).abs() <= 1e-9);
            prop_assert!((r.p_value - base.p_value).abs() <= 1e-9);
            prop_assert_eq!(r.intervals.len(), base.intervals.len());
        }
    }

    #[test]
    fn raising_the_threshold_never_creates_a_detection(
        family in family(),
        sigma in 0.0..0.1f64,
        seed in any::<u64>(),
        lo in 0.01..0.99f64,
        gap in 0.0..0.98f64,
    ) {
        let series = noisy(family, sigma, seed);
        let hi = (lo + gap).min(0.99);
        let at = |t: f64| hybrid_detect(&series, &DetectorConfig { decision_threshold: t, ..quick_detector(seed) })
            .unwrap()
            .verdict;
        prop_assert!(!at(hi) || at(lo));
    }

    #[test]
    fn score_is_a_convex_combination(family in family(), sigma in 0.0..0.1f64, seed in any::<u64>()) {
        let r = hybrid_detect(&noisy(family, sigma, seed), &quick_detector(seed)).unwrap();
        let s = r.sub_scores;
        for v in [s.peak, s.pattern, s.duration, r.score, r.p_value] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((r.score - (s.peak + s.pattern + s.duration) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_metrics_are_scale_free(family in family(), c in 1e-3..1e3f64) {
        let times = Grid::default().times();
        let exact = |factor: f64| {
            let mut cols: [Vec<f64>; 4] = Default::default();
            for &t in &times {
                let d = family.analytic_derivatives(t).unwrap();
                for (col, v) in cols.iter_mut().zip(d) {
                    col.push(factor * v);
                }
            }
            JoltMetrics::compute(&DerivativeEstimate::exact(times.clone(), cols)).unwrap()
        };
        let (a, b) = (exact(1.0), exact(c));
        for i in 0..times.len() {
            prop_assert!((a.jolt[i] - b.jolt[i]).abs() <= 1e-9 * a.jolt[i].abs().max(1e-12));
            prop_assert!((a.alpha[i] - b.alpha[i]).abs() <= 1e-9 * a.alpha[i].abs().max(1e-12));
            match (a.dimensionless[i], b.dimensionless[i]) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0)),
                (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
            }
        }
    }

    #[test]
    fn compose_and_damping_are_linear(
        a in prop::collection::vec(-5.0..5.0f64, 20),
        b in prop::collection::vec(-5.0..5.0f64, 20),
        usage in prop::collection::vec(0.0..2.0f64, 20),
        (w, u) in (-2.0..2.0f64, -2.0..2.0f64),
    ) {
        let series = |v: Vec<f64>| TimeSeries::new((0..20).map(f64::from).collect(), v).unwrap();
        let (sa, sb) = (series(a.clone()), series(b.clone()));
        let mixed = series(a.iter().zip(&b).map(|(x, y)| w * x + u * y).collect());
        let none = InteractionSpec::none();
        let direct = compose(&[(1.0, &mixed)], &none).unwrap();
        let split = compose(&[(w, &sa), (u, &sb)], &none).unwrap();
        let schedule = ResourceSchedule::new(series(usage), 2.0).unwrap();
        let damped = apply_resource_damping(&mixed, &schedule).unwrap();
        let da = apply_resource_damping(&sa, &schedule).unwrap();
        let db = apply_resource_damping(&sb, &schedule).unwrap();
        for i in 0..20 {
            prop_assert!((direct.values()[i] - split.values()[i]).abs() <= 1e-12);
            let sum = w * da.values()[i] + u * db.values()[i];
            prop_assert!((damped.values()[i] - sum).abs() <= 1e-12);
        }
    }
}

#[test]
fn interaction_terms_add_pointwise() {
    let base = TimeSeries::from_fn(0.0, 1.0, 5, |t| t).unwrap();
    let spec = InteractionSpec::none().with_term(0, 1, Samples::Sampled(vec![0.0, 1.0, 2.0, 3.0, 4.0]));
    let out = compose(&[(2.0, &base), (1.0, &base)], &spec).unwrap();
    for (i, v) in out.values().iter().enumerate() {
        assert_relative_eq!(*v, 3.0 * base.values()[i] + i as f64, epsilon = 1e-12);
    }
}

#[test]
fn bootstrap_intervals_cover_the_true_jolt() {
    let k = 0.1;
    let family = Family::Exponential { c0: 1.0, k };
    let pipeline = Pipeline::SavitzkyGolay { window: 21, poly_order: 4 };
    let (mut covered, mut total) = (0usize, 0usize);
    for rep in 0..100u64 {
        let series = noisy(family.clone(), 0.05, rep);
        let est = bootstrap_derivative_ci(&series, pipeline, BootstrapConfig::new(200, 1000 + rep)).unwrap();
        for i in est.interior() {
            let truth = k.powi(3) * (k * est.times[i]).exp();
            let (lo, hi) = est.intervals[3][i];
            covered += usize::from(lo <= truth && truth <= hi);
            total += 1;
        }
    }
    let coverage = covered as f64 / total as f64;
    eprintln!("bootstrap coverage {coverage:.3}");
    assert!(coverage >= 0.90, "coverage {coverage:.3}");
}

#[test]
fn generators_are_bitwise_reproducible() {
    let spec = GrowthModelSpec::new(
        Family::LogQuadratic { c0: 1.0, a: 0.01, b: 0.01 },
        Grid::default(),
        NoiseSpec::new(NoiseLevel::High, 42),
    );
    let (a, _) = spec.generate().unwrap();
    let (b, _) = spec.generate().unwrap();
    assert_eq!(a.values(), b.values());
}

#[test]
fn more_noise_means_more_errors() {
    let (mut low, mut high) = (0.0, 0.0);
    let seeds = 10;
    for seed in 0..seeds {
        let experiment = Experiment {
            n_trials: 30,
            seed,
            noise_levels: vec![NoiseLevel::Low, NoiseLevel::High],
            ..Experiment::default()
        };
        let rows = experiment.run(&HybridDetector).unwrap();
        let rates = &rows.iter().map(|r| r.summary).collect::<Vec<_>>();
        for r in rates {
            assert_relative_eq!(r.tpr + r.fnr, 1.0);
            assert_relative_eq!(r.fpr + r.tnr, 1.0);
            assert_relative_eq!(r.error_rate, 1.0 - r.accuracy);
        }
        low += rates[0].error_rate;
        high += rates[1].error_rate;
    }
    let (low, high) = (low / seeds as f64, high / seeds as f64);
    assert!(high >= low, "mean error rate low {low:.3} high {high:.3}");
}
