//! Browser bindings. Each export takes plain numbers or arrays and returns
//! a JSON string; the page in `www/` parses it and draws the curves.

use joltlab::detector::{hybrid_detect, DetectorConfig};
use joltlab::estimation::{DerivativeEstimate, SavitzkyGolay};
use joltlab::growth::{Family, GrowthModelSpec, Grid, NoiseLevel, NoiseSpec};
use joltlab::metrics::JoltMetrics;
use joltlab::{Result, TimeSeries};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn family(kind: &str, rate: f64, strength: f64) -> Result<Family> {
    let spec = match kind {
        "exponential" => Family::Exponential { c0: 1.0, k: rate },
        "log_quadratic" => Family::LogQuadratic {
            c0: 1.0,
            a: rate,
            b: strength,
        },
        "logistic" => Family::Logistic {
            capacity: 100.0,
            rate,
            midpoint: 10.0,
        },
        "injected_jolt" => Family::InjectedJolt {
            base: Box::new(Family::Exponential { c0: 1.0, k: rate }),
            jolt_start: 6.0,
            jolt_end: 12.0,
            ramp_strength: strength,
        },
        other => return Err(joltlab::Error::InvalidSpec(format!("unknown family {other}"))),
    };
    Ok(spec)
}

/// 200 points on `[0, 20]` with multiplicative noise of relative size `sigma`.
pub fn generate_json(kind: &str, rate: f64, strength: f64, sigma: f64, seed: u32) -> Result<String> {
    let noise = NoiseSpec::new(NoiseLevel::Sigma(sigma), u64::from(seed));
    let spec = GrowthModelSpec::new(family(kind, rate, strength)?, Grid::default(), noise);
    let (series, label) = spec.generate()?;
    Ok(json!({ "t": series.times(), "value": series.values(), "label": label }).to_string())
}

fn detector(window: usize, decision_threshold: f64, seed: u32) -> DetectorConfig {
    DetectorConfig {
        decision_threshold,
        seed: u64::from(seed),
        ..DetectorConfig::default()
    }
    .with_window(window)
}

pub fn detect_json(t: &[f64], value: &[f64], window: usize, decision_threshold: f64, seed: u32) -> Result<String> {
    let series = TimeSeries::new(t.to_vec(), value.to_vec())?;
    hybrid_detect(&series, &detector(window, decision_threshold, seed))?.to_json()
}

pub fn metrics_json(t: &[f64], value: &[f64], window: usize) -> Result<String> {
    let series = TimeSeries::new(t.to_vec(), value.to_vec())?;
    let d = DerivativeEstimate::from_savgol(&series, &SavitzkyGolay::new(window, 4)?)?;
    let m = JoltMetrics::compute(&d)?;
    Ok(json!({
        "t": m.times,
        "c": d.c(),
        "c3": d.c3(),
        "jolt": m.jolt,
        "jn": m.dimensionless,
        "alpha": m.alpha,
        "doubling_time": m.doubling_time,
        "edge": d.edge_mask,
    })
    .to_string())
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn generate(kind: &str, rate: f64, strength: f64, sigma: f64, seed: u32) -> std::result::Result<String, JsError> {
    js(generate_json(kind, rate, strength, sigma, seed))
}

#[wasm_bindgen]
pub fn detect(
    t: &[f64],
    value: &[f64],
    window: usize,
    decision_threshold: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(detect_json(t, value, window, decision_threshold, seed))
}

#[wasm_bindgen]
pub fn metrics(t: &[f64], value: &[f64], window: usize) -> std::result::Result<String, JsError> {
    js(metrics_json(t, value, window))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    fn floats(v: &Value) -> Vec<f64> {
        v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
    }

    #[test]
    fn generate_then_detect() {
        let g = parse(&generate_json("log_quadratic", 0.0, 0.01, 0.0, 1).unwrap());
        assert_eq!(g["label"], true);
        let (t, v) = (floats(&g["t"]), floats(&g["value"]));
        let r = parse(&detect_json(&t, &v, 21, 0.5, 1).unwrap());
        assert_eq!(r["verdict"], true);

        let g = parse(&generate_json("exponential", 0.1, 0.0, 0.0, 1).unwrap());
        let (t, v) = (floats(&g["t"]), floats(&g["value"]));
        assert_eq!(parse(&detect_json(&t, &v, 21, 0.5, 1).unwrap())["verdict"], false);
    }

    #[test]
    fn metrics_shape() {
        let g = parse(&generate_json("exponential", 0.1, 0.0, 0.0, 1).unwrap());
        let (t, v) = (floats(&g["t"]), floats(&g["value"]));
        let m = parse(&metrics_json(&t, &v, 21).unwrap());
        assert_eq!(m["jn"].as_array().unwrap().len(), 200);
        let jn = m["jn"][100].as_f64().unwrap();
        assert!((jn - 1.0).abs() < 0.05);
    }

    #[test]
    fn unknown_family_is_an_error() {
        assert!(generate_json("cubic", 0.1, 0.0, 0.0, 1).is_err());
    }
}
