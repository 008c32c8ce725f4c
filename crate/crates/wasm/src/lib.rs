//! Browser demo bindings.
//!
//! Three interactive views over the core crate: temperature trajectories
//! for the six scenarios, the frequency-versus-temperature governor curve,
//! and a small in-browser fuzzing campaign. Every export takes and returns
//! JSON strings so the page needs no generated glue beyond wasm-bindgen.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use thermofuzz::campaign::run_mini_campaign;
use thermofuzz::dvfs::frequency;
use thermofuzz::thermal::{standard_scenarios, temperature_at, GpuProfile};

fn parse_profile(profile_json: &str) -> Result<GpuProfile, JsValue> {
    GpuProfile::from_json(profile_json).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[derive(Serialize)]
struct Curve {
    id: u8,
    name: String,
    t_initial: f64,
    t_env: f64,
    times: Vec<f64>,
    temperatures: Vec<f64>,
}

/// Temperature trajectories of the six scenarios over `duration` seconds,
/// sampled every `dt` seconds. Returns a JSON array of curves.
#[wasm_bindgen]
pub fn thermal_curves(profile_json: &str, duration: f64, dt: f64) -> Result<String, JsValue> {
    let profile = parse_profile(profile_json)?;
    if !(dt > 0.0) || !(duration > 0.0) {
        return Err(JsValue::from_str("duration and dt must be positive"));
    }
    let steps = (duration / dt).ceil() as usize;
    if steps > 200_000 {
        return Err(JsValue::from_str("too many samples; raise dt"));
    }
    let curves: Vec<Curve> = standard_scenarios(&profile)
        .iter()
        .map(|scenario| {
            let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
            let temperatures = times
                .iter()
                .map(|&t| temperature_at(&profile, scenario, t).expect("t >= 0"))
                .collect();
            Curve {
                id: scenario.id,
                name: scenario.name.clone(),
                t_initial: scenario.t_initial,
                t_env: scenario.t_env,
                times,
                temperatures,
            }
        })
        .collect();
    Ok(serde_json::to_string(&curves).expect("curves serialize"))
}

#[derive(Serialize)]
struct FrequencyCurve {
    temperatures: Vec<f64>,
    frequencies_mhz: Vec<f64>,
    f_base_mhz: f64,
    t_nominal: f64,
}

/// Governor curve `f(T)` across the profile's operating range.
#[wasm_bindgen]
pub fn frequency_curve(profile_json: &str, samples: usize) -> Result<String, JsValue> {
    let profile = parse_profile(profile_json)?;
    let n = samples.clamp(2, 100_000);
    let temperatures: Vec<f64> = (0..n)
        .map(|i| profile.t_min + (profile.t_max - profile.t_min) * i as f64 / (n - 1) as f64)
        .collect();
    let frequencies_mhz = temperatures.iter().map(|&t| frequency(&profile, t)).collect();
    Ok(serde_json::to_string(&FrequencyCurve {
        temperatures,
        frequencies_mhz,
        f_base_mhz: profile.f_base_mhz,
        t_nominal: profile.t_nominal,
    })
    .expect("curve serializes"))
}

/// Runs a single-scenario campaign over the bundled starter models and
/// returns the report as JSON.
#[wasm_bindgen]
pub fn mini_campaign(scenario: u8, iterations: u32, master_seed: u64) -> Result<String, JsValue> {
    if !(1..=6).contains(&scenario) {
        return Err(JsValue::from_str("scenario must be in 1..=6"));
    }
    let iterations = iterations.clamp(1, 2000);
    let report = run_mini_campaign(scenario, iterations, master_seed)
        .map_err(|e| JsValue::from_str(&e.to_string()))?;
    Ok(report.to_json())
}

/// The bundled device profile, for populating the demo's controls.
#[wasm_bindgen]
pub fn default_profile() -> String {
    serde_json::to_string_pretty(&GpuProfile::rtx4090d()).expect("profile serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_cover_all_scenarios() {
        let profile = default_profile();
        let text = thermal_curves(&profile, 600.0, 1.0).unwrap();
        let curves: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(curves.as_array().unwrap().len(), 6);
        assert!(thermal_curves(&profile, -1.0, 1.0).is_err());
    }

    #[test]
    fn frequency_curve_spans_operating_range() {
        let text = frequency_curve(&default_profile(), 101).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let temps = value["temperatures"].as_array().unwrap();
        assert_eq!(temps.len(), 101);
        assert_eq!(temps[0].as_f64().unwrap(), -40.0);
        assert_eq!(temps[100].as_f64().unwrap(), 90.0);
    }

    #[test]
    fn mini_campaign_produces_a_report() {
        let text = mini_campaign(3, 30, 5).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["scenarios"][0]["id"].as_u64().unwrap(), 3);
        assert!(mini_campaign(9, 10, 1).is_err());
    }
}
