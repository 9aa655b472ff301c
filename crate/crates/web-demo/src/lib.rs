//! wasm-bindgen entry points for `www/index.html`. Every function returns a
//! JSON string; the `*_json` versions are plain Rust so they can be tested
//! natively. Seeds cross the boundary as `u32` so JS passes plain numbers.

use privpolar::codec::{run_trials, FrozenPolicy};
use privpolar::construction::{construct_sets, Mode, Role};
use privpolar::region::sweep_region;
use privpolar::source::{DistortionMetric, JointLaw, JointSource, TestChannel};
use privpolar::Result;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Grid resolution cap; the sweep is single-threaded in the browser.
const MAX_GRID: usize = 24;
const MAX_N: usize = 4096;

fn dsbs_law(p: f64, channel: f64) -> Result<(JointLaw, DistortionMetric)> {
    let src = JointSource::dsbs(p)?;
    let law = JointLaw::new(&src, &TestChannel::bsc(&src, channel)?)?;
    Ok((law, DistortionMetric::hamming(2, 2)))
}

fn check_n(n: usize) -> Result<()> {
    if n > MAX_N {
        return Err(privpolar::Error::GuardExceeded { needed: n as f64, limit: MAX_N as f64 });
    }
    Ok(())
}

pub fn frontier_json(p: f64, grid_res: usize) -> Result<String> {
    let src = JointSource::dsbs(p)?;
    let fr = sweep_region(&src, &DistortionMetric::hamming(2, 2), grid_res.min(MAX_GRID), 6)?;
    let pts: Vec<[f64; 3]> = fr.points.iter().map(|f| [f.op.rate, f.op.distortion, f.op.equivocation]).collect();
    Ok(json!({ "points": pts, "grid_size": fr.grid_size }).to_string())
}

pub fn spectrum_json(p: f64, channel: f64, n: usize, beta: f64, samples: usize, seed: u64) -> Result<String> {
    check_n(n)?;
    let (law, d) = dsbs_law(p, channel)?;
    let spec = construct_sets(&law, n, beta, Mode::Threshold, samples, seed)?;
    let roles: Vec<&str> = spec
        .roles()
        .iter()
        .map(|r| match r {
            Role::Info => "I",
            Role::Frozen => "F",
            Role::Computable => "D",
        })
        .collect();
    let op = law.operating_point(&d);
    Ok(json!({
        "z_cond": spec.z_cond,
        "z_marg": spec.z_marg,
        "roles": roles,
        "rate": spec.rate(),
        "target": op,
    })
    .to_string())
}

pub fn simulate_json(p: f64, channel: f64, n: usize, rate: f64, trials: usize, seed: u64) -> Result<String> {
    check_n(n)?;
    let (law, d) = dsbs_law(p, channel)?;
    let spec = construct_sets(&law, n, 0.3, Mode::Rank { rate }, 1000, seed)?;
    let report = run_trials(&spec, &law, &d, &FrozenPolicy::Uniform, trials.clamp(1, 5000), seed, false)?;
    let op = law.operating_point(&d);
    Ok(json!({ "report": report, "target": op }).to_string())
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// Non-dominated `(R, D, Δ)` points for DSBS(`p`) under Hamming distortion.
#[wasm_bindgen]
pub fn frontier(p: f64, grid_res: usize) -> std::result::Result<String, JsError> {
    js(frontier_json(p, grid_res))
}

/// Bhattacharyya estimates and index roles for DSBS(`p`) with a BSC test channel.
#[wasm_bindgen]
pub fn spectrum(p: f64, channel: f64, n: usize, beta: f64, samples: usize, seed: u32) -> std::result::Result<String, JsError> {
    js(spectrum_json(p, channel, n, beta, samples, seed.into()))
}

/// Encoder/decoder trials at a requested rate.
#[wasm_bindgen]
pub fn simulate(p: f64, channel: f64, n: usize, rate: f64, trials: usize, seed: u32) -> std::result::Result<String, JsError> {
    js(simulate_json(p, channel, n, rate, trials, seed.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn frontier_has_zero_rate_point() {
        let v = parse(&frontier_json(0.1, 10).unwrap());
        assert!(v["points"].as_array().unwrap().iter().any(|p| p[0] == 0.0));
    }

    #[test]
    fn spectrum_lengths() {
        let v = parse(&spectrum_json(0.1, 0.11, 64, 0.3, 200, 1).unwrap());
        assert_eq!(v["z_cond"].as_array().unwrap().len(), 64);
        assert_eq!(v["roles"].as_array().unwrap().len(), 64);
    }

    #[test]
    fn simulate_reports_rate() {
        let v = parse(&simulate_json(0.1, 0.11, 128, 0.6, 50, 2).unwrap());
        assert_eq!(v["report"]["trials"], 50);
        assert!(simulate_json(0.1, 0.11, 1 << 14, 0.6, 50, 2).is_err());
        assert!(simulate_json(1.5, 0.11, 64, 0.6, 50, 2).is_err());
    }
}
