//! A moving focusing-cubic soliton leaves `[-25.6, 25.6]`; `E(v)` is the sup
//! over time of the interior error against the exact soliton.
//!
//! ```text
//! cargo run --release --example soliton_filtering -- 2 4 8 15
//! ```

use tdpsf::experiments::{run_experiment, ExperimentPreset, PresetName, Scale};

fn main() -> tdpsf::Result<()> {
    let mut preset = ExperimentPreset::new(PresetName::Soliton1d, Scale::Ci);
    let v: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    preset.velocities = if v.is_empty() { vec![2.0, 4.0, 8.0, 15.0] } else { v };
    let out = run_experiment(&preset)?;
    let e = out.series("E_of_v").expect("E(v) series");
    for (run, (v, err)) in out.runs.iter().zip(&e.points) {
        let flag = run.report.as_ref().map(|r| r.max_ambiguous_mass()).unwrap_or(f64::NAN);
        println!("v = {v:4}: E = {err:.3e}, max ambiguous mass {flag:.2e}, {:.1} s", run.wall_time);
    }
    Ok(())
}
