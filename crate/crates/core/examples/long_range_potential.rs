//! Two packets in the 2D long-range well `-30/(0.05|x|² + 1)`: the part that
//! escapes is filtered, the part that is bound must stay. Compared against a
//! complex absorbing potential and a much larger periodic box.
//!
//! ```text
//! cargo run --release --example long_range_potential -- 20
//! ```

use tdpsf::experiments::{run_experiment, ExperimentPreset, PresetName, Scale};

fn main() -> tdpsf::Result<()> {
    let mut preset = ExperimentPreset::new(PresetName::Longrange2d, Scale::Ci);
    if let Some(t) = std::env::args().nth(1).and_then(|s| s.parse::<f64>().ok()) {
        preset.tmax = t;
        preset.plateau_window = [preset.plateau_window[0].min(t / 2.0), t];
    }
    let out = run_experiment(&preset)?;
    for name in ["M_of_t_tdpsf", "M_of_t_absorbing_potential", "relative_error_tdpsf", "relative_error_absorbing_potential"] {
        if let Some(s) = out.series(name) {
            let step = (s.points.len() / 8).max(1);
            let row: Vec<String> = s.points.iter().step_by(step).map(|(t, y)| format!("{t:.0}:{y:.4}")).collect();
            println!("{name:36} {}", row.join(" "));
        }
    }
    for (k, v) in &out.scalars {
        println!("{k} = {v:.4}");
    }
    Ok(())
}
