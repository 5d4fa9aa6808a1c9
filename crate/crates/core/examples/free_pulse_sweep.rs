//! Free Gaussian pulses `e^{-x²/4} e^{ivx}` leaving `[-102.4, 102.4]`: interior
//! error on `[-88, 88]` for the TDPSF and for a complex absorbing potential.
//!
//! ```text
//! cargo run --release --example free_pulse_sweep -- 4 8 12 16 20
//! ```

use tdpsf::experiments::{run_experiment, Baseline, ExperimentPreset, PresetName, Scale};

fn main() -> tdpsf::Result<()> {
    let mut preset = ExperimentPreset::new(PresetName::Freewave1d, Scale::Ci);
    let v: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    preset.velocities = if v.is_empty() { vec![4.0, 8.0, 12.0, 16.0, 20.0] } else { v };
    let out = run_experiment(&preset)?;
    println!("{:>5} {:>12} {:>12}  tdpsf flag", "v", "tdpsf", "absorber");
    for &v in &preset.velocities {
        let find = |b: Baseline| out.runs.iter().find(|r| r.baseline == b && r.velocity == Some(v));
        let (Some(t), Some(a)) = (find(Baseline::Tdpsf), find(Baseline::AbsorbingPotential)) else { continue };
        let flag = match t.report.as_ref().and_then(|r| r.first_exceedance) {
            Some(x) => format!("ambiguous mass {:.1e} at t = {:.2}", x.value, x.time),
            None => "-".into(),
        };
        println!("{v:5} {:12.3e} {:12.3e}  {flag}", t.error.unwrap_or(f64::NAN), a.error.unwrap_or(f64::NAN));
    }
    Ok(())
}
