//! Outgoing / incoming / ambiguous map of the buffer framelets for the
//! free-pulse geometry, plus the ball trajectory of a few framelets.
//!
//! ```text
//! cargo run --release --example classify_framelets
//! ```

use std::collections::BTreeMap;

use tdpsf::classify::{build_filter_sets, classify_framelet, spread_radius};
use tdpsf::experiments::{ExperimentPreset, PresetName, Scale};
use tdpsf::frame::FrameletIndex;

fn main() -> tdpsf::Result<()> {
    let preset = ExperimentPreset::new(PresetName::Freewave1d, Scale::Ci);
    let cfg = preset.tdpsf_config(10.0)?;
    let c = &cfg.classifier;
    let sets = build_filter_sets(c, &cfg.grid)?;
    println!(
        "{} buffer positions, {} framelets classified: {} outgoing, {} ambiguous",
        sets.buffer.len(),
        sets.classified,
        sets.out.len(),
        sets.amb.len()
    );
    println!("R_0 = {:.3} at b = 0", spread_radius(&[0, 0], 0.0, c)?);

    // Smallest outgoing frequency index at each right-buffer position.
    let lat = c.frame.lattice(&cfg.grid)?;
    let mut threshold = BTreeMap::new();
    for (a, bin) in sets.out.iter() {
        if a[0] > 0 {
            let b = lat.bin_to_b(bin);
            let e = threshold.entry(a[0]).or_insert(b);
            *e = (*e).min(b);
        }
    }
    for (a, b) in threshold.iter().step_by(4) {
        println!("x = {:6.1}: outgoing for b ≥ {b:3} (k ≥ {:.2})", *a as f64 * c.frame.xs, *b as f64 * c.frame.ks);
    }

    for (a, b) in [(240, 12), (240, 2), (245, 0), (225, -10)] {
        let v = classify_framelet(&FrameletIndex::new_1d(a, b), c)?;
        println!(
            "a = {a}, b = {b:3}: {:9} exit {:?}, returns {}",
            v.verdict.as_str(),
            v.first_exit_time,
            v.returns_to_interior
        );
    }
    Ok(())
}
