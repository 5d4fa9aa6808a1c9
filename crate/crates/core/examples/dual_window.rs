//! Canonical dual window of a Gaussian frame: frame bounds, CG residual,
//! truncation radius and the exponential decay of γ.
//!
//! ```text
//! cargo run --release --example dual_window -- 1.0
//! ```

use tdpsf::experiments::measured_decay_rate;
use tdpsf::frame::{compute_dual_window_with, DualOptions, FrameParams};
use tdpsf::lattice::make_grid;

fn main() -> tdpsf::Result<()> {
    let sigma: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let grid = make_grid(1, 102.4, 2048)?;
    for q in [8, 16, 32] {
        let params = FrameParams::on_grid(&grid, sigma, 4, q)?;
        let dual = compute_dual_window_with(&params, &grid, DualOptions::default())?;
        let (a, b) = dual.frame_bounds();
        println!(
            "q = {q:2}: ks = {:.4}, bounds [{a:.5}, {b:.5}], residual {:.1e} ({} CG steps), L_eps = {:.1}, decay {:.3} (predicted {:.3})",
            params.ks,
            dual.residual,
            dual.iterations,
            dual.truncation_radius(),
            measured_decay_rate(&dual),
            params.dual_decay_rate(),
        );
    }

    // Envelope of γ for the default frame, every 2 units.
    let params = FrameParams::on_grid(&grid, sigma, 4, 16)?;
    let dual = compute_dual_window_with(&params, &grid, DualOptions::default())?;
    let full = dual.untruncated_1d();
    let c = full.len() / 2;
    let peak = full[c].abs();
    for x in (0..=20).step_by(2) {
        let j = (x as f64 / grid.dx()).round() as usize;
        let env = full[c + j..(c + j + 64).min(full.len())].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("|γ| near x = {x:2}: {:.2e}", env / peak);
    }
    Ok(())
}
