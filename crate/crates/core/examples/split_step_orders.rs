//! Strang splitting convergence under δt halving, for the focusing cubic
//! equation (moving soliton) and a static potential.
//!
//! ```text
//! cargo run --release --example split_step_orders
//! ```

use num_complex::Complex64;

use tdpsf::experiments::{soliton_coupling, soliton_reference};
use tdpsf::lattice::{make_grid, Field};
use tdpsf::propagate::{split_step_evolve, NonlinearityModel, StepperConfig};

fn run(f: &Field, model: &NonlinearityModel, dt: f64, t: f64) -> tdpsf::Result<Field> {
    split_step_evolve(f, model, &StepperConfig::new(dt)?, t)
}

fn main() -> tdpsf::Result<()> {
    let grid = make_grid(1, 25.6, 512)?;
    let cases = [
        ("soliton, g = -2ν", soliton_reference(1.5, 0.0, &grid), NonlinearityModel::CubicFocusing { g: soliton_coupling() }),
        (
            "static well",
            Field::from_fn(grid, |x| Complex64::from_polar((-(x[0] - 1.0).powi(2)).exp(), 2.0 * x[0])),
            NonlinearityModel::static_potential(&grid, |x| 0.5 * x[0] * x[0] / (1.0 + 0.01 * x[0] * x[0])),
        ),
    ];
    for (name, f, model) in &cases {
        println!("{name}");
        let t = 1.0;
        let dts = [0.04, 0.02, 0.01, 0.005];
        let sols: Vec<Field> = dts.iter().map(|dt| run(f, model, *dt, t)).collect::<tdpsf::Result<_>>()?;
        for i in 0..dts.len() - 2 {
            let d1 = sols[i].sub(&sols[i + 1])?.norm();
            let d2 = sols[i + 1].sub(&sols[i + 2])?.norm();
            println!("  global, δt = {:.3}: order {:.3}", dts[i], (d1 / d2).log2());
        }
        let one_step = |h: f64| -> tdpsf::Result<f64> {
            Ok(run(f, model, h, h)?.sub(&run(f, model, h / 64.0, h)?)?.norm())
        };
        let (e1, e2) = (one_step(0.05)?, one_step(0.025)?);
        println!("  one step, h = 0.05: error {e1:.2e}, order {:.3}", (e1 / e2).log2());
    }

    let exact = soliton_reference(1.5, 1.0, &grid);
    let approx = run(&cases[0].1, &cases[0].2, 1e-3, 1.0)?;
    println!("soliton at t = 1 against the exact solution: {:.2e}", approx.sub(&exact)?.norm());
    Ok(())
}
