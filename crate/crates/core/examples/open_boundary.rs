//! Hand-built TDPSF run: a Gaussian pulse leaves a 1D box through the filter,
//! and the interior is compared with the whole-line solution while it does.
//!
//! ```text
//! cargo run --release --example open_boundary -- 8
//! ```

use tdpsf::classify::{ClassifierConfig, NormChoice};
use tdpsf::driver::{check_config, run_tdpsf_observed, AmbiguousPolicy, TdpsfConfig, Termination};
use tdpsf::experiments::{error_on_box, free_gaussian_reference};
use tdpsf::frame::{DualOptions, FrameParams};
use tdpsf::lattice::{make_grid, SubBox};
use tdpsf::propagate::{velocity_factor, NonlinearityModel, StepperConfig};

fn main() -> tdpsf::Result<()> {
    let k0: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8.0);
    let grid = make_grid(1, 51.2, 512)?;
    let frame = FrameParams::on_grid(&grid, 1.0, 4, 16)?;
    let (lb, wb) = (36.0, 15.2);
    let nu = velocity_factor();
    let tmax = 2.5 * (lb + wb) / (nu * k0);
    let tstep = 0.01;
    let cfg = TdpsfConfig {
        grid,
        frame,
        classifier: ClassifierConfig {
            dim: 1,
            epsilon: 1e-6,
            lb,
            wb,
            tstep,
            tmax,
            norm: NormChoice::H1,
            nu,
            frame,
            kmax: wb / (3.0 * nu * tstep),
            kmin: ClassifierConfig::default_kmin(1e-6, 1.0),
            dx: grid.dx(),
        },
        stepper: StepperConfig::new(0.0025)?,
        model: NonlinearityModel::Zero,
        dual: DualOptions::default(),
        policy: AmbiguousPolicy::Record,
        disable_filter: false,
    };
    let engine = check_config(cfg)?;
    let sets = engine.filter_sets();
    println!("{} outgoing and {} ambiguous framelets; {} filter events", sets.out.len(), sets.amb.len(), engine.events());

    let width = 2.0;
    let psi0 = free_gaussian_reference([0.0, 0.0], [k0, 0.0], width, 0.0, &grid)?;
    let bx = SubBox::cube(1, lb);
    let norm0 = psi0.norm();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    let (_, report) = run_tdpsf_observed(&engine, &psi0, |t, psi| {
        n += 1;
        let exact = free_gaussian_reference([0.0, 0.0], [k0, 0.0], width, t, &grid).expect("reference");
        let e = error_on_box(psi, &exact, &bx, norm0).expect("error");
        worst = worst.max(e);
        if n % (engine.events() / 10).max(1) == 0 {
            println!("t = {t:6.3}: interior error {e:.2e}, norm left {:.2e}", psi.norm() / norm0);
        }
    })?;
    println!("sup interior error {worst:.2e}, max ambiguous mass {:.2e}", report.max_ambiguous_mass());
    match (report.termination, report.first_exceedance) {
        (Termination::Completed, None) => println!("completed without flags in {:.2} s", report.wall_time),
        (_, Some(x)) => println!("flagged at t = {:.3} (mass {:.2e} > ε = {:.0e})", x.time, x.value, x.epsilon),
        (t, None) => println!("{t:?}"),
    }
    Ok(())
}
