//! Convergence orders of the Strang split-step propagator under δt halving.

use num_complex::Complex64;

use tdpsf::experiments::{soliton_coupling, soliton_reference};
use tdpsf::lattice::{make_grid, Field, GridSpec};
use tdpsf::propagate::{NonlinearityModel, Propagator, StepperConfig};

fn evolve(f: &Field, model: &NonlinearityModel, dt: f64, steps: usize) -> Field {
    let prop = Propagator::new(*f.grid(), model.clone(), StepperConfig::new(dt).unwrap()).unwrap();
    let mut out = f.clone();
    prop.evolve_field(&mut out, 0.0, steps).unwrap();
    out
}

/// `log2(‖u(h) - u(h/2)‖ / ‖u(h/2) - u(h/4)‖)` over a fixed interval.
fn richardson_order(f: &Field, model: &NonlinearityModel, h: f64, steps: usize) -> f64 {
    let u1 = evolve(f, model, h, steps);
    let u2 = evolve(f, model, h / 2.0, 2 * steps);
    let u4 = evolve(f, model, h / 4.0, 4 * steps);
    let d1 = u1.sub(&u2).unwrap().norm();
    let d2 = u2.sub(&u4).unwrap().norm();
    (d1 / d2).log2()
}

/// Order of the one-step error `‖S(h)u - S(h/64)^64 u‖` as `h` halves.
fn local_order(f: &Field, model: &NonlinearityModel, h: f64) -> f64 {
    let err = |h: f64| evolve(f, model, h, 1).sub(&evolve(f, model, h / 64.0, 64)).unwrap().norm();
    (err(h) / err(h / 2.0)).log2()
}

fn moving_soliton(grid: &GridSpec) -> Field {
    soliton_reference(1.5, 0.0, grid)
}

fn harmonic(grid: &GridSpec) -> NonlinearityModel {
    NonlinearityModel::static_potential(grid, |x| 0.5 * x[0] * x[0] / (1.0 + 0.01 * x[0] * x[0]))
}

#[test]
fn nonlinear_global_order_is_two() {
    let grid = make_grid(1, 25.6, 512).unwrap();
    let model = NonlinearityModel::CubicFocusing { g: soliton_coupling() };
    let p = richardson_order(&moving_soliton(&grid), &model, 0.02, 50);
    assert!(p >= 1.9, "order {p}");
    assert!(p < 2.5, "order {p}");
}

#[test]
fn linear_one_step_order_is_three() {
    let grid = make_grid(1, 25.6, 512).unwrap();
    let f = Field::from_fn(grid, |x| Complex64::from_polar((-(x[0] - 1.0).powi(2)).exp(), 2.0 * x[0]));
    let p = local_order(&f, &harmonic(&grid), 0.05);
    assert!(p >= 2.9, "order {p}");
}

#[test]
fn linear_global_order_is_two() {
    let grid = make_grid(1, 25.6, 512).unwrap();
    let f = Field::from_fn(grid, |x| Complex64::from_polar((-(x[0] - 1.0).powi(2)).exp(), 2.0 * x[0]));
    let p = richardson_order(&f, &harmonic(&grid), 0.02, 50);
    assert!((1.9..2.5).contains(&p), "order {p}");
}

#[test]
fn nonlinear_one_step_order_is_three() {
    let grid = make_grid(1, 25.6, 512).unwrap();
    let model = NonlinearityModel::CubicFocusing { g: soliton_coupling() };
    let p = local_order(&moving_soliton(&grid), &model, 0.05);
    assert!(p >= 2.9, "order {p}");
}

#[test]
fn free_flow_is_exact_for_any_step() {
    let grid = make_grid(1, 25.6, 512).unwrap();
    let f = Field::from_fn(grid, |x| Complex64::from_polar((-(x[0] * x[0]) / 2.0).exp(), 3.0 * x[0]));
    let coarse = evolve(&f, &NonlinearityModel::Zero, 0.5, 2);
    let fine = evolve(&f, &NonlinearityModel::Zero, 0.001, 1000);
    assert!(coarse.sub(&fine).unwrap().norm() < 1e-12 * f.norm());
}
