//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tdpsf::classify::{ClassifierConfig, NormChoice};
use tdpsf::frame::FrameParams;
use tdpsf::lattice::{dft_forward, dft_inverse, Field, GridSpec, SpectralPlan};
use tdpsf::propagate::velocity_factor;

const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut k = fc * WK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let s = f(c - h * XK[i]) + f(c + h * XK[i]);
        k += WK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64, depth: u32) -> f64 {
    let (v, err) = gk15(f, lo, hi);
    if err <= tol * v.abs().max(1e-300) || depth == 0 {
        return v;
    }
    let m = 0.5 * (lo + hi);
    adaptive(f, lo, m, tol, depth - 1) + adaptive(f, m, hi, tol, depth - 1)
}

/// ∫_x^∞ t^{a-1} e^{-t} dt in the variable s = ln t.
pub fn oracle_upper(a: f64, x: f64) -> f64 {
    let f = |s: f64| (a * s - s.exp()).exp();
    let top = (x + 80.0).ln().max(x.ln() + 1.0);
    adaptive(&f, x.ln(), top, 1e-14, 40)
}

pub fn gamma_grid() -> Vec<(f64, f64)> {
    let orders: Vec<f64> = (0..=15).map(|i| 0.25 * 16f64.powf(i as f64 / 15.0)).collect();
    let xs: Vec<f64> = (0..=40).map(|i| 1e-8 * (50.0f64 / 1e-8).powf(i as f64 / 40.0)).collect();
    orders.iter().flat_map(|&a| xs.iter().map(move |&x| (a, x))).collect()
}

pub fn framelet(grid: &GridSpec, p: &FrameParams, a: i32, b: i32) -> Field {
    let (x0, k0, s) = (a as f64 * p.xs, b as f64 * p.ks, p.sigma);
    Field::from_fn(*grid, |x| Complex64::from_polar((-(x[0] - x0).powi(2) / (2.0 * s * s)).exp(), k0 * x[0]))
}

pub fn derivative(f: &Field) -> Field {
    let plan = SpectralPlan::new(*f.grid());
    let mut s = plan.forward(f);
    let k = f.grid().wavenumbers();
    s.values_mut().iter_mut().zip(&k).for_each(|(v, k)| *v *= Complex64::new(0.0, *k));
    plan.inverse(&s)
}

/// `(outside, total)` squared norms, with the gradient term for H¹.
pub fn split_mass(f: &Field, center: f64, radius: f64, norm: NormChoice) -> (f64, f64) {
    let grid = f.grid();
    let d = (norm == NormChoice::H1).then(|| derivative(f));
    let mut out = 0.0;
    let mut total = 0.0;
    for i in 0..grid.len() {
        let mut w = f.values()[i].norm_sqr();
        if let Some(d) = &d {
            w += d.values()[i].norm_sqr();
        }
        total += w;
        if (grid.coordinate(i) - center).abs() > radius {
            out += w;
        }
    }
    (out * grid.dx(), total * grid.dx())
}

pub fn classifier_config(grid: &GridSpec, sigma: f64, lb: f64, wb: f64, norm: NormChoice) -> ClassifierConfig {
    let frame = FrameParams::on_grid(grid, sigma, 4, 16).unwrap();
    ClassifierConfig {
        dim: 1,
        epsilon: 1e-6,
        lb,
        wb,
        tstep: 2e-3,
        tmax: 50.0,
        norm,
        nu: velocity_factor(),
        frame,
        kmax: 25.0,
        kmin: ClassifierConfig::default_kmin(1e-6, sigma),
        dx: grid.dx(),
    }
}

pub fn band_limited(grid: &GridSpec, kband: f64, rng: &mut ChaCha8Rng) -> Field {
    let mut spec = dft_forward(&Field::zeros(*grid));
    let m = grid.points_per_axis();
    let k = grid.wavenumbers();
    for (idx, v) in spec.values_mut().iter_mut().enumerate() {
        let kk = if grid.dim() == 1 { k[idx].abs() } else { k[idx / m].abs().max(k[idx % m].abs()) };
        if kk <= kband {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    dft_inverse(&spec)
}
