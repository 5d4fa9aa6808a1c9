//! Outgoing / incoming / ambiguous classification of framelets near the
//! boundary, from the free-flow ball `B(t)` of radius `R_b(t)` around
//! `a·xs + ν·b·ks·t`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{FrameParams, FrameletIndex, FrameletSet};
use crate::gamma::inverse_upper_incomplete_gamma;
use crate::lattice::GridSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormChoice {
    L2,
    #[default]
    H1,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub dim: usize,
    pub epsilon: f64,
    pub lb: f64,
    pub wb: f64,
    pub tstep: f64,
    pub tmax: f64,
    pub norm: NormChoice,
    pub nu: f64,
    pub frame: FrameParams,
    pub kmax: f64,
    pub kmin: f64,
    /// Grid spacing; bounds the time sampling of the ball test.
    pub dx: f64,
}

impl ClassifierConfig {
    /// All violated constraints, each with its numbers.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.dim != 1 && self.dim != 2 {
            p.push(format!("dimension {} is not 1 or 2", self.dim));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            p.push(format!("epsilon = {} must lie in (0, 1)", self.epsilon));
        }
        if !(self.lb > 0.0) {
            p.push(format!("Lb = {} must be positive", self.lb));
        }
        if !(self.wb > 0.0) {
            p.push(format!("wb = {} must be positive", self.wb));
        }
        if !(self.tstep > 0.0) {
            p.push(format!("Tstep = {} must be positive", self.tstep));
        } else if self.kmax > 0.0 && self.nu > 0.0 {
            let limit = self.wb / (3.0 * self.kmax * self.nu);
            if self.tstep > limit * (1.0 + 1e-12) {
                p.push(format!(
                    "Tstep = {} exceeds wb/(3·kmax·ν) = {}/(3·{}·{}) = {limit}",
                    self.tstep, self.wb, self.kmax, self.nu
                ));
            }
        }
        if !(self.tmax >= self.tstep) {
            p.push(format!("Tmax = {} is below Tstep = {}", self.tmax, self.tstep));
        }
        if !(self.kmax > 0.0) {
            p.push(format!("kmax = {} must be positive", self.kmax));
        }
        if !(self.kmin > 0.0) {
            p.push(format!("kmin = {} must be positive", self.kmin));
        } else if self.epsilon > 0.0 && self.epsilon < 1.0 {
            let need = self.epsilon.ln().abs() / self.kmin;
            if self.frame.sigma < need * (1.0 - 1e-12) {
                p.push(format!(
                    "sigma = {} is below |ln ε|/kmin = {need} (ε = {}, kmin = {})",
                    self.frame.sigma, self.epsilon, self.kmin
                ));
            }
        }
        if !(self.nu > 0.0) {
            p.push(format!("velocity factor ν = {} must be positive", self.nu));
        }
        if !(self.dx > 0.0) {
            p.push(format!("dx = {} must be positive", self.dx));
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn outer(&self) -> f64 {
        self.lb + self.wb
    }

    /// Default `kmin = |ln ε|/σ`, the smallest frequency the buffer can filter.
    pub fn default_kmin(epsilon: f64, sigma: f64) -> f64 {
        epsilon.ln().abs() / sigma
    }
}

fn sphere_area(dim: usize) -> f64 {
    if dim == 1 {
        2.0
    } else {
        2.0 * PI
    }
}

fn gamma_root(a: f64, y: f64) -> Result<f64> {
    inverse_upper_incomplete_gamma(a, y).map(f64::sqrt).map_err(|e| match e {
        Error::GammaDomain { a, y, gamma_a } => Error::config(format!(
            "tolerance too large for the dimension: Γ⁻¹({a}, {y:e}) needs an argument below Γ({a}) = {gamma_a}"
        )),
        other => other,
    })
}

/// Time-independent factor `R_b(t)/s(t)`, with `s(t) = √(σ² + ν²t²/σ²)`.
pub fn radius_factor(kb: f64, cfg: &ClassifierConfig) -> Result<f64> {
    let n = cfg.dim as f64;
    let eps2 = cfg.epsilon * cfg.epsilon;
    let area = sphere_area(cfg.dim);
    let pin = PI.powf(n / 2.0);
    match cfg.norm {
        NormChoice::L2 => gamma_root(n / 2.0, 2.0 * eps2 * pin / area),
        NormChoice::H1 => {
            let first = gamma_root(n / 2.0, eps2 * pin / (2.0 * area * (1.0 + kb * kb)))?;
            let second = gamma_root((n + 2.0) / 2.0, eps2 * cfg.frame.sigma.powi(2) * pin / (2.0 * area))?;
            Ok(first.max(second))
        }
    }
}

fn spread_width(t: f64, cfg: &ClassifierConfig) -> f64 {
    let s = cfg.frame.sigma;
    (s * s + (cfg.nu * t / s).powi(2)).sqrt()
}

/// `R_b(t)` for a framelet of frequency index `b`.
pub fn spread_radius(b: &[i32; 2], t: f64, cfg: &ClassifierConfig) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    Ok(spread_width(t, cfg) * radius_factor(frequency_norm(b, cfg), cfg)?)
}

fn frequency_norm(b: &[i32; 2], cfg: &ClassifierConfig) -> f64 {
    let ks = cfg.frame.ks;
    b[..cfg.dim].iter().map(|v| (*v as f64 * ks).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verdict {
    Outgoing,
    Incoming,
    Ambiguous,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Outgoing => "outgoing",
            Verdict::Incoming => "incoming",
            Verdict::Ambiguous => "ambiguous",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    /// First sampled time in `[0, Tstep]` at which `B(t)` leaves FBox.
    pub first_exit_time: Option<f64>,
    /// Whether `B(t)` meets IBox for some `t ∈ [0, Tmax]`.
    pub returns_to_interior: bool,
}

/// Ball trajectory of one framelet.
struct Ball<'a> {
    cfg: &'a ClassifierConfig,
    center: [f64; 2],
    velocity: [f64; 2],
    factor: f64,
    rate: f64,
    min_step: f64,
}

impl<'a> Ball<'a> {
    fn new(idx: &FrameletIndex, cfg: &'a ClassifierConfig) -> Result<Self> {
        let (xs, ks) = (cfg.frame.xs, cfg.frame.ks);
        let d = cfg.dim;
        let mut center = [0.0; 2];
        let mut velocity = [0.0; 2];
        for i in 0..d {
            center[i] = idx.a[i] as f64 * xs;
            velocity[i] = cfg.nu * idx.b[i] as f64 * ks;
        }
        let factor = radius_factor(frequency_norm(&idx.b, cfg), cfg)?;
        let speed = velocity.iter().map(|v| v * v).sum::<f64>().sqrt();
        // |d/dt (distance - R)| ≤ speed + factor·ν/σ.
        let rate = speed + factor * cfg.nu / cfg.frame.sigma;
        let kmax = cfg.kmax.max(speed / cfg.nu);
        let min_step = (cfg.tstep / 20.0).min(cfg.dx / (cfg.nu * kmax));
        Ok(Self { cfg, center, velocity, factor, rate, min_step })
    }

    fn at(&self, t: f64) -> ([f64; 2], f64) {
        let c = [self.center[0] + self.velocity[0] * t, self.center[1] + self.velocity[1] * t];
        (c, self.factor * spread_width(t, self.cfg))
    }

    /// Signed gap between `B(t)` and IBox (negative when they meet).
    fn interior_gap(&self, t: f64) -> f64 {
        let (c, r) = self.at(t);
        let lb = self.cfg.lb;
        let d2: f64 = c[..self.cfg.dim].iter().map(|x| (x.abs() - lb).max(0.0).powi(2)).sum();
        d2.sqrt() - r
    }

    /// Signed margin of `B(t)` inside FBox (negative when it sticks out).
    fn outer_margin(&self, t: f64) -> f64 {
        let (c, r) = self.at(t);
        let lf = self.cfg.outer();
        c[..self.cfg.dim].iter().map(|x| lf - x.abs()).fold(f64::INFINITY, f64::min) - r
    }

    /// First sampled time in `[0, horizon]` where `gap(t) ≤ 0`. Steps are as
    /// long as the Lipschitz bound on `gap` allows, never shorter than `min_step`.
    fn first_hit(&self, horizon: f64, gap: impl Fn(f64) -> f64) -> Option<f64> {
        let mut t = 0.0;
        loop {
            let g = gap(t);
            if g <= 0.0 {
                return Some(t);
            }
            if t >= horizon {
                return None;
            }
            t = (t + (g / self.rate).max(self.min_step)).min(horizon);
        }
    }
}

/// Verdict for one framelet.
pub fn classify_framelet(idx: &FrameletIndex, cfg: &ClassifierConfig) -> Result<Classification> {
    let ball = Ball::new(idx, cfg)?;
    let inside = ball.center[..cfg.dim].iter().all(|x| x.abs() <= cfg.lb * (1.0 + 1e-12));
    let returns = ball.first_hit(cfg.tmax, |t| ball.interior_gap(t)).is_some();
    let exit = ball.first_hit(cfg.tstep, |t| ball.outer_margin(t));
    let verdict = if inside {
        Verdict::Incoming
    } else if !returns {
        Verdict::Outgoing
    } else if exit.is_none() {
        Verdict::Incoming
    } else {
        Verdict::Ambiguous
    };
    Ok(Classification { verdict, first_exit_time: exit, returns_to_interior: returns })
}

/// Outgoing and ambiguous framelets over the buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterSets {
    pub out: FrameletSet,
    pub amb: FrameletSet,
    /// Buffer positions, `a·xs ∈ FBox∖IBox`, in lattice order.
    pub buffer: Vec<[i32; 2]>,
    /// Number of classified framelets.
    pub classified: usize,
}

/// Buffer positions of the frame lattice on `grid`.
pub fn buffer_positions(cfg: &ClassifierConfig, grid: &GridSpec) -> Result<Vec<[i32; 2]>> {
    let lat = cfg.frame.lattice(grid)?;
    let xs = cfg.frame.xs;
    let lf = cfg.outer() * (1.0 + 1e-12);
    let lb = cfg.lb * (1.0 + 1e-12);
    let r = lat.position_range();
    let all: Vec<[i32; 2]> = if cfg.dim == 1 {
        r.map(|a| [a, 0]).collect()
    } else {
        r.clone().flat_map(|a1| r.clone().map(move |a2| [a1, a2])).collect()
    };
    let out: Vec<_> = all
        .into_iter()
        .filter(|a| {
            let m = a[..cfg.dim].iter().map(|v| (*v as f64 * xs).abs()).fold(0.0, f64::max);
            m > lb && m <= lf
        })
        .collect();
    if out.is_empty() {
        return Err(Error::config(format!(
            "buffer [{}, {}] holds no frame positions (xs = {xs})",
            cfg.lb,
            cfg.outer()
        )));
    }
    Ok(out)
}

/// Frequency indices with `|b·ks|∞ ≤ kmax` among the `T` bins per axis.
pub fn admissible_frequencies(cfg: &ClassifierConfig, grid: &GridSpec) -> Result<Vec<[i32; 2]>> {
    let lat = cfg.frame.lattice(grid)?;
    let half = (lat.t_pts / 2) as i32;
    let bmax = (cfg.kmax / cfg.frame.ks * (1.0 + 1e-12)).floor() as i32;
    let r: Vec<i32> = (-half..half).filter(|b| b.abs() <= bmax).collect();
    Ok(if cfg.dim == 1 {
        r.iter().map(|b| [*b, 0]).collect()
    } else {
        r.iter().flat_map(|b1| r.iter().map(move |b2| [*b1, *b2])).collect()
    })
}

/// Classify every buffer framelet with `|b·ks|∞ ≤ kmax`.
pub fn build_filter_sets(cfg: &ClassifierConfig, grid: &GridSpec) -> Result<FilterSets> {
    cfg.validate()?;
    if (cfg.outer() - grid.half_width()).abs() > 1e-9 * grid.half_width() && cfg.outer() > grid.half_width() {
        return Err(Error::config(format!(
            "Lb + wb = {} exceeds the grid half width {}",
            cfg.outer(),
            grid.half_width()
        )));
    }
    let lat = cfg.frame.lattice(grid)?;
    let buffer = buffer_positions(cfg, grid)?;
    let freqs = admissible_frequencies(cfg, grid)?;
    let verdicts: Vec<Vec<(usize, Verdict)>> = buffer
        .par_iter()
        .map(|a| {
            freqs
                .iter()
                .map(|b| {
                    let bin = if cfg.dim == 1 {
                        lat.b_to_bin(b[0])
                    } else {
                        lat.b_to_bin(b[0]) * lat.t_pts + lat.b_to_bin(b[1])
                    };
                    classify_framelet(&FrameletIndex { a: *a, b: *b }, cfg).map(|c| (bin, c.verdict))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = FrameletSet::new();
    let mut amb = FrameletSet::new();
    for (a, list) in buffer.iter().zip(&verdicts) {
        for (bin, v) in list {
            match v {
                Verdict::Outgoing => out.insert_bin(*a, *bin),
                Verdict::Ambiguous => amb.insert_bin(*a, *bin),
                Verdict::Incoming => {}
            }
        }
    }
    Ok(FilterSets { out, amb, classified: buffer.len() * freqs.len(), buffer })
}

/// CSV of the classification map: `a…, b…, verdict`.
pub fn classification_csv(cfg: &ClassifierConfig, grid: &GridSpec) -> Result<String> {
    let buffer = buffer_positions(cfg, grid)?;
    let freqs = admissible_frequencies(cfg, grid)?;
    let mut s = String::from(if cfg.dim == 1 { "a,b,verdict\n" } else { "a1,a2,b1,b2,verdict\n" });
    for a in &buffer {
        for b in &freqs {
            let v = classify_framelet(&FrameletIndex { a: *a, b: *b }, cfg)?.verdict;
            if cfg.dim == 1 {
                s.push_str(&format!("{},{},{}\n", a[0], b[0], v.as_str()));
            } else {
                s.push_str(&format!("{},{},{},{},{}\n", a[0], a[1], b[0], b[1], v.as_str()));
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    fn paper_1d(sigma: f64, norm: NormChoice) -> (ClassifierConfig, GridSpec) {
        let grid = make_grid(1, 102.4, 2048).unwrap();
        let frame = FrameParams::on_grid(&grid, sigma, 4, 16).unwrap();
        let cfg = ClassifierConfig {
            dim: 1,
            epsilon: 1e-6,
            lb: 88.0,
            wb: 14.4,
            tstep: 2e-3,
            tmax: 20.0,
            norm,
            nu: 2.0,
            frame,
            kmax: grid.nyquist(),
            kmin: ClassifierConfig::default_kmin(1e-6, sigma),
            dx: grid.dx(),
        };
        (cfg, grid)
    }

    #[test]
    fn l2_radius_matches_error_function_tail() {
        // For N = 1 the L² radius solves erfc(R/σ) = ε².
        let (cfg, _) = paper_1d(2.0, NormChoice::L2);
        let r0 = spread_radius(&[0, 0], 0.0, &cfg).unwrap();
        let x = r0 / 2.0;
        let erfc = crate::gamma::upper_incomplete_gamma(0.5, x * x).unwrap() / PI.sqrt();
        assert!((erfc - 1e-12).abs() < 1e-22);
        assert!((r0 - 2.0 * 5.042_029).abs() < 1e-5);
    }

    #[test]
    fn radius_growth_factor() {
        let (cfg, _) = paper_1d(2.0, NormChoice::L2);
        let r0 = spread_radius(&[0, 0], 0.0, &cfg).unwrap();
        for t in [0.5, 1.0, 7.0] {
            let r = spread_radius(&[0, 0], t, &cfg).unwrap();
            let expect = (1.0 + (cfg.nu * t).powi(2) / 16.0).sqrt();
            assert!((r / r0 - expect).abs() < 1e-12);
        }
        assert!(spread_radius(&[0, 0], -1.0, &cfg).is_err());
    }

    #[test]
    fn h1_radius_grows_with_frequency_and_dominates_l2() {
        let (cfg, _) = paper_1d(1.0, NormChoice::H1);
        let (l2, _) = paper_1d(1.0, NormChoice::L2);
        let mut last = 0.0;
        for b in [0, 1, 4, 16, 31] {
            let r = spread_radius(&[b, 0], 0.0, &cfg).unwrap();
            assert!(r >= last);
            assert!(r >= spread_radius(&[b, 0], 0.0, &l2).unwrap());
            last = r;
        }
    }

    #[test]
    fn radius_shrinks_as_tolerance_grows() {
        let (mut cfg, _) = paper_1d(1.0, NormChoice::L2);
        let small = spread_radius(&[0, 0], 1.0, &cfg).unwrap();
        cfg.epsilon = 1e-3;
        assert!(spread_radius(&[0, 0], 1.0, &cfg).unwrap() < small);
    }

    #[test]
    fn oversized_tolerance_is_a_configuration_error() {
        // ε²σ² above 2 leaves the domain of the H¹ gradient term.
        let (mut cfg, _) = paper_1d(2.0, NormChoice::H1);
        cfg.epsilon = 0.9;
        assert!(matches!(spread_radius(&[0, 0], 0.0, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn interior_framelets_are_incoming() {
        let (cfg, _) = paper_1d(1.0, NormChoice::H1);
        for b in [-3, 0, 2] {
            let c = classify_framelet(&FrameletIndex::new_1d(0, b), &cfg).unwrap();
            assert_eq!(c.verdict, Verdict::Incoming);
        }
    }

    #[test]
    fn stationary_buffer_framelet_is_ambiguous() {
        let (cfg, _) = paper_1d(2.0, NormChoice::H1);
        let a = (95.2 / cfg.frame.xs).round() as i32;
        let c = classify_framelet(&FrameletIndex::new_1d(a, 0), &cfg).unwrap();
        assert_eq!(c.verdict, Verdict::Ambiguous);
        assert!(c.returns_to_interior);
    }

    #[test]
    fn fast_outward_framelet_is_outgoing() {
        let (cfg, _) = paper_1d(1.0, NormChoice::L2);
        let a = (96.0 / cfg.frame.xs).round() as i32;
        let b = (2.0 * cfg.epsilon.ln().abs() / cfg.frame.sigma / cfg.frame.ks).ceil() as i32;
        let c = classify_framelet(&FrameletIndex::new_1d(a, b), &cfg).unwrap();
        assert_eq!(c.verdict, Verdict::Outgoing);
        let c = classify_framelet(&FrameletIndex::new_1d(-a, -b), &cfg).unwrap();
        assert_eq!(c.verdict, Verdict::Outgoing);
    }

    #[test]
    fn empty_buffer_rejected() {
        let (mut cfg, grid) = paper_1d(1.0, NormChoice::L2);
        cfg.lb = 102.1;
        cfg.wb = 0.2;
        cfg.tstep = 1e-6;
        assert!(build_filter_sets(&cfg, &grid).is_err());
    }

    #[test]
    fn config_problems_are_reported_individually() {
        let (mut cfg, _) = paper_1d(1.0, NormChoice::L2);
        assert!(cfg.validate().is_ok());
        cfg.tstep = 1.0;
        cfg.wb = 0.0;
        cfg.epsilon = 2.0;
        match cfg.validate() {
            Err(Error::Config(p)) => assert!(p.len() >= 2, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }
}
