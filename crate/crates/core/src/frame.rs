//! Gaussian windowed Fourier frame on the periodic lattice: window, dual
//! window, localized analysis, synthesis and phase-space projection.
//!
//! A framelet `g_ab(x) = g(x - a·xs) e^{i b·ks·(x - a·xs)}` is tied to the
//! grid by requiring `xs = xs_pts·δx` and a modulation period
//! `T = 2π/ks = q·xs` that spans `T_pts = q·xs_pts` samples dividing `M`.
//! Coefficients are `c_ab = ⟨f, γ_ab⟩ = δx^N Σ f(x) γ(x - a·xs) e^{-i b·ks·(x - a·xs)}`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::{transform_nd, Field, GridSpec};

/// Physical frame parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameParams {
    pub sigma: f64,
    pub xs: f64,
    pub ks: f64,
    pub q: usize,
}

impl FrameParams {
    pub fn new(sigma: f64, xs: f64, ks: f64, q: usize) -> Result<Self> {
        let p = Self { sigma, xs, ks, q };
        p.validate()?;
        Ok(p)
    }

    /// Frame commensurate with `grid`: `xs` spans `xs_pts` samples and the
    /// modulation period spans `q·xs_pts` samples.
    pub fn on_grid(grid: &GridSpec, sigma: f64, xs_pts: usize, q: usize) -> Result<Self> {
        let xs = xs_pts as f64 * grid.dx();
        let ks = 2.0 * PI / (q as f64 * xs);
        let p = Self::new(sigma, xs, ks, q)?;
        p.lattice(grid)?;
        Ok(p)
    }

    /// Snap a requested `ks` to the grid: the modulation period becomes the
    /// divisor of `M` that is a multiple of `q` closest to `2π/(ks·δx)`
    /// samples, and `xs` follows from `xs·ks = 2π/q`.
    pub fn snapped(grid: &GridSpec, sigma: f64, ks_target: f64, q: usize) -> Result<Self> {
        if !(ks_target > 0.0) || q == 0 || q % 2 != 0 {
            return Err(Error::InvalidFrame(format!("ks = {ks_target}, q = {q}")));
        }
        let m = grid.points_per_axis();
        let want = 2.0 * PI / (ks_target * grid.dx());
        let best = (1..=m / q)
            .map(|xs_pts| xs_pts * q)
            .filter(|t| m % t == 0 && (m / (t / q)) % 2 == 0)
            .min_by(|a, b| {
                let da = (*a as f64 / want).ln().abs();
                let db = (*b as f64 / want).ln().abs();
                da.partial_cmp(&db).unwrap()
            })
            .ok_or_else(|| Error::InvalidFrame(format!("no period that is a multiple of q = {q} divides M = {m}")))?;
        Self::on_grid(grid, sigma, best / q, q)
    }

    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.sigma > 0.0) {
            problems.push(format!("sigma = {} must be positive", self.sigma));
        }
        if !(self.xs > 0.0 && self.ks > 0.0) {
            problems.push(format!("xs = {}, ks = {} must be positive", self.xs, self.ks));
        }
        if self.q == 0 || self.q % 2 != 0 {
            problems.push(format!("oversampling q = {} must be a positive even integer", self.q));
        } else {
            let target = 2.0 * PI / self.q as f64;
            if ((self.xs * self.ks) - target).abs() > 1e-10 * target {
                problems.push(format!("xs·ks = {} differs from 2π/q = {target}", self.xs * self.ks));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidFrame(problems.join("; ")))
        }
    }

    /// Decay rate `xs·q/(8πσ)` of the dual window.
    pub fn dual_decay_rate(&self) -> f64 {
        self.xs * self.q as f64 / (8.0 * PI * self.sigma)
    }

    /// Integer lattice data relative to `grid`.
    pub fn lattice(&self, grid: &GridSpec) -> Result<FrameLattice> {
        self.validate()?;
        let dx = grid.dx();
        let xs_real = self.xs / dx;
        let xs_pts = xs_real.round();
        if xs_pts < 1.0 || (xs_real - xs_pts).abs() > 1e-9 * xs_real {
            return Err(Error::InvalidFrame(format!("xs = {} is not a multiple of δx = {dx}", self.xs)));
        }
        let xs_pts = xs_pts as usize;
        let t_pts = xs_pts * self.q;
        let m = grid.points_per_axis();
        if m % t_pts != 0 {
            return Err(Error::InvalidFrame(format!(
                "modulation period {t_pts} samples does not divide M = {m}"
            )));
        }
        let positions = m / xs_pts;
        if positions % 2 != 0 {
            return Err(Error::InvalidFrame(format!("M/xs = {positions} position lattice must be even")));
        }
        Ok(FrameLattice { xs_pts, t_pts, positions })
    }
}

/// Frame lattice in samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameLattice {
    pub xs_pts: usize,
    /// Modulation period `2π/(ks·δx)`; also the number of frequency bins per axis.
    pub t_pts: usize,
    /// Number of distinct positions per axis, `M/xs_pts`.
    pub positions: usize,
}

impl FrameLattice {
    /// Frequency index of FFT bin `k`, in `[-T/2, T/2)`.
    pub fn bin_to_b(&self, k: usize) -> i32 {
        if k < self.t_pts / 2 {
            k as i32
        } else {
            k as i32 - self.t_pts as i32
        }
    }

    pub fn b_to_bin(&self, b: i32) -> usize {
        b.rem_euclid(self.t_pts as i32) as usize
    }

    /// Range of position indices, `[-P/2, P/2)`.
    pub fn position_range(&self) -> std::ops::Range<i32> {
        let half = (self.positions / 2) as i32;
        -half..half
    }
}

/// Phase-space lattice point. In one dimension the second components are 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameletIndex {
    pub a: [i32; 2],
    pub b: [i32; 2],
}

impl FrameletIndex {
    pub fn new_1d(a: i32, b: i32) -> Self {
        Self { a: [a, 0], b: [b, 0] }
    }

    pub fn new_2d(a: [i32; 2], b: [i32; 2]) -> Self {
        Self { a, b }
    }
}

/// Coefficients grouped by position: each position carries all `T^N` bins
/// in FFT order (row-major in two dimensions).
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet {
    dim: usize,
    lattice: FrameLattice,
    blocks: BTreeMap<[i32; 2], Vec<Complex64>>,
}

impl CoefficientSet {
    pub fn new(dim: usize, lattice: FrameLattice) -> Self {
        Self { dim, lattice, blocks: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lattice(&self) -> &FrameLattice {
        &self.lattice
    }

    pub fn bins_per_position(&self) -> usize {
        self.lattice.t_pts.pow(self.dim as u32)
    }

    pub fn positions(&self) -> impl Iterator<Item = &[i32; 2]> {
        self.blocks.keys()
    }

    pub fn block(&self, a: &[i32; 2]) -> Option<&[Complex64]> {
        self.blocks.get(a).map(|v| v.as_slice())
    }

    pub fn insert_block(&mut self, a: [i32; 2], coeffs: Vec<Complex64>) {
        assert_eq!(coeffs.len(), self.bins_per_position());
        self.blocks.insert(a, coeffs);
    }

    pub fn bin_of(&self, b: &[i32; 2]) -> usize {
        if self.dim == 1 {
            self.lattice.b_to_bin(b[0])
        } else {
            self.lattice.b_to_bin(b[0]) * self.lattice.t_pts + self.lattice.b_to_bin(b[1])
        }
    }

    pub fn b_of(&self, bin: usize) -> [i32; 2] {
        if self.dim == 1 {
            [self.lattice.bin_to_b(bin), 0]
        } else {
            let t = self.lattice.t_pts;
            [self.lattice.bin_to_b(bin / t), self.lattice.bin_to_b(bin % t)]
        }
    }

    pub fn get(&self, idx: &FrameletIndex) -> Option<Complex64> {
        let b = idx.b;
        let half = (self.lattice.t_pts / 2) as i32;
        if b[..self.dim].iter().any(|&v| v < -half || v >= half) {
            return None;
        }
        self.blocks.get(&idx.a).map(|blk| blk[self.bin_of(&b)])
    }

    /// Sets one coefficient, creating a zero block if needed.
    pub fn set(&mut self, idx: &FrameletIndex, value: Complex64) {
        let bin = self.bin_of(&idx.b);
        let n = self.bins_per_position();
        self.blocks.entry(idx.a).or_insert_with(|| vec![Complex64::new(0.0, 0.0); n])[bin] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (FrameletIndex, Complex64)> + '_ {
        self.blocks.iter().flat_map(move |(a, blk)| {
            blk.iter().enumerate().map(move |(bin, c)| (FrameletIndex { a: *a, b: self.b_of(bin) }, *c))
        })
    }

    pub fn len(&self) -> usize {
        self.blocks.len() * self.bins_per_position()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Plain `ℓ²` norm of the coefficients.
    pub fn l2(&self) -> f64 {
        self.blocks.values().flatten().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Zero every coefficient outside `keep` (Algorithm 2 step 3).
    pub fn restrict_to(&mut self, keep: &FrameletSet) {
        self.blocks.retain(|a, _| keep.positions.contains_key(a));
        for (a, blk) in self.blocks.iter_mut() {
            let bins = &keep.positions[a];
            let mut mask = vec![false; blk.len()];
            bins.iter().for_each(|&k| mask[k] = true);
            blk.iter_mut().zip(mask).filter(|(_, m)| !m).for_each(|(c, _)| *c = Complex64::new(0.0, 0.0));
        }
    }

    /// CSV with columns `a…, b…, re, im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.dim == 1 { "a,b,re,im\n" } else { "a1,a2,b1,b2,re,im\n" });
        for (idx, c) in self.iter() {
            if self.dim == 1 {
                out.push_str(&format!("{},{},{:.17e},{:.17e}\n", idx.a[0], idx.b[0], c.re, c.im));
            } else {
                out.push_str(&format!(
                    "{},{},{},{},{:.17e},{:.17e}\n",
                    idx.a[0], idx.a[1], idx.b[0], idx.b[1], c.re, c.im
                ));
            }
        }
        out
    }
}

/// A finite set of framelets, stored per position as sorted bin lists.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrameletSet {
    positions: BTreeMap<[i32; 2], Vec<usize>>,
}

impl FrameletSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn insert_bin(&mut self, a: [i32; 2], bin: usize) {
        let v = self.positions.entry(a).or_default();
        if let Err(pos) = v.binary_search(&bin) {
            v.insert(pos, bin);
        }
    }

    pub fn from_indices(lattice: &FrameLattice, dim: usize, idx: impl IntoIterator<Item = FrameletIndex>) -> Self {
        let probe = CoefficientSet::new(dim, *lattice);
        let mut s = Self::new();
        for i in idx {
            s.insert_bin(i.a, probe.bin_of(&i.b));
        }
        s
    }

    /// Every bin at each of `positions`.
    pub fn full(lattice: &FrameLattice, dim: usize, positions: &[[i32; 2]]) -> Self {
        let n = lattice.t_pts.pow(dim as u32);
        Self { positions: positions.iter().map(|a| (*a, (0..n).collect())).collect() }
    }

    pub fn len(&self) -> usize {
        self.positions.values().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &[i32; 2]> {
        self.positions.keys()
    }

    pub fn bins(&self, a: &[i32; 2]) -> &[usize] {
        self.positions.get(a).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn contains(&self, a: &[i32; 2], bin: usize) -> bool {
        self.positions.get(a).is_some_and(|v| v.binary_search(&bin).is_ok())
    }

    pub fn is_disjoint(&self, other: &FrameletSet) -> bool {
        self.positions.iter().all(|(a, bins)| bins.iter().all(|b| !other.contains(a, *b)))
    }

    pub fn is_subset(&self, other: &FrameletSet) -> bool {
        self.positions.iter().all(|(a, bins)| bins.iter().all(|b| other.contains(a, *b)))
    }

    pub fn position_set(&self) -> BTreeSet<[i32; 2]> {
        self.positions.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([i32; 2], usize)> + '_ {
        self.positions.iter().flat_map(|(a, v)| v.iter().map(move |b| (*a, *b)))
    }
}

fn window_1d(sigma: f64, x: f64) -> f64 {
    PI.powf(-0.25) * sigma.powf(-0.5) * (-x * x / (2.0 * sigma * sigma)).exp()
}

/// Unit-norm window `π^{-N/4} σ^{-N/2} e^{-|x|²/2σ²}` centered at the origin.
pub fn gaussian_window(params: &FrameParams, grid: &GridSpec) -> Result<Field> {
    if !(params.sigma >= 2.0 * grid.dx()) {
        return Err(Error::InvalidFrame(format!(
            "sigma = {} is below two grid spacings ({})",
            params.sigma,
            2.0 * grid.dx()
        )));
    }
    let s = params.sigma;
    Ok(Field::from_fn(*grid, |x| {
        let v = if grid.dim() == 1 { window_1d(s, x[0]) } else { window_1d(s, x[0]) * window_1d(s, x[1]) };
        Complex64::new(v, 0.0)
    }))
}

/// Periodized window at sample offsets `d - M/2`, `d ∈ [0, M)`.
fn periodic_window(params: &FrameParams, grid: &GridSpec) -> Vec<f64> {
    let m = grid.points_per_axis();
    let period = 2.0 * grid.half_width();
    (0..m)
        .map(|j| {
            let x = (j as f64 - (m / 2) as f64) * grid.dx();
            (-3..=3).map(|k| window_1d(params.sigma, x + k as f64 * period)).sum()
        })
        .collect()
}

/// One-dimensional frame operator in Walnut form,
/// `S f(j) = Σ_n G_n(j mod xs) f(j - n·T)`.
#[derive(Clone, Debug)]
pub(crate) struct FrameOperator {
    m: usize,
    xs_pts: usize,
    t_pts: usize,
    terms: Vec<(usize, Vec<f64>)>,
}

impl FrameOperator {
    fn new(g: &[f64], lat: &FrameLattice, dx: f64) -> Self {
        let m = g.len();
        let t = lat.t_pts;
        let xs = lat.xs_pts;
        let mut terms = Vec::new();
        let mut g0max = 0.0f64;
        for n in 0..m / t {
            let shift = n * t;
            let coef: Vec<f64> = (0..xs)
                .map(|r| {
                    (r..m)
                        .step_by(xs)
                        .map(|mm| g[mm] * g[(mm + m - shift) % m])
                        .sum::<f64>()
                        * t as f64
                        * dx
                })
                .collect();
            let mx = coef.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if n == 0 {
                g0max = mx;
            }
            if mx > 1e-18 * g0max {
                terms.push((shift, coef));
            }
        }
        Self { m, xs_pts: xs, t_pts: t, terms }
    }

    fn apply(&self, f: &[f64], out: &mut [f64]) {
        let m = self.m;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (shift, coef) in &self.terms {
            for j in 0..m {
                out[j] += coef[j % self.xs_pts] * f[(j + m - shift) % m];
            }
        }
    }

    fn diagonal(&self, j: usize) -> f64 {
        self.terms.iter().find(|(s, _)| *s == 0).map(|(_, c)| c[j % self.xs_pts]).unwrap_or(1.0)
    }

    /// Largest and smallest eigenvalues. `T` is a multiple of `xs`, so `S`
    /// splits into circulant blocks over `j ≡ s (mod T)` whose eigenvalues are
    /// `Σ_n G_n(s mod xs) e^{2πi n m T/M}`.
    fn extreme_eigenvalues(&self) -> (f64, f64) {
        let t = self.t_pts;
        let blocks = self.m / t;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.xs_pts {
            for mm in 0..blocks {
                let lam: f64 = self
                    .terms
                    .iter()
                    .map(|(shift, coef)| {
                        let n = shift / t;
                        coef[r] * (2.0 * std::f64::consts::PI * ((n * mm) % blocks) as f64 / blocks as f64).cos()
                    })
                    .sum();
                lo = lo.min(lam);
                hi = hi.max(lam);
            }
        }
        (hi, lo)
    }
}

/// Options for the dual-window solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualOptions {
    /// Relative residual target for the frame equation `Sγ = g`.
    pub tol: f64,
    /// Samples with `|γ| < truncation·max|γ|` are dropped.
    pub truncation: f64,
    pub max_iterations: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self { tol: 1e-13, truncation: 1e-12, max_iterations: 5000 }
    }
}

/// Canonical dual window, truncated to `[-L_ε, L_ε]^N`. When the dual does
/// not fall below the truncation level inside the periodic box it is kept
/// whole, which is exact on the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct DualWindow {
    pub params: FrameParams,
    dim: usize,
    dx: f64,
    /// `γ` on consecutive offsets starting at `first_offset`, along one
    /// axis; the N-dimensional dual is the tensor power.
    gamma: Vec<f64>,
    first_offset: i64,
    half_pts: usize,
    whole_box: bool,
    full: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Extreme eigenvalues of the frame operator `S`.
    pub eigen_min: f64,
    pub eigen_max: f64,
}

impl DualWindow {
    /// Truncation radius `L_ε`.
    pub fn truncation_radius(&self) -> f64 {
        self.half_pts as f64 * self.dx
    }

    pub fn half_width_pts(&self) -> usize {
        self.half_pts
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether truncation was skipped because the dual spans the whole box.
    pub fn spans_whole_box(&self) -> bool {
        self.whole_box
    }

    /// Truncated 1-D dual samples at consecutive offsets from [`DualWindow::first_offset`].
    pub fn samples_1d(&self) -> &[f64] {
        &self.gamma
    }

    pub fn first_offset(&self) -> i64 {
        self.first_offset
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Untruncated 1-D dual on the whole axis, centered at index `M/2`.
    pub fn untruncated_1d(&self) -> &[f64] {
        &self.full
    }

    /// Frame bounds in the `A‖f‖ ≤ ‖⟨f, g_ab⟩‖ ≤ B‖f‖` convention.
    pub fn frame_bounds(&self) -> (f64, f64) {
        let p = self.dim as i32;
        (self.eigen_min.powi(p).sqrt(), self.eigen_max.powi(p).sqrt())
    }

    /// Bounds on `‖⟨f, γ_ab⟩‖ / ‖f‖`.
    pub fn dual_frame_bounds(&self) -> (f64, f64) {
        let (a, b) = self.frame_bounds();
        (1.0 / b, 1.0 / a)
    }

    /// Operator norm of synthesis, `√λmax(S)`.
    pub fn synthesis_norm(&self) -> f64 {
        self.frame_bounds().1
    }

    /// Dual sampled on `grid` as a field.
    pub fn to_field(&self, grid: &GridSpec) -> Field {
        let m = grid.points_per_axis();
        Field::from_fn(*grid, |x| {
            let off = |v: f64| -> f64 {
                let j = (v / grid.dx()).round() as i64 + (m / 2) as i64;
                self.full[j.clamp(0, m as i64 - 1) as usize]
            };
            let v = if grid.dim() == 1 { off(x[0]) } else { off(x[0]) * off(x[1]) };
            Complex64::new(v, 0.0)
        })
    }
}

/// Solve `Sγ = g` by Jacobi-preconditioned conjugate gradients.
pub fn compute_dual_window(params: &FrameParams, grid: &GridSpec, tol: f64) -> Result<DualWindow> {
    compute_dual_window_with(params, grid, DualOptions { tol, ..DualOptions::default() })
}

pub fn compute_dual_window_with(params: &FrameParams, grid: &GridSpec, opts: DualOptions) -> Result<DualWindow> {
    let lat = params.lattice(grid)?;
    gaussian_window(params, grid)?;
    let g = periodic_window(params, grid);
    let op = FrameOperator::new(&g, &lat, grid.dx());
    let m = g.len();
    let diag: Vec<f64> = (0..m).map(|j| op.diagonal(j)).collect();

    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x: Vec<f64> = g.iter().zip(&diag).map(|(gi, d)| gi / d).collect();
    let mut ax = vec![0.0; m];
    op.apply(&x, &mut ax);
    let mut r: Vec<f64> = g.iter().zip(&ax).map(|(a, b)| a - b).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz = r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
    let mut ap = vec![0.0; m];
    let mut iterations = 0;
    let mut residual = r.iter().map(|v| v * v).sum::<f64>().sqrt() / gnorm;
    while residual > opts.tol && iterations < opts.max_iterations {
        op.apply(&p, &mut ap);
        let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        z.iter_mut().zip(r.iter().zip(&diag)).for_each(|(zi, (ri, d))| *zi = ri / d);
        let rz_new = r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        iterations += 1;
        // Recompute the true residual now and then to avoid drift.
        if iterations % 50 == 0 {
            op.apply(&x, &mut ax);
            r = g.iter().zip(&ax).map(|(a, b)| a - b).collect();
        }
        residual = r.iter().map(|v| v * v).sum::<f64>().sqrt() / gnorm;
    }
    op.apply(&x, &mut ax);
    residual = g.iter().zip(&ax).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / gnorm;
    if !(residual <= opts.tol.max(1e-15) * 10.0) {
        return Err(Error::DualWindowNotConverged {
            params: format!(
                "sigma = {}, xs = {}, ks = {}, q = {}",
                params.sigma, params.xs, params.ks, params.q
            ),
            residual,
            iterations,
        });
    }

    let gmax = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let c = m / 2;
    let half_pts = (0..c)
        .rev()
        .find(|&h| x[c + h].abs() >= opts.truncation * gmax || x[c - h].abs() >= opts.truncation * gmax)
        .unwrap_or(0);
    let whole_box = half_pts + 1 >= c;
    let (gamma, first_offset, half_pts) = if whole_box {
        (x.clone(), -(c as i64), c)
    } else {
        (x[c - half_pts..=c + half_pts].to_vec(), -(half_pts as i64), half_pts)
    };
    let (eigen_max, eigen_min) = op.extreme_eigenvalues();
    Ok(DualWindow {
        params: *params,
        dim: grid.dim(),
        dx: grid.dx(),
        gamma,
        first_offset,
        half_pts,
        whole_box,
        full: x,
        residual,
        iterations,
        eigen_min,
        eigen_max,
    })
}

/// A windowed patch of a synthesized field, anchored at a frame position.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub a: [i32; 2],
    pub values: Vec<Complex64>,
}

/// Analysis/synthesis engine for one grid, frame and dual window.
#[derive(Clone)]
pub struct Frame {
    grid: GridSpec,
    params: FrameParams,
    lattice: FrameLattice,
    dual: Arc<DualWindow>,
    window: Vec<f64>,
    window_half: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("grid", &self.grid)
            .field("params", &self.params)
            .field("lattice", &self.lattice)
            .field("dual_half_width", &self.dual.half_pts)
            .field("window_half_width", &self.window_half)
            .finish()
    }
}

impl Frame {
    pub fn new(grid: GridSpec, dual: Arc<DualWindow>) -> Result<Self> {
        let params = dual.params;
        let lattice = params.lattice(&grid)?;
        if dual.dim != grid.dim() || (dual.dx - grid.dx()).abs() > 1e-12 * grid.dx() {
            return Err(Error::InvalidFrame("dual window was computed on a different grid".into()));
        }
        let m = grid.points_per_axis();
        let g0 = window_1d(params.sigma, 0.0);
        let cutoff = 1e-17 * g0;
        let window_half = (0..m / 2).find(|&h| window_1d(params.sigma, h as f64 * grid.dx()) < cutoff).unwrap_or(m / 2 - 1);
        let window: Vec<f64> = (-(window_half as i64)..=window_half as i64)
            .map(|o| window_1d(params.sigma, o as f64 * grid.dx()))
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            grid,
            params,
            lattice,
            forward: planner.plan_fft_forward(lattice.t_pts),
            inverse: planner.plan_fft_inverse(lattice.t_pts),
            dual,
            window,
            window_half,
        })
    }

    pub fn build(grid: GridSpec, params: &FrameParams, opts: DualOptions) -> Result<Self> {
        let dual = compute_dual_window_with(params, &grid, opts)?;
        Self::new(grid, Arc::new(dual))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    pub fn lattice(&self) -> &FrameLattice {
        &self.lattice
    }

    pub fn dual(&self) -> &DualWindow {
        &self.dual
    }

    /// Half width, in samples, of the truncated synthesis window.
    pub fn window_half_width(&self) -> usize {
        self.window_half
    }

    pub fn bins(&self) -> usize {
        self.lattice.t_pts.pow(self.grid.dim() as u32)
    }

    /// Physical center of position `a`.
    pub fn position(&self, a: &[i32; 2]) -> [f64; 2] {
        let xs = self.params.xs;
        if self.grid.dim() == 1 {
            [a[0] as f64 * xs, 0.0]
        } else {
            [a[0] as f64 * xs, a[1] as f64 * xs]
        }
    }

    /// Physical frequency of bin `b`.
    pub fn frequency(&self, b: &[i32; 2]) -> [f64; 2] {
        let ks = self.params.ks;
        [b[0] as f64 * ks, b[1] as f64 * ks]
    }

    /// Every position of the lattice over the grid.
    pub fn all_positions(&self) -> Vec<[i32; 2]> {
        let r = self.lattice.position_range();
        if self.grid.dim() == 1 {
            r.map(|a| [a, 0]).collect()
        } else {
            r.clone().flat_map(|a1| r.clone().map(move |a2| [a1, a2])).collect()
        }
    }

    pub fn empty_coefficients(&self) -> CoefficientSet {
        CoefficientSet::new(self.grid.dim(), self.lattice)
    }

    fn center_index(&self, a: i32) -> i64 {
        (self.grid.points_per_axis() / 2) as i64 + a as i64 * self.lattice.xs_pts as i64
    }

    /// All `T^N` coefficients at position `a`, in FFT bin order.
    pub fn analyze_position(&self, f: &Field, a: &[i32; 2]) -> Vec<Complex64> {
        let m = self.grid.points_per_axis() as i64;
        let t = self.lattice.t_pts;
        let lo = self.dual.first_offset;
        let gam = &self.dual.gamma;
        let offsets = lo..lo + gam.len() as i64;
        let vals = f.values();
        let zero = Complex64::new(0.0, 0.0);
        let fold = |o: i64| (o.rem_euclid(t as i64)) as usize;
        let mut u;
        if self.grid.dim() == 1 {
            u = vec![zero; t];
            let c = self.center_index(a[0]);
            for (k, o) in offsets.enumerate() {
                let j = (c + o).rem_euclid(m) as usize;
                u[fold(o)] += vals[j] * gam[k];
            }
        } else {
            u = vec![zero; t * t];
            let c1 = self.center_index(a[0]);
            let c2 = self.center_index(a[1]);
            let mm = m as usize;
            let cols: Vec<usize> = offsets.clone().map(|o2| (c2 + o2).rem_euclid(m) as usize).collect();
            let folds: Vec<usize> = offsets.clone().map(fold).collect();
            for (i, o1) in offsets.enumerate() {
                let row = (c1 + o1).rem_euclid(m) as usize * mm;
                let g1 = gam[i];
                let urow = fold(o1) * t;
                for k in 0..cols.len() {
                    u[urow + folds[k]] += vals[row + cols[k]] * (g1 * gam[k]);
                }
            }
        }
        transform_nd(self.grid.dim(), t, &*self.forward, &mut u);
        let vol = self.grid.cell_volume();
        u.iter_mut().for_each(|v| *v *= vol);
        u
    }

    /// `Σ_b c_ab g_ab` for one position, as a patch of half width
    /// [`Frame::window_half_width`].
    pub fn synthesize_position(&self, a: &[i32; 2], coeffs: &[Complex64]) -> Patch {
        let t = self.lattice.t_pts;
        let mut w = coeffs.to_vec();
        transform_nd(self.grid.dim(), t, &*self.inverse, &mut w);
        let h = self.window_half as i64;
        let fold = |o: i64| (o.rem_euclid(t as i64)) as usize;
        let values = if self.grid.dim() == 1 {
            (-h..=h).map(|o| w[fold(o)] * self.window[(o + h) as usize]).collect()
        } else {
            let mut v = Vec::with_capacity(self.window.len().pow(2));
            for o1 in -h..=h {
                let g1 = self.window[(o1 + h) as usize];
                let wr = fold(o1) * t;
                for o2 in -h..=h {
                    v.push(w[wr + fold(o2)] * (g1 * self.window[(o2 + h) as usize]));
                }
            }
            v
        };
        Patch { a: *a, values }
    }

    /// Add `scale·patch` into `f` with periodic wrap.
    pub fn accumulate(&self, f: &mut Field, patch: &Patch, scale: f64) {
        let m = self.grid.points_per_axis() as i64;
        let h = self.window_half as i64;
        let vals = f.values_mut();
        if self.grid.dim() == 1 {
            let c = self.center_index(patch.a[0]);
            for (k, o) in (-h..=h).enumerate() {
                vals[(c + o).rem_euclid(m) as usize] += patch.values[k] * scale;
            }
        } else {
            let c1 = self.center_index(patch.a[0]);
            let c2 = self.center_index(patch.a[1]);
            let w = (2 * h + 1) as usize;
            let cols: Vec<usize> = (-h..=h).map(|o2| (c2 + o2).rem_euclid(m) as usize).collect();
            for (i, o1) in (-h..=h).enumerate() {
                let row = (c1 + o1).rem_euclid(m) as usize * m as usize;
                for (k, col) in cols.iter().enumerate() {
                    vals[row + col] += patch.values[i * w + k] * scale;
                }
            }
        }
    }

    /// Algorithm 1 over the given positions (all bins per position).
    pub fn analyze(&self, f: &Field, positions: &[[i32; 2]]) -> Result<CoefficientSet> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let blocks: Vec<(_, _)> = positions.par_iter().map(|a| (*a, self.analyze_position(f, a))).collect();
        let mut set = self.empty_coefficients();
        for (a, blk) in blocks {
            set.insert_block(a, blk);
        }
        Ok(set)
    }

    pub fn synthesize(&self, c: &CoefficientSet) -> Field {
        let blocks: Vec<(&[i32; 2], &[Complex64])> =
            c.blocks.iter().map(|(a, v)| (a, v.as_slice())).collect();
        let patches: Vec<Patch> = blocks.par_iter().map(|(a, v)| self.synthesize_position(a, v)).collect();
        let mut out = Field::zeros(self.grid);
        for p in &patches {
            self.accumulate(&mut out, p, 1.0);
        }
        out
    }

    /// Algorithm 2: `Σ_{(a,b)∈F} ⟨f, γ_ab⟩ g_ab`.
    pub fn project(&self, f: &Field, set: &FrameletSet) -> Result<Field> {
        let positions: Vec<[i32; 2]> = set.positions().copied().collect();
        let mut c = self.analyze(f, &positions)?;
        c.restrict_to(set);
        Ok(self.synthesize(&c))
    }

    /// Sampled single framelet `g_ab` on the grid (periodized).
    pub fn framelet(&self, idx: &FrameletIndex) -> Field {
        let mut c = self.empty_coefficients();
        c.set(idx, Complex64::new(1.0, 0.0));
        self.synthesize(&c)
    }
}

pub fn analyze_wft(f: &Field, frame: &Frame, positions: &[[i32; 2]]) -> Result<CoefficientSet> {
    frame.analyze(f, positions)
}

pub fn synthesize(c: &CoefficientSet, frame: &Frame) -> Field {
    frame.synthesize(c)
}

pub fn project_phase_space(f: &Field, set: &FrameletSet, frame: &Frame) -> Result<Field> {
    frame.project(f, set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    fn small_frame(dim: usize) -> Frame {
        let grid = make_grid(dim, 12.8, 128).unwrap();
        let p = FrameParams::on_grid(&grid, 1.0, 2, 8).unwrap();
        Frame::build(grid, &p, DualOptions::default()).unwrap()
    }

    #[test]
    fn params_enforce_lattice_relation() {
        assert!(FrameParams::new(1.0, 0.4, 2.0 * PI / 6.4, 16).is_ok());
        assert!(FrameParams::new(1.0, 0.4, 1.0, 16).is_err());
        assert!(FrameParams::new(1.0, 0.4, 2.0 * PI / 2.0, 5).is_err());
    }

    #[test]
    fn snapping_picks_commensurate_period() {
        let grid = make_grid(1, 25.6, 1024).unwrap();
        let p = FrameParams::snapped(&grid, 1.0, 2.0 * PI / 3.2, 16).unwrap();
        assert!((p.xs - 0.2).abs() < 1e-12);
        let grid = make_grid(1, 102.4, 2048).unwrap();
        let p = FrameParams::snapped(&grid, 1.0, 1.0, 16).unwrap();
        let lat = p.lattice(&grid).unwrap();
        assert_eq!(2048 % lat.t_pts, 0);
        assert_eq!(lat.t_pts % 16, 0);
        assert!((p.xs * p.ks - 2.0 * PI / 16.0).abs() < 1e-12);
    }

    #[test]
    fn window_has_unit_norm_and_gaussian_shape() {
        let grid = make_grid(1, 20.0, 1024).unwrap();
        let p = FrameParams::new(1.0, 0.3125, 2.0 * PI / (0.3125 * 8.0), 8).unwrap();
        let g = gaussian_window(&p, &grid).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-10);
        let at = |x: f64| window_1d(1.0, x);
        assert!((at(0.0) / at(1.0) - 0.5f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn window_is_separable_in_two_dimensions() {
        let grid = make_grid(2, 12.8, 64).unwrap();
        let p = FrameParams::on_grid(&grid, 2.0, 2, 8).unwrap();
        let g = gaussian_window(&p, &grid).unwrap();
        for idx in [0, 77, 2080, 4095] {
            let x = grid.position(idx);
            let expect = window_1d(2.0, x[0]) * window_1d(2.0, x[1]);
            assert!((g.values()[idx].re - expect).abs() < 1e-15);
        }
        assert!((g.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn narrow_window_rejected() {
        let grid = make_grid(1, 6.4, 64).unwrap();
        let p = FrameParams::new(0.1, 0.2, 2.0 * PI / 1.6, 8).unwrap();
        assert!(gaussian_window(&p, &grid).is_err());
    }

    #[test]
    fn zero_field_gives_zero_coefficients() {
        let fr = small_frame(1);
        let c = fr.analyze(&Field::zeros(*fr.grid()), &fr.all_positions()).unwrap();
        assert!(c.iter().all(|(_, v)| v.norm() == 0.0));
        assert_eq!(c.len(), 64 * 16);
    }

    #[test]
    fn empty_synthesis_is_zero() {
        let fr = small_frame(1);
        let f = fr.synthesize(&fr.empty_coefficients());
        assert_eq!(f.norm(), 0.0);
        assert_eq!(fr.project(&f, &FrameletSet::new()).unwrap().norm(), 0.0);
    }

    #[test]
    fn single_coefficient_synthesizes_framelet() {
        let fr = small_frame(1);
        let idx = FrameletIndex::new_1d(3, -2);
        let f = fr.framelet(&idx);
        let xa = 3.0 * fr.params().xs;
        let k = -2.0 * fr.params().ks;
        for (j, v) in f.values().iter().enumerate() {
            let x = fr.grid().coordinate(j);
            let expect = Complex64::from_polar(window_1d(1.0, x - xa), k * (x - xa));
            assert!((v - expect).norm() < 1e-14, "j = {j}");
        }
    }

    #[test]
    fn real_even_input_has_conjugate_symmetric_coefficients() {
        let fr = small_frame(1);
        let f = Field::from_fn(*fr.grid(), |x| Complex64::new((-x[0] * x[0] / 3.0).exp(), 0.0));
        let c = fr.analyze(&f, &[[0, 0], [2, 0]]).unwrap();
        for a in [[0, 0], [2, 0]] {
            for b in -3..=3 {
                let p = c.get(&FrameletIndex { a, b: [b, 0] }).unwrap();
                let n = c.get(&FrameletIndex { a, b: [-b, 0] }).unwrap();
                assert!((p - n.conj()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn reconstruction_1d_and_2d() {
        for dim in [1, 2] {
            let fr = small_frame(dim);
            let f = Field::from_fn(*fr.grid(), |x| {
                let r2 = x[0] * x[0] + x[1] * x[1];
                Complex64::from_polar((-r2 / 4.0).exp(), 1.3 * x[0] - 0.4 * x[1])
            });
            let c = fr.analyze(&f, &fr.all_positions()).unwrap();
            let back = fr.synthesize(&c);
            let err = back.sub(&f).unwrap().norm() / f.norm();
            assert!(err < 1e-10, "dim {dim}: {err}");
        }
    }

    #[test]
    fn frame_bounds_bracket_coefficient_norms() {
        let fr = small_frame(1);
        let (lo, hi) = fr.dual().dual_frame_bounds();
        assert!(lo > 0.0 && lo <= hi);
        let f = Field::from_fn(*fr.grid(), |x| Complex64::new((-x[0] * x[0]).exp(), x[0].sin()));
        let c = fr.analyze(&f, &fr.all_positions()).unwrap();
        let r = c.l2() / f.norm();
        assert!(lo * (1.0 - 1e-9) <= r && r <= hi * (1.0 + 1e-9), "{lo} {r} {hi}");
    }

    #[test]
    fn restrict_zeroes_outside_set() {
        let fr = small_frame(1);
        let f = Field::from_fn(*fr.grid(), |x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let mut c = fr.analyze(&f, &fr.all_positions()).unwrap();
        let keep = FrameletSet::from_indices(fr.lattice(), 1, [FrameletIndex::new_1d(0, 0)]);
        c.restrict_to(&keep);
        assert_eq!(c.positions().count(), 1);
        assert_eq!(c.iter().filter(|(_, v)| v.norm() > 0.0).count(), 1);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let fr = small_frame(1);
        let mut c = fr.empty_coefficients();
        c.set(&FrameletIndex::new_1d(1, -1), Complex64::new(0.5, 0.25));
        let csv = c.to_csv();
        assert!(csv.starts_with("a,b,re,im\n"));
        assert_eq!(csv.lines().count(), 1 + 16);
        assert!(csv.contains("1,-1,5.00000000000000000e-1,2.50000000000000000e-1"));
    }
}
