//! Periodic sampled fields on `[-L, L]^N` (N = 1 or 2), unitary spectral
//! transforms and norms restricted to axis-aligned sub-boxes.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid. Sample `j` on each axis sits at `-L + j·δx`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    dim: usize,
    half_width: f64,
    points: usize,
}

impl GridSpec {
    pub fn new(dim: usize, half_width: f64, points_per_axis: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} is not 1 or 2")));
        }
        if points_per_axis < 8 || points_per_axis % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and at least 8, got {points_per_axis}"
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half width must be positive, got {half_width}")));
        }
        Ok(Self { dim, half_width, points: points_per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    /// Total number of samples, `M^N`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Volume element `δx^N`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    /// Axis coordinates in sample order.
    pub fn axis(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.coordinate(j)).collect()
    }

    /// Frequency of FFT bin `j` (standard, unshifted order): `π·m/L` with
    /// `m = j` for `j < M/2` and `m = j - M` otherwise.
    pub fn wavenumber(&self, j: usize) -> f64 {
        let m = if j < self.points / 2 { j as f64 } else { j as f64 - self.points as f64 };
        PI * m / self.half_width
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.wavenumber(j)).collect()
    }

    /// Largest resolvable frequency, `π/δx`.
    pub fn nyquist(&self) -> f64 {
        PI / self.dx()
    }

    /// Per-axis sample indices of a flat index (row-major, axis 0 slowest).
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.points, idx % self.points]
        }
    }

    pub fn flatten(&self, ij: [usize; 2]) -> usize {
        if self.dim == 1 {
            ij[0]
        } else {
            ij[0] * self.points + ij[1]
        }
    }

    /// Position of a flat sample index.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.unflatten(idx);
        if self.dim == 1 {
            [self.coordinate(i), 0.0]
        } else {
            [self.coordinate(i), self.coordinate(j)]
        }
    }

    /// `|k|²` per flat spectral index.
    pub fn k_squared(&self) -> Vec<f64> {
        let k = self.wavenumbers();
        (0..self.len())
            .map(|idx| {
                let [i, j] = self.unflatten(idx);
                if self.dim == 1 {
                    k[i] * k[i]
                } else {
                    k[i] * k[i] + k[j] * k[j]
                }
            })
            .collect()
    }

    /// Whether `other` has the same spacing and its samples lie on this grid.
    pub fn contains_subgrid(&self, other: &GridSpec) -> Option<usize> {
        if self.dim != other.dim || (self.dx() - other.dx()).abs() > 1e-12 * self.dx() {
            return None;
        }
        let shift = (other.coordinate(0) - self.coordinate(0)) / self.dx();
        let rounded = shift.round();
        if (shift - rounded).abs() > 1e-9 || rounded < 0.0 {
            return None;
        }
        let offset = rounded as usize;
        (offset + other.points <= self.points).then_some(offset)
    }

    pub fn full_box(&self) -> SubBox {
        SubBox::cube(self.dim, self.half_width)
    }
}

/// Closed axis-aligned box, `[lo_i, hi_i]` per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SubBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl SubBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > 2 {
            return Err(Error::InvalidBox("bounds must have matching length 1 or 2".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidBox(format!("lower bounds {lo:?} exceed upper {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    /// `[-h, h]^N`.
    pub fn cube(dim: usize, half: f64) -> Self {
        Self { lo: vec![-half; dim], hi: vec![half; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.lo.iter().zip(&self.hi).zip(p).all(|((l, h), x)| *l <= *x && *x <= *h)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    fn check_within(&self, grid: &GridSpec) -> Result<()> {
        if self.dim() != grid.dim() {
            return Err(Error::InvalidBox(format!(
                "box dimension {} does not match grid dimension {}",
                self.dim(),
                grid.dim()
            )));
        }
        let l = grid.half_width() * (1.0 + 1e-12);
        if self.lo.iter().chain(&self.hi).any(|x| x.abs() > l) {
            return Err(Error::InvalidBox(format!(
                "box {:?}..{:?} leaves the grid [-{l}, {l}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Complex samples of a function on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_values(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), found: values.len() });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("field samples".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x)`; `x[1]` is zero in one dimension.
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `‖f‖₂` over the whole periodic box.
    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub fn add_assign(&mut self, other: &Field) -> Result<()> {
        self.check_same_grid(other)?;
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, s: Complex64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub(crate) fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Samples on the sub-lattice `sub` (same spacing, aligned samples).
    pub fn restrict(&self, sub: &GridSpec) -> Result<Field> {
        let offset = self.grid.contains_subgrid(sub).ok_or(Error::GridMismatch)?;
        let m = sub.points_per_axis();
        let values = (0..sub.len())
            .map(|idx| {
                let [i, j] = sub.unflatten(idx);
                let src = if sub.dim() == 1 { [i + offset, 0] } else { [i + offset, j + offset] };
                self.values[self.grid.flatten(src)]
            })
            .collect::<Vec<_>>();
        debug_assert_eq!(values.len(), m.pow(sub.dim() as u32));
        Ok(Field { grid: *sub, values })
    }
}

/// Unitary DFT coefficients of a [`Field`], unshifted bin order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl SpectralField {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Same scaling as [`Field::norm`], so Parseval reads `‖f‖ = ‖F‖`.
    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }
}

/// Cached FFT plans for one grid shape. Transforms are unnormalized; the
/// public wrappers apply the unitary `M^{-N/2}` factor.
#[derive(Clone)]
pub struct SpectralPlan {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("grid", &self.grid).finish()
    }
}

impl SpectralPlan {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let m = grid.points_per_axis();
        Self { grid, forward: planner.plan_fft_forward(m), inverse: planner.plan_fft_inverse(m) }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Unnormalized forward transform in place.
    pub fn forward_raw(&self, data: &mut [Complex64]) {
        transform_nd(self.grid.dim(), self.grid.points_per_axis(), &*self.forward, data);
    }

    /// Unnormalized inverse transform in place.
    pub fn inverse_raw(&self, data: &mut [Complex64]) {
        transform_nd(self.grid.dim(), self.grid.points_per_axis(), &*self.inverse, data);
    }

    fn unitary_factor(&self) -> f64 {
        (self.grid.len() as f64).sqrt().recip()
    }

    pub fn forward(&self, f: &Field) -> SpectralField {
        let mut values = f.values.clone();
        self.forward_raw(&mut values);
        let s = self.unitary_factor();
        values.iter_mut().for_each(|v| *v *= s);
        SpectralField { grid: self.grid, values }
    }

    pub fn inverse(&self, f: &SpectralField) -> Field {
        let mut values = f.values.clone();
        self.inverse_raw(&mut values);
        let s = self.unitary_factor();
        values.iter_mut().for_each(|v| *v *= s);
        Field { grid: self.grid, values }
    }
}

/// Row-major N-dimensional transform built from one 1-D plan (square shape).
pub(crate) fn transform_nd(dim: usize, m: usize, fft: &dyn Fft<f64>, data: &mut [Complex64]) {
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    if dim == 1 {
        fft.process_with_scratch(data, &mut scratch);
        return;
    }
    fft.process_with_scratch(data, &mut scratch);
    transpose_square(data, m);
    fft.process_with_scratch(data, &mut scratch);
    transpose_square(data, m);
}

pub(crate) fn transpose_square(data: &mut [Complex64], m: usize) {
    const BLOCK: usize = 32;
    for bi in (0..m).step_by(BLOCK) {
        for bj in (bi..m).step_by(BLOCK) {
            for i in bi..(bi + BLOCK).min(m) {
                let start = if bi == bj { i + 1 } else { bj };
                for j in start..(bj + BLOCK).min(m) {
                    data.swap(i * m + j, j * m + i);
                }
            }
        }
    }
}

pub fn make_grid(dim: usize, half_width: f64, points_per_axis: usize) -> Result<GridSpec> {
    GridSpec::new(dim, half_width, points_per_axis)
}

pub fn dft_forward(f: &Field) -> SpectralField {
    SpectralPlan::new(f.grid).forward(f)
}

pub fn dft_inverse(f: &SpectralField) -> Field {
    SpectralPlan::new(f.grid).inverse(f)
}

/// `√(Σ_{x∈box} |f(x)|² δx^N)` over samples whose centers lie in the closed box.
pub fn l2_norm_on_box(f: &Field, bx: &SubBox) -> Result<f64> {
    bx.check_within(&f.grid)?;
    let grid = f.grid;
    let axis = grid.axis();
    // Closed-interval membership with a relative slack against rounding of the
    // sample coordinates.
    let slack = 1e-9 * grid.dx();
    let inside: Vec<Vec<bool>> = (0..grid.dim())
        .map(|d| axis.iter().map(|&x| x >= bx.lo[d] - slack && x <= bx.hi[d] + slack).collect())
        .collect();
    let sum: f64 = f
        .values
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let ij = grid.unflatten(*idx);
            (0..grid.dim()).all(|d| inside[d][ij[d]])
        })
        .map(|(_, v)| v.norm_sqr())
        .sum();
    Ok((sum * grid.cell_volume()).sqrt())
}

/// `‖(1+|k|²)^{s/2} f̂‖₂`.
pub fn hs_norm(f: &Field, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("Sobolev index must be nonnegative, got {s}")));
    }
    let spec = dft_forward(f);
    Ok(hs_norm_spectral(&spec, s))
}

pub(crate) fn hs_norm_spectral(spec: &SpectralField, s: f64) -> f64 {
    let k2 = spec.grid.k_squared();
    let sum: f64 = spec
        .values
        .iter()
        .zip(&k2)
        .map(|(v, k)| if s == 0.0 { v.norm_sqr() } else { (1.0 + k).powf(s) * v.norm_sqr() })
        .sum();
    (sum * spec.grid.cell_volume()).sqrt()
}
