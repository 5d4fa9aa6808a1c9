//! Periodic split-step spectral propagation of `iψ_t = -Δψ + 𝒩(t,ψ)ψ`.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{Field, GridSpec, SpectralPlan};

/// The phase generator `𝒩(t,ψ)`; the nonlinear sub-step multiplies by `e^{-i𝒩δt}`.
#[derive(Clone, Debug, PartialEq)]
pub enum NonlinearityModel {
    Zero,
    /// `g|ψ|²`.
    CubicFocusing { g: f64 },
    /// Real potential sampled on the grid.
    StaticPotential(Vec<f64>),
    /// `-depth/(scale·|x|² + 1)`.
    LongRange { depth: f64, scale: f64 },
    /// `-i·a(x)` with `a ≥ 0` sampled on the grid.
    ComplexAbsorbing(Vec<f64>),
    Sum(Vec<NonlinearityModel>),
}

impl NonlinearityModel {
    pub fn cubic_focusing() -> Self {
        Self::CubicFocusing { g: -1.0 }
    }

    pub fn long_range() -> Self {
        Self::LongRange { depth: 15.0, scale: 0.05 }
    }

    pub fn static_potential(grid: &GridSpec, v: impl Fn([f64; 2]) -> f64) -> Self {
        Self::StaticPotential((0..grid.len()).map(|i| v(grid.position(i))).collect())
    }

    pub fn complex_absorbing(grid: &GridSpec, a: impl Fn([f64; 2]) -> f64) -> Self {
        Self::ComplexAbsorbing((0..grid.len()).map(|i| a(grid.position(i))).collect())
    }

    /// Whether the generator is independent of `ψ`.
    pub fn is_linear(&self) -> bool {
        match self {
            Self::CubicFocusing { .. } => false,
            Self::Sum(parts) => parts.iter().all(|p| p.is_linear()),
            _ => true,
        }
    }

    /// Whether the generator is real, so the flow preserves `‖ψ‖₂`.
    pub fn is_unitary(&self) -> bool {
        match self {
            Self::ComplexAbsorbing(a) => a.iter().all(|v| *v == 0.0),
            Self::Sum(parts) => parts.iter().all(|p| p.is_unitary()),
            _ => true,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Sum(parts) => parts.iter().all(|p| p.is_zero()),
            _ => false,
        }
    }

    fn check(&self, grid: &GridSpec) -> Result<()> {
        match self {
            Self::StaticPotential(v) | Self::ComplexAbsorbing(v) => {
                if v.len() != grid.len() {
                    return Err(Error::ShapeMismatch { expected: grid.len(), found: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("potential samples".into()));
                }
                if matches!(self, Self::ComplexAbsorbing(_)) && v.iter().any(|x| *x < 0.0) {
                    return Err(Error::InvalidArgument("absorption strength must be nonnegative".into()));
                }
                Ok(())
            }
            Self::CubicFocusing { g } if !g.is_finite() => Err(Error::NonFinite("cubic coefficient".into())),
            Self::Sum(parts) => parts.iter().try_for_each(|p| p.check(grid)),
            _ => Ok(()),
        }
    }

    /// Adds `𝒩(t,ψ)` into `out`.
    fn accumulate(&self, grid: &GridSpec, psi: &[Complex64], _t: f64, out: &mut [Complex64]) {
        match self {
            Self::Zero => {}
            Self::CubicFocusing { g } => {
                out.iter_mut().zip(psi).for_each(|(o, p)| o.re += g * p.norm_sqr());
            }
            Self::StaticPotential(v) => out.iter_mut().zip(v).for_each(|(o, v)| o.re += v),
            Self::LongRange { depth, scale } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let x = grid.position(i);
                    o.re -= depth / (scale * (x[0] * x[0] + x[1] * x[1]) + 1.0);
                }
            }
            Self::ComplexAbsorbing(a) => out.iter_mut().zip(a).for_each(|(o, a)| o.im -= a),
            Self::Sum(parts) => parts.iter().for_each(|p| p.accumulate(grid, psi, _t, out)),
        }
    }
}

impl std::ops::Add for NonlinearityModel {
    type Output = NonlinearityModel;

    fn add(self, rhs: Self) -> Self {
        let mut parts = Vec::new();
        for m in [self, rhs] {
            match m {
                Self::Sum(p) => parts.extend(p),
                Self::Zero => {}
                other => parts.push(other),
            }
        }
        match parts.len() {
            0 => Self::Zero,
            1 => parts.pop().unwrap(),
            _ => Self::Sum(parts),
        }
    }
}

/// Pointwise `𝒩(t,ψ)` as a field.
pub fn nonlinearity_eval(model: &NonlinearityModel, f: &Field, t: f64) -> Result<Field> {
    model.check(f.grid())?;
    let mut out = Field::zeros(*f.grid());
    model.accumulate(f.grid(), f.values(), t, out.values_mut());
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub record_interval: usize,
}

impl StepperConfig {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { dt, record_interval: 1 })
    }

    /// Number of steps in `duration`, which must be a multiple of `δt`.
    pub fn steps_in(&self, duration: f64) -> Result<usize> {
        let n = duration / self.dt;
        let r = n.round();
        if !(duration >= 0.0) || (n - r).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "duration {duration} is not a multiple of δt = {}",
                self.dt
            )));
        }
        Ok(r as usize)
    }
}

/// Split-step propagator with cached spectral multipliers.
#[derive(Clone, Debug)]
pub struct Propagator {
    grid: GridSpec,
    plan: SpectralPlan,
    k2: Vec<f64>,
    model: NonlinearityModel,
    dt: f64,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    static_kick: Option<Vec<Complex64>>,
}

impl Propagator {
    pub fn new(grid: GridSpec, model: NonlinearityModel, cfg: StepperConfig) -> Result<Self> {
        model.check(&grid)?;
        let k2 = grid.k_squared();
        let n = grid.len() as f64;
        // The unitary normalization of the forward/inverse pair is folded in here.
        let mult = |t: f64| -> Vec<Complex64> { k2.iter().map(|k| Complex64::from_polar(1.0 / n, -k * t)).collect() };
        let half = mult(cfg.dt / 2.0);
        let full = mult(cfg.dt);
        let static_kick = model.is_linear().then(|| {
            let zero = vec![Complex64::new(0.0, 0.0); grid.len()];
            let mut gen = zero.clone();
            model.accumulate(&grid, &zero, 0.0, &mut gen);
            gen.iter().map(|g| (Complex64::new(0.0, -cfg.dt) * g).exp()).collect()
        });
        Ok(Self { grid, plan: SpectralPlan::new(grid), k2, model, dt: cfg.dt, half, full, static_kick })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn model(&self) -> &NonlinearityModel {
        &self.model
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn apply_multiplier(&self, psi: &mut [Complex64], mult: &[Complex64]) {
        self.plan.forward_raw(psi);
        psi.iter_mut().zip(mult).for_each(|(p, m)| *p *= m);
        self.plan.inverse_raw(psi);
    }

    /// Exact free flow `e^{itΔ}` for any real `t`.
    pub fn free_flow(&self, psi: &mut [Complex64], t: f64) {
        let n = self.grid.len() as f64;
        let mult: Vec<Complex64> = self.k2.iter().map(|k| Complex64::from_polar(1.0 / n, -k * t)).collect();
        self.apply_multiplier(psi, &mult);
    }

    fn kick(&self, psi: &mut [Complex64], t: f64, gen: &mut [Complex64]) {
        if let Some(k) = &self.static_kick {
            psi.iter_mut().zip(k).for_each(|(p, k)| *p *= k);
            return;
        }
        gen.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
        self.model.accumulate(&self.grid, psi, t, gen);
        let dt = self.dt;
        psi.iter_mut().zip(gen.iter()).for_each(|(p, g)| *p *= (Complex64::new(0.0, -dt) * g).exp());
    }

    /// `steps` Strang steps starting at time `t0`: a half free step, then
    /// alternating kicks and full free steps, closing with a half step.
    pub fn evolve(&self, psi: &mut [Complex64], t0: f64, steps: usize) {
        if steps == 0 {
            return;
        }
        if self.model.is_zero() {
            self.free_flow(psi, self.dt * steps as f64);
            return;
        }
        let mut gen = if self.static_kick.is_some() { Vec::new() } else { vec![Complex64::new(0.0, 0.0); psi.len()] };
        self.apply_multiplier(psi, &self.half);
        for j in 0..steps {
            self.kick(psi, t0 + j as f64 * self.dt, &mut gen);
            let last = j + 1 == steps;
            self.apply_multiplier(psi, if last { &self.half } else { &self.full });
        }
    }

    pub fn evolve_field(&self, f: &mut Field, t0: f64, steps: usize) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        self.evolve(f.values_mut(), t0, steps);
        Ok(())
    }
}

/// Spectral free flow of `f` over time `t`.
pub fn free_flow_step(f: &Field, t: f64) -> Field {
    let plan = SpectralPlan::new(*f.grid());
    let mut spec = plan.forward(f);
    let k2 = f.grid().k_squared();
    spec.values_mut().iter_mut().zip(&k2).for_each(|(v, k)| *v *= Complex64::from_polar(1.0, -k * t));
    plan.inverse(&spec)
}

/// Algorithm 3 over `duration`, which must be a multiple of `δt`.
pub fn split_step_evolve(
    f: &Field,
    model: &NonlinearityModel,
    cfg: &StepperConfig,
    duration: f64,
) -> Result<Field> {
    let steps = cfg.steps_in(duration)?;
    let prop = Propagator::new(*f.grid(), model.clone(), *cfg)?;
    let mut out = f.clone();
    prop.evolve_field(&mut out, 0.0, steps)?;
    Ok(out)
}

/// Ratio of the measured group velocity to the wavenumber, obtained by
/// propagating a coherent state and tracking its center of mass.
pub fn measure_velocity_factor() -> f64 {
    let grid = GridSpec::new(1, 40.0, 1024).expect("valid calibration grid");
    let k0 = 2.0;
    let t = 2.0;
    let f = Field::from_fn(grid, |x| Complex64::from_polar((-x[0] * x[0] / 2.0).exp(), k0 * x[0]));
    let g = free_flow_step(&f, t);
    let center = |h: &Field| {
        let (num, den) = h.values().iter().enumerate().fold((0.0, 0.0), |(n, d), (i, v)| {
            let w = v.norm_sqr();
            (n + grid.coordinate(i) * w, d + w)
        });
        num / den
    };
    (center(&g) - center(&f)) / (k0 * t)
}

/// Calibrated velocity factor, measured once per process.
pub fn velocity_factor() -> f64 {
    static NU: OnceLock<f64> = OnceLock::new();
    *NU.get_or_init(measure_velocity_factor)
}
