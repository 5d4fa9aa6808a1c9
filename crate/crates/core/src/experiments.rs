//! Reference solutions, error metrics and the three benchmark presets:
//! a free coherent state hitting the boundary (`freewave1d`), an outgoing
//! cubic soliton (`soliton1d`) and a 2D long-range potential with a
//! returning slow wave (`longrange2d`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierConfig, NormChoice};
use crate::driver::{check_config, run_tdpsf_observed, AmbiguousPolicy, RunReport, Tdpsf, TdpsfConfig, Termination};
use crate::error::{Error, Result};
use crate::frame::{DualOptions, DualWindow, FrameParams};
use crate::lattice::{l2_norm_on_box, make_grid, Field, GridSpec, SubBox};
use crate::propagate::{velocity_factor, NonlinearityModel, Propagator, StepperConfig};

/// Coherent state `e^{ik0·(x-c)} e^{-|x-c|²/(2w²)}` evolved exactly under the
/// free flow `e^{-i(ν/2)|k|²t}` on the whole space, sampled on `grid`.
pub fn free_gaussian_reference(
    center: [f64; 2],
    wavevector: [f64; 2],
    width: f64,
    t: f64,
    grid: &GridSpec,
) -> Result<Field> {
    let d = grid.dim();
    if !(width > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("width {width} and time {t} must be positive and finite")));
    }
    let nu = velocity_factor();
    let alpha = nu / 2.0;
    let spread = (width * width + (nu * t / width).powi(2)).sqrt();
    if width < 2.0 * grid.dx() {
        return Err(Error::InvalidArgument(format!("width {width} is below two grid cells ({})", grid.dx())));
    }
    let kmax = wavevector[..d].iter().map(|k| k.abs()).fold(0.0, f64::max) + 6.0 / width;
    if kmax > grid.nyquist() {
        return Err(Error::InvalidArgument(format!(
            "wavevector {:?} with width {width} exceeds the Nyquist wavenumber {}",
            &wavevector[..d],
            grid.nyquist()
        )));
    }
    if spread < 2.0 * grid.dx() {
        return Err(Error::InvalidArgument(format!("evolved width {spread} is below two grid cells")));
    }
    let z = Complex64::new(width * width, 2.0 * alpha * t);
    let amp = (Complex64::new(width * width, 0.0) / z).sqrt();
    Ok(Field::from_fn(*grid, |x| {
        let mut v = Complex64::new(1.0, 0.0);
        for i in 0..d {
            let y = x[i] - center[i];
            let k = wavevector[i];
            let m = y - 2.0 * alpha * k * t;
            v *= amp * (-(m * m) / (2.0 * z) + Complex64::new(0.0, k * y - alpha * k * k * t)).exp();
        }
        v
    }))
}

/// Cubic coefficient for which `2^{-1/2} sech(x)` is a standing wave.
pub fn soliton_coupling() -> f64 {
    -2.0 * velocity_factor()
}

/// Exact soliton `2^{-1/2} sech(x - νvt) e^{i(vx + (ν/2)(1 - v²)t)}` of the
/// cubic equation with coupling [`soliton_coupling`].
pub fn soliton_reference(v: f64, t: f64, grid: &GridSpec) -> Field {
    let nu = velocity_factor();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Field::from_fn(*grid, |x| {
        let phase = v * x[0] + 0.5 * nu * (1.0 - v * v) * t;
        Complex64::from_polar(s / (x[0] - nu * v * t).cosh(), phase)
    })
}

/// `‖f - g‖` on `bx` divided by `normalizer`.
pub fn error_on_box(f: &Field, reference: &Field, bx: &SubBox, normalizer: f64) -> Result<f64> {
    if !(normalizer > 0.0) {
        return Err(Error::InvalidArgument(format!("normalizer must be positive, got {normalizer}")));
    }
    Ok(l2_norm_on_box(&f.sub(reference)?, bx)? / normalizer)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Freewave1d,
    Soliton1d,
    Longrange2d,
}

impl PresetName {
    pub const ALL: [PresetName; 3] = [PresetName::Freewave1d, PresetName::Soliton1d, PresetName::Longrange2d];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Freewave1d => "freewave1d",
            PresetName::Soliton1d => "soliton1d",
            PresetName::Longrange2d => "longrange2d",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset {s:?} (expected freewave1d, soliton1d or longrange2d)")))
    }
}

/// Size of the distant-boundary reference for `longrange2d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Distant box and its validity window halved.
    #[default]
    Ci,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Tdpsf,
    AbsorbingPotential,
    DistantBoundary,
    Exact,
}

impl Baseline {
    pub fn as_str(&self) -> &'static str {
        match self {
            Baseline::Tdpsf => "tdpsf",
            Baseline::AbsorbingPotential => "absorbing_potential",
            Baseline::DistantBoundary => "distant_boundary",
            Baseline::Exact => "exact",
        }
    }
}

/// Full parameter record of one experiment. Times marked `*_over_v` are
/// divided by the sweep velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub scale: Scale,
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
    pub sigma: f64,
    pub xs_pts: usize,
    pub q: usize,
    pub lb: f64,
    pub wb: f64,
    pub epsilon: f64,
    pub norm: NormChoice,
    /// `kmax = v + kmax_above_v` when set, the Nyquist wavenumber otherwise.
    pub kmax_above_v: Option<f64>,
    pub dt: f64,
    pub dt_over_v: bool,
    pub tstep: f64,
    pub tstep_over_v: bool,
    pub tmax: f64,
    pub tmax_over_v: bool,
    pub velocities: Vec<f64>,
    pub policy: AmbiguousPolicy,
    pub dual_truncation: f64,
    pub baselines: Vec<Baseline>,
    /// Half width of the box on which errors are measured.
    pub error_box: f64,
    pub absorber_height: f64,
    /// Divisor in the absorber exponent, `e^{-(x - c)²/width}`.
    pub absorber_width: f64,
    /// Absorber centers `±c`; the domain edge when unset.
    pub absorber_center: Option<f64>,
    /// Depth of the long-range well `-depth/(0.05|x|² + 1)`. With `-Δ` as the
    /// kinetic term, depth 30 over `[0, T]` is the depth-15 well under `-Δ/2`
    /// over `[0, 2T]`.
    pub well_depth: f64,
    pub distant_half_width: f64,
    pub distant_points: usize,
    /// Sampling interval of time series.
    pub record_interval: f64,
    /// Window over which `M(t)` is expected to be flat.
    pub plateau_window: [f64; 2],
    pub workers: usize,
}

impl ExperimentPreset {
    pub fn new(name: PresetName, scale: Scale) -> Self {
        let base = ExperimentPreset {
            name,
            scale,
            dim: 1,
            half_width: 102.4,
            points: 2048,
            sigma: 1.0,
            xs_pts: 4,
            q: 16,
            lb: 88.0,
            wb: 14.4,
            epsilon: 1e-6,
            norm: NormChoice::H1,
            kmax_above_v: None,
            dt: 5e-4,
            dt_over_v: false,
            tstep: 2e-3,
            tstep_over_v: false,
            tmax: 3.0 * 51.2,
            tmax_over_v: true,
            velocities: (1..=25).map(f64::from).collect(),
            policy: AmbiguousPolicy::Record,
            dual_truncation: 1e-12,
            baselines: vec![Baseline::Tdpsf, Baseline::AbsorbingPotential, Baseline::Exact],
            error_box: 88.0,
            absorber_height: 25.0,
            absorber_width: 16.0,
            absorber_center: None,
            well_depth: 0.0,
            distant_half_width: 0.0,
            distant_points: 0,
            record_interval: 0.0,
            plateau_window: [0.0, 0.0],
            workers: 1,
        };
        match name {
            PresetName::Freewave1d => base,
            PresetName::Soliton1d => ExperimentPreset {
                half_width: 25.6,
                points: 1024,
                lb: 12.0,
                wb: 13.6,
                kmax_above_v: Some(18.0),
                dt: 0.002,
                dt_over_v: true,
                tstep: 0.08,
                tstep_over_v: true,
                tmax: 200.0,
                velocities: (1..=15).map(f64::from).collect(),
                policy: AmbiguousPolicy::Record,
                baselines: vec![Baseline::Tdpsf, Baseline::Exact],
                error_box: 12.0,
                ..base
            },
            PresetName::Longrange2d => {
                let (dh, dp) = match scale {
                    Scale::Ci => (102.4, 1024),
                    Scale::Full => (204.8, 2048),
                };
                ExperimentPreset {
                    dim: 2,
                    half_width: 25.6,
                    points: 256,
                    sigma: 2.0,
                    lb: 10.0,
                    wb: 15.6,
                    dt: 0.0125,
                    tstep: 0.1,
                    tmax: 60.0,
                    tmax_over_v: false,
                    velocities: Vec::new(),
                    policy: AmbiguousPolicy::Record,
                    dual_truncation: 1e-8,
                    baselines: vec![Baseline::Tdpsf, Baseline::AbsorbingPotential, Baseline::DistantBoundary],
                    error_box: 10.0,
                    absorber_height: 40.0,
                    absorber_width: 36.0,
                    well_depth: 30.0,
                    distant_half_width: dh,
                    distant_points: dp,
                    record_interval: 0.5,
                    plateau_window: [17.5, 60.0],
                    ..base
                }
            }
        }
    }

    /// Apply flat `key = value` overrides from a TOML document.
    pub fn with_overrides(&self, toml_text: &str) -> Result<Self> {
        let patch: toml::Table = toml_text.parse().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        let mut table = toml::Table::try_from(self).map_err(|e| Error::config(e.to_string()))?;
        let mut unknown = Vec::new();
        for (k, v) in patch {
            if k == "name" {
                unknown.push("the preset name cannot be overridden".to_string());
            } else if table.contains_key(&k) || OPTIONAL_KEYS.contains(&k.as_str()) {
                table.insert(k, v);
            } else {
                unknown.push(format!("unknown key {k:?}"));
            }
        }
        if !unknown.is_empty() {
            return Err(Error::Config(unknown));
        }
        let out: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        out.validate()?;
        Ok(out)
    }

    pub fn from_file(name: PresetName, scale: Scale, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(name, scale)
            .with_overrides(&text)
            .map_err(|e| Error::ConfigFile { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.dim != 1 && self.dim != 2 {
            p.push(format!("dim = {} must be 1 or 2", self.dim));
        }
        if self.name != PresetName::Longrange2d && self.velocities.is_empty() {
            p.push("velocities must not be empty".into());
        }
        if self.velocities.iter().any(|v| !(*v > 0.0)) {
            p.push("velocities must be positive".into());
        }
        if self.workers == 0 {
            p.push("workers must be at least 1".into());
        }
        if self.name == PresetName::Longrange2d {
            if !(self.record_interval > 0.0) {
                p.push("record_interval must be positive".into());
            }
            if self.distant_half_width < self.half_width {
                p.push("the distant box must contain the computational box".into());
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        make_grid(self.dim, self.half_width, self.points)
    }

    fn time(value: f64, over_v: bool, v: f64) -> f64 {
        if over_v {
            value / v
        } else {
            value
        }
    }

    pub fn tmax_at(&self, v: f64) -> f64 {
        Self::time(self.tmax, self.tmax_over_v, v)
    }

    fn model(&self, grid: &GridSpec) -> NonlinearityModel {
        match self.name {
            PresetName::Freewave1d => NonlinearityModel::Zero,
            PresetName::Soliton1d => NonlinearityModel::CubicFocusing { g: soliton_coupling() },
            PresetName::Longrange2d => {
                let _ = grid;
                NonlinearityModel::LongRange { depth: self.well_depth, scale: 0.05 }
            }
        }
    }

    pub fn absorber_center(&self) -> f64 {
        self.absorber_center.unwrap_or(self.half_width)
    }

    /// The absorbing-potential strength `a(x)` in `-i·a(x)`.
    pub fn absorber(&self, grid: &GridSpec) -> NonlinearityModel {
        let (h, w, c) = (self.absorber_height, self.absorber_width, self.absorber_center());
        let d = self.dim;
        NonlinearityModel::complex_absorbing(grid, |x| {
            x[..d].iter().map(|y| h * ((-(y - c).powi(2) / w).exp() + (-(y + c).powi(2) / w).exp())).sum()
        })
    }

    /// Full driver configuration at sweep velocity `v` (ignored when no
    /// parameter scales with it).
    pub fn tdpsf_config(&self, v: f64) -> Result<TdpsfConfig> {
        let grid = self.grid()?;
        let frame = FrameParams::on_grid(&grid, self.sigma, self.xs_pts, self.q)?;
        let tstep = Self::time(self.tstep, self.tstep_over_v, v);
        let kmax = match self.kmax_above_v {
            Some(k) => (v + k).min(grid.nyquist()),
            None => grid.nyquist(),
        };
        let classifier = ClassifierConfig {
            dim: self.dim,
            epsilon: self.epsilon,
            lb: self.lb,
            wb: self.wb,
            tstep,
            tmax: self.tmax_at(v),
            norm: self.norm,
            nu: velocity_factor(),
            frame,
            kmax,
            kmin: ClassifierConfig::default_kmin(self.epsilon, self.sigma),
            dx: grid.dx(),
        };
        Ok(TdpsfConfig {
            grid,
            frame,
            classifier,
            stepper: StepperConfig::new(Self::time(self.dt, self.dt_over_v, v))?,
            model: self.model(&grid),
            dual: DualOptions { truncation: self.dual_truncation, ..DualOptions::default() },
            policy: self.policy,
            disable_filter: false,
        })
    }

    pub fn initial_data(&self, v: f64, grid: &GridSpec) -> Field {
        match self.name {
            PresetName::Freewave1d => Field::from_fn(*grid, |x| Complex64::from_polar((-x[0] * x[0] / 4.0).exp(), v * x[0])),
            PresetName::Soliton1d => soliton_reference(v, 0.0, grid),
            PresetName::Longrange2d => Field::from_fn(*grid, |x| {
                let g = (-(x[0] * x[0] + x[1] * x[1]) / 20.0).exp();
                Complex64::from_polar(g, 7.0 * x[1]) + Complex64::from_polar(g, 4.0 * x[0])
            }),
        }
    }

    /// Time after which the distant-boundary reference may see wrapped waves,
    /// for the fastest component (`|k| = 7`).
    pub fn distant_validity(&self) -> f64 {
        2.0 * self.distant_half_width / (velocity_factor() * 7.0)
    }

    fn key(&self) -> String {
        self.name.as_str().to_string()
    }
}

const OPTIONAL_KEYS: [&str; 2] = ["kmax_above_v", "absorber_center"];

/// Sampled metric, one row per abscissa.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSeries {
    /// Metric and baseline, e.g. `E_of_v` or `interior_error_tdpsf`.
    pub name: String,
    pub abscissa: &'static str,
    pub ordinate: &'static str,
    pub points: Vec<(f64, f64)>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>, abscissa: &'static str, ordinate: &'static str) -> Self {
        Self { name: name.into(), abscissa, ordinate, points: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{}\n", self.abscissa, self.ordinate);
        for (x, y) in &self.points {
            s.push_str(&format!("{x:.17e},{y:.17e}\n"));
        }
        s
    }

    /// Value at the abscissa closest to `x`.
    pub fn at(&self, x: f64) -> Option<f64> {
        self.points
            .iter()
            .min_by(|a, b| (a.0 - x).abs().total_cmp(&(b.0 - x).abs()))
            .map(|p| p.1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    AmbiguousMassExceeded { time: f64, value: f64 },
    Failed(String),
}

impl RunStatus {
    pub fn as_str(&self) -> String {
        match self {
            RunStatus::Completed => "completed".into(),
            RunStatus::AmbiguousMassExceeded { time, value } => {
                format!("ambiguous_mass_exceeded t={time} mass={value:e}")
            }
            RunStatus::Failed(m) => format!("failed: {m}"),
        }
    }
}

/// One sub-run of an experiment.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub baseline: Baseline,
    pub velocity: Option<f64>,
    pub status: RunStatus,
    pub wall_time: f64,
    pub final_time: f64,
    /// The preset's headline error for this run, if it has one.
    pub error: Option<f64>,
    pub report: Option<RunReport>,
}

impl RunRecord {
    fn label(&self) -> String {
        match self.velocity {
            Some(v) => format!("{}.v{}", self.baseline.as_str(), v),
            None => self.baseline.as_str().to_string(),
        }
    }

    pub fn flagged(&self) -> bool {
        matches!(self.status, RunStatus::AmbiguousMassExceeded { .. })
            || self.report.as_ref().is_some_and(|r| r.first_exceedance.is_some())
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub preset: ExperimentPreset,
    pub nu: f64,
    pub series: Vec<MetricSeries>,
    pub runs: Vec<RunRecord>,
    /// Extra scalar results, e.g. final errors.
    pub scalars: BTreeMap<String, f64>,
}

impl ExperimentOutput {
    pub fn series(&self, name: &str) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Whether a TDPSF sub-run was stopped by the ambiguous-mass check.
    pub fn any_halted(&self) -> bool {
        self.runs.iter().any(|r| r.baseline == Baseline::Tdpsf && matches!(r.status, RunStatus::AmbiguousMassExceeded { .. }))
    }
}

fn status_of(report: &RunReport) -> RunStatus {
    match report.termination {
        Termination::Completed => RunStatus::Completed,
        Termination::AmbiguousMassExceeded(e) => RunStatus::AmbiguousMassExceeded { time: e.time, value: e.value },
    }
}

fn failed(baseline: Baseline, velocity: Option<f64>, e: Error) -> RunRecord {
    let report = match &e {
        Error::Blowup { report, .. } => Some((**report).clone()),
        _ => None,
    };
    RunRecord {
        baseline,
        velocity,
        status: RunStatus::Failed(e.to_string()),
        wall_time: report.as_ref().map_or(0.0, |r| r.wall_time),
        final_time: report.as_ref().map_or(0.0, |r| r.final_time()),
        error: None,
        report,
    }
}

/// Execute every baseline of `preset`.
pub fn run_experiment(preset: &ExperimentPreset) -> Result<ExperimentOutput> {
    preset.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(preset.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| match preset.name {
        PresetName::Freewave1d => run_freewave(preset),
        PresetName::Soliton1d => run_soliton(preset),
        PresetName::Longrange2d => run_longrange(preset),
    })
}

fn sweep<T: Send>(preset: &ExperimentPreset, f: impl Fn(f64) -> T + Sync) -> Vec<T> {
    preset.velocities.par_iter().map(|v| f(*v)).collect()
}

fn absorbing_run(preset: &ExperimentPreset, v: f64, steps: usize, psi0: &Field) -> Result<(Field, f64)> {
    let start = std::time::Instant::now();
    let grid = *psi0.grid();
    let cfg = preset.tdpsf_config(v)?;
    let model = cfg.model.clone() + preset.absorber(&grid);
    let prop = Propagator::new(grid, model, cfg.stepper)?;
    let mut psi = psi0.clone();
    prop.evolve(psi.values_mut(), 0.0, steps);
    if !psi.is_finite() {
        return Err(Error::NonFinite("absorbing-potential run".into()));
    }
    Ok((psi, start.elapsed().as_secs_f64()))
}

fn run_freewave(preset: &ExperimentPreset) -> Result<ExperimentOutput> {
    let grid = preset.grid()?;
    let bx = SubBox::cube(1, preset.error_box);
    let width = std::f64::consts::SQRT_2;
    let with_ap = preset.baselines.contains(&Baseline::AbsorbingPotential);
    let rows = sweep(preset, |v| {
        let psi0 = preset.initial_data(v, &grid);
        let norm0 = psi0.norm();
        let mut runs = Vec::new();
        let tdpsf = preset
            .tdpsf_config(v)
            .and_then(check_config)
            .and_then(|engine| run_tdpsf_observed(&engine, &psi0, |_, _| {}).map(|r| (engine, r)));
        let final_time = match &tdpsf {
            Ok((engine, _)) => engine.final_time(),
            Err(_) => (preset.tmax_at(v) / preset.tstep).floor() * preset.tstep,
        };
        let reference = free_gaussian_reference([0.0; 2], [v, 0.0], width, final_time, &grid);
        match (tdpsf, &reference) {
            (Ok((_, (psi, report))), Ok(r)) => {
                let t = report.final_time();
                let err = if t == final_time {
                    error_on_box(&psi, r, &bx, norm0)
                } else {
                    free_gaussian_reference([0.0; 2], [v, 0.0], width, t, &grid).and_then(|r| error_on_box(&psi, &r, &bx, norm0))
                };
                runs.push(RunRecord {
                    baseline: Baseline::Tdpsf,
                    velocity: Some(v),
                    status: status_of(&report),
                    wall_time: report.wall_time,
                    final_time: t,
                    error: err.ok(),
                    report: Some(report),
                });
            }
            (Err(e), _) => runs.push(failed(Baseline::Tdpsf, Some(v), e)),
            (Ok(_), Err(e)) => runs.push(failed(Baseline::Tdpsf, Some(v), Error::InvalidArgument(e.to_string()))),
        }
        if with_ap {
            let steps = (final_time / preset.dt).round() as usize;
            let rec = absorbing_run(preset, v, steps, &psi0).and_then(|(psi, wall)| {
                let r = reference.as_ref().map_err(|e| Error::InvalidArgument(e.to_string()))?;
                Ok(RunRecord {
                    baseline: Baseline::AbsorbingPotential,
                    velocity: Some(v),
                    status: RunStatus::Completed,
                    wall_time: wall,
                    final_time,
                    error: Some(error_on_box(&psi, r, &bx, norm0)?),
                    report: None,
                })
            });
            runs.push(rec.unwrap_or_else(|e| failed(Baseline::AbsorbingPotential, Some(v), e)));
        }
        runs
    });
    let runs: Vec<RunRecord> = rows.into_iter().flatten().collect();
    let mut series = Vec::new();
    for b in [Baseline::Tdpsf, Baseline::AbsorbingPotential] {
        let mut s = MetricSeries::new(format!("interior_error_{}", b.as_str()), "v", "error");
        s.points = runs
            .iter()
            .filter(|r| r.baseline == b)
            .filter_map(|r| Some((r.velocity?, r.error?)))
            .collect();
        if !s.points.is_empty() {
            series.push(s);
        }
    }
    Ok(ExperimentOutput { preset: preset.clone(), nu: velocity_factor(), series, runs, scalars: BTreeMap::new() })
}

fn run_soliton(preset: &ExperimentPreset) -> Result<ExperimentOutput> {
    let grid = preset.grid()?;
    let bx = SubBox::cube(1, preset.error_box);
    let runs: Vec<RunRecord> = sweep(preset, |v| {
        let psi0 = preset.initial_data(v, &grid);
        let norm0 = psi0.norm();
        let mut sup: f64 = 0.0;
        let mut metric_err = None;
        let result = preset.tdpsf_config(v).and_then(check_config).and_then(|engine| {
            run_tdpsf_observed(&engine, &psi0, |t, psi| {
                let r = soliton_reference(v, t, &grid);
                match error_on_box(psi, &r, &bx, norm0) {
                    Ok(e) => sup = sup.max(e),
                    Err(e) => metric_err = Some(e),
                }
            })
        });
        match (result, metric_err) {
            (Ok((_, report)), None) => RunRecord {
                baseline: Baseline::Tdpsf,
                velocity: Some(v),
                status: status_of(&report),
                wall_time: report.wall_time,
                final_time: report.final_time(),
                error: Some(sup),
                report: Some(report),
            },
            (Err(e), _) | (Ok(_), Some(e)) => failed(Baseline::Tdpsf, Some(v), e),
        }
    });
    let mut s = MetricSeries::new("E_of_v", "v", "E");
    s.points = runs.iter().filter_map(|r| Some((r.velocity?, r.error?))).collect();
    Ok(ExperimentOutput { preset: preset.clone(), nu: velocity_factor(), series: vec![s], runs, scalars: BTreeMap::new() })
}

/// Values of `f` at the points of `small` inside `bx`, in flattened order.
fn box_samples(f: &Field, small: &GridSpec, bx: &SubBox) -> Result<Vec<Complex64>> {
    let sub = if f.grid() == small { f.clone() } else { f.restrict(small)? };
    Ok((0..small.len())
        .filter(|&i| bx.contains(&small.position(i)[..small.dim()]))
        .map(|i| sub.values()[i])
        .collect())
}

fn box_norm(v: &[Complex64], cell: f64) -> f64 {
    (v.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell).sqrt()
}

fn box_error(a: &[Complex64], b: &[Complex64], cell: f64) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() * cell).sqrt()
}

struct Track {
    times: Vec<f64>,
    samples: Vec<Vec<Complex64>>,
}

fn run_longrange(preset: &ExperimentPreset) -> Result<ExperimentOutput> {
    let grid = preset.grid()?;
    let cell = grid.cell_volume();
    let bx = SubBox::cube(2, preset.error_box);
    let psi0 = preset.initial_data(0.0, &grid);
    let norm0 = psi0.norm();
    let every = StepperConfig::new(preset.dt)?.steps_in(preset.record_interval)?;
    let cfg = preset.tdpsf_config(1.0)?;
    let record_steps = (preset.tmax / preset.record_interval + 1e-9).floor() as usize;

    let tdpsf_run = || -> std::result::Result<(Track, RunReport), Error> {
        let engine: Tdpsf = check_config(cfg.clone())?;
        let mut track = Track { times: vec![0.0], samples: vec![box_samples(&psi0, &grid, &bx)?] };
        let per_event = engine.config().stepper.steps_in(preset.tstep)?;
        let events_per_record = every / per_event.max(1);
        let mut count = 0usize;
        let mut err = None;
        let (_, report) = run_tdpsf_observed(&engine, &psi0, |t, psi| {
            count += 1;
            if events_per_record > 0 && count % events_per_record == 0 {
                match box_samples(psi, &grid, &bx) {
                    Ok(s) => {
                        track.times.push(t);
                        track.samples.push(s);
                    }
                    Err(e) => err = Some(e),
                }
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        Ok((track, report))
    };
    let linear_run = |g: GridSpec, model: NonlinearityModel, tmax: f64| -> Result<(Track, f64)> {
        let start = std::time::Instant::now();
        let prop = Propagator::new(g, model, cfg.stepper)?;
        let mut psi = preset.initial_data(0.0, &g);
        let mut track = Track { times: vec![0.0], samples: vec![box_samples(&psi, &grid, &bx)?] };
        let n = (tmax / preset.record_interval + 1e-9).floor() as usize;
        for j in 1..=n.min(record_steps) {
            prop.evolve(psi.values_mut(), (j - 1) as f64 * preset.record_interval, every);
            if !psi.is_finite() {
                return Err(Error::NonFinite(format!("linear run at t = {}", j as f64 * preset.record_interval)));
            }
            track.times.push(j as f64 * preset.record_interval);
            track.samples.push(box_samples(&psi, &grid, &bx)?);
        }
        Ok((track, start.elapsed().as_secs_f64()))
    };
    let ap_model = cfg.model.clone() + preset.absorber(&grid);
    let distant_grid = make_grid(2, preset.distant_half_width, preset.distant_points)?;
    let validity = preset.distant_validity();

    let want = |b| preset.baselines.contains(&b);
    let ((t_res, a_res), d_res) = rayon::join(
        || {
            rayon::join(
                || want(Baseline::Tdpsf).then(tdpsf_run),
                || want(Baseline::AbsorbingPotential).then(|| linear_run(grid, ap_model.clone(), preset.tmax)),
            )
        },
        || {
            want(Baseline::DistantBoundary)
                .then(|| linear_run(distant_grid, preset.model(&distant_grid), validity.min(preset.tmax)))
        },
    );

    let mut runs = Vec::new();
    let mut series = Vec::new();
    let mut scalars = BTreeMap::new();
    scalars.insert("distant_validity_time".into(), validity);
    let distant = match d_res {
        Some(Ok((track, wall))) => {
            runs.push(RunRecord {
                baseline: Baseline::DistantBoundary,
                velocity: None,
                status: RunStatus::Completed,
                wall_time: wall,
                final_time: *track.times.last().unwrap_or(&0.0),
                error: None,
                report: None,
            });
            Some(track)
        }
        Some(Err(e)) => {
            runs.push(failed(Baseline::DistantBoundary, None, e));
            None
        }
        None => None,
    };
    let mut add = |b: Baseline, track: &Track, runs: &mut Vec<RunRecord>, mut rec: RunRecord| {
        let mut m = MetricSeries::new(format!("M_of_t_{}", b.as_str()), "t", "M");
        m.points = track.times.iter().zip(&track.samples).map(|(t, s)| (*t, box_norm(s, cell))).collect();
        scalars.insert(format!("{}_plateau_variation", b.as_str()), plateau_variation(&m, preset.plateau_window));
        scalars.insert(format!("{}_plateau_decrease", b.as_str()), plateau_decrease(&m, preset.plateau_window));
        series.push(m);
        if let Some(d) = &distant {
            let mut e = MetricSeries::new(format!("relative_error_{}", b.as_str()), "t", "error");
            for (t, s) in track.times.iter().zip(&track.samples) {
                if let Some(j) = d.times.iter().position(|u| (u - t).abs() < 1e-9) {
                    e.points.push((*t, box_error(s, &d.samples[j], cell) / norm0));
                }
            }
            if let Some(&(t, v)) = e.points.last() {
                scalars.insert(format!("{}_final_error", b.as_str()), v);
                scalars.insert(format!("{}_final_error_time", b.as_str()), t);
                rec.error = Some(v);
            }
            series.push(e);
        }
        runs.push(rec);
    };
    match t_res {
        Some(Ok((track, report))) => {
            let rec = RunRecord {
                baseline: Baseline::Tdpsf,
                velocity: None,
                status: status_of(&report),
                wall_time: report.wall_time,
                final_time: report.final_time(),
                error: None,
                report: Some(report),
            };
            add(Baseline::Tdpsf, &track, &mut runs, rec);
        }
        Some(Err(e)) => runs.push(failed(Baseline::Tdpsf, None, e)),
        None => {}
    }
    match a_res {
        Some(Ok((track, wall))) => {
            let rec = RunRecord {
                baseline: Baseline::AbsorbingPotential,
                velocity: None,
                status: RunStatus::Completed,
                wall_time: wall,
                final_time: *track.times.last().unwrap_or(&0.0),
                error: None,
                report: None,
            };
            add(Baseline::AbsorbingPotential, &track, &mut runs, rec);
        }
        Some(Err(e)) => runs.push(failed(Baseline::AbsorbingPotential, None, e)),
        None => {}
    }
    if let Some(d) = &distant {
        let mut m = MetricSeries::new("M_of_t_distant_boundary", "t", "M");
        m.points = d.times.iter().zip(&d.samples).map(|(t, s)| (*t, box_norm(s, cell))).collect();
        series.push(m);
    }
    Ok(ExperimentOutput { preset: preset.clone(), nu: velocity_factor(), series, runs, scalars })
}

/// `(max - min) / max` of the series over `window`.
pub fn plateau_variation(m: &MetricSeries, window: [f64; 2]) -> f64 {
    let vals: Vec<f64> = m.points.iter().filter(|p| p.0 >= window[0] && p.0 <= window[1]).map(|p| p.1).collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if vals.is_empty() || max <= 0.0 {
        return f64::NAN;
    }
    (max - min) / max
}

/// Relative drop from the first to the last sample in `window`.
pub fn plateau_decrease(m: &MetricSeries, window: [f64; 2]) -> f64 {
    let vals: Vec<f64> = m.points.iter().filter(|p| p.0 >= window[0] && p.0 <= window[1]).map(|p| p.1).collect();
    match (vals.first(), vals.last()) {
        (Some(a), Some(b)) if *a > 0.0 => (a - b) / a,
        _ => f64::NAN,
    }
}

/// Write `<preset>_<metric>.csv` per series and `<preset>_summary.toml`.
/// Returns the written paths.
pub fn emit_report(out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let prefix = out.preset.key();
    let mut written = Vec::new();
    for s in &out.series {
        let path = dir.join(format!("{prefix}_{}.csv", s.name));
        std::fs::write(&path, s.to_csv()).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let path = dir.join(format!("{prefix}_summary.toml"));
    std::fs::write(&path, summary_toml(out)?).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Machine-readable summary: parameters, ν, statuses, wall times and scalars.
pub fn summary_toml(out: &ExperimentOutput) -> Result<String> {
    let mut root = toml::Table::new();
    root.insert("nu".into(), toml::Value::Float(out.nu));
    root.insert("absorber_center".into(), toml::Value::Float(out.preset.absorber_center()));
    let params = toml::Table::try_from(&out.preset).map_err(|e| Error::config(e.to_string()))?;
    root.insert("parameters".into(), toml::Value::Table(params));
    let mut scalars = toml::Table::new();
    for (k, v) in &out.scalars {
        scalars.insert(k.clone(), toml::Value::Float(*v));
    }
    root.insert("results".into(), toml::Value::Table(scalars));
    let mut runs = toml::Table::new();
    for r in &out.runs {
        let mut t = toml::Table::new();
        t.insert("status".into(), toml::Value::String(r.status.as_str()));
        t.insert("wall_time".into(), toml::Value::Float(r.wall_time));
        t.insert("final_time".into(), toml::Value::Float(r.final_time));
        if let Some(e) = r.error {
            t.insert("error".into(), toml::Value::Float(e));
        }
        if let Some(rep) = &r.report {
            t.insert("events".into(), toml::Value::Integer(rep.events.len() as i64));
            t.insert("max_ambiguous_mass".into(), toml::Value::Float(rep.max_ambiguous_mass()));
            t.insert("outgoing_framelets".into(), toml::Value::Integer(rep.outgoing_count as i64));
            t.insert("ambiguous_framelets".into(), toml::Value::Integer(rep.ambiguous_count as i64));
            if let Some(e) = rep.first_exceedance {
                t.insert("first_exceedance_time".into(), toml::Value::Float(e.time));
            }
        }
        runs.insert(r.label(), toml::Value::Table(t));
    }
    root.insert("runs".into(), toml::Value::Table(runs));
    toml::to_string(&root).map_err(|e| Error::config(e.to_string()))
}

/// Envelope decay rate of the untruncated 1D dual window: the slope of
/// `-ln max_{|y|≥|x|} |γ(y)|` fitted where the envelope lies between
/// `1e-3` and `1e-11` of its peak.
pub fn measured_decay_rate(dual: &DualWindow) -> f64 {
    let g = dual.untruncated_1d();
    let n = g.len();
    let dx = dual.dx();
    let c = n / 2;
    let half = n / 2;
    let mut mag: Vec<f64> = (0..half).map(|j| g[c + j].abs().max(g[c - j].abs())).collect();
    for j in (0..half.saturating_sub(1)).rev() {
        mag[j] = mag[j].max(mag[j + 1]);
    }
    let peak = mag[0];
    let pts: Vec<(f64, f64)> = mag
        .iter()
        .enumerate()
        .filter(|(_, m)| **m <= 1e-3 * peak && **m >= 1e-11 * peak)
        .map(|(j, m)| (j as f64 * dx, m.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let nf = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    -sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagate::{free_flow_step, split_step_evolve};

    #[test]
    fn gaussian_reference_at_zero_is_initial_state() {
        let grid = make_grid(1, 20.0, 256).unwrap();
        let f = free_gaussian_reference([1.0, 0.0], [2.0, 0.0], 1.5, 0.0, &grid).unwrap();
        let g = Field::from_fn(grid, |x| Complex64::from_polar((-(x[0] - 1.0).powi(2) / 4.5).exp(), 2.0 * (x[0] - 1.0)));
        assert!(f.sub(&g).unwrap().norm() < 1e-14);
    }

    #[test]
    fn gaussian_reference_matches_spectral_flow() {
        let grid = make_grid(1, 40.0, 1024).unwrap();
        let f0 = free_gaussian_reference([-5.0, 0.0], [3.0, 0.0], 1.0, 0.0, &grid).unwrap();
        let t = 2.0;
        let exact = free_gaussian_reference([-5.0, 0.0], [3.0, 0.0], 1.0, t, &grid).unwrap();
        let spectral = free_flow_step(&f0, t);
        let err = exact.values().iter().zip(spectral.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        assert!((exact.norm() - f0.norm()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_reference_2d_matches_spectral_flow() {
        let grid = make_grid(2, 12.8, 128).unwrap();
        let f0 = free_gaussian_reference([1.0, -1.0], [1.0, -1.0], 1.2, 0.0, &grid).unwrap();
        let exact = free_gaussian_reference([1.0, -1.0], [1.0, -1.0], 1.2, 0.5, &grid).unwrap();
        let spectral = free_flow_step(&f0, 0.5);
        let err = exact.values().iter().zip(spectral.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn under_resolved_gaussian_rejected() {
        let grid = make_grid(1, 10.0, 64).unwrap();
        assert!(free_gaussian_reference([0.0; 2], [0.0; 2], 0.1, 0.0, &grid).is_err());
        assert!(free_gaussian_reference([0.0; 2], [9.0, 0.0], 1.0, 0.0, &grid).is_err());
    }

    #[test]
    fn soliton_at_rest_is_sech() {
        let grid = make_grid(1, 25.6, 512).unwrap();
        let f = soliton_reference(0.0, 0.0, &grid);
        for (i, v) in f.values().iter().enumerate() {
            let x = grid.coordinate(i);
            assert!((v - Complex64::new(std::f64::consts::FRAC_1_SQRT_2 / x.cosh(), 0.0)).norm() < 1e-15);
        }
        let moved = soliton_reference(0.5, 3.0, &grid);
        assert!((moved.norm() - f.norm()).abs() < 1e-12);
    }

    #[test]
    fn soliton_formula_matches_propagator() {
        let grid = make_grid(1, 25.6, 1024).unwrap();
        let v = 1.5;
        let f0 = soliton_reference(v, 0.0, &grid);
        let model = NonlinearityModel::CubicFocusing { g: soliton_coupling() };
        let cfg = StepperConfig::new(1e-4).unwrap();
        let f1 = split_step_evolve(&f0, &model, &cfg, 1.0).unwrap();
        let exact = soliton_reference(v, 1.0, &grid);
        let err = f1.sub(&exact).unwrap().norm() / f0.norm();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn error_on_box_is_local() {
        let grid = make_grid(1, 10.0, 128).unwrap();
        let f = Field::from_fn(grid, |x| Complex64::new(x[0].sin(), 0.0));
        let bx = SubBox::cube(1, 4.0);
        assert_eq!(error_on_box(&f, &f, &bx, 1.0).unwrap(), 0.0);
        let g = Field::from_fn(grid, |x| f.values()[grid.flatten([((x[0] + 10.0) / grid.dx()).round() as usize, 0])] + if x[0].abs() > 5.0 { 3.0 } else { 0.0 });
        assert_eq!(error_on_box(&g, &f, &bx, 1.0).unwrap(), 0.0);
        assert!(error_on_box(&f, &f, &bx, 0.0).is_err());
    }

    #[test]
    fn presets_build_valid_configs() {
        for name in PresetName::ALL {
            let p = ExperimentPreset::new(name, Scale::Ci);
            p.validate().unwrap();
            let v = p.velocities.first().copied().unwrap_or(1.0);
            let cfg = p.tdpsf_config(v).unwrap();
            assert!(cfg.classifier.problems().is_empty(), "{name}: {:?}", cfg.classifier.problems());
        }
    }

    #[test]
    fn overrides_apply_and_reject_unknown_keys() {
        let p = ExperimentPreset::new(PresetName::Soliton1d, Scale::Ci);
        let q = p.with_overrides("velocities = [2.0, 4.0]\ntstep = 0.008\nworkers = 2").unwrap();
        assert_eq!(q.velocities, vec![2.0, 4.0]);
        assert_eq!(q.tstep, 0.008);
        assert_eq!(q.workers, 2);
        assert!(matches!(p.with_overrides("bogus = 1"), Err(Error::Config(_))));
        assert!(p.with_overrides("workers = 0").is_err());
        let r = p.with_overrides("absorber_center = 25.6").unwrap();
        assert_eq!(r.absorber_center(), 25.6);
    }

    #[test]
    fn csv_schema() {
        let mut s = MetricSeries::new("E_of_v", "v", "E");
        s.points = vec![(1.0, 0.5)];
        assert_eq!(s.to_csv(), "v,E\n1.00000000000000000e0,5.00000000000000000e-1\n");
    }

    #[test]
    fn empty_output_writes_summary_only() {
        let dir = tempfile::tempdir().unwrap();
        let out = ExperimentOutput {
            preset: ExperimentPreset::new(PresetName::Soliton1d, Scale::Ci),
            nu: 2.0,
            series: Vec::new(),
            runs: Vec::new(),
            scalars: BTreeMap::new(),
        };
        let files = emit_report(&out, dir.path()).unwrap();
        assert_eq!(files.len(), 1);
        assert!(files[0].ends_with("soliton1d_summary.toml"));
    }
}
