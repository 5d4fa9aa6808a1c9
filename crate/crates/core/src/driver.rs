//! The filtering loop: evolve by `Tstep`, remove outgoing framelets, watch
//! the ambiguous ones.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::classify::{build_filter_sets, ClassifierConfig, FilterSets, NormChoice};
use crate::error::{Error, Result};
use crate::frame::{compute_dual_window_with, DualOptions, Frame, FrameParams, Patch};
use crate::lattice::{hs_norm, l2_norm_on_box, Field, GridSpec, SubBox};
use crate::propagate::{NonlinearityModel, Propagator, StepperConfig};

/// What to do once the ambiguous mass exceeds `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmbiguousPolicy {
    /// Stop and report.
    #[default]
    Halt,
    /// Keep running and report the first exceedance.
    Record,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdpsfConfig {
    pub grid: GridSpec,
    pub frame: FrameParams,
    pub classifier: ClassifierConfig,
    pub stepper: StepperConfig,
    pub model: NonlinearityModel,
    pub dual: DualOptions,
    pub policy: AmbiguousPolicy,
    /// Skip the subtraction entirely (OUT treated as empty).
    pub disable_filter: bool,
}

/// A validated configuration with its frame, dual window and filter sets.
#[derive(Clone, Debug)]
pub struct Tdpsf {
    cfg: TdpsfConfig,
    frame: Frame,
    sets: Arc<FilterSets>,
    propagator: Propagator,
    steps_per_event: usize,
    events: usize,
    weights: Vec<f64>,
}

impl Tdpsf {
    pub fn config(&self) -> &TdpsfConfig {
        &self.cfg
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn filter_sets(&self) -> &FilterSets {
        &self.sets
    }

    pub fn nu(&self) -> f64 {
        self.cfg.classifier.nu
    }

    pub fn truncation_radius(&self) -> f64 {
        self.frame.dual().truncation_radius()
    }

    pub fn events(&self) -> usize {
        self.events
    }

    /// Time reached after the last filter event.
    pub fn final_time(&self) -> f64 {
        self.events as f64 * self.cfg.classifier.tstep
    }

    pub fn interior_box(&self) -> SubBox {
        SubBox::cube(self.cfg.grid.dim(), self.cfg.classifier.lb)
    }

    fn norm(&self, f: &Field) -> Result<f64> {
        match self.cfg.classifier.norm {
            NormChoice::L2 => Ok(f.norm()),
            NormChoice::H1 => hs_norm(f, 1.0),
        }
    }
}

/// Validate every constraint and precompute the frame and filter sets.
pub fn check_config(cfg: TdpsfConfig) -> Result<Tdpsf> {
    let c = &cfg.classifier;
    let mut problems = c.problems();
    let grid = cfg.grid;
    if c.dim != grid.dim() {
        problems.push(format!("classifier dimension {} differs from grid dimension {}", c.dim, grid.dim()));
    }
    if (c.dx - grid.dx()).abs() > 1e-12 * grid.dx() {
        problems.push(format!("classifier dx = {} differs from grid dx = {}", c.dx, grid.dx()));
    }
    if c.frame != cfg.frame {
        problems.push("classifier frame differs from the filter frame".into());
    }
    if c.outer() > grid.half_width() * (1.0 + 1e-12) {
        problems.push(format!("Lb + wb = {} exceeds the grid half width {}", c.outer(), grid.half_width()));
    }
    let steps_per_event = match cfg.stepper.steps_in(c.tstep) {
        Ok(0) => {
            problems.push(format!("Tstep = {} holds no time steps", c.tstep));
            0
        }
        Ok(n) => n,
        Err(_) => {
            problems.push(format!("Tstep = {} is not a multiple of δt = {}", c.tstep, cfg.stepper.dt));
            0
        }
    };
    if let Err(e) = cfg.frame.lattice(&grid) {
        problems.push(e.to_string());
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let dual = compute_dual_window_with(&cfg.frame, &grid, cfg.dual)?;
    let frame = Frame::new(grid, Arc::new(dual))?;
    let sets = build_filter_sets(c, &grid)?;
    let propagator = Propagator::new(grid, cfg.model.clone(), cfg.stepper)?;
    let events = (c.tmax / c.tstep * (1.0 + 1e-12)).floor() as usize;

    let ks = cfg.frame.ks;
    let sigma = cfg.frame.sigma;
    let n = grid.dim() as f64;
    let probe = frame.empty_coefficients();
    let weights = (0..frame.bins())
        .map(|bin| match c.norm {
            NormChoice::L2 => 1.0,
            NormChoice::H1 => {
                let b = probe.b_of(bin);
                let k2: f64 = b[..grid.dim()].iter().map(|v| (*v as f64 * ks).powi(2)).sum();
                1.0 + k2 + n / (2.0 * sigma * sigma)
            }
        })
        .collect();
    Ok(Tdpsf { cfg, frame, sets: Arc::new(sets), propagator, steps_per_event, events, weights })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterEvent {
    pub time: f64,
    /// `‖P_OUT ψ‖₂` of the subtracted component.
    pub filtered_mass: f64,
    /// Ambiguous-framelet mass relative to `‖ψ0‖` in the configured norm.
    pub ambiguous_mass: f64,
    /// `‖ψ‖₂` on IBox after filtering.
    pub interior_norm: f64,
    /// `‖ψ‖₂` on the whole grid after filtering.
    pub total_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exceedance {
    pub time: f64,
    pub value: f64,
    pub epsilon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Termination {
    Completed,
    AmbiguousMassExceeded(Exceedance),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub events: Vec<FilterEvent>,
    pub termination: Termination,
    /// First exceedance, also set when the policy lets the run continue.
    pub first_exceedance: Option<Exceedance>,
    pub wall_time: f64,
    pub nu: f64,
    pub initial_norm: f64,
    /// Fraction of `‖ψ0‖₂` outside IBox.
    pub initial_exterior_fraction: f64,
    pub outgoing_count: usize,
    pub ambiguous_count: usize,
}

impl RunReport {
    pub fn final_time(&self) -> f64 {
        self.events.last().map(|e| e.time).unwrap_or(0.0)
    }

    pub fn max_ambiguous_mass(&self) -> f64 {
        self.events.iter().map(|e| e.ambiguous_mass).fold(0.0, f64::max)
    }

    pub fn total_filtered_mass(&self) -> f64 {
        self.events.iter().map(|e| e.filtered_mass).sum()
    }
}

pub fn run_tdpsf(engine: &Tdpsf, psi0: &Field) -> Result<(Field, RunReport)> {
    run_tdpsf_observed(engine, psi0, |_, _| {})
}

/// Like [`run_tdpsf`], calling `observer(t, ψ)` after each filter event.
pub fn run_tdpsf_observed(
    engine: &Tdpsf,
    psi0: &Field,
    mut observer: impl FnMut(f64, &Field),
) -> Result<(Field, RunReport)> {
    let start = Instant::now();
    let cfg = &engine.cfg;
    if psi0.grid() != &cfg.grid {
        return Err(Error::GridMismatch);
    }
    if !psi0.is_finite() {
        return Err(Error::NonFinite("initial data".into()));
    }
    let initial_norm = engine.norm(psi0)?;
    let l2 = psi0.norm();
    let interior0 = l2_norm_on_box(psi0, &engine.interior_box())?;
    let exterior = if l2 > 0.0 { (l2 * l2 - interior0 * interior0).max(0.0).sqrt() / l2 } else { 0.0 };

    let sets = &*engine.sets;
    let positions: Vec<[i32; 2]> = {
        let mut p: std::collections::BTreeSet<[i32; 2]> = sets.amb.position_set();
        if !cfg.disable_filter {
            p.extend(sets.out.positions().copied());
        }
        p.into_iter().collect()
    };
    let synth_norm = engine.frame.dual().synthesis_norm();
    let eps = cfg.classifier.epsilon;
    let tstep = cfg.classifier.tstep;

    let mut report = RunReport {
        events: Vec::with_capacity(engine.events),
        termination: Termination::Completed,
        first_exceedance: None,
        wall_time: 0.0,
        nu: engine.nu(),
        initial_norm,
        initial_exterior_fraction: exterior,
        outgoing_count: sets.out.len(),
        ambiguous_count: sets.amb.len(),
    };
    let mut psi = psi0.clone();
    let ibox = engine.interior_box();
    const CHUNK: usize = 64;

    for n in 1..=engine.events {
        let t0 = (n - 1) as f64 * tstep;
        let time = n as f64 * tstep;
        engine.propagator.evolve(psi.values_mut(), t0, engine.steps_per_event);
        if !psi.is_finite() {
            report.wall_time = start.elapsed().as_secs_f64();
            return Err(Error::Blowup { step: n * engine.steps_per_event, time, report: Box::new(report) });
        }

        let mut amb_sum = 0.0;
        let mut delta: Option<Field> = None;
        for chunk in positions.chunks(CHUNK) {
            let parts: Vec<(f64, Option<Patch>)> = chunk
                .par_iter()
                .map(|a| {
                    let mut c = engine.frame.analyze_position(&psi, a);
                    let amb: f64 = sets.amb.bins(a).iter().map(|&k| c[k].norm_sqr() * engine.weights[k]).sum();
                    let out_bins = if cfg.disable_filter { &[][..] } else { sets.out.bins(a) };
                    if out_bins.is_empty() {
                        return (amb, None);
                    }
                    let mut keep = vec![false; c.len()];
                    out_bins.iter().for_each(|&k| keep[k] = true);
                    c.iter_mut().zip(&keep).filter(|(_, k)| !**k).for_each(|(v, _)| *v = Complex64::new(0.0, 0.0));
                    (amb, Some(engine.frame.synthesize_position(a, &c)))
                })
                .collect();
            for (amb, patch) in parts {
                amb_sum += amb;
                if let Some(p) = patch {
                    let d = delta.get_or_insert_with(|| Field::zeros(cfg.grid));
                    engine.frame.accumulate(d, &p, 1.0);
                }
            }
        }
        let filtered_mass = match &delta {
            Some(d) => {
                psi.values_mut().iter_mut().zip(d.values()).for_each(|(p, d)| *p -= d);
                d.norm()
            }
            None => 0.0,
        };
        let amb_abs = synth_norm * amb_sum.sqrt();
        let ambiguous_mass = if initial_norm > 0.0 { amb_abs / initial_norm } else { amb_abs };
        report.events.push(FilterEvent {
            time,
            filtered_mass,
            ambiguous_mass,
            interior_norm: l2_norm_on_box(&psi, &ibox)?,
            total_norm: psi.norm(),
        });
        observer(time, &psi);
        if ambiguous_mass > eps {
            let ex = Exceedance { time, value: ambiguous_mass, epsilon: eps };
            report.first_exceedance.get_or_insert(ex);
            if cfg.policy == AmbiguousPolicy::Halt {
                report.termination = Termination::AmbiguousMassExceeded(ex);
                break;
            }
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((psi, report))
}
