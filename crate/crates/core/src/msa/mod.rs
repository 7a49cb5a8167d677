//! Multi-scale resonance analysis at desk scale.
//!
//! A run fixes `(θ, E)` and a finite window, then builds scale by scale the
//! resonant sets, the case flag, the blocks around the next centers and the
//! tracked root `θ_s`. Asymptotic-mode schedules are supported for the arithmetic
//! and for scale-1 structures; anything deeper uses the desk schedule.

pub mod blocks;
pub mod estimates;
pub mod good;
pub mod resonance;
pub mod schedule;
pub mod theta;

use serde::Serialize;
use thiserror::Error;

use crate::greens::GreenError;
use crate::lattice::{GeometryError, HalfPoint, Site};
use crate::linalg::{c, C64};
use crate::model::{potential_preimage, ModelError, ModelSpec};

pub use blocks::{closure_report, construct_blocks, BlockFamily, ClosureReport, SeparationPolicy};
pub use estimates::{verify_statement_estimates, EstimateReport, EstimateTarget};
pub use good::{check_good, GoodVerdict, GoodWitness};
pub use resonance::{classify_case, detect_resonances, Classification, ResonanceStructure, Window};
pub use schedule::{build_schedule, Case, DeskOverrides, ScaleSchedule, ScheduleMode, ScheduleSpec};
pub use theta::{track_theta, ThetaOptions, ThetaStep, ThetaTrace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MsaError {
    #[error("schedule overflows even in log form at scale {s}")]
    ScheduleOverflow { s: usize },
    #[error("invalid schedule or structure input: {0}")]
    InvalidSchedule(String),
    #[error("blocks at {a:?} and {b:?} are {distance} apart, need more than {required}")]
    SeparationViolated { a: HalfPoint, b: HalfPoint, distance: i64, required: i64 },
    #[error("block shape did not stabilise within {iterations} rounds")]
    ShapeNonConvergence { iterations: usize },
    #[error("no root of det S_{s} in the disc |z − {center}| < {radius:e}")]
    NoRootInWindow { s: usize, center: C64, radius: f64 },
    #[error("scale {s}: Newton found {roots} roots but the winding number is {winding}")]
    WindingMismatch { s: usize, roots: usize, winding: i64 },
    #[error("scale {s}: det S has a pole on the search contour near {at}")]
    PoleOnContour { s: usize, at: C64 },
    #[error("site {site:?} lies within {margin} of the window edge (radius {window_radius})")]
    WindowTooSmall { site: Site, margin: i64, window_radius: i64 },
    #[error("set is not {s}-good: {witness:?}")]
    NotGood { s: usize, witness: Box<Option<GoodWitness>> },
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// All structures of one `(θ, E)` point, scales `0..=s`.
#[derive(Clone, Debug, Serialize)]
pub struct MsaStack {
    pub theta: f64,
    pub energy: f64,
    pub theta0: C64,
    pub window: Window,
    pub schedule: ScaleSchedule,
    /// Scale `s` at index `s`.
    pub resonances: Vec<ResonanceStructure>,
    /// Scale `s ≥ 1` at index `s − 1`.
    pub blocks: Vec<BlockFamily>,
    pub trace: ThetaTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StackOptions {
    pub s_max: usize,
    pub separation: SeparationPolicy,
    pub theta: ThetaOptions,
}

impl Default for StackOptions {
    fn default() -> Self {
        StackOptions { s_max: 1, separation: SeparationPolicy::Enforce, theta: ThetaOptions::default() }
    }
}

fn step_zero(model: &ModelSpec, theta0: C64, energy: f64) -> ThetaStep {
    let residual = (model.potential.value(theta0) - energy).norm();
    ThetaStep {
        s: 0,
        theta: theta0,
        residual,
        tolerance: 0.0,
        window: theta::RootWindow { center: theta0, radius: 0.0, expected: 1 },
        winding: 1,
        poles: 0,
        roots: vec![theta0],
        winding_ok: true,
        pairing_residual: None,
    }
}

/// Builds resonances, blocks and `θ_s` for scales `0..=opts.s_max`.
pub fn build_stack(model: &ModelSpec, schedule: &ScaleSchedule, theta: f64, energy: f64, window: Window, opts: &StackOptions) -> Result<MsaStack, MsaError> {
    if opts.s_max > schedule.s_max {
        return Err(MsaError::InvalidSchedule(format!("schedule stops at s = {}, asked for {}", schedule.s_max, opts.s_max)));
    }
    let d = model.dim;
    let omega = &model.frequency.omega;
    let theta0 = potential_preimage(&model.potential, c(energy, 0.0))?;
    let mut offset = HalfPoint::origin(d);
    let p0 = window.lattice_points(&offset)?;
    let mut res = detect_resonances(theta, theta0, omega, 0, schedule.log_delta(0), schedule.log_tilde_threshold(0), p0, window.clone(), offset.clone());
    let mut resonances = Vec::new();
    let mut blocks: Vec<BlockFamily> = Vec::new();
    let mut trace = ThetaTrace { steps: vec![step_zero(model, theta0, energy)] };
    let mut core_shape = vec![HalfPoint::origin(d)];
    for s in 1..=opts.s_max {
        let class = classify_case(&res.q_tilde_minus, &res.q_plus, schedule.separation_radius(s - 1), d);
        res.classification = Some(class.clone());
        let centers = blocks::next_centers(&res, &class);
        core_shape = blocks::next_core_shape(&core_shape, class.case, &class.l);
        offset = offset.add(&HalfPoint::from_twice(class.l.0.clone()));
        let lower: Vec<&BlockFamily> = blocks.iter().collect();
        let fam = construct_blocks(s, &centers, class.case, schedule.block_radii(s, class.case), core_shape.clone(), &lower, opts.separation)?;
        let prev = trace.steps[s - 1].theta;
        let candidate = (class.case == Case::C2).then(|| prev - HalfPoint::from_twice(class.l.0.clone()).dot(omega));
        let step = track_theta(
            model,
            &fam.shapes[2],
            &fam.core_shape,
            c(energy, 0.0),
            s,
            prev,
            theta0,
            schedule.log_delta(s - 1),
            schedule.theta_window_exponent(),
            candidate,
            &opts.theta,
        )?;
        let theta_s = step.theta;
        trace.steps.push(step);
        resonances.push(res);
        res = detect_resonances(theta, theta_s, omega, s, schedule.log_delta(s), schedule.log_tilde_threshold(s), fam.centers.clone(), window.clone(), offset.clone());
        blocks.push(fam);
    }
    resonances.push(res);
    Ok(MsaStack { theta, energy, theta0, window, schedule: schedule.clone(), resonances, blocks, trace })
}
