//! Per-frame Adam loop with tiered learning rates, decay on plateau,
//! centre-shifting and convergence detection; first-frame initialisation and
//! warm-started sequence processing.

use std::time::Instant;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::camera::{project_curve, shifts_for_camera, CameraTriplet, FrozenMask, ProjectedCurve};
use crate::curve::{
    centre_shift, orthonormal_frame, sample_start_index, CentreShiftConfig, Curvature,
    CurveConstraints, CurveState, Vec3,
};
use crate::diffengine::{Group, Layout, ParameterSet};
use crate::error::{Error, Result};
use crate::losses::{
    LossBreakdown, LossScaling, LossUnits, LossWeights, PreviousFrameSnapshot, TemporalState,
};
use crate::objective::{FrameContext, MaskMode};
use crate::raster::ImageTriplet;
use crate::render::{RenderLimits, RenderParams};
use crate::scoring::ScoreProfile;

/// Multipliers turning a group rate into a per-scalar rate, so one rate
/// moves scalars of different units by comparable image-space amounts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnitScales {
    pub position: f64,
    pub frame: f64,
    pub curvature: f64,
    pub length: f64,
    pub sigma: f64,
    pub iota: f64,
    pub rho: f64,
    /// Camera intrinsics and extrinsics, on top of the finite-difference scale.
    pub camera: f64,
    pub shift: f64,
}

impl Default for UnitScales {
    fn default() -> Self {
        Self {
            position: 1.0,
            frame: 10.0,
            curvature: 10.0,
            length: 10.0,
            sigma: 100.0,
            iota: 10.0,
            rho: 10.0,
            camera: 1.0,
            shift: 1e4,
        }
    }
}

impl UnitScales {
    /// Per-scalar multipliers for `layout`.
    pub fn expand(&self, layout: &Layout) -> Vec<f64> {
        (0..layout.len())
            .map(|i| {
                if i < Layout::T {
                    self.position
                } else if i < Layout::K {
                    self.frame
                } else if i < layout.length_raw() {
                    self.curvature
                } else if i == layout.length_raw() {
                    self.length
                } else if i < layout.iota() {
                    self.sigma
                } else if i < layout.rho() {
                    self.iota
                } else if i < layout.camera() {
                    self.rho
                } else if i >= layout.camera() + 45 {
                    self.shift
                } else {
                    self.camera * layout.fd_scale(i)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lambda_p: f64,
    pub lambda_r: f64,
    pub lambda_eta: f64,
    pub lambda_min: f64,
    pub decay: f64,
    pub patience: usize,
    /// A step improves only when it lowers the best loss by more than this
    /// fraction of it; 0 makes any strict decrease count.
    pub improvement_threshold: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_steps_first: usize,
    pub max_steps_frame: usize,
    /// Window (steps) and relative tolerance of the convergence test.
    pub window: usize,
    pub tolerance: f64,
    /// Length (mm) of the first-frame straight line and the number of steps
    /// over which it grows to `l_min`.
    pub initial_length: f64,
    pub growth_steps: usize,
    pub unit_scales: UnitScales,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lambda_p: 1e-3,
            lambda_r: 1e-4,
            lambda_eta: 1e-5,
            lambda_min: 1e-6,
            decay: 0.8,
            patience: 5,
            improvement_threshold: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_steps_first: 2000,
            max_steps_frame: 500,
            window: 20,
            tolerance: 1e-6,
            initial_length: 0.2,
            growth_steps: 300,
            unit_scales: UnitScales::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_p > self.lambda_r
            && self.lambda_r > self.lambda_eta
            && self.lambda_eta >= self.lambda_min)
            || !(self.lambda_min > 0.0)
        {
            return Err(Error::Config(
                "learning rates must satisfy lambda_p > lambda_r > lambda_eta >= lambda_min > 0"
                    .into(),
            ));
        }
        if !(self.decay > 0.0 && self.decay < 1.0)
            || self.patience == 0
            || !(0.0..1.0).contains(&self.improvement_threshold)
        {
            return Err(Error::Config(
                "decay must lie in (0, 1) and patience be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return Err(Error::Config("invalid Adam moment coefficients".into()));
        }
        if self.window == 0 || !(self.tolerance >= 0.0) || !(self.initial_length > 0.0) {
            return Err(Error::Config(
                "invalid convergence or initialisation settings".into(),
            ));
        }
        Ok(())
    }

    fn initial_rates(&self) -> [f64; 3] {
        [self.lambda_p, self.lambda_r, self.lambda_eta]
    }
}

/// Components switched off for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationToggles {
    /// (a) camera scalars stay fixed.
    pub no_camera: bool,
    /// (b) rendering parameters stay fixed.
    pub no_render: bool,
    /// (c) no centre-shifting.
    pub no_centre_shift: bool,
    /// (d) scores loss weight zeroed.
    pub no_scores: bool,
    /// (e) raw images used as the target.
    pub no_masking: bool,
    /// (f) smoothness and temporal weights zeroed.
    pub no_regularization: bool,
}

impl AblationToggles {
    /// Sets the toggle for variant letter `a`..`f`.
    pub fn enable(&mut self, letter: char) -> Result<()> {
        match letter.to_ascii_lowercase() {
            'a' => self.no_camera = true,
            'b' => self.no_render = true,
            'c' => self.no_centre_shift = true,
            'd' => self.no_scores = true,
            'e' => self.no_masking = true,
            'f' => self.no_regularization = true,
            other => return Err(Error::Config(format!("unknown ablation variant '{other}'"))),
        }
        Ok(())
    }

    pub fn from_letters(letters: &str) -> Result<Self> {
        let mut t = Self::default();
        for c in letters.chars().filter(|c| !c.is_whitespace() && *c != ',') {
            t.enable(c)?;
        }
        Ok(t)
    }

    pub fn letters(&self) -> String {
        [
            (self.no_camera, 'a'),
            (self.no_render, 'b'),
            (self.no_centre_shift, 'c'),
            (self.no_scores, 'd'),
            (self.no_masking, 'e'),
            (self.no_regularization, 'f'),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, c)| *c)
        .collect()
    }

    pub fn apply(&self, w: &LossWeights) -> LossWeights {
        let mut out = *w;
        if self.no_scores {
            out.sc = 0.0;
        }
        if self.no_regularization {
            out.sm = 0.0;
            out.t = 0.0;
        }
        out
    }
}

/// Model settings shared by every frame of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSettings {
    pub constraints: CurveConstraints,
    pub limits: RenderLimits,
    pub weights: LossWeights,
    pub units: LossUnits,
    pub theta: f64,
    pub centre_shift: CentreShiftConfig,
    /// Camera scalars excluded from optimisation when (a) is off.
    pub frozen: FrozenMask,
    /// Rendering parameters of the first frame.
    pub initial_render: RenderParams,
}

impl Default for FrameSettings {
    fn default() -> Self {
        Self {
            constraints: CurveConstraints::default(),
            limits: RenderLimits::default(),
            weights: LossWeights::default(),
            units: LossUnits::default(),
            theta: 0.1,
            centre_shift: CentreShiftConfig::default(),
            frozen: FrozenMask::shifts_only(),
            initial_render: RenderParams::uniform(5.0, 0.5, 1.0),
        }
    }
}

impl FrameSettings {
    pub fn validate(&self) -> Result<()> {
        self.constraints.validate()?;
        self.limits.validate()?;
        self.weights.validate()?;
        self.centre_shift.validate()?;
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!(
                "theta = {} must lie in (0, 1)",
                self.theta
            )));
        }
        self.initial_render.validate(&self.limits)
    }
}

/// Learning rates of the three groups with decay on plateau and a floor.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSchedule {
    rates: [f64; 3],
    floor: f64,
    decay: f64,
    patience: usize,
    threshold: f64,
    stale: usize,
    best: f64,
}

impl RateSchedule {
    pub fn new(cfg: &OptimizerConfig) -> Self {
        Self {
            rates: cfg.initial_rates(),
            floor: cfg.lambda_min,
            decay: cfg.decay,
            patience: cfg.patience,
            threshold: cfg.improvement_threshold,
            stale: 0,
            best: f64::INFINITY,
        }
    }

    /// Rates in [`Group::ALL`] order.
    pub fn rates(&self) -> [f64; 3] {
        self.rates
    }

    pub fn rate(&self, g: Group) -> f64 {
        self.rates[g as usize]
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Records one step's loss; returns true when a decay was applied.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best - self.threshold * self.best.abs() || !self.best.is_finite() {
            self.best = loss;
            self.stale = 0;
            return false;
        }
        self.stale += 1;
        if self.stale < self.patience {
            return false;
        }
        self.stale = 0;
        for r in &mut self.rates {
            *r = (*r * self.decay).max(self.floor);
        }
        true
    }

    pub fn at_floor(&self) -> bool {
        self.rates.iter().all(|&r| r <= self.floor)
    }
}

/// Adam state over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(len: usize, cfg: &OptimizerConfig) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }

    /// One update; scalars whose rate is zero are left untouched, moments
    /// included.
    pub fn step(&mut self, x: &mut [f64], grad: &[f64], rates: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..x.len() {
            if rates[i] == 0.0 {
                continue;
            }
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x[i] -= rates[i] * mh / (vh.sqrt() + self.epsilon);
        }
    }

    /// Moves the curvature moments along with a centre-shift of `shift`
    /// vertices; vacated entries restart from zero.
    pub fn shift_curvature(&mut self, layout: &Layout, shift: i64) {
        let n = layout.n as i64;
        for buf in [&mut self.m, &mut self.v] {
            let old: Vec<f64> = buf[Layout::K..layout.length_raw()].to_vec();
            for i in 0..n {
                let src = i + shift;
                for a in 0..2 {
                    buf[Layout::K + 2 * i as usize + a] = if (0..n).contains(&src) {
                        old[2 * src as usize + a]
                    } else {
                        0.0
                    };
                }
            }
        }
    }
}

/// Linear growth of a fixed length override during the first frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthSchedule {
    pub initial: f64,
    pub target: f64,
    pub steps: usize,
}

impl GrowthSchedule {
    /// Length imposed at `step`, or `None` once the schedule has finished.
    pub fn length_at(&self, step: usize) -> Option<f64> {
        if step >= self.steps {
            return None;
        }
        let f = step as f64 / self.steps as f64;
        Some(self.initial + f * (self.target - self.initial))
    }
}

/// A complete starting point for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Start {
    pub state: CurveState,
    pub length_raw: f64,
    pub render: RenderParams,
    pub cameras: CameraTriplet,
    /// Length override schedule; only set for the first frame.
    pub growth: Option<GrowthSchedule>,
}

/// Cropped images of one frame plus what carries over from the previous one.
#[derive(Debug, Clone)]
pub struct FrameInputs {
    pub frame: usize,
    pub images: ImageTriplet,
    pub crop_offset: [[f64; 2]; 3],
    pub snapshot: Option<PreviousFrameSnapshot>,
}

/// One optimisation step as reported to a progress sink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProgressEvent {
    pub frame: usize,
    pub step: usize,
    pub losses: LossBreakdown,
    pub rates: [f64; 3],
    pub decayed: bool,
    pub n0: usize,
    pub shift: i64,
}

/// Best solution found for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSolution {
    pub frame: usize,
    pub state: CurveState,
    pub length_raw: f64,
    pub cameras: CameraTriplet,
    pub render: RenderParams,
    pub losses: LossBreakdown,
    pub scores: ScoreProfile,
    /// Step at which the solution was observed, and steps run in total.
    pub best_step: usize,
    pub steps: usize,
    pub wall_time: f64,
    pub converged: bool,
    pub crop_offset: [[f64; 2]; 3],
    pub final_rates: [f64; 3],
}

impl FrameSolution {
    pub fn warm_start(&self) -> Start {
        Start {
            state: self.state.clone(),
            length_raw: self.length_raw,
            render: self.render,
            cameras: self.cameras,
            growth: None,
        }
    }

    pub fn snapshot(&self) -> PreviousFrameSnapshot {
        TemporalState {
            length: self.state.length,
            k: self.state.k.clone(),
            p: self.state.p.clone(),
            camera: self.cameras.to_array().to_vec(),
            render: self.render,
        }
    }
}

/// Optimisation stopped on a non-finite value.
#[derive(Debug, thiserror::Error)]
#[error("frame {frame} failed at step {step}: {source}")]
pub struct FrameFailure {
    pub frame: usize,
    pub step: usize,
    #[source]
    pub source: Error,
    /// Best finite solution reached before the failure.
    pub last: Option<Box<FrameSolution>>,
}

impl From<FrameFailure> for Error {
    fn from(f: FrameFailure) -> Self {
        Error::Diverged(f.to_string())
    }
}

/// Runs Adam on one frame from `start` for at most `max_steps` steps and
/// returns the best solution observed.
#[allow(clippy::too_many_arguments)]
pub fn optimize_frame<R: Rng + ?Sized>(
    inputs: &FrameInputs,
    start: &Start,
    settings: &FrameSettings,
    cfg: &OptimizerConfig,
    toggles: &AblationToggles,
    max_steps: usize,
    rng: &mut R,
    sink: &mut dyn FnMut(&ProgressEvent),
) -> Result<FrameSolution, FrameFailure> {
    let fail = |step: usize, source: Error, last: Option<&FrameSolution>| FrameFailure {
        frame: inputs.frame,
        step,
        source,
        last: last.map(|s| Box::new(s.clone())),
    };
    settings.validate().map_err(|e| fail(0, e, None))?;
    cfg.validate().map_err(|e| fail(0, e, None))?;
    let clock = Instant::now();
    let n = settings.constraints.n;
    if start.state.n() != n {
        return Err(fail(
            0,
            Error::invalid("warm start does not match the configured N"),
            None,
        ));
    }
    let layout = Layout::new(n);
    let frozen = if toggles.no_camera {
        FrozenMask::all_frozen()
    } else {
        settings.frozen
    };
    let mut cameras = start.cameras;
    cameras.frozen = frozen;
    let mut state = start.state.clone();
    let mut length_raw = start.length_raw;
    let mut render = start.render;
    let pixel_to_mm = cameras.pixel_to_mm(&state.p);
    let mut ctx = FrameContext {
        images: inputs.images.clone(),
        crop_offset: inputs.crop_offset,
        constraints: settings.constraints,
        limits: settings.limits,
        weights: toggles.apply(&settings.weights),
        scaling: LossScaling::new(settings.units, settings.limits.w, settings.constraints.n),
        theta: settings.theta,
        masking: !toggles.no_masking,
        snapshot: inputs.snapshot.clone(),
        pixel_to_mm,
        frozen,
        n0: state.n0,
        length_override: None,
    };

    let scales = cfg.unit_scales.expand(&layout);
    let active: Vec<bool> = (0..layout.len())
        .map(|i| match layout.group(i) {
            Group::Curve => true,
            Group::Render => !toggles.no_render,
            Group::Camera => !frozen.is_frozen(i - layout.camera()),
        })
        .collect();
    let mut adam = Adam::new(layout.len(), cfg);
    let mut schedule = RateSchedule::new(cfg);
    let mut best: Option<FrameSolution> = None;
    let mut history: Vec<f64> = Vec::with_capacity(max_steps);
    let mut converged = false;
    let mut steps = 0;
    let growth_end = start.growth.map_or(0, |g| g.steps);
    let bound = settings.constraints.curvature_bound();

    for step in 0..max_steps {
        let n0 = sample_start_index(n, rng);
        ctx.n0 = n0;
        ctx.length_override = start.growth.and_then(|g| g.length_at(step));
        let mut params = ParameterSet::assemble(
            state.p[n0],
            state.t[n0],
            state.m1[n0],
            &state.k,
            length_raw,
            &render,
            &cameras,
        );
        let (eval, grad) = ctx
            .evaluate(&params, MaskMode::Compute, true)
            .map_err(|e| fail(step, e, best.as_ref()))?;
        let grad = grad.expect("gradient requested");
        let loss = eval.losses.total;
        if !loss.is_finite() {
            return Err(fail(
                step,
                Error::NonFinite {
                    stage: "total loss",
                },
                best.as_ref(),
            ));
        }
        steps = step + 1;
        let growing = step < growth_end;
        if step == growth_end && growth_end > 0 {
            // The objective changed under the schedule; start both afresh.
            schedule = RateSchedule::new(cfg);
            best = None;
        }
        if best.as_ref().map_or(true, |b| loss < b.losses.total) {
            best = Some(FrameSolution {
                frame: inputs.frame,
                state: state.clone(),
                length_raw,
                cameras,
                render,
                losses: eval.losses,
                scores: eval.scores.clone(),
                best_step: step,
                steps,
                wall_time: 0.0,
                converged: false,
                crop_offset: inputs.crop_offset,
                final_rates: schedule.rates(),
            });
        }
        let decayed = !growing && schedule.observe(loss);
        history.push(schedule.best());
        let mut event = ProgressEvent {
            frame: inputs.frame,
            step,
            losses: eval.losses,
            rates: schedule.rates(),
            decayed,
            n0,
            shift: 0,
        };

        if step >= growth_end && schedule.at_floor() && history.len() > cfg.window {
            let then = history[history.len() - 1 - cfg.window];
            let now = schedule.best();
            if (then - now) <= cfg.tolerance * now.abs() {
                converged = true;
                sink(&event);
                break;
            }
        }

        let rates: Vec<f64> = (0..layout.len())
            .map(|i| {
                if active[i] {
                    schedule.rate(layout.group(i)) * scales[i]
                } else {
                    0.0
                }
            })
            .collect();
        adam.step(&mut params.values, &grad, &rates);

        let mut k = params.k();
        if k.project_onto_bound(bound) > 0 {
            params.set_k(&k);
        }
        length_raw = params.length_raw();
        let length = settings.constraints.clamp_length(ctx.length(&params));
        let frame = orthonormal_frame(&params.t(), &params.m1())
            .map_err(|e| fail(step, e, best.as_ref()))?;
        state = CurveState::from_anchor(
            params.p(),
            frame.row(0).transpose(),
            frame.row(1).transpose(),
            k,
            length,
            n0,
        )
        .map_err(|e| fail(step, e, best.as_ref()))?;
        render = params.render();
        render.clamp(&settings.limits);
        cameras = params.triplet(&cameras);
        cameras.frozen = frozen;
        cameras.wrap_angles();

        if !toggles.no_centre_shift {
            let (shifted, shift) =
                centre_shift(&state, &eval.scores.s_hat, &settings.centre_shift, step + 1)
                    .map_err(|e| fail(step, e, best.as_ref()))?;
            if shift != 0 {
                adam.shift_curvature(&layout, shift);
                state = shifted;
                event.shift = shift;
            }
        }
        sink(&event);
    }

    let mut out =
        best.ok_or_else(|| fail(0, Error::invalid("no optimisation steps were run"), None))?;
    out.steps = steps;
    out.converged = converged;
    out.wall_time = clock.elapsed().as_secs_f64();
    out.final_rates = schedule.rates();
    Ok(out)
}

/// Point whose projections are closest (least squares) to `targets`,
/// found by Gauss-Newton from the origin.
pub fn nearest_common_point(cameras: &CameraTriplet, targets: &[[f64; 2]; 3]) -> Result<Vec3> {
    let mut x = Vec3::zeros();
    for _ in 0..50 {
        let mut jtj = nalgebra::Matrix3::<f64>::zeros();
        let mut jtr = Vec3::zeros();
        for (c, target) in targets.iter().enumerate() {
            let p = cameras.cams[c]
                .project_with_jacobian(shifts_for_camera(&cameras.shifts, c)?, &x)
                .map_err(|_| Error::RigMisconfigured)?;
            let r = Vector2::new(p.uv[0] - target[0], p.uv[1] - target[1]);
            jtj += p.d_point.transpose() * p.d_point;
            jtr += p.d_point.transpose() * r;
        }
        let Some(dx) = jtj.lu().solve(&jtr) else {
            return Err(Error::RigMisconfigured);
        };
        x -= dx;
        if dx.norm() < 1e-12 * (1.0 + x.norm()) {
            break;
        }
    }
    Ok(x)
}

/// First-frame starting point: a short straight line with random orientation
/// at the point seen closest to every image centre, plus the length growth
/// schedule.
pub fn init_first_frame<R: Rng + ?Sized>(
    image_sizes: [(usize, usize); 3],
    cameras: &CameraTriplet,
    settings: &FrameSettings,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<Start> {
    settings.validate()?;
    cfg.validate()?;
    let targets: [[f64; 2]; 3] = std::array::from_fn(|c| {
        [
            (image_sizes[c].0 as f64 - 1.0) / 2.0,
            (image_sizes[c].1 as f64 - 1.0) / 2.0,
        ]
    });
    let centre = nearest_common_point(cameras, &targets)?;
    for (c, &(w, h)) in image_sizes.iter().enumerate() {
        let q = cameras
            .project(c, &centre)
            .map_err(|_| Error::RigMisconfigured)?;
        if !(q[0] >= 0.0 && q[1] >= 0.0 && q[0] <= w as f64 - 1.0 && q[1] <= h as f64 - 1.0) {
            return Err(Error::RigMisconfigured);
        }
    }
    let t = Vec3::from_column_slice(&UnitSphere.sample(rng));
    let helper = Vec3::from_column_slice(&UnitSphere.sample(rng));
    let frame = orthonormal_frame(&t, &helper)?;
    let n = settings.constraints.n;
    let mid = n / 2;
    let length = cfg.initial_length;
    let mut state = CurveState::from_anchor(
        Vec3::zeros(),
        frame.row(0).transpose(),
        frame.row(1).transpose(),
        Curvature::zeros(n),
        length,
        mid,
    )?;
    let shift = centre - state.centroid();
    for p in &mut state.p {
        *p += shift;
    }
    let c = settings.constraints;
    let handover = c.l_min + 0.05 * (c.l_max - c.l_min);
    Ok(Start {
        state,
        length_raw: c.raw_from_length(handover),
        render: settings.initial_render,
        cameras: *cameras,
        growth: Some(GrowthSchedule {
            initial: length,
            target: c.l_min,
            steps: cfg.growth_steps,
        }),
    })
}

/// Per-view crop origins placing a `w`-pixel window on the projected
/// centroid of `points`, clamped inside the images.
pub fn crop_offsets(
    cameras: &CameraTriplet,
    points: &[Vec3],
    image_sizes: [(usize, usize); 3],
    w: usize,
) -> Result<[[f64; 2]; 3]> {
    let q = project_curve(cameras, points)?;
    Ok(crop_about(&centroids(&q), image_sizes, w))
}

fn centroids(q: &ProjectedCurve) -> [[f64; 2]; 3] {
    std::array::from_fn(|c| {
        let s = q[c]
            .iter()
            .fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
        [s[0] / q[c].len() as f64, s[1] / q[c].len() as f64]
    })
}

/// Crop origins centring a `w` window on `centres`.
pub fn crop_about(
    centres: &[[f64; 2]; 3],
    image_sizes: [(usize, usize); 3],
    w: usize,
) -> [[f64; 2]; 3] {
    std::array::from_fn(|c| {
        let (iw, ih) = image_sizes[c];
        let half = (w as f64 - 1.0) / 2.0;
        let i0 = (centres[c][0] - half)
            .round()
            .clamp(0.0, iw.saturating_sub(w) as f64);
        let j0 = (centres[c][1] - half)
            .round()
            .clamp(0.0, ih.saturating_sub(w) as f64);
        [i0, j0]
    })
}

/// Crops a full-size triplet at `offsets`.
pub fn crop_triplet(images: &ImageTriplet, offsets: &[[f64; 2]; 3], w: usize) -> ImageTriplet {
    std::array::from_fn(|c| images[c].crop(offsets[c][0] as i64, offsets[c][1] as i64, w, 0.0))
}

/// Ordered source of full-size image triplets.
pub trait FrameSource {
    fn len(&self) -> usize;
    fn load(&self, index: usize) -> Result<ImageTriplet>;
    /// Frame number reported in outputs.
    fn frame_number(&self, index: usize) -> usize {
        index
    }
}

impl FrameSource for Vec<ImageTriplet> {
    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn load(&self, index: usize) -> Result<ImageTriplet> {
        self.get(index)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("frame index {index} out of range")))
    }
}

/// Options for [`process_sequence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceOptions {
    pub settings: FrameSettings,
    pub optimizer: OptimizerConfig,
    pub toggles: AblationToggles,
    pub seed: u64,
}

/// Reconstructs every frame in order: the first from [`init_first_frame`],
/// later ones warm-started from their predecessor. Each solution is passed
/// to `on_frame` as soon as it is available.
pub fn process_sequence(
    source: &dyn FrameSource,
    cameras: &CameraTriplet,
    opts: &SequenceOptions,
    sink: &mut dyn FnMut(&ProgressEvent),
    on_frame: &mut dyn FnMut(&FrameSolution) -> Result<()>,
) -> Result<Vec<FrameSolution>> {
    if source.len() == 0 {
        return Err(Error::invalid("the frame source is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let w = opts.settings.limits.w;
    let mut out: Vec<FrameSolution> = Vec::with_capacity(source.len());
    for index in 0..source.len() {
        let frame = source.frame_number(index);
        let full = source.load(index)?;
        let sizes: [(usize, usize); 3] = std::array::from_fn(|c| (full[c].width, full[c].height));
        if sizes.iter().any(|&(a, b)| a < w || b < w) {
            return Err(Error::invalid(format!(
                "frame {frame}: images smaller than w = {w}"
            )));
        }
        let (start, offsets, snapshot, budget) = match out.last() {
            None => {
                let start =
                    init_first_frame(sizes, cameras, &opts.settings, &opts.optimizer, &mut rng)?;
                let centres = std::array::from_fn(|c| {
                    [
                        (sizes[c].0 as f64 - 1.0) / 2.0,
                        (sizes[c].1 as f64 - 1.0) / 2.0,
                    ]
                });
                (
                    start,
                    crop_about(&centres, sizes, w),
                    None,
                    opts.optimizer.max_steps_first,
                )
            }
            Some(prev) => {
                let offsets = crop_offsets(&prev.cameras, &prev.state.p, sizes, w)?;
                (
                    prev.warm_start(),
                    offsets,
                    Some(prev.snapshot()),
                    opts.optimizer.max_steps_frame,
                )
            }
        };
        let inputs = FrameInputs {
            frame,
            images: crop_triplet(&full, &offsets, w),
            crop_offset: offsets,
            snapshot,
        };
        let solution = match optimize_frame(
            &inputs,
            &start,
            &opts.settings,
            &opts.optimizer,
            &opts.toggles,
            budget,
            &mut rng,
            sink,
        ) {
            Ok(s) => s,
            Err(FrameFailure {
                last: Some(last), ..
            }) => {
                log::warn!(
                    "frame {frame}: optimisation failed, continuing from the last finite solution"
                );
                let mut s = *last;
                s.converged = false;
                s
            }
            Err(e) => return Err(e.into()),
        };
        on_frame(&solution)?;
        out.push(solution);
    }
    Ok(out)
}
