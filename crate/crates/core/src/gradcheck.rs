//! Full-pipeline gradient check on small synthetic scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::camera::{project_curve, FrozenMask};
use crate::curve::{CurveConstraints, Vec3};
use crate::diffengine::{finite_difference_check, Layout, ParameterSet};
use crate::error::Result;
use crate::losses::{LossScaling, LossUnits, LossWeights, TemporalState};
use crate::objective::{FrameContext, FrozenMaskObjective, MaskMode};
use crate::optimizer::{crop_about, crop_triplet};
use crate::render::RenderParams;
use crate::synth::{generate_scene, DistractorSpec, SceneSpec};

/// Scene used by the check: 16 vertices in 64-pixel crops with one distractor.
pub fn small_scene_spec() -> SceneSpec {
    SceneSpec {
        constraints: CurveConstraints {
            n: 16,
            ..Default::default()
        },
        w: 64,
        image_size: 72,
        focal: 2000.0,
        length: 0.8,
        curvature_scale: 2.0,
        render: RenderParams {
            sigma: [3.2, 3.5, 3.1],
            iota: [0.8, 0.7, 0.9],
            rho: [1.5, 1.2, 1.8],
        },
        sigma_min: 2.0,
        distractors: DistractorSpec {
            count: 1,
            min_distance: 8.0,
            max_distance: 20.0,
            sigma: 3.0,
            ..Default::default()
        },
        position_jitter: 0.02,
        ..Default::default()
    }
}

/// A probe whose analytic and numeric derivatives disagree.
#[derive(Debug, Clone, Serialize)]
pub struct Mismatch {
    pub trial: usize,
    pub parameter: String,
    pub analytic: f64,
    pub numeric: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckSummary {
    pub trials: usize,
    pub checked: usize,
    /// Probes skipped because the routing changed within the stencil.
    pub non_smooth: usize,
    pub failures: Vec<Mismatch>,
    /// Largest relative error over smooth probes after subtracting the
    /// roundoff allowance of ten noise units.
    pub max_relative_error: f64,
}

impl GradcheckSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares the analytic gradient of the complete frame objective with
/// central differences at `trials` perturbed points of random scenes.
pub fn synthetic_gradient_check(seed: u64, trials: usize, rtol: f64) -> Result<GradcheckSummary> {
    let spec = small_scene_spec();
    let layout = Layout::new(spec.constraints.n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradcheckSummary {
        trials,
        checked: 0,
        non_smooth: 0,
        failures: Vec::new(),
        max_relative_error: 0.0,
    };
    for trial in 0..trials {
        let (scene, images) = generate_scene(&spec, &mut rng)?;
        let sizes = [(spec.image_size, spec.image_size); 3];
        let q = project_curve(&scene.true_cameras, &scene.truth.p)?;
        let centres = std::array::from_fn(|c| {
            let s = q[c]
                .iter()
                .fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
            [s[0] / q[c].len() as f64, s[1] / q[c].len() as f64]
        });
        let offsets = crop_about(&centres, sizes, spec.w);
        // Evaluate away from the optimum: perturb the posture, render and cameras.
        let mut state = scene.truth.clone();
        for p in &mut state.p {
            *p += Vec3::new(0.004, -0.003, 0.002);
        }
        for row in state.k.rows_mut() {
            row[0] += rng.gen_range(-0.5..0.5);
            row[1] += rng.gen_range(-0.5..0.5);
        }
        let mut render = scene.render;
        render.sigma[0] += 0.3;
        render.iota[1] -= 0.1;
        render.rho[2] -= 0.2;
        let mut cams = scene.cameras;
        cams.frozen = FrozenMask::all_free();
        cams.shifts.dx = 0.7;
        cams.shifts.dz = -0.4;
        let constraints = spec.constraints;
        let n0 = 5 + trial % 6;
        let params = ParameterSet::assemble(
            state.p[n0],
            state.t[n0] * 1.1,
            state.m1[n0] + state.t[n0] * 0.2,
            &state.k,
            constraints.raw_from_length(scene.truth.length * 0.97),
            &render,
            &cams,
        );
        let snapshot = TemporalState {
            length: scene.truth.length,
            k: scene.truth.k.clone(),
            p: scene.truth.p.clone(),
            camera: scene.cameras.to_array().to_vec(),
            render: scene.render,
        };
        let mut limits = scene.limits;
        limits.w = spec.w;
        let ctx = FrameContext {
            images: crop_triplet(&images, &offsets, spec.w),
            crop_offset: offsets,
            constraints,
            limits,
            weights: LossWeights::default(),
            scaling: LossScaling::new(LossUnits::Reconciled, spec.w, constraints.n),
            theta: 0.1,
            masking: true,
            snapshot: Some(snapshot),
            pixel_to_mm: cams.pixel_to_mm(&state.p),
            frozen: FrozenMask::all_free(),
            n0,
            length_override: None,
        };
        let (eval, _) = ctx.evaluate(&params, MaskMode::Compute, false)?;
        let obj = FrozenMaskObjective {
            ctx: &ctx,
            masks: &eval.masks,
            layout: params.layout,
        };
        let probes: Vec<(usize, f64)> = (0..layout.len())
            .map(|i| (i, 1e-4 * layout.fd_scale(i)))
            .collect();
        let report = finite_difference_check(&obj, &params.values, &probes, 1e-3)?;
        out.checked += report.entries.len();
        out.non_smooth += report.flagged().count();
        for e in report.entries.iter().filter(|e| !e.non_smooth) {
            let excess = ((e.analytic - e.numeric).abs() - 10.0 * e.noise).max(0.0);
            if excess > 0.0 {
                out.max_relative_error = out.max_relative_error.max(excess / e.numeric.abs());
            }
        }
        for e in report.failures(rtol) {
            out.failures.push(Mismatch {
                trial,
                parameter: layout.name(e.index),
                analytic: e.analytic,
                numeric: e.numeric,
                noise: e.noise,
            });
        }
    }
    Ok(out)
}
