//! The composed project-render-score objective for one frame and its
//! hand-written adjoint.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::camera::{CameraTriplet, FrozenMask, ProjectedCurve, ProjectionTape};
use crate::curve::{
    orthonormal_frame, orthonormal_frame_backward, CurveConstraints, CurveTape, Integrated,
};
use crate::diffengine::{Layout, Objective, ParameterSet};
use crate::error::{Error, Result};
use crate::losses::{
    intersection_loss, pixel_loss, scores_loss, smoothness_loss, temporal_loss,
    temporal_loss_scaled, total_loss, LossBreakdown, LossScaling, LossWeights,
    PreviousFrameSnapshot, TemporalState,
};
use crate::raster::ImageTriplet;
use crate::render::{taper_params, BlobField, BlobGrad, RenderLimits, RenderedTriplet};
use crate::scoring::{apply_masks, build_masks, MaskSet, ScoreProfile, ScoreTape};

/// Everything held constant while evaluating one frame's loss.
#[derive(Debug, Clone)]
pub struct FrameContext {
    /// Cropped, normalised input images (foreground bright).
    pub images: ImageTriplet,
    /// Full-image pixel position of each crop's top-left pixel.
    pub crop_offset: [[f64; 2]; 3],
    pub constraints: CurveConstraints,
    pub limits: RenderLimits,
    pub weights: LossWeights,
    /// Multipliers folded into `weights` for the optimised total.
    pub scaling: LossScaling,
    pub theta: f64,
    /// When false the raw images are the target (ablation e).
    pub masking: bool,
    pub snapshot: Option<PreviousFrameSnapshot>,
    /// Object-space size of a pixel at the worm (mm / px).
    pub pixel_to_mm: f64,
    pub frozen: FrozenMask,
    /// Vertex the anchor scalars refer to.
    pub n0: usize,
    /// Fixed length overriding the raw length parameter (growth schedule).
    pub length_override: Option<f64>,
}

/// How masks are obtained for an evaluation.
#[derive(Debug, Clone, Copy)]
pub enum MaskMode<'a> {
    /// Build masks from this evaluation's scores.
    Compute,
    /// Reuse previously built masks.
    Fixed(&'a MaskSet),
}

/// Forward results of one evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub curve: Integrated,
    pub length: f64,
    /// Projected vertices in crop coordinates.
    pub q: ProjectedCurve,
    pub rendered: RenderedTriplet,
    pub scores: ScoreProfile,
    pub masks: MaskSet,
    pub losses: LossBreakdown,
    /// Fingerprint of the discrete choices in this evaluation: pixel max
    /// winners, blob supports, score views and sources, the scores-loss
    /// maximiser and the active intersection pairs.
    pub routing: u64,
}

impl FrameContext {
    pub fn length(&self, params: &ParameterSet) -> f64 {
        self.length_override
            .unwrap_or_else(|| self.constraints.length_from_raw(params.length_raw()))
    }

    fn triplet(&self, params: &ParameterSet) -> CameraTriplet {
        CameraTriplet::from_array(&params.camera(), self.frozen)
    }

    /// Runs the forward pass and, when `want_grad`, the adjoint pass.
    pub fn evaluate(
        &self,
        params: &ParameterSet,
        mode: MaskMode<'_>,
        want_grad: bool,
    ) -> Result<(Evaluation, Option<Vec<f64>>)> {
        let layout = params.layout;
        let n = layout.n;
        if n != self.constraints.n {
            return Err(Error::invalid(
                "parameter set does not match the configured N",
            ));
        }
        let w = &self.scaling.apply(&self.weights);
        let length = self.length(params);
        let (t_raw, m1_raw) = (params.t(), params.m1());
        let frame = orthonormal_frame(&t_raw, &m1_raw)?;
        let k = params.k();
        let tape = CurveTape::trace(params.p(), frame, &k, length, self.n0);
        if !tape.p.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite {
                stage: "curve integration",
            });
        }
        let triplet = self.triplet(params);
        let proj = ProjectionTape::trace(&triplet, &tape.p)?;
        let mut q = proj.q.clone();
        for (c, qc) in q.iter_mut().enumerate() {
            for v in qc.iter_mut() {
                v[0] -= self.crop_offset[c][0];
                v[1] -= self.crop_offset[c][1];
            }
        }
        let render = params.render();
        let tapered = taper_params(&render, &self.limits, n);
        let field = BlobField::build(&q, &tapered, &render.rho, &self.limits)?;
        let rendered = field.render();
        let scores = ScoreTape::compute(&field, &self.images);
        let masks = match mode {
            MaskMode::Fixed(m) => m.clone(),
            MaskMode::Compute if self.masking => {
                build_masks(&field, &scores.profile.s_hat, self.theta)
            }
            MaskMode::Compute => MaskSet::ones(self.limits.w),
        };
        let target = if self.masking {
            apply_masks(&masks, &self.images)
        } else {
            self.images.clone()
        };

        let (l_px, g_px) = pixel_loss(&rendered.images, &target);
        let (l_sc, g_sc) = scores_loss(&scores.profile.s_prime);
        let (l_sm, g_sm) = smoothness_loss(&k);
        let current = TemporalState {
            length,
            k: k.clone(),
            p: tape.p.clone(),
            camera: params.camera().to_vec(),
            render,
        };
        let (l_t, g_t) = temporal_loss_scaled(&current, self.snapshot.as_ref(), self.scaling.t_k)?;
        let (l_i, g_i) = intersection_loss(
            &tape.p,
            &tapered.sigma,
            self.constraints.k_max,
            self.pixel_to_mm,
        )?;
        let mut losses = total_loss([l_px, l_sc, l_sm, l_t, l_i], w)?;
        if self.scaling.t_k != 1.0 {
            // Report the term as defined; the total keeps the scaled one.
            losses.t = temporal_loss(&current, self.snapshot.as_ref())?.0;
        }
        let routing = {
            let mut h = DefaultHasher::new();
            rendered.hash_winners(&mut h);
            field.hash_support(&mut h);
            scores.view.hash(&mut h);
            scores.source.hash(&mut h);
            let s = &scores.profile.s_prime;
            let top = (0..s.len()).fold(0, |b, i| if s[i] > s[b] { i } else { b });
            top.hash(&mut h);
            for g in &g_i.p {
                h.write_u8((g.norm_squared() > 0.0) as u8);
            }
            h.finish()
        };

        let grad = if want_grad {
            let mut bg = BlobGrad::zeros(n);
            if w.px != 0.0 {
                let g: [Vec<f64>; 3] =
                    std::array::from_fn(|c| g_px[c].iter().map(|v| v * w.px).collect());
                field.backward_render(&rendered, &g, &mut bg);
            }
            if w.sc != 0.0 {
                let gs: Vec<f64> = g_sc.iter().map(|v| v * w.sc).collect();
                let gc = scores.backward(&gs);
                field.backward_correlations(&self.images, &gc, &mut bg);
            }
            if w.i != 0.0 {
                for c in 0..3 {
                    for (a, b) in bg.sigma_bar[c].iter_mut().zip(&g_i.sigma_bar[c]) {
                        *a += w.i * b;
                    }
                }
            }
            let (mut gp, mut gcam) = proj.backward(&bg.q);
            for (a, (gi, gt)) in gp.iter_mut().zip(g_i.p.iter().zip(&g_t.p)) {
                *a += w.i * gi + w.t * gt;
            }
            let gc = tape.backward(&gp);
            let (gt_raw, gm1_raw) = orthonormal_frame_backward(&t_raw, &m1_raw, &gc.frame);

            let mut out = vec![0.0; layout.len()];
            out[Layout::P..Layout::P + 3].copy_from_slice(gc.p_anchor.as_slice());
            out[Layout::T..Layout::T + 3].copy_from_slice(gt_raw.as_slice());
            out[Layout::M1..Layout::M1 + 3].copy_from_slice(gm1_raw.as_slice());
            let gk_t = g_t.k.rows();
            for i in 0..n {
                for a in 0..2 {
                    out[Layout::K + 2 * i + a] = gc.k[i][a] + w.sm * g_sm[i][a] + w.t * gk_t[i][a];
                }
            }
            if self.length_override.is_none() {
                let gl = gc.length + w.t * g_t.length;
                out[layout.length_raw()] =
                    gl * self.constraints.length_raw_derivative(params.length_raw());
            }
            let gr = bg.to_params(&tapered).to_array();
            let gr_t = g_t.render.to_array();
            for i in 0..9 {
                out[layout.sigma() + i] = gr[i] + w.t * gr_t[i];
            }
            for i in 0..gcam.len() {
                gcam[i] += w.t * g_t.camera[i];
                out[layout.camera() + i] = if self.frozen.is_frozen(i) {
                    0.0
                } else {
                    gcam[i]
                };
            }
            if !out.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { stage: "gradient" });
            }
            Some(out)
        } else {
            None
        };

        let curve = tape.into_integrated();
        Ok((
            Evaluation {
                curve,
                length,
                q,
                rendered,
                scores: scores.profile,
                masks,
                losses,
                routing,
            },
            grad,
        ))
    }
}

/// [`FrameContext`] with frozen masks, as a plain [`Objective`] over the
/// flat parameter vector.
pub struct FrozenMaskObjective<'a> {
    pub ctx: &'a FrameContext,
    pub masks: &'a MaskSet,
    pub layout: Layout,
}

impl FrozenMaskObjective<'_> {
    fn params(&self, x: &[f64]) -> ParameterSet {
        ParameterSet {
            layout: self.layout,
            values: x.to_vec(),
        }
    }
}

impl Objective for FrozenMaskObjective<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let (e, _) = self
            .ctx
            .evaluate(&self.params(x), MaskMode::Fixed(self.masks), false)?;
        Ok(e.losses.total)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (e, g) = self
            .ctx
            .evaluate(&self.params(x), MaskMode::Fixed(self.masks), true)?;
        Ok((e.losses.total, g.expect("gradient requested")))
    }

    fn value_with_routing(&self, x: &[f64]) -> Result<(f64, Option<u64>)> {
        let (e, _) = self
            .ctx
            .evaluate(&self.params(x), MaskMode::Fixed(self.masks), false)?;
        Ok((e.losses.total, Some(e.routing)))
    }
}
