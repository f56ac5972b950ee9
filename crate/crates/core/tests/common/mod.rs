//! Invariant properties shared by the property suite and the acceptance run.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use midline::camera::project_curve;
use midline::curve::{integrate_curve, orthonormal_frame, Curvature, CurveConstraints, Vec3};
use midline::gradcheck::small_scene_spec;
use midline::losses::{
    intersection_loss, pixel_loss, scores_loss, smoothness_loss, temporal_loss, TemporalState,
};
use midline::optimizer::{
    crop_about, crop_triplet, optimize_frame, AblationToggles, FrameInputs, FrameSettings,
    OptimizerConfig, Start,
};
use midline::raster::{Image, ImageTriplet};
use midline::render::{taper_params, BlobField, RenderLimits, RenderParams};
use midline::scoring::{build_masks, taper_and_normalize, MASK_FLOOR};
use midline::synth::generate_scene;

pub const CASES: u32 = 128;

pub fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

fn unit_vector() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 0.05)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

/// A random curve: curvature rows within the admissible bound, length,
/// anchor index and a raw (not yet orthonormal) anchor frame.
#[derive(Debug, Clone)]
pub struct CurveCase {
    pub k: Vec<[f64; 2]>,
    pub length: f64,
    pub n0: usize,
    pub t: Vec3,
    pub m1: Vec3,
    pub p0: Vec3,
}

pub fn curve_case() -> impl Strategy<Value = CurveCase> {
    let bound = CurveConstraints::default().curvature_bound() / std::f64::consts::SQRT_2;
    (2usize..160)
        .prop_flat_map(move |n| {
            (
                prop::collection::vec((-bound..bound, -bound..bound).prop_map(|(a, b)| [a, b]), n),
                0.1..3.0f64,
                0..n,
                unit_vector(),
                unit_vector(),
                (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64),
            )
        })
        .prop_filter("frame vectors not parallel", |(_, _, _, t, m, _)| {
            t.cross(m).norm() > 0.1
        })
        .prop_map(|(k, length, n0, t, m1, p)| CurveCase {
            k,
            length,
            n0,
            t,
            m1,
            p0: Vec3::new(p.0, p.1, p.2),
        })
}

fn integrate(c: &CurveCase) -> Result<midline::curve::Integrated, TestCaseError> {
    let f = orthonormal_frame(&c.t, &c.m1).map_err(|e| TestCaseError::fail(e.to_string()))?;
    integrate_curve(
        c.p0,
        f.row(0).transpose(),
        f.row(1).transpose(),
        &Curvature::from_rows(c.k.clone()),
        c.length,
        c.n0,
    )
    .map_err(|e| TestCaseError::fail(e.to_string()))
}

pub fn frame_orthonormality(c: &CurveCase) -> Result<(), TestCaseError> {
    let out = integrate(c)?;
    for i in 0..c.k.len() {
        let (t, m1, m2) = (out.t[i], out.m1[i], out.m2[i]);
        for (name, v) in [
            ("|T|-1", t.norm() - 1.0),
            ("|M1|-1", m1.norm() - 1.0),
            ("|M2|-1", m2.norm() - 1.0),
            ("T.M1", t.dot(&m1)),
            ("T.M2", t.dot(&m2)),
            ("M1.M2", m1.dot(&m2)),
            ("handedness", (t.cross(&m1) - m2).norm()),
        ] {
            prop_assert!(v.abs() < 1e-9, "vertex {i}: {name} = {v:e}");
        }
    }
    Ok(())
}

pub fn equidistance(c: &CurveCase) -> Result<(), TestCaseError> {
    let out = integrate(c)?;
    let h = c.length / (c.k.len() - 1) as f64;
    prop_assert!((out.p[c.n0] - c.p0).norm() < 1e-12, "anchor moved");
    for i in 1..c.k.len() {
        let d = (out.p[i] - out.p[i - 1]).norm();
        prop_assert!((d - h).abs() < 1e-9 * h.max(1.0), "segment {i}: {d} vs {h}");
    }
    Ok(())
}

pub fn raw_scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..10.0f64], 1..200)
}

/// Tapered scores rise to the middle vertex and fall after it, never exceed
/// the raw scores, and normalise to a peak of one.
pub fn score_taper_unimodal(s: &[f64]) -> Result<(), TestCaseError> {
    let (sp, hat, source) = taper_and_normalize(s);
    let n = s.len();
    let mid = n / 2;
    for k in 0..n {
        prop_assert!(sp[k] <= s[k], "tapered above raw at {k}");
        prop_assert_eq!(sp[k], s[source[k]]);
        if k < mid {
            prop_assert!(sp[k] <= sp[k + 1], "not rising at {k}");
        }
        if k > mid {
            prop_assert!(sp[k] <= sp[k - 1], "not falling at {k}");
        }
    }
    prop_assert_eq!(sp[mid], s[mid]);
    let peak = hat.iter().copied().fold(0.0, f64::max);
    if sp.iter().any(|&v| v > 0.0) {
        prop_assert!((peak - 1.0).abs() < 1e-15);
    } else {
        prop_assert!(hat.iter().all(|&v| v == 0.0));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MaskCase {
    pub q: [Vec<[f64; 2]>; 3],
    pub s_hat: Vec<f64>,
    pub render: RenderParams,
    pub theta: f64,
}

pub fn mask_case() -> impl Strategy<Value = MaskCase> {
    let w = 48.0;
    (2usize..24)
        .prop_flat_map(move |n| {
            let pts = || {
                prop::collection::vec((-5.0..w + 5.0, -5.0..w + 5.0).prop_map(|(x, y)| [x, y]), n)
            };
            (
                [pts(), pts(), pts()],
                prop::collection::vec(0.0..1.0f64, n),
                (2.0..6.0f64, 0.2..1.0f64, 0.5..3.0f64),
                0.0..1.0f64,
            )
        })
        .prop_map(|(q, s_hat, (sigma, iota, rho), theta)| MaskCase {
            q,
            s_hat,
            render: RenderParams::uniform(sigma, iota, rho),
            theta,
        })
}

fn mask_limits() -> RenderLimits {
    RenderLimits {
        sigma_min: 2.0,
        iota_min: 0.15,
        w: 48,
        ..RenderLimits::default()
    }
}

pub fn mask_two_valued(c: &MaskCase) -> Result<(), TestCaseError> {
    let limits = mask_limits();
    let tapered = taper_params(&c.render, &limits, c.s_hat.len());
    let field = BlobField::build(&c.q, &tapered, &c.render.rho, &limits)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let masks = build_masks(&field, &c.s_hat, c.theta);
    for img in &masks.m {
        prop_assert_eq!((img.width, img.height), (48, 48));
        for &v in &img.data {
            prop_assert!(v == 1.0 || v == MASK_FLOOR, "mask value {v}");
        }
    }
    Ok(())
}

fn image(w: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0..1.0f64, w * w).prop_map(move |data| {
        let mut img = Image::new(w, w);
        img.data = data;
        img
    })
}

fn triplet(w: usize) -> impl Strategy<Value = ImageTriplet> {
    [image(w), image(w), image(w)]
}

#[derive(Debug, Clone)]
pub struct LossCase {
    pub rendered: ImageTriplet,
    pub target: ImageTriplet,
    pub s_prime: Vec<f64>,
    pub curve: CurveCase,
    pub prev_k: Vec<[f64; 2]>,
    pub prev_p: Vec<Vec3>,
    pub sigma: f64,
}

pub fn loss_case() -> impl Strategy<Value = LossCase> {
    (triplet(12), triplet(12), curve_case(), 1.0..6.0f64)
        .prop_flat_map(|(rendered, target, curve, sigma)| {
            let n = curve.k.len();
            (
                Just(rendered),
                Just(target),
                prop::collection::vec(prop_oneof![Just(0.0), 0.0..5.0f64], n),
                Just(curve),
                prop::collection::vec(
                    (-20.0..20.0f64, -20.0..20.0f64).prop_map(|(a, b)| [a, b]),
                    n,
                ),
                prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), n),
                Just(sigma),
            )
        })
        .prop_map(
            |(rendered, target, s_prime, curve, prev_k, prev_p, sigma)| LossCase {
                rendered,
                target,
                s_prime,
                curve,
                prev_k,
                prev_p: prev_p
                    .into_iter()
                    .map(|(x, y, z)| Vec3::new(x, y, z))
                    .collect(),
                sigma,
            },
        )
}

pub fn losses_non_negative(c: &LossCase) -> Result<(), TestCaseError> {
    let fail = |e: midline::Error| TestCaseError::fail(e.to_string());
    let (px, _) = pixel_loss(&c.rendered, &c.target);
    prop_assert!(px >= 0.0, "pixel {px}");
    let (same, _) = pixel_loss(&c.target, &c.target);
    prop_assert_eq!(same, 0.0);
    let (sc, _) = scores_loss(&c.s_prime);
    prop_assert!(sc >= 0.0, "scores {sc}");
    let k = Curvature::from_rows(c.curve.k.clone());
    let (sm, _) = smoothness_loss(&k);
    prop_assert!(sm >= 0.0, "smoothness {sm}");
    let out = integrate(&c.curve)?;
    let current = TemporalState {
        length: c.curve.length,
        k: k.clone(),
        p: out.p.clone(),
        camera: vec![1.0; 48],
        render: RenderParams::uniform(4.0, 0.8, 1.5),
    };
    let prev = TemporalState {
        length: 1.0,
        k: Curvature::from_rows(c.prev_k.clone()),
        p: c.prev_p.clone(),
        camera: vec![0.5; 48],
        render: RenderParams::uniform(3.0, 0.5, 1.0),
    };
    let (t, _) = temporal_loss(&current, Some(&prev)).map_err(fail)?;
    prop_assert!(t >= 0.0, "temporal {t}");
    let (t0, _) = temporal_loss(&current, Some(&current)).map_err(fail)?;
    prop_assert_eq!(t0, 0.0);
    let sigma = std::array::from_fn(|_| vec![c.sigma; out.p.len()]);
    let (i, _) = intersection_loss(&out.p, &sigma, 3.0, 0.01).map_err(fail)?;
    prop_assert!(i >= 0.0, "intersection {i}");
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ProjectionCase {
    pub k: Vec<[f64; 2]>,
    pub length: f64,
    pub render: [f64; 9],
}

pub fn projection_case() -> impl Strategy<Value = ProjectionCase> {
    (
        prop::collection::vec(
            (-60.0..60.0f64, -60.0..60.0f64).prop_map(|(a, b)| [a, b]),
            2..64,
        ),
        -1.0..4.0f64,
        prop::array::uniform9(-2.0..8.0f64),
    )
        .prop_map(|(k, length, render)| ProjectionCase { k, length, render })
}

/// Projecting onto the curvature bound, the length interval and the render
/// limits twice gives the same as projecting once, and the result is feasible.
pub fn projection_idempotent(c: &ProjectionCase) -> Result<(), TestCaseError> {
    let constraints = CurveConstraints::default();
    let bound = constraints.curvature_bound();
    let mut k = Curvature::from_rows(c.k.clone());
    k.project_onto_bound(bound);
    prop_assert!(k.max_norm() <= bound * (1.0 + 1e-12));
    let once = k.clone();
    prop_assert_eq!(k.project_onto_bound(bound), 0);
    prop_assert_eq!(&k, &once);

    let l1 = constraints.clamp_length(c.length);
    prop_assert!(l1 > constraints.l_min && l1 < constraints.l_max);
    prop_assert_eq!(constraints.clamp_length(l1), l1);

    let limits = RenderLimits::default();
    let mut r = RenderParams::from_array(&c.render);
    r.clamp(&limits);
    prop_assert!(r.validate(&limits).is_ok(), "{:?}", r);
    let once = r;
    r.clamp(&limits);
    prop_assert_eq!(r, once);
    Ok(())
}

/// Same seed, same scene and same optimisation trajectory.
pub fn deterministic(seed: u64) -> Result<(), TestCaseError> {
    let run = || -> midline::Result<_> {
        let spec = small_scene_spec();
        let (scene, images) = generate_scene(&spec, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let q = project_curve(&scene.cameras, &scene.truth.p)?;
        let centres = std::array::from_fn(|c| {
            let s = q[c]
                .iter()
                .fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
            [s[0] / q[c].len() as f64, s[1] / q[c].len() as f64]
        });
        let offsets = crop_about(&centres, [(spec.image_size, spec.image_size); 3], spec.w);
        let inputs = FrameInputs {
            frame: 0,
            images: crop_triplet(&images, &offsets, spec.w),
            crop_offset: offsets,
            snapshot: None,
        };
        let start = Start {
            state: scene.truth.clone(),
            length_raw: spec.constraints.raw_from_length(scene.truth.length),
            render: scene.render,
            cameras: scene.cameras,
            growth: None,
        };
        let mut limits = scene.limits;
        limits.w = spec.w;
        let settings = FrameSettings {
            constraints: spec.constraints,
            limits,
            ..FrameSettings::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut sol = optimize_frame(
            &inputs,
            &start,
            &settings,
            &OptimizerConfig::default(),
            &AblationToggles::default(),
            4,
            &mut rng,
            &mut |_| {},
        )
        .map_err(|f| f.source)?;
        sol.wall_time = 0.0;
        Ok((scene, images, sol))
    };
    let a = run().map_err(|e| TestCaseError::fail(e.to_string()))?;
    let b = run().map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(a.0 == b.0, "scenes differ");
    prop_assert!(a.1 == b.1, "images differ");
    prop_assert!(a.2 == b.2, "solutions differ");
    Ok(())
}
