//! Acceptance run: nine criteria, each printed as one PASS/FAIL line with
//! its measured values and runtime. Arguments that parse as integers select
//! a subset, e.g. `cargo test --release --test acceptance -- 1 2 9`.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use midline::camera::{project_curve, CameraModel, CameraTriplet, FrozenMask, TripletShifts};
use midline::curve::{
    bishop_to_frenet, integrate_curve, shift_curvature, Curvature, CurveState, Vec3,
};
use midline::evaluate::{distance_to_polyline, evaluate_frame, FrameEvaluation};
use midline::gradcheck::{small_scene_spec, synthetic_gradient_check};
use midline::optimizer::{
    crop_about, crop_triplet, optimize_frame, process_sequence, AblationToggles, FrameInputs,
    FrameSettings, FrameSolution, OptimizerConfig, ProgressEvent, SequenceOptions, Start,
};
use midline::raster::ImageTriplet;
use midline::synth::{
    generate_scene, generate_sequence, render_scene, Distractor, DistractorSpec, SceneSpec,
    SequenceSpec, SyntheticScene,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Lower length bound for the synthetic bodies (length 1.0 mm); the generic
/// prior of 0.6 lets the first frame settle on a folded short solution.
const SYNTH_L_MIN: f64 = 0.9;

fn settings_for(spec: &SceneSpec) -> FrameSettings {
    let mut s = FrameSettings {
        constraints: spec.constraints,
        ..FrameSettings::default()
    };
    s.constraints.l_min = SYNTH_L_MIN;
    s
}

fn options(settings: FrameSettings, toggles: AblationToggles) -> SequenceOptions {
    SequenceOptions {
        settings,
        optimizer: OptimizerConfig::default(),
        toggles,
        seed: 7,
    }
}

fn evaluate(sol: &FrameSolution, scene: &SyntheticScene) -> FrameEvaluation {
    evaluate_frame(
        sol.frame,
        &sol.state.p,
        &sol.cameras,
        &scene.truth.p,
        &scene.true_cameras,
    )
    .unwrap()
}

fn within_frame_tolerance(ev: &FrameEvaluation) -> bool {
    ev.mean_px.iter().all(|&d| d < 2.0) && ev.alignment.rms < 0.02
}

fn fmt_px(v: [f64; 3]) -> String {
    format!("[{:.3}, {:.3}, {:.3}]", v[0], v[1], v[2])
}

// 1 --------------------------------------------------------------------------

fn geometry_oracle() -> Outcome {
    let n = 128;
    let mut closure: f64 = 0.0;
    for (length, angle) in [(1.0, 0.0), (0.7, 1.1), (1.4, -2.5)] {
        let k = Curvature::constant(n, [2.0 * PI * f64::cos(angle), 2.0 * PI * f64::sin(angle)]);
        let out = integrate_curve(Vec3::zeros(), Vec3::x(), Vec3::y(), &k, length, 17).unwrap();
        closure = closure.max((out.p[0] - out.p[n - 1]).norm() / length);
    }

    // Helix of curvature kappa and torsion tau: the Bishop components rotate
    // at rate tau while keeping magnitude kappa.
    let (kappa, tau, length) = (9.0, 6.0, 1.2);
    let rows: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64 * length;
            [
                length * kappa * (tau * s).cos(),
                length * kappa * (tau * s).sin(),
            ]
        })
        .collect();
    let k = Curvature::from_rows(rows);
    let fr = bishop_to_frenet(&k, length);
    let kappa_err = fr
        .kappa
        .iter()
        .map(|v| (v - kappa).abs() / kappa)
        .fold(0.0, f64::max);
    let tau_err = fr
        .tau
        .iter()
        .map(|t| t.map_or(f64::INFINITY, |t| (t.abs() - tau).abs() / tau))
        .fold(0.0, f64::max);

    // The integrated curve must be that helix: chord lengths of a helix
    // depend only on the arclength separation.
    let out = integrate_curve(Vec3::zeros(), Vec3::x(), Vec3::y(), &k, length, 0).unwrap();
    let w = kappa.hypot(tau);
    let (radius, climb) = (kappa / (w * w), tau / w);
    let h = length / (n - 1) as f64;
    let mut chord_err: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1..n).step_by(7) {
            let ds = (j - i) as f64 * h;
            let expect =
                (2.0 * radius * radius * (1.0 - (w * ds).cos()) + (climb * ds).powi(2)).sqrt();
            chord_err = chord_err.max(((out.p[j] - out.p[i]).norm() - expect).abs() / length);
        }
    }
    // Sign of the torsion from the geometry: handedness of successive chords.
    let chord = |i: usize| out.p[i + 1] - out.p[i];
    let handed = chord(40).cross(&chord(41)).dot(&chord(42));
    let sign_ok = fr
        .tau
        .iter()
        .flatten()
        .all(|t| t.signum() == handed.signum());

    outcome(
        closure < 0.05 && kappa_err < 1e-3 && tau_err < 1e-3 && chord_err < 1e-3 && sign_ok,
        format!(
            "closure {closure:.2e} l, kappa rel {kappa_err:.1e}, tau rel {tau_err:.1e}, helix chord {chord_err:.1e} l, torsion sign {}",
            if sign_ok { "consistent" } else { "inconsistent" }
        ),
    )
}

// 2 --------------------------------------------------------------------------

type M3 = [[f64; 3]; 3];

fn mat_mul(a: &M3, b: &M3) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Direct scalar transcription of the pinhole model with shifts and
/// radial/tangential distortion.
fn reference_projection(cam: &CameraModel, sx: f64, sy: f64, p: [f64; 3]) -> [f64; 2] {
    let (s0, c0) = cam.phi0.sin_cos();
    let (s1, c1) = cam.phi1.sin_cos();
    let (s2, c2) = cam.phi2.sin_cos();
    let rz = [[c0, -s0, 0.0], [s0, c0, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[c1, 0.0, s1], [0.0, 1.0, 0.0], [-s1, 0.0, c1]];
    let rx = [[1.0, 0.0, 0.0], [0.0, c2, -s2], [0.0, s2, c2]];
    let r = mat_mul(&mat_mul(&rz, &ry), &rx);
    let t = [cam.tx, cam.ty, cam.tz];
    let [x, y, z]: [f64; 3] =
        std::array::from_fn(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i]);
    let xp = x / z + sx / cam.fx;
    let yp = y / z + sy / cam.fy;
    let r2 = xp * xp + yp * yp;
    let k = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2 + cam.k3 * r2 * r2 * r2;
    let xpp = k * xp + 2.0 * cam.p1 * xp * yp + cam.p2 * (r2 + 2.0 * xp * xp);
    let ypp = k * yp + cam.p1 * (r2 + 2.0 * yp * yp) + 2.0 * cam.p2 * xp * yp;
    [cam.fx * xpp + cam.cx, cam.fy * ypp + cam.cy]
}

fn random_camera(rng: &mut ChaCha8Rng, distorted: bool) -> CameraModel {
    let d = if distorted { 1.0 } else { 0.0 };
    CameraModel {
        fx: rng.gen_range(2000.0..8000.0),
        fy: rng.gen_range(2000.0..8000.0),
        cx: rng.gen_range(100.0..400.0),
        cy: rng.gen_range(100.0..400.0),
        phi0: rng.gen_range(0.0..2.0 * PI),
        phi1: rng.gen_range(0.0..2.0 * PI),
        phi2: rng.gen_range(0.0..2.0 * PI),
        tx: rng.gen_range(-2.0..2.0),
        ty: rng.gen_range(-2.0..2.0),
        tz: rng.gen_range(30.0..80.0),
        k1: d * rng.gen_range(-5.0..5.0),
        k2: d * rng.gen_range(-50.0..50.0),
        k3: d * rng.gen_range(-500.0..500.0),
        p1: d * rng.gen_range(-0.05..0.05),
        p2: d * rng.gen_range(-0.05..0.05),
    }
}

fn random_triplet(rng: &mut ChaCha8Rng, distorted: bool) -> CameraTriplet {
    let cams = std::array::from_fn(|_| random_camera(rng, distorted));
    let shifts = TripletShifts {
        dx: rng.gen_range(-10.0..10.0),
        dy: rng.gen_range(-10.0..10.0),
        dz: rng.gen_range(-10.0..10.0),
    };
    CameraTriplet::new(cams, shifts)
}

fn camera_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut max_err: f64 = 0.0;
    let mut shift_err: f64 = 0.0;
    for _ in 0..10 {
        let points: Vec<Vec3> = (0..1000)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let triplet = random_triplet(&mut rng, true);
        let q = project_curve(&triplet, &points).unwrap();
        let s = triplet.shifts;
        let per_view = [(s.dx, 0.0), (0.0, -s.dy), (0.0, s.dz)];
        for c in 0..3 {
            for (i, p) in points.iter().enumerate() {
                let r = reference_projection(
                    &triplet.cams[c],
                    per_view[c].0,
                    per_view[c].1,
                    [p.x, p.y, p.z],
                );
                max_err = max_err
                    .max((q[c][i][0] - r[0]).abs())
                    .max((q[c][i][1] - r[1]).abs());
            }
        }

        // Without distortion the shifts are pure pixel translations.
        let mut plain = random_triplet(&mut rng, false);
        let shifted = plain;
        plain.shifts = TripletShifts::default();
        let q0 = project_curve(&plain, &points).unwrap();
        let q1 = project_curve(&shifted, &points).unwrap();
        let s = shifted.shifts;
        let expect = [[s.dx, 0.0], [0.0, -s.dy], [0.0, s.dz]];
        for c in 0..3 {
            for i in 0..points.len() {
                for a in 0..2 {
                    shift_err = shift_err.max((q1[c][i][a] - q0[c][i][a] - expect[c][a]).abs());
                }
            }
        }
    }
    outcome(
        max_err < 1e-9 && shift_err < 1e-9,
        format!("max |projection - reference| {max_err:.1e} px, shift translation error {shift_err:.1e} px"),
    )
}

// 3 --------------------------------------------------------------------------

fn gradient_fidelity() -> Outcome {
    let s = synthetic_gradient_check(3, 20, 1e-4).unwrap();
    outcome(
        s.passed() && s.max_relative_error < 1e-4,
        format!(
            "{} probes over {} points, {} non-smooth excluded, max relative error {:.2e}, {} mismatches",
            s.checked,
            s.trials,
            s.non_smooth,
            s.max_relative_error,
            s.failures.len()
        ),
    )
}

// 4 --------------------------------------------------------------------------

fn single_frame() -> Outcome {
    let spec = SceneSpec::default();
    let (scene, images) = generate_scene(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let opts = options(settings_for(&spec), AblationToggles::default());
    let sols = process_sequence(
        &vec![images],
        &scene.cameras,
        &opts,
        &mut |_| {},
        &mut |_| Ok(()),
    )
    .unwrap();
    let ev = evaluate(&sols[0], &scene);
    outcome(
        within_frame_tolerance(&ev),
        format!(
            "mean distance per view {} px (< 2), 3D RMS {:.4} mm (< 0.02), {} distractors, {} steps",
            fmt_px(ev.mean_px),
            ev.alignment.rms,
            scene.distractors.len(),
            sols[0].steps
        ),
    )
}

// 5 --------------------------------------------------------------------------

fn sequence_tracking() -> Outcome {
    let spec = SequenceSpec::default();
    let (seq, images) = generate_sequence(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let opts = options(settings_for(&spec.scene), AblationToggles::default());
    let sols = process_sequence(
        &images,
        &seq.scenes[0].cameras,
        &opts,
        &mut |_| {},
        &mut |_| Ok(()),
    )
    .unwrap();
    let evs: Vec<FrameEvaluation> = sols
        .iter()
        .map(|s| evaluate(s, &seq.scenes[s.frame]))
        .collect();
    let converged = sols.iter().filter(|s| s.converged).count();
    let first = evs[0].alignment.reversed;
    let flips = evs.iter().filter(|e| e.alignment.reversed != first).count();
    let max_rms = evs.iter().map(|e| e.alignment.rms).fold(0.0, f64::max);
    outcome(
        sols.len() == spec.frames && converged >= 48 && flips == 0 && max_rms < 0.03,
        format!(
            "{converged}/{} converged (>= 48), {flips} head-tail flips (first frame {}), max 3D RMS {max_rms:.4} mm (< 0.03)",
            sols.len(),
            if first { "reversed" } else { "aligned" }
        ),
    )
}

// 6 --------------------------------------------------------------------------

/// Scene with one worm-like blob just beyond a body end in view 0, its
/// centre 1.5 worm radii clear of the body outline.
fn distractor_scene() -> (SyntheticScene, ImageTriplet, Distractor) {
    let spec = SceneSpec {
        distractors: DistractorSpec {
            count: 0,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut scene, _) = generate_scene(&spec, &mut rng).unwrap();
    let c = 0;
    let q = project_curve(&scene.true_cameras, &scene.truth.p).unwrap();
    let qc = &q[c];
    let n = qc.len();
    let radius = scene.render.sigma[c];
    let gap = 2.5 * radius;
    let place = |end: usize, inner: usize| {
        let (a, b) = (qc[end], qc[inner]);
        let d = [a[0] - b[0], a[1] - b[1]];
        let len = d[0].hypot(d[1]);
        [a[0] + gap * d[0] / len, a[1] + gap * d[1] / len]
    };
    let clearance = |p: [f64; 2]| distance_to_polyline(p, qc);
    let head = place(0, 3);
    let tail = place(n - 1, n - 4);
    let centre = if clearance(head) >= clearance(tail) {
        head
    } else {
        tail
    };
    let d = Distractor {
        camera: c,
        centre,
        sigma: radius,
        intensity: scene.render.iota[c],
        rho: scene.render.rho[c],
    };
    scene.distractors = vec![d];
    let images = render_scene(&scene, &mut rng).unwrap();
    (scene, images, d)
}

fn masking_robustness() -> Outcome {
    let (scene, images, d) = distractor_scene();
    let spec = SceneSpec::default();
    let truth_q = project_curve(&scene.true_cameras, &scene.truth.p).unwrap();
    let truth_clear = distance_to_polyline(d.centre, &truth_q[d.camera]);
    let run = |letters: &str| {
        let opts = options(
            settings_for(&spec),
            AblationToggles::from_letters(letters).unwrap(),
        );
        let sols = process_sequence(
            &vec![images.clone()],
            &scene.cameras,
            &opts,
            &mut |_| {},
            &mut |_| Ok(()),
        )
        .unwrap();
        let q = project_curve(&sols[0].cameras, &sols[0].state.p).unwrap();
        (
            distance_to_polyline(d.centre, &q[d.camera]),
            evaluate(&sols[0], &scene),
        )
    };
    let (clear, ev) = run("");
    let (clear_e, ev_e) = run("e");
    outcome(
        truth_clear > d.sigma && clear > d.sigma,
        format!(
            "distractor radius {:.2} px at {:.2} px from the true midline; default clearance {clear:.2} px (RMS {:.4} mm), \
             ablate e clearance {clear_e:.2} px (RMS {:.4} mm, {})",
            d.sigma,
            truth_clear,
            ev.alignment.rms,
            ev_e.alignment.rms,
            if clear_e > d.sigma { "clear" } else { "intersects" }
        ),
    )
}

// 7 --------------------------------------------------------------------------

/// Tip errors with and without centre-shifting from a start displaced by
/// `displacement` vertices along the true body.
struct ShiftTrial {
    ev: FrameEvaluation,
    ev_c: FrameEvaluation,
    converged: bool,
    shifted: i64,
    moved: u64,
    steps: usize,
    steps_c: usize,
}

impl ShiftTrial {
    fn ratio(&self) -> f64 {
        self.ev_c.alignment.tip_error / self.ev.alignment.tip_error
    }
}

fn shift_trial(displacement: usize) -> ShiftTrial {
    let spec = SceneSpec::default();
    let (scene, images) = generate_scene(&spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let truth = &scene.truth;
    let n = truth.n();
    let mid = n / 2;
    let src = mid + displacement;
    let displaced = CurveState::from_anchor(
        truth.p[src],
        truth.t[src],
        truth.m1[src],
        shift_curvature(&truth.k, displacement as i64),
        truth.length,
        mid,
    )
    .unwrap();
    let q = project_curve(&scene.cameras, &displaced.p).unwrap();
    let centres = std::array::from_fn(|c| {
        let s = q[c]
            .iter()
            .fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
        [s[0] / n as f64, s[1] / n as f64]
    });
    let offsets = crop_about(&centres, [(spec.image_size, spec.image_size); 3], spec.w);
    let inputs = FrameInputs {
        frame: 0,
        images: crop_triplet(&images, &offsets, spec.w),
        crop_offset: offsets,
        snapshot: None,
    };
    let mut settings = settings_for(&spec);
    settings.limits.w = spec.w;
    let cfg = OptimizerConfig::default();
    let start = Start {
        state: displaced.clone(),
        length_raw: settings.constraints.raw_from_length(truth.length),
        render: scene.render,
        cameras: scene.cameras,
        growth: None,
    };
    let run = |letters: &str| {
        let toggles = AblationToggles::from_letters(letters).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut shifted, mut moves) = (0, 0);
        let sol = optimize_frame(
            &inputs,
            &start,
            &settings,
            &cfg,
            &toggles,
            cfg.max_steps_first,
            &mut rng,
            &mut |e| {
                shifted += e.shift;
                moves += e.shift.unsigned_abs();
            },
        )
        .unwrap();
        (
            evaluate(&sol, &scene),
            sol.converged,
            shifted,
            moves,
            sol.steps,
        )
    };
    let (ev, converged, shifted, moved, steps) = run("");
    let (ev_c, _, _, _, steps_c) = run("c");
    ShiftTrial {
        ev,
        ev_c,
        converged,
        shifted,
        moved,
        steps,
        steps_c,
    }
}

fn centre_shift_recovery() -> Outcome {
    let displacement = 10;
    let t = shift_trial(displacement);
    // Non-gating: a displacement large enough to cross the shift trigger.
    let wide = shift_trial(2 * displacement);
    outcome(
        within_frame_tolerance(&t.ev) && t.ratio() >= 2.0,
        format!(
            "start displaced {displacement} vertices; with shifting: {} px, RMS {:.4} mm, tip {:.4} mm, \
             net shift {} ({} moved), {} steps, converged {}; ablate c: tip {:.4} mm, {} steps; ratio {:.1} (>= 2); \
             at {} vertices: {} moved, ratio {:.1}",
            fmt_px(t.ev.mean_px),
            t.ev.alignment.rms,
            t.ev.alignment.tip_error,
            t.shifted,
            t.moved,
            t.steps,
            t.converged,
            t.ev_c.alignment.tip_error,
            t.steps_c,
            t.ratio(),
            2 * displacement,
            wide.moved,
            wide.ratio()
        ),
    )
}

// 9 --------------------------------------------------------------------------

/// Replays the plateau rule over a recorded loss trace and compares every
/// step's rates and decay flag with what the optimiser reported.
fn replay_schedule(
    events: &[ProgressEvent],
    cfg: &OptimizerConfig,
) -> Result<(usize, bool), String> {
    let mut rates = [cfg.lambda_p, cfg.lambda_r, cfg.lambda_eta];
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut decays = 0;
    for e in events {
        let loss = e.losses.total;
        let improved = !best.is_finite() || loss < best - cfg.improvement_threshold * best.abs();
        let mut decayed = false;
        if improved {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale == 5 {
                stale = 0;
                decayed = true;
                decays += 1;
                for r in &mut rates {
                    *r = (*r * 0.8).max(1e-6);
                }
            }
        }
        if decayed != e.decayed || rates != e.rates {
            return Err(format!(
                "step {}: expected rates {rates:?} (decay {decayed}), reported {:?} (decay {})",
                e.step, e.rates, e.decayed
            ));
        }
        if e.rates.iter().any(|&r| r < 1e-6) {
            return Err(format!(
                "step {}: rate below the floor {:?}",
                e.step, e.rates
            ));
        }
    }
    let floored = events.last().is_some_and(|e| e.rates.contains(&1e-6));
    Ok((decays, floored))
}

fn schedule_conformance() -> Outcome {
    // The small gradient-check scene keeps a long trace cheap.
    let spec = small_scene_spec();
    let (scene, images) = generate_scene(&spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let q = project_curve(&scene.cameras, &scene.truth.p).unwrap();
    let n = scene.truth.n();
    let centres = std::array::from_fn(|c| {
        let s = q[c]
            .iter()
            .fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
        [s[0] / n as f64, s[1] / n as f64]
    });
    let offsets = crop_about(&centres, [(spec.image_size, spec.image_size); 3], spec.w);
    let inputs = FrameInputs {
        frame: 0,
        images: crop_triplet(&images, &offsets, spec.w),
        crop_offset: offsets,
        snapshot: None,
    };
    let mut limits = scene.limits;
    limits.w = spec.w;
    let settings = FrameSettings {
        constraints: spec.constraints,
        limits,
        frozen: FrozenMask::shifts_only(),
        ..FrameSettings::default()
    };
    let start = Start {
        state: scene.truth.clone(),
        length_raw: settings.constraints.raw_from_length(scene.truth.length),
        render: scene.render,
        cameras: scene.cameras,
        growth: None,
    };
    let mut details = Vec::new();
    let mut pass = true;
    // The configured relative threshold and a plain strict decrease.
    for threshold in [OptimizerConfig::default().improvement_threshold, 0.0] {
        let cfg = OptimizerConfig {
            improvement_threshold: threshold,
            ..OptimizerConfig::default()
        };
        let mut events = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        optimize_frame(
            &inputs,
            &start,
            &settings,
            &cfg,
            &AblationToggles::default(),
            3000,
            &mut rng,
            &mut |e| events.push(*e),
        )
        .unwrap();
        match replay_schedule(&events, &cfg) {
            Ok((decays, floored)) => {
                pass &= decays > 0 && floored;
                details.push(format!(
                    "threshold {threshold:e}: {} steps, {decays} decays, floor {}",
                    events.len(),
                    if floored { "reached" } else { "not reached" }
                ));
            }
            Err(msg) => {
                pass = false;
                details.push(format!("threshold {threshold:e}: {msg}"));
            }
        }
    }
    outcome(pass, details.join("; "))
}

// ----------------------------------------------------------------------------

fn invariant_suites() -> Outcome {
    use common::*;
    let results: [(&str, Result<(), String>); 7] = [
        (
            "frame orthonormality",
            runner()
                .run(&curve_case(), |c| frame_orthonormality(&c))
                .map_err(|e| e.to_string()),
        ),
        (
            "equidistance",
            runner()
                .run(&curve_case(), |c| equidistance(&c))
                .map_err(|e| e.to_string()),
        ),
        (
            "score-taper unimodality",
            runner()
                .run(&raw_scores(), |s| score_taper_unimodal(&s))
                .map_err(|e| e.to_string()),
        ),
        (
            "mask two-valuedness",
            runner()
                .run(&mask_case(), |c| mask_two_valued(&c))
                .map_err(|e| e.to_string()),
        ),
        (
            "loss non-negativity",
            runner()
                .run(&loss_case(), |c| losses_non_negative(&c))
                .map_err(|e| e.to_string()),
        ),
        (
            "projection idempotence",
            runner()
                .run(&projection_case(), |c| projection_idempotent(&c))
                .map_err(|e| e.to_string()),
        ),
        (
            "determinism",
            runner()
                .run(&proptest::prelude::any::<u64>(), deterministic)
                .map_err(|e| e.to_string()),
        ),
    ];
    let pass = results.iter().all(|(_, r)| r.is_ok());
    let lines: Vec<String> = results
        .iter()
        .map(|(name, r)| match r {
            Ok(()) => name.to_string(),
            Err(e) => format!("{name} FAILED ({e})"),
        })
        .collect();
    outcome(pass, format!("{CASES} cases each: {}", lines.join(", ")))
}

// ----------------------------------------------------------------------------

type Criterion = (usize, &'static str, fn() -> Outcome, u64);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "geometry oracle", geometry_oracle, 1),
        (2, "camera oracle", camera_oracle, 1),
        (3, "gradient fidelity", gradient_fidelity, 30),
        (4, "single-frame reconstruction", single_frame, 300),
        (5, "sequence tracking", sequence_tracking, 900),
        (6, "masking robustness", masking_robustness, 300),
        (7, "centre-shift recovery", centre_shift_recovery, 300),
        (8, "invariant suites", invariant_suites, 120),
        (9, "schedule conformance", schedule_conformance, 60),
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, run, budget) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let clock = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run));
        let elapsed = clock.elapsed();
        let budget = Duration::from_secs(budget);
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed < budget, o.detail),
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id} [{}] {name}: {detail}; {:.1} s (budget {} s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
