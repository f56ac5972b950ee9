//! Synthetic scenes and sequences rendered with the forward model, with
//! ground truth for evaluation.

use std::path::Path;

use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::{
    project_curve, save_calibration, CalibrationFile, CameraTriplet, ProjectedCurve,
};
use crate::curve::{Curvature, CurveConstraints, CurveState, Vec3};
use crate::error::{Error, Result};
use crate::io::{frame_file_name, write_gray16};
use crate::losses::{intersection_loss, smoothness_loss, temporal_loss, TemporalState};
use crate::raster::{Image, ImageTriplet};
use crate::render::{blob_pixel, taper_params, BlobField, RenderLimits, RenderParams};

/// Number of (cos, sin) pairs per curvature component.
const SERIES_TERMS: usize = 2;
const MAX_ATTEMPTS: usize = 100;

/// Static image artefact drawn into one view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub camera: usize,
    /// Full-image pixel position.
    pub centre: [f64; 2],
    pub sigma: f64,
    pub intensity: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistractorSpec {
    pub count: usize,
    pub sigma: f64,
    pub intensity: f64,
    pub rho: f64,
    /// Minimum distance (px) from every projected vertex.
    pub min_distance: f64,
    /// Maximum distance (px) from the projected centroid.
    pub max_distance: f64,
}

impl Default for DistractorSpec {
    fn default() -> Self {
        Self {
            count: 2,
            sigma: 5.0,
            intensity: 0.8,
            rho: 1.5,
            min_distance: 30.0,
            max_distance: 80.0,
        }
    }
}

/// Parameters of one synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub constraints: CurveConstraints,
    /// Crop size the reconstruction will use.
    pub w: usize,
    /// Side of the written (square) images.
    pub image_size: usize,
    pub focal: f64,
    /// Camera distance from the rig centre (mm).
    pub distance: f64,
    pub length: f64,
    /// Standard deviation of the curvature series coefficients.
    pub curvature_scale: f64,
    pub render: RenderParams,
    pub sigma_min: f64,
    pub iota_min: f64,
    pub noise: f64,
    pub distractors: DistractorSpec,
    /// RMS reprojection error (px) the initial calibration may carry.
    pub perturbation_budget: f64,
    /// Largest random offset (mm) of the worm centroid from the rig centre.
    pub position_jitter: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            constraints: CurveConstraints::default(),
            w: 200,
            image_size: 264,
            focal: 6000.0,
            distance: 50.0,
            length: 1.0,
            curvature_scale: 3.0,
            render: RenderParams {
                sigma: [4.0, 4.5, 3.6],
                iota: [0.8, 0.7, 0.9],
                rho: [1.5, 1.2, 1.8],
            },
            sigma_min: 3.0,
            iota_min: 0.2,
            noise: 0.02,
            distractors: DistractorSpec::default(),
            perturbation_budget: 10.0,
            position_jitter: 0.05,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.constraints.validate()?;
        if self.image_size < self.w {
            return Err(Error::invalid("image_size must be at least w"));
        }
        if !(self.length > self.constraints.l_min && self.length < self.constraints.l_max) {
            return Err(Error::invalid(
                "length must lie inside the curve length bounds",
            ));
        }
        if !(self.focal > 0.0
            && self.distance > 0.0
            && self.noise >= 0.0
            && self.perturbation_budget >= 0.0)
        {
            return Err(Error::invalid(
                "focal, distance, noise and budget must be non-negative",
            ));
        }
        self.limits().validate()?;
        self.render.validate(&self.limits())
    }

    /// Rendering limits for full-size images.
    pub fn limits(&self) -> RenderLimits {
        RenderLimits {
            sigma_min: self.sigma_min,
            iota_min: self.iota_min,
            w: self.image_size,
            cutoff_eps: 1e-4,
        }
    }

    pub fn rig(&self) -> CameraTriplet {
        let c = (self.image_size as f64 - 1.0) / 2.0;
        CameraTriplet::orthogonal_rig(self.focal, [c, c], self.distance)
    }
}

/// Ground truth and inputs of one synthetic frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub truth: CurveState,
    pub true_cameras: CameraTriplet,
    /// Calibration handed to the reconstruction.
    pub cameras: CameraTriplet,
    pub render: RenderParams,
    pub limits: RenderLimits,
    pub noise: f64,
    pub distractors: Vec<Distractor>,
    /// Curvature series coefficients the truth was built from.
    pub coefficients: Vec<f64>,
}

/// Curvature from series coefficients: for each component `a` and term `j`,
/// `c[a][2j] cos(pi (j+1) s) + c[a][2j+1] sin(pi (j+1) s)`.
pub fn curvature_from_series(n: usize, coefficients: &[f64]) -> Curvature {
    let per = 2 * SERIES_TERMS;
    Curvature::from_rows(
        (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                let mut out = [0.0; 2];
                for (a, o) in out.iter_mut().enumerate() {
                    for j in 0..SERIES_TERMS {
                        let arg = std::f64::consts::PI * (j + 1) as f64 * s;
                        *o += coefficients[a * per + 2 * j] * arg.cos()
                            + coefficients[a * per + 2 * j + 1] * arg.sin();
                    }
                }
                out
            })
            .collect(),
    )
}

/// Number of coefficients used by [`curvature_from_series`].
pub fn series_len() -> usize {
    4 * SERIES_TERMS
}

fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation3<f64> {
    let q = nalgebra::Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    Unit::new_normalize(q).to_rotation_matrix()
}

/// Integrates a curve whose middle-vertex frame is `orientation` and whose
/// centroid sits at `centroid`.
pub fn posed_curve(
    k: Curvature,
    length: f64,
    orientation: &Rotation3<f64>,
    centroid: Vec3,
) -> Result<CurveState> {
    let n = k.len();
    let mid = n / 2;
    let m = orientation.matrix();
    let t = m.column(0).into_owned();
    let m1 = m.column(1).into_owned();
    let mut state = CurveState::from_anchor(Vec3::zeros(), t, m1, k, length, mid)?;
    let shift = centroid - state.centroid();
    for p in &mut state.p {
        *p += shift;
    }
    Ok(state)
}

/// Object-space size of one pixel at the worm for `cams`.
pub fn pixel_scale(cams: &CameraTriplet, points: &[Vec3]) -> f64 {
    cams.pixel_to_mm(points)
}

/// Checks that a posed curve is a valid ground truth: no self-intersection
/// penalty and every projection inside the crop window about the image centre.
fn feasible(
    state: &CurveState,
    spec: &SceneSpec,
    cams: &CameraTriplet,
    render: &RenderParams,
) -> Result<bool> {
    let limits = spec.limits();
    let tapered = taper_params(render, &limits, state.n());
    let scale = cams.pixel_to_mm(&state.p);
    let (li, _) = intersection_loss(&state.p, &tapered.sigma, spec.constraints.k_max, scale)?;
    if li > 0.0 {
        return Ok(false);
    }
    let q = project_curve(cams, &state.p)?;
    let centre = (spec.image_size as f64 - 1.0) / 2.0;
    let margin = spec.w as f64 / 2.0 - 3.0 * render.sigma.iter().copied().fold(0.0, f64::max);
    Ok(q.iter()
        .flatten()
        .all(|v| (v[0] - centre).abs() < margin && (v[1] - centre).abs() < margin))
}

fn sample_coefficients<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, scale.max(0.0)).expect("finite scale");
    (0..series_len())
        .map(|_| if scale > 0.0 { normal.sample(rng) } else { 0.0 })
        .collect()
}

/// Shifts every principal point so the RMS reprojection error of `points`
/// equals `target` px. Principal-point offsets stand in for calibration
/// error; they are what the shared shifts plus a rigid translation can undo.
pub fn perturb_cameras<R: Rng + ?Sized>(
    cams: &CameraTriplet,
    points: &[Vec3],
    target: f64,
    rng: &mut R,
) -> Result<CameraTriplet> {
    let dirs: Vec<[f64; 2]> = (0..3)
        .map(|_| {
            [
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ]
        })
        .collect();
    let norm = (dirs.iter().map(|d| d[0] * d[0] + d[1] * d[1]).sum::<f64>() / 3.0).sqrt();
    let scale = if norm > 0.0 { target / norm } else { 0.0 };
    let mut out = *cams;
    for (cam, d) in out.cams.iter_mut().zip(&dirs) {
        cam.cx += d[0] * scale;
        cam.cy += d[1] * scale;
    }
    let _ = reprojection_rms(cams, &out, points)?;
    Ok(out)
}

/// RMS distance between projections of `points` under two triplets.
pub fn reprojection_rms(a: &CameraTriplet, b: &CameraTriplet, points: &[Vec3]) -> Result<f64> {
    let qa = project_curve(a, points)?;
    let qb = project_curve(b, points)?;
    let mut total = 0.0;
    for c in 0..3 {
        for (x, y) in qa[c].iter().zip(&qb[c]) {
            total += (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
        }
    }
    Ok((total / (3 * points.len()) as f64).sqrt())
}

/// Draws distractors in random views, away from the projected body.
pub fn sample_distractors<R: Rng + ?Sized>(
    spec: &DistractorSpec,
    q: &ProjectedCurve,
    image_size: usize,
    rng: &mut R,
) -> Vec<Distractor> {
    let mut out = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let camera = rng.gen_range(0..3);
        let qc = &q[camera];
        let centroid = qc
            .iter()
            .fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
        let centroid = [centroid[0] / qc.len() as f64, centroid[1] / qc.len() as f64];
        let mut centre = centroid;
        for _ in 0..1000 {
            let r = rng.gen_range(0.0..spec.max_distance);
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let cand = [centroid[0] + r * a.cos(), centroid[1] + r * a.sin()];
            let inside = cand
                .iter()
                .all(|v| *v >= 0.0 && *v <= image_size as f64 - 1.0);
            let clear = qc
                .iter()
                .all(|v| (v[0] - cand[0]).hypot(v[1] - cand[1]) >= spec.min_distance);
            centre = cand;
            if inside && clear {
                break;
            }
        }
        out.push(Distractor {
            camera,
            centre,
            sigma: spec.sigma,
            intensity: spec.intensity,
            rho: spec.rho,
        });
    }
    out
}

/// Renders the scene's ground truth with distractors and pixel noise.
pub fn render_scene<R: Rng + ?Sized>(scene: &SyntheticScene, rng: &mut R) -> Result<ImageTriplet> {
    let q = project_curve(&scene.true_cameras, &scene.truth.p)?;
    let tapered = taper_params(&scene.render, &scene.limits, scene.truth.n());
    let field = BlobField::build(&q, &tapered, &scene.render.rho, &scene.limits)?;
    let mut images = field.render().images;
    for d in &scene.distractors {
        add_distractor(&mut images[d.camera], d, scene.limits.cutoff_eps);
    }
    if scene.noise > 0.0 {
        let normal = Normal::new(0.0, scene.noise).expect("positive noise");
        for img in &mut images {
            for v in &mut img.data {
                *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
            }
        }
    }
    Ok(images)
}

fn add_distractor(img: &mut Image, d: &Distractor, eps: f64) {
    if d.intensity <= 0.0 {
        return;
    }
    let r = crate::render::cutoff_radius(d.sigma, d.intensity, d.rho, eps);
    let (w, h) = (img.width as f64, img.height as f64);
    let i0 = (d.centre[0] - r).ceil().max(0.0) as usize;
    let i1 = (d.centre[0] + r).floor().min(w - 1.0);
    let j0 = (d.centre[1] - r).ceil().max(0.0) as usize;
    let j1 = (d.centre[1] + r).floor().min(h - 1.0);
    if i1 < 0.0 || j1 < 0.0 {
        return;
    }
    for j in j0..=j1 as usize {
        for i in i0..=i1 as usize {
            let v = blob_pixel(d.centre, d.sigma, d.intensity, d.rho, i as f64, j as f64);
            if v > img.get(i, j) {
                img.set(i, j, v);
            }
        }
    }
}

/// Samples a feasible posture, renders it and returns scene plus images.
pub fn generate_scene<R: Rng + ?Sized>(
    spec: &SceneSpec,
    rng: &mut R,
) -> Result<(SyntheticScene, ImageTriplet)> {
    spec.validate()?;
    let true_cameras = spec.rig();
    let n = spec.constraints.n;
    for _ in 0..MAX_ATTEMPTS {
        let coefficients = sample_coefficients(spec.curvature_scale, rng);
        let orientation = random_rotation(rng);
        let centroid = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ) * spec.position_jitter;
        let mut k = curvature_from_series(n, &coefficients);
        if k.max_norm() >= spec.constraints.curvature_bound() {
            continue;
        }
        k.project_onto_bound(spec.constraints.curvature_bound());
        let truth = posed_curve(k, spec.length, &orientation, centroid)?;
        if !feasible(&truth, spec, &true_cameras, &spec.render)? {
            continue;
        }
        return finish_scene(
            spec,
            truth,
            coefficients,
            spec.render,
            &true_cameras,
            None,
            rng,
        );
    }
    Err(Error::invalid(format!(
        "no feasible synthetic posture after {MAX_ATTEMPTS} attempts"
    )))
}

fn finish_scene<R: Rng + ?Sized>(
    spec: &SceneSpec,
    truth: CurveState,
    coefficients: Vec<f64>,
    render: RenderParams,
    true_cameras: &CameraTriplet,
    fixed: Option<(&CameraTriplet, &[Distractor])>,
    rng: &mut R,
) -> Result<(SyntheticScene, ImageTriplet)> {
    // Separate streams keep the noise independent of how many distractors
    // or perturbations were drawn.
    let mut aux = ChaCha8Rng::seed_from_u64(rng.gen());
    let (cameras, distractors) = match fixed {
        Some((c, d)) => (*c, d.to_vec()),
        None => {
            let cams = perturb_cameras(
                true_cameras,
                &truth.p,
                0.75 * spec.perturbation_budget,
                &mut aux,
            )?;
            let q = project_curve(true_cameras, &truth.p)?;
            let d = sample_distractors(&spec.distractors, &q, spec.image_size, &mut aux);
            (cams, d)
        }
    };
    let scene = SyntheticScene {
        truth,
        true_cameras: *true_cameras,
        cameras,
        render,
        limits: spec.limits(),
        noise: spec.noise,
        distractors,
        coefficients,
    };
    let images = render_scene(&scene, rng)?;
    Ok((scene, images))
}

/// Linear drift of the rendering parameters over a clip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusDrift {
    pub sigma_end: [f64; 3],
    pub rho_end: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub scene: SceneSpec,
    pub frames: usize,
    /// Standard deviation of the per-frame random walk of the curvature
    /// series coefficients.
    pub curvature_rate: f64,
    /// Centroid velocity (mm / frame).
    pub velocity: [f64; 3],
    /// Rotation of the body frame per frame (rad).
    pub rotation_rate: f64,
    pub focus_drift: Option<FocusDrift>,
    /// Ground-truth smoothness loss may not exceed this.
    pub smoothness_cap: f64,
    /// Ground-truth frame-to-frame temporal loss may not exceed this.
    pub temporal_cap: f64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            scene: SceneSpec::default(),
            frames: 50,
            curvature_rate: 0.05,
            velocity: [0.004, -0.003, 0.002],
            rotation_rate: 0.005,
            focus_drift: Some(FocusDrift {
                sigma_end: [4.6, 3.8, 4.2],
                rho_end: [1.1, 1.6, 1.4],
            }),
            smoothness_cap: 20.0,
            temporal_cap: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSequence {
    pub scenes: Vec<SyntheticScene>,
}

fn temporal_state(scene: &SyntheticScene) -> TemporalState {
    TemporalState {
        length: scene.truth.length,
        k: scene.truth.k.clone(),
        p: scene.truth.p.clone(),
        camera: scene.cameras.to_array().to_vec(),
        render: scene.render,
    }
}

/// Evolves one scene over time: random walk of the posture, rigid drift and
/// optional focus drift. Distractors and calibration stay fixed.
pub fn generate_sequence<R: Rng + ?Sized>(
    spec: &SequenceSpec,
    rng: &mut R,
) -> Result<(SyntheticSequence, Vec<ImageTriplet>)> {
    if spec.frames == 0 {
        return Err(Error::invalid("a sequence needs at least one frame"));
    }
    let base = &spec.scene;
    let (first, first_images) = generate_scene(base, rng)?;
    let n = base.constraints.n;
    let mid = n / 2;
    let orientation0 = Rotation3::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[
        first.truth.t[mid],
        first.truth.m1[mid],
        first.truth.m2[mid],
    ]));
    let axis = Unit::new_normalize(Vec3::new(rng.gen(), rng.gen(), rng.gen::<f64>() + 0.1));
    let centroid0 = first.truth.centroid();
    let walk = Normal::new(0.0, spec.curvature_rate.max(1e-300)).expect("finite rate");

    let mut scenes = vec![first.clone()];
    let mut images = vec![first_images];
    let mut coefficients = first.coefficients.clone();
    let drift = |t: usize| -> RenderParams {
        let mut r = base.render;
        if let Some(d) = spec.focus_drift {
            let f = if spec.frames > 1 {
                t as f64 / (spec.frames - 1) as f64
            } else {
                0.0
            };
            for c in 0..3 {
                r.sigma[c] = base.render.sigma[c] + f * (d.sigma_end[c] - base.render.sigma[c]);
                r.rho[c] = base.render.rho[c] + f * (d.rho_end[c] - base.render.rho[c]);
            }
        }
        r
    };
    for t in 1..spec.frames {
        let orientation =
            Rotation3::from_axis_angle(&axis, spec.rotation_rate * t as f64) * orientation0;
        let centroid = centroid0 + Vec3::from(spec.velocity) * t as f64;
        let render = drift(t);
        let prev = scenes.last().expect("non-empty");
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let cand: Vec<f64> = if spec.curvature_rate > 0.0 {
                coefficients.iter().map(|c| c + walk.sample(rng)).collect()
            } else {
                coefficients.clone()
            };
            let k = curvature_from_series(n, &cand);
            if k.max_norm() >= base.constraints.curvature_bound() {
                continue;
            }
            let truth = posed_curve(k, base.length, &orientation, centroid)?;
            let limits = base.limits();
            let tapered = taper_params(&render, &limits, n);
            let scale = prev.true_cameras.pixel_to_mm(&truth.p);
            let (li, _) =
                intersection_loss(&truth.p, &tapered.sigma, base.constraints.k_max, scale)?;
            let (sm, _) = smoothness_loss(&truth.k);
            let candidate = SyntheticScene {
                truth: truth.clone(),
                render,
                ..prev.clone()
            };
            let (lt, _) = temporal_loss(&temporal_state(&candidate), Some(&temporal_state(prev)))?;
            if li == 0.0 && sm <= spec.smoothness_cap && lt <= spec.temporal_cap {
                accepted = Some((truth, cand));
                break;
            }
        }
        let Some((truth, cand)) = accepted else {
            return Err(Error::invalid(format!(
                "could not evolve the posture at frame {t}"
            )));
        };
        coefficients = cand.clone();
        let (scene, imgs) = finish_scene(
            base,
            truth,
            cand,
            render,
            &first.true_cameras,
            Some((&first.cameras, &first.distractors)),
            rng,
        )?;
        scenes.push(scene);
        images.push(imgs);
    }
    Ok((SyntheticSequence { scenes }, images))
}

/// Ground-truth document written next to each synthetic frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub frame: usize,
    pub curve: CurveState,
    pub true_cameras: CalibrationFile,
    pub render: RenderParams,
    pub distractors: Vec<Distractor>,
}

pub fn truth_file_name(t: usize) -> String {
    format!("truth_{t:06}.json")
}

/// Writes frames (16-bit PNG, dark foreground on a light background), one
/// truth document per frame and the perturbed calibration `calib.json`.
pub fn write_sequence(dir: &Path, seq: &SyntheticSequence, images: &[ImageTriplet]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, (scene, imgs)) in seq.scenes.iter().zip(images).enumerate() {
        for (c, img) in imgs.iter().enumerate() {
            write_gray16(&dir.join(frame_file_name(t, c)), img, true)?;
        }
        let truth = TruthRecord {
            frame: t,
            curve: scene.truth.clone(),
            true_cameras: CalibrationFile::from(&scene.true_cameras),
            render: scene.render,
            distractors: scene.distractors.clone(),
        };
        let path = dir.join(truth_file_name(t));
        std::fs::write(&path, serde_json::to_string(&truth)?).map_err(|e| Error::io(&path, e))?;
    }
    if let Some(first) = seq.scenes.first() {
        save_calibration(&dir.join("calib.json"), &first.cameras)?;
    }
    Ok(())
}

/// Reads every `truth_*.json` in `dir`, ordered by frame.
pub fn read_truth(dir: &Path) -> Result<Vec<TruthRecord>> {
    let mut out = Vec::new();
    let mut t = 0;
    loop {
        let path = dir.join(truth_file_name(t));
        if !path.exists() {
            break;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        out.push(serde_json::from_str(&text)?);
        t += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_spec() -> SceneSpec {
        SceneSpec {
            noise: 0.0,
            distractors: DistractorSpec {
                count: 0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn noise_free_scene_equals_forward_render() {
        let spec = quiet_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (scene, imgs) = generate_scene(&spec, &mut rng).unwrap();
        let q = project_curve(&scene.true_cameras, &scene.truth.p).unwrap();
        let direct = crate::render::render(&q, &scene.render, &scene.limits).unwrap();
        for c in 0..3 {
            assert_eq!(imgs[c].data, direct.images[c].data);
        }
        assert!(scene.truth.frame_error() < 1e-9);
        assert!(scene.truth.spacing_error() < 1e-6);
    }

    #[test]
    fn zero_intensity_distractors_change_nothing() {
        let mut a = SceneSpec::default();
        a.distractors.intensity = 0.0;
        let mut b = a.clone();
        b.distractors.count = 0;
        let (_, ia) = generate_scene(&a, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let (_, ib) = generate_scene(&b, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(ia, ib);
    }

    #[test]
    fn perturbation_hits_budget() {
        let spec = SceneSpec::default();
        for seed in 0..5 {
            let (scene, _) = generate_scene(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let rms =
                reprojection_rms(&scene.true_cameras, &scene.cameras, &scene.truth.p).unwrap();
            assert!((5.0..=10.0).contains(&rms), "rms {rms}");
        }
    }

    #[test]
    fn static_sequence_repeats_the_posture() {
        let spec = SequenceSpec {
            scene: quiet_spec(),
            frames: 3,
            curvature_rate: 0.0,
            velocity: [0.0; 3],
            rotation_rate: 0.0,
            focus_drift: None,
            ..Default::default()
        };
        let (seq, imgs) = generate_sequence(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(seq.scenes.len(), 3);
        for t in 1..3 {
            for (a, b) in imgs[t][0].data.iter().zip(&imgs[0][0].data) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
