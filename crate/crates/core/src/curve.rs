//! Intrinsic curve model.
//!
//! The midline is stored as a curvature field `K` (two Bishop components per
//! vertex, expressed per unit of normalised arclength) plus a length and a
//! single anchored vertex carrying position and frame. Everything else is
//! recovered by integrating the Bishop equations outward from the anchor.
//!
//! Each segment `j -> j+1` rotates the frame by the exact rotation generated
//! by the segment-averaged curvature, so a step taken forward and the same
//! step taken backward are inverses of each other. Vertices are joined by
//! chords of length `l / (N - 1)` along the bisector of the two tangents.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const FRAME_TOL: f64 = 1e-6;

/// Curvature components `(m1, m2)` per vertex, scaled by body length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Curvature {
    values: Vec<[f64; 2]>,
}

impl Curvature {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![[0.0; 2]; n],
        }
    }

    pub fn from_rows(values: Vec<[f64; 2]>) -> Self {
        Self { values }
    }

    pub fn constant(n: usize, m: [f64; 2]) -> Self {
        Self { values: vec![m; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn rows_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.values
    }

    pub fn norm(&self, n: usize) -> f64 {
        let [a, b] = self.values[n];
        a.hypot(b)
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.len()).map(|n| self.norm(n)).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|r| r[0].is_finite() && r[1].is_finite())
    }

    /// Rescales every row whose norm exceeds `bound` back onto the bound,
    /// keeping its direction. Returns the number of rows touched.
    pub fn project_onto_bound(&mut self, bound: f64) -> usize {
        let mut touched = 0;
        for row in &mut self.values {
            let norm = row[0].hypot(row[1]);
            if norm > bound {
                let mut s = bound / norm;
                // Rounding can leave the rescaled row an ulp outside.
                while (row[0] * s).hypot(row[1] * s) > bound {
                    s *= 1.0 - f64::EPSILON;
                }
                row[0] *= s;
                row[1] *= s;
                touched += 1;
            }
        }
        touched
    }
}

/// Non-optimisable limits on the curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveConstraints {
    pub n: usize,
    pub l_min: f64,
    pub l_max: f64,
    pub k_max: f64,
}

impl Default for CurveConstraints {
    fn default() -> Self {
        Self {
            n: 128,
            l_min: 0.6,
            l_max: 1.5,
            k_max: 3.0,
        }
    }
}

impl CurveConstraints {
    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::invalid(format!("N = {} must be at least 8", self.n)));
        }
        if !(self.l_min > 0.0 && self.l_min < self.l_max) {
            return Err(Error::invalid(format!(
                "length bounds ({}, {}) must satisfy 0 < l_min < l_max",
                self.l_min, self.l_max
            )));
        }
        if !(self.k_max > 0.0) {
            return Err(Error::invalid("k_max must be positive"));
        }
        Ok(())
    }

    /// Largest admissible `|K_n|`.
    pub fn curvature_bound(&self) -> f64 {
        2.0 * PI * self.k_max
    }

    /// Bounded reparametrisation `l = l_min + (l_max - l_min) * logistic(raw)`.
    pub fn length_from_raw(&self, raw: f64) -> f64 {
        self.l_min + (self.l_max - self.l_min) * logistic(raw)
    }

    /// `dl / d raw` of [`Self::length_from_raw`].
    pub fn length_raw_derivative(&self, raw: f64) -> f64 {
        let s = logistic(raw);
        (self.l_max - self.l_min) * s * (1.0 - s)
    }

    /// Inverse of [`Self::length_from_raw`]; lengths outside the open
    /// interval are pulled just inside first.
    pub fn raw_from_length(&self, length: f64) -> f64 {
        let u = ((length - self.l_min) / (self.l_max - self.l_min)).clamp(1e-9, 1.0 - 1e-9);
        (u / (1.0 - u)).ln()
    }

    /// Clamps a length into the open interval `(l_min, l_max)`.
    pub fn clamp_length(&self, length: f64) -> f64 {
        let margin = 1e-9 * (self.l_max - self.l_min);
        length.clamp(self.l_min + margin, self.l_max - margin)
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Full discretised curve: positions, Bishop frames, curvature and length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveState {
    pub p: Vec<Vec3>,
    pub t: Vec<Vec3>,
    pub m1: Vec<Vec3>,
    pub m2: Vec<Vec3>,
    pub k: Curvature,
    pub length: f64,
    pub n0: usize,
}

impl CurveState {
    /// Builds a consistent state by integrating from the anchor vertex `n0`.
    pub fn from_anchor(
        p_anchor: Vec3,
        t_anchor: Vec3,
        m1_anchor: Vec3,
        k: Curvature,
        length: f64,
        n0: usize,
    ) -> Result<Self> {
        let out = integrate_curve(p_anchor, t_anchor, m1_anchor, &k, length, n0)?;
        Ok(Self {
            p: out.p,
            t: out.t,
            m1: out.m1,
            m2: out.m2,
            k,
            length,
            n0,
        })
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn centroid(&self) -> Vec3 {
        self.p.iter().sum::<Vec3>() / self.p.len() as f64
    }

    /// Unit vector from the first to the last vertex.
    pub fn head_tail_direction(&self) -> Vec3 {
        (self.p[self.n() - 1] - self.p[0])
            .try_normalize(1e-15)
            .unwrap_or_else(Vec3::zeros)
    }

    /// Largest deviation from an orthonormal right-handed frame.
    pub fn frame_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for n in 0..self.n() {
            let (t, m1, m2) = (self.t[n], self.m1[n], self.m2[n]);
            worst = worst
                .max((t.norm() - 1.0).abs())
                .max((m1.norm() - 1.0).abs())
                .max((m2.norm() - 1.0).abs())
                .max(t.dot(&m1).abs())
                .max((t.cross(&m1) - m2).amax());
        }
        worst
    }

    /// Largest relative deviation of a segment length from `l / (N - 1)`.
    pub fn spacing_error(&self) -> f64 {
        let h = self.length / (self.n() - 1) as f64;
        self.p
            .windows(2)
            .map(|w| ((w[1] - w[0]).norm() - h).abs() / self.length)
            .fold(0.0, f64::max)
    }
}

/// Positions and frames produced by [`integrate_curve`].
#[derive(Debug, Clone)]
pub struct Integrated {
    pub p: Vec<Vec3>,
    pub t: Vec<Vec3>,
    pub m1: Vec<Vec3>,
    pub m2: Vec<Vec3>,
}

/// Integrates the Bishop equations from vertex `n0` toward both ends.
pub fn integrate_curve(
    p_init: Vec3,
    t_init: Vec3,
    m1_init: Vec3,
    k: &Curvature,
    length: f64,
    n0: usize,
) -> Result<Integrated> {
    let n = k.len();
    if n < 2 {
        return Err(Error::invalid("curve needs at least two vertices"));
    }
    if n0 >= n {
        return Err(Error::invalid(format!(
            "start index {n0} outside [0, {}]",
            n - 1
        )));
    }
    if (t_init.norm() - 1.0).abs() > FRAME_TOL
        || (m1_init.norm() - 1.0).abs() > FRAME_TOL
        || t_init.dot(&m1_init).abs() > FRAME_TOL
    {
        return Err(Error::invalid("initial frame is not orthonormal"));
    }
    if !(length.is_finite() && length > 0.0) || !k.is_finite() {
        return Err(Error::invalid("length and curvature must be finite"));
    }
    let frame = frame_rows(t_init, m1_init, t_init.cross(&m1_init));
    let tape = CurveTape::trace(p_init, frame, k, length, n0);
    Ok(tape.into_integrated())
}

fn frame_rows(t: Vec3, m1: Vec3, m2: Vec3) -> Matrix3<f64> {
    Matrix3::from_rows(&[t.transpose(), m1.transpose(), m2.transpose()])
}

fn row(m: &Matrix3<f64>, i: usize) -> Vec3 {
    m.row(i).transpose()
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix `exp([r]x)` and its partial derivatives with respect to
/// the three components of `r`.
fn rotation_with_derivatives(r: &Vec3) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
    let phi2 = r.norm_squared();
    let phi = phi2.sqrt();
    let (a, b, da, db) = if phi < 1e-3 {
        let p4 = phi2 * phi2;
        (
            1.0 - phi2 / 6.0 + p4 / 120.0,
            0.5 - phi2 / 24.0 + p4 / 720.0,
            -1.0 / 3.0 + phi2 / 30.0 - p4 / 840.0,
            -1.0 / 12.0 + phi2 / 180.0 - p4 / 6720.0,
        )
    } else {
        let (s, c) = phi.sin_cos();
        (
            s / phi,
            (1.0 - c) / phi2,
            (phi * c - s) / (phi2 * phi),
            (phi * s - 2.0 + 2.0 * c) / (phi2 * phi2),
        )
    };
    let sk = skew(r);
    let sk2 = sk * sk;
    let rot = Matrix3::identity() + sk * a + sk2 * b;
    let mut d = [Matrix3::zeros(); 3];
    for (i, di) in d.iter_mut().enumerate() {
        let e = skew(&Vec3::ith(i, 1.0));
        *di = e * a + (e * sk + sk * e) * b + sk * (da * r[i]) + sk2 * (db * r[i]);
    }
    (rot, d)
}

/// Rotation vector of segment `j` expressed in the frame at vertex `j`
/// (components along T, M1, M2).
fn segment_rotation_vector(kbar: [f64; 2], h: f64) -> Vec3 {
    Vec3::new(0.0, -h * kbar[1], h * kbar[0])
}

/// Forward trace of one curve integration, retained for the adjoint pass.
#[derive(Debug, Clone)]
pub struct CurveTape {
    n0: usize,
    h: f64,
    length: f64,
    frames: Vec<Matrix3<f64>>,
    rot: Vec<Matrix3<f64>>,
    drot: Vec<[Matrix3<f64>; 3]>,
    chord: Vec<Vec3>,
    chord_norm: Vec<f64>,
    pub p: Vec<Vec3>,
}

/// Gradient of a scalar with respect to the inputs of a [`CurveTape`].
#[derive(Debug, Clone)]
pub struct CurveTapeGrad {
    pub p_anchor: Vec3,
    /// Gradient with respect to the rows (T, M1, M2) of the anchor frame.
    pub frame: Matrix3<f64>,
    pub k: Vec<[f64; 2]>,
    pub length: f64,
}

impl CurveTape {
    pub fn trace(p0: Vec3, frame0: Matrix3<f64>, k: &Curvature, length: f64, n0: usize) -> Self {
        let n = k.len();
        let h = 1.0 / (n - 1) as f64;
        let rows = k.rows();
        let mut rot = Vec::with_capacity(n - 1);
        let mut drot = Vec::with_capacity(n - 1);
        for j in 0..n - 1 {
            let kbar = [
                0.5 * (rows[j][0] + rows[j + 1][0]),
                0.5 * (rows[j][1] + rows[j + 1][1]),
            ];
            let (a, d) = rotation_with_derivatives(&segment_rotation_vector(kbar, h));
            rot.push(a);
            drot.push(d);
        }
        let mut frames = vec![Matrix3::zeros(); n];
        frames[n0] = frame0;
        for j in n0..n - 1 {
            frames[j + 1] = rot[j].transpose() * frames[j];
        }
        for j in (0..n0).rev() {
            frames[j] = rot[j] * frames[j + 1];
        }
        let mut chord = Vec::with_capacity(n - 1);
        let mut chord_norm = Vec::with_capacity(n - 1);
        for j in 0..n - 1 {
            let c = row(&frames[j], 0) + row(&frames[j + 1], 0);
            let cn = c.norm();
            chord.push(c / cn);
            chord_norm.push(cn);
        }
        let step = length * h;
        let mut p = vec![Vec3::zeros(); n];
        p[n0] = p0;
        for j in n0..n - 1 {
            p[j + 1] = p[j] + chord[j] * step;
        }
        for j in (0..n0).rev() {
            p[j] = p[j + 1] - chord[j] * step;
        }
        Self {
            n0,
            h,
            length,
            frames,
            rot,
            drot,
            chord,
            chord_norm,
            p,
        }
    }

    pub fn n(&self) -> usize {
        self.frames.len()
    }

    pub fn tangent(&self, n: usize) -> Vec3 {
        row(&self.frames[n], 0)
    }

    pub fn into_integrated(self) -> Integrated {
        let mut t = Vec::with_capacity(self.n());
        let mut m1 = Vec::with_capacity(self.n());
        let mut m2 = Vec::with_capacity(self.n());
        for f in &self.frames {
            t.push(row(f, 0));
            m1.push(row(f, 1));
            m2.push(row(f, 2));
        }
        Integrated {
            p: self.p,
            t,
            m1,
            m2,
        }
    }

    /// Propagates `d loss / d P` back to anchor, curvature and length.
    pub fn backward(&self, grad_p: &[Vec3]) -> CurveTapeGrad {
        let n = self.n();
        let n0 = self.n0;
        let step = self.length * self.h;
        let mut g_anchor = Vec3::zeros();
        let mut g_length = 0.0;
        let mut g_chord = vec![Vec3::zeros(); n - 1];

        let mut acc = Vec3::zeros();
        for j in (n0..n - 1).rev() {
            acc += grad_p[j + 1];
            g_chord[j] = acc * step;
            g_length += self.h * self.chord[j].dot(&acc);
        }
        g_anchor += acc;
        acc = Vec3::zeros();
        for j in 0..n0 {
            acc += grad_p[j];
            g_chord[j] = -acc * step;
            g_length -= self.h * self.chord[j].dot(&acc);
        }
        g_anchor += acc + grad_p[n0];

        let mut g_frames = vec![Matrix3::<f64>::zeros(); n];
        for j in 0..n - 1 {
            let u = self.chord[j];
            let gu = g_chord[j];
            let gc = (gu - u * u.dot(&gu)) / self.chord_norm[j];
            for i in [j, j + 1] {
                let mut r = g_frames[i].row_mut(0);
                r += gc.transpose();
            }
        }

        let mut g_kbar = vec![[0.0f64; 2]; n - 1];
        let accumulate = |g_rot: &Matrix3<f64>, d: &[Matrix3<f64>; 3]| -> [f64; 2] {
            // r = h * (0, -m2, m1)
            let gr1 = g_rot.component_mul(&d[1]).sum();
            let gr2 = g_rot.component_mul(&d[2]).sum();
            [self.h * gr2, -self.h * gr1]
        };
        for j in (n0..n - 1).rev() {
            // F[j+1] = A^T F[j]
            let g_next = g_frames[j + 1];
            let g_rot = self.frames[j] * g_next.transpose();
            g_frames[j] += self.rot[j] * g_next;
            g_kbar[j] = accumulate(&g_rot, &self.drot[j]);
        }
        for j in 0..n0 {
            // F[j] = A F[j+1]
            let g_cur = g_frames[j];
            let g_rot = g_cur * self.frames[j + 1].transpose();
            g_frames[j + 1] += self.rot[j].transpose() * g_cur;
            g_kbar[j] = accumulate(&g_rot, &self.drot[j]);
        }

        let mut g_k = vec![[0.0f64; 2]; n];
        for (j, g) in g_kbar.iter().enumerate() {
            for c in 0..2 {
                g_k[j][c] += 0.5 * g[c];
                g_k[j + 1][c] += 0.5 * g[c];
            }
        }
        CurveTapeGrad {
            p_anchor: g_anchor,
            frame: g_frames[n0],
            k: g_k,
            length: g_length,
        }
    }
}

/// Orthonormal frame rows `(T, M1, T x M1)` from unnormalised anchor vectors.
pub fn orthonormal_frame(t_raw: &Vec3, m1_raw: &Vec3) -> Result<Matrix3<f64>> {
    let tn = t_raw.norm();
    if !(tn > 1e-12) || !tn.is_finite() {
        return Err(Error::invalid("tangent has zero length"));
    }
    let t = t_raw / tn;
    let m = m1_raw - t * m1_raw.dot(&t);
    let mn = m.norm();
    if !(mn > 1e-12) || !mn.is_finite() {
        return Err(Error::invalid("normal is parallel to tangent"));
    }
    let m1 = m / mn;
    Ok(frame_rows(t, m1, t.cross(&m1)))
}

/// Adjoint of [`orthonormal_frame`]: maps a gradient on the frame rows back
/// to the raw tangent and normal.
pub fn orthonormal_frame_backward(
    t_raw: &Vec3,
    m1_raw: &Vec3,
    g_frame: &Matrix3<f64>,
) -> (Vec3, Vec3) {
    let tn = t_raw.norm();
    let t = t_raw / tn;
    let m = m1_raw - t * m1_raw.dot(&t);
    let mn = m.norm();
    let m1 = m / mn;
    let mut gt = row(g_frame, 0);
    let mut gm1 = row(g_frame, 1);
    let gm2 = row(g_frame, 2);
    // m2 = t x m1
    gt += m1.cross(&gm2);
    gm1 += gm2.cross(&t);
    // m1 = m / |m|
    let gm = (gm1 - m1 * m1.dot(&gm1)) / mn;
    // m = M - (M.t) t
    let mt = m1_raw.dot(&t);
    let g_m1_raw = gm - t * t.dot(&gm);
    gt += -m1_raw * t.dot(&gm) - gm * mt;
    // t = T / |T|
    let g_t_raw = (gt - t * t.dot(&gt)) / tn;
    (g_t_raw, g_m1_raw)
}

/// Draws the anchor vertex for one optimisation step.
pub fn sample_start_index<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    let mean = n as f64 / 2.0;
    let normal = Normal::new(mean, n as f64 / 10.0).expect("positive spread");
    let draw = normal.sample(rng).round();
    draw.clamp(1.0, (n - 2) as f64) as usize
}

/// Projects the state onto the constraint set and re-integrates it from its
/// anchor vertex.
pub fn recompute_state(state: &CurveState, constraints: &CurveConstraints) -> Result<CurveState> {
    let n0 = state.n0;
    let anchor_ok = state.p[n0].iter().all(|v| v.is_finite())
        && state.t[n0].iter().all(|v| v.is_finite())
        && state.m1[n0].iter().all(|v| v.is_finite());
    if !state.k.is_finite() || !state.length.is_finite() || !anchor_ok {
        return Err(Error::Diverged("NaN in curve parameters".into()));
    }
    let mut k = state.k.clone();
    k.project_onto_bound(constraints.curvature_bound());
    let length = constraints.clamp_length(state.length);
    let frame = orthonormal_frame(&state.t[n0], &state.m1[n0])?;
    let tape = CurveTape::trace(state.p[n0], frame, &k, length, n0);
    let out = tape.into_integrated();
    Ok(CurveState {
        p: out.p,
        t: out.t,
        m1: out.m1,
        m2: out.m2,
        k,
        length,
        n0,
    })
}

/// Frenet curvature (1/mm) and torsion (1/mm, absent where curvature vanishes).
#[derive(Debug, Clone, PartialEq)]
pub struct Frenet {
    pub kappa: Vec<f64>,
    pub tau: Vec<Option<f64>>,
}

const KAPPA_EPS: f64 = 1e-8;

/// Recovers Frenet curvature and torsion from the Bishop components.
pub fn bishop_to_frenet(k: &Curvature, length: f64) -> Frenet {
    let n = k.len();
    let rows = k.rows();
    let kappa: Vec<f64> = rows.iter().map(|r| r[0].hypot(r[1]) / length).collect();
    let defined: Vec<bool> = rows.iter().map(|r| r[0].hypot(r[1]) >= KAPPA_EPS).collect();

    // unwrap the polar angle across consecutive defined vertices
    let mut theta = vec![0.0; n];
    let mut prev: Option<f64> = None;
    for i in 0..n {
        if !defined[i] {
            prev = None;
            continue;
        }
        let raw = rows[i][1].atan2(rows[i][0]);
        theta[i] = match prev {
            Some(p) => p + wrap_angle(raw - p),
            None => raw,
        };
        prev = Some(theta[i]);
    }

    let ds = 1.0 / (n - 1) as f64;
    let tau = (0..n)
        .map(|i| {
            if !defined[i] {
                return None;
            }
            let left = i > 0 && defined[i - 1];
            let right = i + 1 < n && defined[i + 1];
            let dtheta = match (left, right) {
                (true, true) => (theta[i + 1] - theta[i - 1]) / (2.0 * ds),
                (false, true) => (theta[i + 1] - theta[i]) / ds,
                (true, false) => (theta[i] - theta[i - 1]) / ds,
                (false, false) => return None,
            };
            Some(dtheta / length)
        })
        .collect();
    Frenet { kappa, tau }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

/// Centre-shift settings: cadence, trigger sensitivity and maximum shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentreShiftConfig {
    pub alpha: usize,
    pub beta: f64,
    pub gamma: usize,
}

impl Default for CentreShiftConfig {
    fn default() -> Self {
        Self {
            alpha: 5,
            beta: 0.075,
            gamma: 2,
        }
    }
}

impl CentreShiftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 1 || !(self.beta > 0.0 && self.beta < 0.5) || self.gamma < 1 {
            return Err(Error::invalid(format!(
                "invalid centre-shift config {self:?}"
            )));
        }
        Ok(())
    }
}

/// Centre of mass of a score profile and the implied raw shift.
/// Returns `None` for an all-zero profile.
pub fn score_imbalance(s_hat: &[f64]) -> Option<(f64, i64)> {
    let total: f64 = s_hat.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let nbar = s_hat
        .iter()
        .enumerate()
        .map(|(n, s)| n as f64 * s)
        .sum::<f64>()
        / total;
    let shift = nbar.round() as i64 - (s_hat.len() / 2) as i64;
    Some((nbar, shift))
}

/// Slides curvature values by `shift` vertices toward the start (positive)
/// or the end (negative). Vacated entries decay linearly from the boundary
/// value to zero at the outermost vertex.
pub fn shift_curvature(k: &Curvature, shift: i64) -> Curvature {
    let n = k.len() as i64;
    let rows = k.rows();
    let s = shift.abs().min(n - 1);
    if s == 0 {
        return k.clone();
    }
    let mut out = vec![[0.0; 2]; n as usize];
    if shift > 0 {
        for i in 0..n - s {
            out[i as usize] = rows[(i + s) as usize];
        }
        let boundary = rows[(n - 1) as usize];
        for i in n - s..n {
            let f = 1.0 - (i - (n - s) + 1) as f64 / s as f64;
            out[i as usize] = [boundary[0] * f, boundary[1] * f];
        }
    } else {
        for i in s..n {
            out[i as usize] = rows[(i - s) as usize];
        }
        let boundary = rows[0];
        for i in 0..s {
            let f = 1.0 - (s - i) as f64 / s as f64;
            out[i as usize] = [boundary[0] * f, boundary[1] * f];
        }
    }
    Curvature::from_rows(out)
}

/// Re-centres the curve on its score profile. Returns the (possibly
/// unchanged) state and the shift applied.
pub fn centre_shift(
    state: &CurveState,
    s_hat: &[f64],
    cfg: &CentreShiftConfig,
    step: usize,
) -> Result<(CurveState, i64)> {
    let n = state.n();
    if s_hat.len() != n {
        return Err(Error::invalid(
            "score profile length does not match the curve",
        ));
    }
    let Some((_, raw)) = score_imbalance(s_hat) else {
        return Ok((state.clone(), 0));
    };
    if step % cfg.alpha != 0 || (raw.abs() as f64) <= cfg.beta * n as f64 {
        return Ok((state.clone(), 0));
    }
    let shift = raw.clamp(-(cfg.gamma as i64), cfg.gamma as i64);
    let mid = n / 2;
    let src = (mid as i64 + shift) as usize;
    let k = shift_curvature(&state.k, shift);
    let frame = orthonormal_frame(&state.t[src], &state.m1[src])?;
    let tape = CurveTape::trace(state.p[src], frame, &k, state.length, mid);
    let out = tape.into_integrated();
    Ok((
        CurveState {
            p: out.p,
            t: out.t,
            m1: out.m1,
            m2: out.m2,
            k,
            length: state.length,
            n0: mid,
        },
        shift,
    ))
}
