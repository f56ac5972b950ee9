//! Pinhole camera triplet with radial/tangential distortion and the three
//! shared relative-shift parameters.

use nalgebra::{Matrix2x3, Matrix3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::curve::Vec3;
use crate::error::{Error, Result};

/// Number of scalars describing one camera.
pub const CAMERA_PARAMS: usize = 15;
/// Number of scalars describing a triplet including the shared shifts.
pub const TRIPLET_PARAMS: usize = 3 * CAMERA_PARAMS + 3;

/// Parameter names in storage order.
pub const CAMERA_PARAM_NAMES: [&str; CAMERA_PARAMS] = [
    "fx", "fy", "cx", "cy", "phi0", "phi1", "phi2", "tx", "ty", "tz", "k1", "k2", "k3", "p1", "p2",
];

const MIN_DEPTH: f64 = 1e-12;

/// One pinhole camera. Field names double as calibration-file keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub phi0: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
}

/// A point landed at or behind the camera centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehindCamera {
    pub depth: f64,
}

/// Projected point together with its derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    pub uv: [f64; 2],
    /// d(u, v) / d(world point)
    pub d_point: Matrix2x3<f64>,
    /// d(u, v) / d(camera scalar), in [`CAMERA_PARAM_NAMES`] order
    pub d_camera: [[f64; CAMERA_PARAMS]; 2],
    /// d(u, v) / d(s_x, s_y)
    pub d_shift: [[f64; 2]; 2],
    /// Depth of the point in the camera frame.
    pub depth: f64,
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn d_rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn d_rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn d_rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

impl CameraModel {
    /// Distortion-free camera with the given intrinsics and extrinsics.
    pub fn ideal(f: f64, principal: [f64; 2], angles: [f64; 3], t: [f64; 3]) -> Self {
        Self {
            fx: f,
            fy: f,
            cx: principal[0],
            cy: principal[1],
            phi0: angles[0],
            phi1: angles[1],
            phi2: angles[2],
            tx: t[0],
            ty: t[1],
            tz: t[2],
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            p1: 0.0,
            p2: 0.0,
        }
    }

    pub fn to_array(&self) -> [f64; CAMERA_PARAMS] {
        [
            self.fx, self.fy, self.cx, self.cy, self.phi0, self.phi1, self.phi2, self.tx, self.ty,
            self.tz, self.k1, self.k2, self.k3, self.p1, self.p2,
        ]
    }

    pub fn from_array(a: &[f64; CAMERA_PARAMS]) -> Self {
        Self {
            fx: a[0],
            fy: a[1],
            cx: a[2],
            cy: a[3],
            phi0: a[4],
            phi1: a[5],
            phi2: a[6],
            tx: a[7],
            ty: a[8],
            tz: a[9],
            k1: a[10],
            k2: a[11],
            k3: a[12],
            p1: a[13],
            p2: a[14],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("camera parameters must be finite"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        Ok(())
    }

    /// Wraps the rotation angles into `[0, 2 pi)`.
    pub fn wrap_angles(&mut self) {
        for a in [&mut self.phi0, &mut self.phi1, &mut self.phi2] {
            *a = a.rem_euclid(2.0 * PI);
            if *a >= 2.0 * PI {
                *a = 0.0;
            }
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rot_z(self.phi0) * rot_y(self.phi1) * rot_x(self.phi2)
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.tx, self.ty, self.tz)
    }

    /// Point in the camera frame.
    pub fn to_camera_frame(&self, x: &Vec3) -> Vec3 {
        self.rotation() * x + self.translation()
    }

    /// Mean of the two focal lengths.
    pub fn focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    /// Projects a world point with the given pixel shift.
    pub fn project(&self, s: [f64; 2], x: &Vec3) -> Result<[f64; 2], BehindCamera> {
        let xc = self.to_camera_frame(x);
        if xc.z < MIN_DEPTH {
            return Err(BehindCamera { depth: xc.z });
        }
        let xp = xc.x / xc.z + s[0] / self.fx;
        let yp = xc.y / xc.z + s[1] / self.fy;
        let (xd, yd) = self.distort(xp, yp);
        Ok([self.fx * xd + self.cx, self.fy * yd + self.cy])
    }

    fn distort(&self, xp: f64, yp: f64) -> (f64, f64) {
        let r2 = xp * xp + yp * yp;
        let k = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        (
            k * xp + 2.0 * self.p1 * xp * yp + self.p2 * (r2 + 2.0 * xp * xp),
            k * yp + self.p1 * (r2 + 2.0 * yp * yp) + 2.0 * self.p2 * xp * yp,
        )
    }

    /// Projects a world point and returns all first derivatives.
    pub fn project_with_jacobian(&self, s: [f64; 2], x: &Vec3) -> Result<Projection, BehindCamera> {
        let rz = rot_z(self.phi0);
        let ry = rot_y(self.phi1);
        let rx = rot_x(self.phi2);
        let r = rz * ry * rx;
        let xc = r * x + self.translation();
        let z = xc.z;
        if z < MIN_DEPTH {
            return Err(BehindCamera { depth: z });
        }
        let (fx, fy) = (self.fx, self.fy);
        let xp = xc.x / z + s[0] / fx;
        let yp = xc.y / z + s[1] / fy;
        let r2 = xp * xp + yp * yp;
        let k = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let kr = self.k1 + r2 * (2.0 * self.k2 + 3.0 * self.k3 * r2);
        let (p1, p2) = (self.p1, self.p2);
        let xd = k * xp + 2.0 * p1 * xp * yp + p2 * (r2 + 2.0 * xp * xp);
        let yd = k * yp + p1 * (r2 + 2.0 * yp * yp) + 2.0 * p2 * xp * yp;

        // d(xd, yd) / d(xp, yp)
        let j00 = k + 2.0 * kr * xp * xp + 2.0 * p1 * yp + 6.0 * p2 * xp;
        let j01 = 2.0 * kr * xp * yp + 2.0 * p1 * xp + 2.0 * p2 * yp;
        let j10 = 2.0 * kr * xp * yp + 2.0 * p1 * xp + 2.0 * p2 * yp;
        let j11 = k + 2.0 * kr * yp * yp + 6.0 * p1 * yp + 2.0 * p2 * xp;
        // d(u, v) / d(xp, yp)
        let a = [[fx * j00, fx * j01], [fy * j10, fy * j11]];

        // d(xp, yp) / d(camera-frame point)
        let dxp = [1.0 / z, 0.0, -xc.x / (z * z)];
        let dyp = [0.0, 1.0 / z, -xc.y / (z * z)];
        let mut d_cam_pt = Matrix2x3::zeros();
        for row in 0..2 {
            for col in 0..3 {
                d_cam_pt[(row, col)] = a[row][0] * dxp[col] + a[row][1] * dyp[col];
            }
        }
        let d_point = d_cam_pt * r;

        let mut d_camera = [[0.0; CAMERA_PARAMS]; 2];
        let dr = [
            d_rot_z(self.phi0) * ry * rx,
            rz * d_rot_y(self.phi1) * rx,
            rz * ry * d_rot_x(self.phi2),
        ];
        for row in 0..2 {
            let d = &mut d_camera[row];
            // fx, fy enter through the shift terms and the final scaling
            d[0] = a[row][0] * (-s[0] / (fx * fx));
            d[1] = a[row][1] * (-s[1] / (fy * fy));
            for (i, dri) in dr.iter().enumerate() {
                let dx = dri * x;
                d[4 + i] = (0..3).map(|c| d_cam_pt[(row, c)] * dx[c]).sum();
            }
            for c in 0..3 {
                d[7 + c] = d_cam_pt[(row, c)];
            }
        }
        d_camera[0][0] += xd;
        d_camera[1][1] += yd;
        d_camera[0][2] = 1.0;
        d_camera[1][3] = 1.0;
        let (r4, r6) = (r2 * r2, r2 * r2 * r2);
        d_camera[0][10] = fx * r2 * xp;
        d_camera[0][11] = fx * r4 * xp;
        d_camera[0][12] = fx * r6 * xp;
        d_camera[0][13] = fx * 2.0 * xp * yp;
        d_camera[0][14] = fx * (r2 + 2.0 * xp * xp);
        d_camera[1][10] = fy * r2 * yp;
        d_camera[1][11] = fy * r4 * yp;
        d_camera[1][12] = fy * r6 * yp;
        d_camera[1][13] = fy * (r2 + 2.0 * yp * yp);
        d_camera[1][14] = fy * 2.0 * xp * yp;

        let d_shift = [[a[0][0] / fx, a[0][1] / fy], [a[1][0] / fx, a[1][1] / fy]];
        Ok(Projection {
            uv: [fx * xd + self.cx, fy * yd + self.cy],
            d_point,
            d_camera,
            d_shift,
            depth: z,
        })
    }
}

/// Shared relative shifts (px).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TripletShifts {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

/// Pixel shift applied in camera `c`.
pub fn shifts_for_camera(shifts: &TripletShifts, c: usize) -> Result<[f64; 2]> {
    match c {
        0 => Ok([shifts.dx, 0.0]),
        1 => Ok([0.0, -shifts.dy]),
        2 => Ok([0.0, shifts.dz]),
        _ => Err(Error::invalid(format!("camera index {c} out of range"))),
    }
}

/// Which of the 48 triplet scalars are held fixed during optimisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenMask(#[serde(with = "mask_serde")] pub [bool; TRIPLET_PARAMS]);

mod mask_serde {
    use super::TRIPLET_PARAMS;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &[bool; TRIPLET_PARAMS], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<[bool; TRIPLET_PARAMS], D::Error> {
        let v = Vec::<bool>::deserialize(d)?;
        v.try_into().map_err(|_| {
            serde::de::Error::custom(format!("frozen mask must have {TRIPLET_PARAMS} entries"))
        })
    }
}

impl FrozenMask {
    /// Only the shared shifts are free.
    pub fn shifts_only() -> Self {
        let mut m = [true; TRIPLET_PARAMS];
        for v in &mut m[3 * CAMERA_PARAMS..] {
            *v = false;
        }
        Self(m)
    }

    pub fn all_free() -> Self {
        Self([false; TRIPLET_PARAMS])
    }

    pub fn all_frozen() -> Self {
        Self([true; TRIPLET_PARAMS])
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn free_count(&self) -> usize {
        self.0.iter().filter(|f| !**f).count()
    }
}

impl Default for FrozenMask {
    fn default() -> Self {
        Self::shifts_only()
    }
}

/// Three cameras, their shared shifts, and the optimisable subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraTriplet {
    pub cams: [CameraModel; 3],
    pub shifts: TripletShifts,
    #[serde(default)]
    pub frozen: FrozenMask,
}

impl CameraTriplet {
    pub fn new(cams: [CameraModel; 3], shifts: TripletShifts) -> Self {
        Self {
            cams,
            shifts,
            frozen: FrozenMask::shifts_only(),
        }
    }

    /// Three distortion-free cameras on mutually orthogonal axes, all looking
    /// at the world origin from `distance` mm. Views see (X, Y), (-Z, Y) and
    /// (X, -Z) respectively.
    pub fn orthogonal_rig(focal: f64, principal: [f64; 2], distance: f64) -> Self {
        let t = [0.0, 0.0, distance];
        Self::new(
            [
                CameraModel::ideal(focal, principal, [0.0, 0.0, 0.0], t),
                CameraModel::ideal(focal, principal, [0.0, 1.5 * PI, 0.0], t),
                CameraModel::ideal(focal, principal, [0.0, 0.0, 0.5 * PI], t),
            ],
            TripletShifts::default(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        for cam in &self.cams {
            cam.validate()?;
        }
        let s = [self.shifts.dx, self.shifts.dy, self.shifts.dz];
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("shifts must be finite"));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; TRIPLET_PARAMS] {
        let mut out = [0.0; TRIPLET_PARAMS];
        for (c, cam) in self.cams.iter().enumerate() {
            out[c * CAMERA_PARAMS..(c + 1) * CAMERA_PARAMS].copy_from_slice(&cam.to_array());
        }
        out[45] = self.shifts.dx;
        out[46] = self.shifts.dy;
        out[47] = self.shifts.dz;
        out
    }

    pub fn from_array(a: &[f64; TRIPLET_PARAMS], frozen: FrozenMask) -> Self {
        let mut t = Self {
            cams: [CameraModel::ideal(1.0, [0.0; 2], [0.0; 3], [0.0; 3]); 3],
            shifts: TripletShifts::default(),
            frozen,
        };
        t.set_from_array(a);
        t
    }

    /// Overwrites every scalar from `a` (frozen flags are not consulted).
    pub fn set_from_array(&mut self, a: &[f64; TRIPLET_PARAMS]) {
        for c in 0..3 {
            let mut chunk = [0.0; CAMERA_PARAMS];
            chunk.copy_from_slice(&a[c * CAMERA_PARAMS..(c + 1) * CAMERA_PARAMS]);
            self.cams[c] = CameraModel::from_array(&chunk);
        }
        self.shifts = TripletShifts {
            dx: a[45],
            dy: a[46],
            dz: a[47],
        };
    }

    pub fn wrap_angles(&mut self) {
        for cam in &mut self.cams {
            cam.wrap_angles();
        }
    }

    pub fn project(&self, c: usize, x: &Vec3) -> Result<[f64; 2]> {
        let s = shifts_for_camera(&self.shifts, c)?;
        self.cams[c]
            .project(s, x)
            .map_err(|e| Error::ProjectionSingularity {
                camera: c,
                vertex: 0,
                depth: e.depth,
            })
    }

    /// Object-space size of one pixel (mm) at the depth of `points`: the
    /// median over cameras of mean depth divided by focal length.
    pub fn pixel_to_mm(&self, points: &[Vec3]) -> f64 {
        let mut per_cam: Vec<f64> = self
            .cams
            .iter()
            .map(|cam| {
                let depth = points.iter().map(|p| cam.to_camera_frame(p).z).sum::<f64>()
                    / points.len() as f64;
                depth / cam.focal()
            })
            .collect();
        per_cam.sort_by(f64::total_cmp);
        per_cam[1]
    }
}

/// Projects a world point through one camera (see [`CameraModel::project`]).
pub fn project_point(cam: &CameraModel, s: [f64; 2], x: &Vec3) -> Result<[f64; 2], BehindCamera> {
    cam.project(s, x)
}

/// Per-view image coordinates of a curve, `q[c][n] = (u, v)`.
pub type ProjectedCurve = [Vec<[f64; 2]>; 3];

/// Projects every vertex into all three views.
pub fn project_curve(triplet: &CameraTriplet, points: &[Vec3]) -> Result<ProjectedCurve> {
    let mut out: ProjectedCurve = Default::default();
    for (c, q) in out.iter_mut().enumerate() {
        let s = shifts_for_camera(&triplet.shifts, c)?;
        q.reserve(points.len());
        for (n, x) in points.iter().enumerate() {
            let uv = triplet.cams[c]
                .project(s, x)
                .map_err(|e| Error::ProjectionSingularity {
                    camera: c,
                    vertex: n,
                    depth: e.depth,
                })?;
            q.push(uv);
        }
    }
    Ok(out)
}

/// Projection of a curve with the Jacobians needed for the adjoint pass.
#[derive(Debug, Clone)]
pub struct ProjectionTape {
    pub q: ProjectedCurve,
    jac: [Vec<Projection>; 3],
}

impl ProjectionTape {
    pub fn trace(triplet: &CameraTriplet, points: &[Vec3]) -> Result<Self> {
        let mut q: ProjectedCurve = Default::default();
        let mut jac: [Vec<Projection>; 3] = Default::default();
        for c in 0..3 {
            let s = shifts_for_camera(&triplet.shifts, c)?;
            for (n, x) in points.iter().enumerate() {
                let p = triplet.cams[c].project_with_jacobian(s, x).map_err(|e| {
                    Error::ProjectionSingularity {
                        camera: c,
                        vertex: n,
                        depth: e.depth,
                    }
                })?;
                q[c].push(p.uv);
                jac[c].push(p);
            }
        }
        Ok(Self { q, jac })
    }

    /// Maps `d loss / dQ` to gradients on the vertices and the 48 triplet
    /// scalars (frozen entries included; callers mask them).
    pub fn backward(&self, grad_q: &[Vec<[f64; 2]>; 3]) -> (Vec<Vec3>, [f64; TRIPLET_PARAMS]) {
        let n = self.q[0].len();
        let mut gp = vec![Vec3::zeros(); n];
        let mut gcam = [0.0; TRIPLET_PARAMS];
        for c in 0..3 {
            for i in 0..n {
                let g = grad_q[c][i];
                if g[0] == 0.0 && g[1] == 0.0 {
                    continue;
                }
                let j = &self.jac[c][i];
                gp[i] += j.d_point.transpose() * nalgebra::Vector2::new(g[0], g[1]);
                for k in 0..CAMERA_PARAMS {
                    gcam[c * CAMERA_PARAMS + k] +=
                        g[0] * j.d_camera[0][k] + g[1] * j.d_camera[1][k];
                }
                let gs = [
                    g[0] * j.d_shift[0][0] + g[1] * j.d_shift[1][0],
                    g[0] * j.d_shift[0][1] + g[1] * j.d_shift[1][1],
                ];
                match c {
                    0 => gcam[45] += gs[0],
                    1 => gcam[46] -= gs[1],
                    _ => gcam[47] += gs[1],
                }
            }
        }
        (gp, gcam)
    }
}

/// On-disk calibration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub cameras: Vec<CameraModel>,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl From<&CameraTriplet> for CalibrationFile {
    fn from(t: &CameraTriplet) -> Self {
        Self {
            cameras: t.cams.to_vec(),
            dx: t.shifts.dx,
            dy: t.shifts.dy,
            dz: t.shifts.dz,
        }
    }
}

impl CalibrationFile {
    pub fn into_triplet(self) -> Result<CameraTriplet> {
        let cams: [CameraModel; 3] = self.cameras.try_into().map_err(|v: Vec<CameraModel>| {
            Error::invalid(format!("calibration lists {} cameras, expected 3", v.len()))
        })?;
        let t = CameraTriplet::new(
            cams,
            TripletShifts {
                dx: self.dx,
                dy: self.dy,
                dz: self.dz,
            },
        );
        t.validate()?;
        Ok(t)
    }
}

fn is_toml(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("toml"))
}

/// Reads a calibration file (TOML when the extension says so, JSON otherwise).
pub fn load_calibration(path: &Path) -> Result<CameraTriplet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: CalibrationFile = if is_toml(path) {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text)?
    };
    doc.into_triplet()
}

pub fn save_calibration(path: &Path, triplet: &CameraTriplet) -> Result<()> {
    let doc = CalibrationFile::from(triplet);
    let text = if is_toml(path) {
        toml::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))?
    } else {
        serde_json::to_string_pretty(&doc)?
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
