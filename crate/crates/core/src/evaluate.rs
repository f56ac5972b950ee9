//! Reconstruction accuracy against ground truth: bidirectional 2D midline
//! distances per view and 3D vertex errors.

use serde::{Deserialize, Serialize};

use crate::camera::{project_curve, CameraTriplet};
use crate::curve::Vec3;
use crate::error::{Error, Result};

/// Distance from `p` to the polyline `line`.
pub fn distance_to_polyline(p: [f64; 2], line: &[[f64; 2]]) -> f64 {
    if line.len() == 1 {
        return (p[0] - line[0][0]).hypot(p[1] - line[0][1]);
    }
    line.windows(2)
        .map(|s| {
            let (a, b) = (s[0], s[1]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let t = if len2 > 0.0 {
                (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Distances from each point of `a` to `b`, followed by those from each
/// point of `b` to `a`.
pub fn bidirectional_distances(a: &[[f64; 2]], b: &[[f64; 2]]) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().map(|&p| distance_to_polyline(p, b)).collect();
    out.extend(b.iter().map(|&p| distance_to_polyline(p, a)));
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// 3D comparison of two equally sampled curves after removing the centroid
/// offset. Vertex order may be reversed in the reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment3d {
    pub rms: f64,
    /// Largest end-point error (mm).
    pub tip_error: f64,
    pub reversed: bool,
    /// Centroid offset reconstruction minus truth (mm).
    pub offset: [f64; 3],
}

pub fn align_3d(recon: &[Vec3], truth: &[Vec3]) -> Result<Alignment3d> {
    if recon.len() != truth.len() || recon.is_empty() {
        return Err(Error::invalid(
            "curves to compare must have the same non-zero vertex count",
        ));
    }
    let n = recon.len();
    let centroid = |p: &[Vec3]| p.iter().sum::<Vec3>() / n as f64;
    let offset = centroid(recon) - centroid(truth);
    let score = |reversed: bool| {
        let at = |i: usize| if reversed { recon[n - 1 - i] } else { recon[i] } - offset;
        let rms = ((0..n)
            .map(|i| (at(i) - truth[i]).norm_squared())
            .sum::<f64>()
            / n as f64)
            .sqrt();
        let tip = (at(0) - truth[0])
            .norm()
            .max((at(n - 1) - truth[n - 1]).norm());
        (rms, tip)
    };
    let (f, r) = (score(false), score(true));
    let (reversed, (rms, tip_error)) = if r.0 < f.0 { (true, r) } else { (false, f) };
    Ok(Alignment3d {
        rms,
        tip_error,
        reversed,
        offset: [offset.x, offset.y, offset.z],
    })
}

/// Accuracy of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameEvaluation {
    pub frame: usize,
    /// Mean and maximum bidirectional distance (px) per view.
    pub mean_px: [f64; 3],
    pub max_px: [f64; 3],
    pub alignment: Alignment3d,
}

impl FrameEvaluation {
    pub fn worst_view_mean(&self) -> f64 {
        self.mean_px.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares a reconstruction seen through its own cameras with the truth
/// seen through the true cameras.
pub fn evaluate_frame(
    frame: usize,
    recon: &[Vec3],
    recon_cameras: &CameraTriplet,
    truth: &[Vec3],
    true_cameras: &CameraTriplet,
) -> Result<FrameEvaluation> {
    let qr = project_curve(recon_cameras, recon)?;
    let qt = project_curve(true_cameras, truth)?;
    let mut mean_px = [0.0; 3];
    let mut max_px = [0.0; 3];
    for c in 0..3 {
        let d = bidirectional_distances(&qr[c], &qt[c]);
        mean_px[c] = mean(&d);
        max_px[c] = d.iter().copied().fold(0.0, f64::max);
    }
    Ok(FrameEvaluation {
        frame,
        mean_px,
        max_px,
        alignment: align_3d(recon, truth)?,
    })
}

/// One arclength bin of the distance profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub s: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Distances from ground-truth points to the reconstruction binned by the
/// truth point's normalised arclength, pooled over views and frames.
pub fn distance_profile(samples: &[(f64, f64)], bins: usize) -> Vec<ProfileBin> {
    let mut groups = vec![Vec::new(); bins];
    for &(s, d) in samples {
        let b = ((s * bins as f64) as usize).min(bins - 1);
        groups[b].push(d);
    }
    groups
        .iter()
        .enumerate()
        .map(|(b, g)| ProfileBin {
            s: (b as f64 + 0.5) / bins as f64,
            mean: if g.is_empty() { f64::NAN } else { mean(g) },
            std: if g.is_empty() { f64::NAN } else { std_dev(g) },
            count: g.len(),
        })
        .collect()
}

/// `(s, distance)` pairs from truth vertices to the reconstruction in every view.
pub fn profile_samples(
    recon: &[Vec3],
    recon_cameras: &CameraTriplet,
    truth: &[Vec3],
    true_cameras: &CameraTriplet,
) -> Result<Vec<(f64, f64)>> {
    let qr = project_curve(recon_cameras, recon)?;
    let qt = project_curve(true_cameras, truth)?;
    let n = truth.len();
    let mut out = Vec::with_capacity(3 * n);
    for c in 0..3 {
        for (i, p) in qt[c].iter().enumerate() {
            out.push((
                i as f64 / (n - 1).max(1) as f64,
                distance_to_polyline(*p, &qr[c]),
            ));
        }
    }
    Ok(out)
}

/// Summary over frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub frames: Vec<FrameEvaluation>,
    pub mean_px: [f64; 3],
    pub std_px: [f64; 3],
    pub mean_rms: f64,
    pub max_rms: f64,
    pub profile: Vec<ProfileBin>,
}

impl EvaluationReport {
    pub fn new(frames: Vec<FrameEvaluation>, profile: Vec<ProfileBin>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("no frames to evaluate"));
        }
        let per_view = |c: usize| frames.iter().map(|f| f.mean_px[c]).collect::<Vec<_>>();
        let rms: Vec<f64> = frames.iter().map(|f| f.alignment.rms).collect();
        Ok(Self {
            mean_px: std::array::from_fn(|c| mean(&per_view(c))),
            std_px: std::array::from_fn(|c| std_dev(&per_view(c))),
            mean_rms: mean(&rms),
            max_rms: rms.iter().copied().fold(0.0, f64::max),
            frames,
            profile,
        })
    }

    /// Per-frame table as CSV.
    pub fn frames_csv(&self) -> String {
        let mut s = String::from("frame,mean_px_0,mean_px_1,mean_px_2,max_px_0,max_px_1,max_px_2,rms_mm,tip_mm,reversed\n");
        for f in &self.frames {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                f.frame,
                f.mean_px[0],
                f.mean_px[1],
                f.mean_px[2],
                f.max_px[0],
                f.max_px[1],
                f.max_px[2],
                f.alignment.rms,
                f.alignment.tip_error,
                f.alignment.reversed
            ));
        }
        s
    }

    /// Distance profile as CSV with mean and mean +- 2 std columns.
    pub fn profile_csv(&self) -> String {
        let mut s = String::from("s,mean_px,lower_px,upper_px,count\n");
        for b in &self.profile {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                b.s,
                b.mean,
                b.mean - 2.0 * b.std,
                b.mean + 2.0 * b.std,
                b.count
            ));
        }
        s
    }
}
