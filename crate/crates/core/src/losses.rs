//! Loss terms and their weighted sum. Each term returns its value together
//! with the gradient with respect to its direct inputs.

use serde::{Deserialize, Serialize};

use crate::camera::TRIPLET_PARAMS;
use crate::curve::{Curvature, Vec3};
use crate::error::{Error, Result};
use crate::raster::ImageTriplet;
use crate::render::RenderParams;

/// Returned by [`scores_loss`] when the weighted score sum vanishes.
pub const SCORES_LOSS_SENTINEL: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub px: f64,
    pub sc: f64,
    pub sm: f64,
    pub t: f64,
    pub i: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            px: 0.1,
            sc: 0.01,
            sm: 10.0,
            t: 10.0,
            i: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.px, self.sc, self.sm, self.t, self.i];
        if all.iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(
                "loss weights must be finite and non-negative",
            ))
        }
    }
}

/// How the weighted terms are brought to a common scale before summing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossUnits {
    /// Weights multiply the terms exactly as defined.
    Literal,
    /// The pixel residual is summed rather than averaged; smoothness and the
    /// curvature part of the temporal term are measured on per-segment
    /// turning angles `K / (N - 1)`.
    #[default]
    Reconciled,
}

/// Per-term multipliers folded into the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossScaling {
    pub px: f64,
    pub sc: f64,
    pub sm: f64,
    pub t: f64,
    pub i: f64,
    /// Factor on the curvature differences inside the temporal term.
    pub t_k: f64,
}

impl LossScaling {
    pub fn literal() -> Self {
        Self {
            px: 1.0,
            sc: 1.0,
            sm: 1.0,
            t: 1.0,
            i: 1.0,
            t_k: 1.0,
        }
    }

    /// Scaling for `units` with crop size `w` and `n` vertices.
    pub fn new(units: LossUnits, w: usize, n: usize) -> Self {
        match units {
            LossUnits::Literal => Self::literal(),
            LossUnits::Reconciled => Self {
                px: 3.0 * (w * w) as f64,
                sm: 1.0 / ((n - 1) * (n - 1)) as f64,
                t_k: 1.0 / (n - 1) as f64,
                ..Self::literal()
            },
        }
    }

    /// Weights actually multiplying the terms.
    pub fn apply(&self, w: &LossWeights) -> LossWeights {
        LossWeights {
            px: w.px * self.px,
            sc: w.sc * self.sc,
            sm: w.sm * self.sm,
            t: w.t * self.t,
            i: w.i * self.i,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub px: f64,
    pub sc: f64,
    pub sm: f64,
    pub t: f64,
    pub i: f64,
    pub total: f64,
}

/// Combines the five terms; a NaN term is an error naming it.
pub fn total_loss(terms: [f64; 5], weights: &LossWeights) -> Result<LossBreakdown> {
    const NAMES: [&str; 5] = [
        "pixel loss",
        "scores loss",
        "smoothness loss",
        "temporal loss",
        "intersection loss",
    ];
    for (v, name) in terms.iter().zip(NAMES) {
        if !v.is_finite() {
            return Err(Error::NonFinite { stage: name });
        }
    }
    let [px, sc, sm, t, i] = terms;
    Ok(LossBreakdown {
        px,
        sc,
        sm,
        t,
        i,
        total: weights.px * px + weights.sc * sc + weights.sm * sm + weights.t * t + weights.i * i,
    })
}

/// Mean squared residual over all three views; the gradient is with
/// respect to `rendered`.
pub fn pixel_loss(rendered: &ImageTriplet, target: &ImageTriplet) -> (f64, [Vec<f64>; 3]) {
    let count: usize = rendered.iter().map(|r| r.data.len()).sum();
    let scale = 1.0 / count as f64;
    let mut total = 0.0;
    let grad = std::array::from_fn(|c| {
        rendered[c]
            .data
            .iter()
            .zip(&target[c].data)
            .map(|(r, t)| {
                let d = r - t;
                total += d * d;
                2.0 * d * scale
            })
            .collect()
    });
    (total * scale, grad)
}

fn tip_weight(n: usize, count: usize) -> f64 {
    let last = (count - 1) as f64;
    ((2.0 * n as f64 - last) / last).powi(2)
}

/// `max(S') N / sum(S' w)` with weights growing quadratically toward the tips.
pub fn scores_loss(s_prime: &[f64]) -> (f64, Vec<f64>) {
    let n = s_prime.len();
    let mut grad = vec![0.0; n];
    if n < 2 {
        return (SCORES_LOSS_SENTINEL, grad);
    }
    let denom: f64 = s_prime
        .iter()
        .enumerate()
        .map(|(k, s)| s * tip_weight(k, n))
        .sum();
    if denom <= 0.0 {
        return (SCORES_LOSS_SENTINEL, grad);
    }
    let mut amax = 0;
    for k in 1..n {
        if s_prime[k] > s_prime[amax] {
            amax = k;
        }
    }
    let value = s_prime[amax] * n as f64 / denom;
    for (k, g) in grad.iter_mut().enumerate() {
        *g = -value * tip_weight(k, n) / denom;
    }
    grad[amax] += n as f64 / denom;
    (value, grad)
}

/// Sum of squared differences between consecutive curvature rows.
pub fn smoothness_loss(k: &Curvature) -> (f64, Vec<[f64; 2]>) {
    let rows = k.rows();
    let mut grad = vec![[0.0; 2]; rows.len()];
    let mut total = 0.0;
    for n in 1..rows.len() {
        for a in 0..2 {
            let d = rows[n][a] - rows[n - 1][a];
            total += d * d;
            grad[n][a] += 2.0 * d;
            grad[n - 1][a] -= 2.0 * d;
        }
    }
    (total, grad)
}

/// Variables entering the temporal loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalState {
    pub length: f64,
    pub k: Curvature,
    pub p: Vec<Vec3>,
    pub camera: Vec<f64>,
    pub render: RenderParams,
}

/// Frozen copy of the previous frame's solution.
pub type PreviousFrameSnapshot = TemporalState;

impl TemporalState {
    pub fn zeros_like(other: &TemporalState) -> Self {
        Self {
            length: 0.0,
            k: Curvature::zeros(other.k.len()),
            p: vec![Vec3::zeros(); other.p.len()],
            camera: vec![0.0; other.camera.len()],
            render: RenderParams::uniform(0.0, 0.0, 0.0),
        }
    }
}

/// Squared distance to the snapshot; `None` (first frame) gives 0.
pub fn temporal_loss(
    current: &TemporalState,
    snapshot: Option<&PreviousFrameSnapshot>,
) -> Result<(f64, TemporalState)> {
    temporal_loss_scaled(current, snapshot, 1.0)
}

/// [`temporal_loss`] with the curvature differences multiplied by `k_factor`.
pub fn temporal_loss_scaled(
    current: &TemporalState,
    snapshot: Option<&PreviousFrameSnapshot>,
    k_factor: f64,
) -> Result<(f64, TemporalState)> {
    let mut grad = TemporalState::zeros_like(current);
    let Some(prev) = snapshot else {
        return Ok((0.0, grad));
    };
    if prev.k.len() != current.k.len() || prev.p.len() != current.p.len() {
        return Err(Error::SnapshotMismatch(format!(
            "snapshot has {} vertices, current state {}",
            prev.p.len(),
            current.p.len()
        )));
    }
    if prev.camera.len() != TRIPLET_PARAMS || current.camera.len() != TRIPLET_PARAMS {
        return Err(Error::SnapshotMismatch(
            "camera vector must hold 48 scalars".into(),
        ));
    }
    let mut total = 0.0;
    let mut acc = |cur: f64, old: f64| -> f64 {
        let d = cur - old;
        total += d * d;
        2.0 * d
    };
    grad.length = acc(current.length, prev.length);
    let f = k_factor;
    for (g, (a, b)) in grad
        .k
        .rows_mut()
        .iter_mut()
        .zip(current.k.rows().iter().zip(prev.k.rows()))
    {
        *g = [f * acc(f * a[0], f * b[0]), f * acc(f * a[1], f * b[1])];
    }
    for (g, (a, b)) in grad.p.iter_mut().zip(current.p.iter().zip(&prev.p)) {
        *g = Vec3::new(acc(a.x, b.x), acc(a.y, b.y), acc(a.z, b.z));
    }
    for (g, (a, b)) in grad
        .camera
        .iter_mut()
        .zip(current.camera.iter().zip(&prev.camera))
    {
        *g = acc(*a, *b);
    }
    let (ra, rb) = (current.render.to_array(), prev.render.to_array());
    let mut rg = [0.0; 9];
    for i in 0..9 {
        rg[i] = acc(ra[i], rb[i]);
    }
    grad.render = RenderParams::from_array(&rg);
    Ok((total, grad))
}

/// Gradient of [`intersection_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionGrad {
    pub p: Vec<Vec3>,
    pub sigma_bar: [Vec<f64>; 3],
}

/// Minimum index separation for pairs considered by [`intersection_loss`].
pub fn intersection_gap(n: usize, k_max: f64) -> usize {
    (n as f64 / k_max).ceil() as usize
}

/// Penalises body-distant vertex pairs closer than the sum of their radii
/// (mean tapered blob scale, converted to mm by `pixel_to_mm`).
pub fn intersection_loss(
    p: &[Vec3],
    sigma_bar: &[Vec<f64>; 3],
    k_max: f64,
    pixel_to_mm: f64,
) -> Result<(f64, IntersectionGrad)> {
    let n = p.len();
    let mut grad = IntersectionGrad {
        p: vec![Vec3::zeros(); n],
        sigma_bar: std::array::from_fn(|_| vec![0.0; n]),
    };
    let gap = intersection_gap(n, k_max).max(1);
    let radius: Vec<f64> = (0..n)
        .map(|k| (sigma_bar[0][k] + sigma_bar[1][k] + sigma_bar[2][k]) / 3.0 * pixel_to_mm)
        .collect();
    let mut total = 0.0;
    for a in 0..n {
        for b in a + gap..n {
            let diff = p[a] - p[b];
            let d = diff.norm();
            if d == 0.0 {
                return Err(Error::CoincidentVertices(a, b));
            }
            let dp = radius[a] + radius[b];
            if d < dp {
                total += dp / d;
                let gd = -dp / (d * d) * diff / d;
                grad.p[a] += gd;
                grad.p[b] -= gd;
                let gs = pixel_to_mm / (3.0 * d);
                for c in 0..3 {
                    grad.sigma_bar[c][a] += gs;
                    grad.sigma_bar[c][b] += gs;
                }
            }
        }
    }
    Ok((total, grad))
}
