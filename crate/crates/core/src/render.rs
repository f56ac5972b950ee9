//! Super-Gaussian blob rasteriser with pixel-wise max composition.
//!
//! A [`BlobField`] caches every blob's support so that rendering, scoring,
//! masking and the adjoint passes share one evaluation of the blob values.

use serde::{Deserialize, Serialize};

use crate::camera::ProjectedCurve;
use crate::error::{Error, Result};
use crate::raster::{Image, ImageTriplet};

/// Intensity ceiling (inputs are normalised to [0, 1]).
pub const IOTA_MAX: f64 = 1.0;
/// Smallest exponent the optimiser may reach.
pub const RHO_MIN: f64 = 0.1;

const NO_BLOB: u32 = u32::MAX;

/// Optimisable per-camera rendering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub sigma: [f64; 3],
    pub iota: [f64; 3],
    pub rho: [f64; 3],
}

impl RenderParams {
    pub fn uniform(sigma: f64, iota: f64, rho: f64) -> Self {
        Self {
            sigma: [sigma; 3],
            iota: [iota; 3],
            rho: [rho; 3],
        }
    }

    pub fn to_array(&self) -> [f64; 9] {
        let mut a = [0.0; 9];
        a[..3].copy_from_slice(&self.sigma);
        a[3..6].copy_from_slice(&self.iota);
        a[6..].copy_from_slice(&self.rho);
        a
    }

    pub fn from_array(a: &[f64; 9]) -> Self {
        Self {
            sigma: [a[0], a[1], a[2]],
            iota: [a[3], a[4], a[5]],
            rho: [a[6], a[7], a[8]],
        }
    }

    pub fn validate(&self, limits: &RenderLimits) -> Result<()> {
        for c in 0..3 {
            if !(self.sigma[c] >= limits.sigma_min && self.sigma[c].is_finite()) {
                return Err(Error::invalid(format!("sigma[{c}] below sigma_min")));
            }
            if !(self.iota[c] >= limits.iota_min && self.iota[c] <= IOTA_MAX) {
                return Err(Error::invalid(format!("iota[{c}] outside [iota_min, 1]")));
            }
            if !(self.rho[c] > 0.0 && self.rho[c].is_finite()) {
                return Err(Error::invalid(format!("rho[{c}] must be positive")));
            }
        }
        Ok(())
    }

    /// Projects onto the feasible box.
    pub fn clamp(&mut self, limits: &RenderLimits) {
        for c in 0..3 {
            self.sigma[c] = self.sigma[c].max(limits.sigma_min);
            self.iota[c] = self.iota[c].clamp(limits.iota_min, IOTA_MAX);
            self.rho[c] = self.rho[c].max(RHO_MIN);
        }
    }
}

/// Fixed rendering limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderLimits {
    pub sigma_min: f64,
    pub iota_min: f64,
    /// Side length of the rendered square images.
    pub w: usize,
    /// Blob values below this are treated as zero.
    pub cutoff_eps: f64,
}

impl Default for RenderLimits {
    fn default() -> Self {
        Self {
            sigma_min: 3.0,
            iota_min: 0.2,
            w: 200,
            cutoff_eps: 1e-4,
        }
    }
}

impl RenderLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.iota_min > 0.0 && self.iota_min <= IOTA_MAX) {
            return Err(Error::invalid("sigma_min and iota_min must be positive"));
        }
        if self.w < 8 {
            return Err(Error::invalid("image size w must be at least 8"));
        }
        if !(self.cutoff_eps > 0.0 && self.cutoff_eps < self.iota_min) {
            return Err(Error::invalid("cutoff_eps must lie in (0, iota_min)"));
        }
        Ok(())
    }
}

/// Fraction of the optimisable excess kept at vertex `n` (1 in the middle
/// 60%, linear ramps toward the tips).
pub fn taper_weight(n: usize, count: usize) -> f64 {
    let (n, nn) = (n as f64, count as f64);
    if n < nn / 5.0 {
        5.0 * n / nn
    } else if n < 4.0 * nn / 5.0 {
        1.0
    } else {
        1.0 - (n - 4.0 * nn / 5.0) / (nn - 4.0 * nn / 5.0)
    }
}

/// Per-vertex tapered blob scale and intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct Tapered {
    pub sigma: [Vec<f64>; 3],
    pub iota: [Vec<f64>; 3],
    /// `taper_weight` per vertex, the derivative of both ramps.
    pub weight: Vec<f64>,
}

pub fn taper_params(params: &RenderParams, limits: &RenderLimits, count: usize) -> Tapered {
    let weight: Vec<f64> = (0..count).map(|n| taper_weight(n, count)).collect();
    let ramp =
        |min: f64, v: f64| -> Vec<f64> { weight.iter().map(|g| min * (1.0 - g) + v * g).collect() };
    Tapered {
        sigma: std::array::from_fn(|c| ramp(limits.sigma_min, params.sigma[c])),
        iota: std::array::from_fn(|c| ramp(limits.iota_min, params.iota[c])),
        weight: weight.clone(),
    }
}

/// Value of one blob at pixel `(i, j)`.
pub fn blob_pixel(q: [f64; 2], sigma_bar: f64, iota_bar: f64, rho: f64, i: f64, j: f64) -> f64 {
    let d2 = (i - q[0]).powi(2) + (j - q[1]).powi(2);
    iota_bar * (-(d2 / (2.0 * sigma_bar * sigma_bar)).powf(rho)).exp()
}

/// Distance beyond which a blob is below `eps`.
pub fn cutoff_radius(sigma_bar: f64, iota_bar: f64, rho: f64, eps: f64) -> f64 {
    if iota_bar <= eps {
        return 0.0;
    }
    sigma_bar * std::f64::consts::SQRT_2 * (iota_bar / eps).ln().powf(0.5 / rho)
}

#[derive(Debug, Clone)]
struct Blob {
    centre: [f64; 2],
    sigma: f64,
    iota: f64,
    rho: f64,
    i0: usize,
    j0: usize,
    bw: usize,
    bh: usize,
    offset: usize,
}

/// Cached blob supports for all cameras and vertices.
#[derive(Debug, Clone)]
pub struct BlobField {
    w: usize,
    n: usize,
    blobs: Vec<Blob>,
    /// exp(-q^rho) per support pixel
    e: Vec<f64>,
    /// q^rho per support pixel
    qr: Vec<f64>,
}

/// Rendered images plus the winning blob per pixel.
#[derive(Debug, Clone)]
pub struct RenderedTriplet {
    pub images: ImageTriplet,
    argmax: [Vec<u32>; 3],
}

impl RenderedTriplet {
    /// Feeds the per-pixel winners to `h`.
    pub fn hash_winners<H: std::hash::Hasher>(&self, h: &mut H) {
        for am in &self.argmax {
            for &k in am {
                h.write_u32(k);
            }
        }
    }

    /// Vertex whose blob produced pixel `(i, j)` in camera `c`.
    pub fn winner(&self, c: usize, i: usize, j: usize) -> Option<usize> {
        let a = self.argmax[c][j * self.images[c].width + i];
        (a != NO_BLOB).then_some(a as usize)
    }
}

/// Gradients with respect to everything a blob depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobGrad {
    pub q: [Vec<[f64; 2]>; 3],
    pub sigma_bar: [Vec<f64>; 3],
    pub iota_bar: [Vec<f64>; 3],
    pub rho: [f64; 3],
}

impl BlobGrad {
    pub fn zeros(n: usize) -> Self {
        Self {
            q: std::array::from_fn(|_| vec![[0.0; 2]; n]),
            sigma_bar: std::array::from_fn(|_| vec![0.0; n]),
            iota_bar: std::array::from_fn(|_| vec![0.0; n]),
            rho: [0.0; 3],
        }
    }

    /// Pulls the tapered gradients back to the per-camera scalars.
    pub fn to_params(&self, tapered: &Tapered) -> RenderParams {
        let fold = |g: &[f64]| -> f64 { g.iter().zip(&tapered.weight).map(|(a, b)| a * b).sum() };
        RenderParams {
            sigma: std::array::from_fn(|c| fold(&self.sigma_bar[c])),
            iota: std::array::from_fn(|c| fold(&self.iota_bar[c])),
            rho: self.rho,
        }
    }
}

/// Derivatives of e = exp(-q^rho) at one pixel.
#[inline]
fn blob_partials(b: &Blob, i: usize, j: usize, e: f64, qr: f64) -> ([f64; 2], f64, f64) {
    let di = i as f64 - b.centre[0];
    let dj = j as f64 - b.centre[1];
    let s2 = b.sigma * b.sigma;
    let q = (di * di + dj * dj) / (2.0 * s2);
    if q <= 0.0 {
        return ([0.0; 2], 0.0, 0.0);
    }
    // de/dq = -rho q^(rho-1) e
    let de_dq = -b.rho * qr / q * e;
    let d_centre = [de_dq * (-di / s2), de_dq * (-dj / s2)];
    let d_sigma = de_dq * (-2.0 * q / b.sigma);
    let d_rho = -e * qr * q.ln();
    (d_centre, d_sigma, d_rho)
}

impl BlobField {
    pub fn build(
        q: &ProjectedCurve,
        tapered: &Tapered,
        rho: &[f64; 3],
        limits: &RenderLimits,
    ) -> Result<Self> {
        let n = q[0].len();
        let w = limits.w;
        let mut blobs = Vec::with_capacity(3 * n);
        let mut e = Vec::new();
        let mut qr = Vec::new();
        for c in 0..3 {
            for k in 0..n {
                let centre = q[c][k];
                if !(centre[0].is_finite() && centre[1].is_finite()) {
                    return Err(Error::NonFinite { stage: "render" });
                }
                let (sigma, iota, r) = (tapered.sigma[c][k], tapered.iota[c][k], rho[c]);
                let rc = cutoff_radius(sigma, iota, r, limits.cutoff_eps);
                let lo = |x: f64| (x - rc).ceil().max(0.0);
                let hi = |x: f64| (x + rc).floor().min(w as f64 - 1.0);
                let (i0, i1) = (lo(centre[0]), hi(centre[0]));
                let (j0, j1) = (lo(centre[1]), hi(centre[1]));
                let mut blob = Blob {
                    centre,
                    sigma,
                    iota,
                    rho: r,
                    i0: 0,
                    j0: 0,
                    bw: 0,
                    bh: 0,
                    offset: e.len(),
                };
                if i1 >= i0 && j1 >= j0 {
                    blob.i0 = i0 as usize;
                    blob.j0 = j0 as usize;
                    blob.bw = (i1 - i0) as usize + 1;
                    blob.bh = (j1 - j0) as usize + 1;
                    let inv = 1.0 / (2.0 * sigma * sigma);
                    let rc2 = rc * rc;
                    for j in blob.j0..blob.j0 + blob.bh {
                        let dj = j as f64 - centre[1];
                        for i in blob.i0..blob.i0 + blob.bw {
                            let di = i as f64 - centre[0];
                            let d2 = di * di + dj * dj;
                            if d2 > rc2 {
                                e.push(0.0);
                                qr.push(0.0);
                                continue;
                            }
                            let qv = d2 * inv;
                            let p = if r == 1.0 { qv } else { qv.powf(r) };
                            e.push((-p).exp());
                            qr.push(p);
                        }
                    }
                }
                blobs.push(blob);
            }
        }
        Ok(Self { w, n, blobs, e, qr })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.w
    }

    /// Visits every support pixel of blob `(c, k)` as `(i, j, e, qr)`.
    fn for_each<F: FnMut(usize, usize, f64, f64)>(&self, c: usize, k: usize, mut f: F) {
        let b = &self.blobs[c * self.n + k];
        for y in 0..b.bh {
            let row = b.offset + y * b.bw;
            for x in 0..b.bw {
                let e = self.e[row + x];
                if e > 0.0 {
                    f(b.i0 + x, b.j0 + y, e, self.qr[row + x]);
                }
            }
        }
    }

    fn lookup(&self, c: usize, k: usize, i: usize, j: usize) -> Option<(f64, f64)> {
        let b = &self.blobs[c * self.n + k];
        if i < b.i0 || j < b.j0 || i >= b.i0 + b.bw || j >= b.j0 + b.bh {
            return None;
        }
        let idx = b.offset + (j - b.j0) * b.bw + (i - b.i0);
        Some((self.e[idx], self.qr[idx]))
    }

    /// Feeds each blob's support rectangle and pixel count to `h`.
    pub fn hash_support<H: std::hash::Hasher>(&self, h: &mut H) {
        for b in &self.blobs {
            h.write_usize(b.i0);
            h.write_usize(b.j0);
            h.write_usize(b.bw);
            h.write_usize(b.bh);
            let count = self.e[b.offset..b.offset + b.bw * b.bh]
                .iter()
                .filter(|&&v| v > 0.0)
                .count();
            h.write_usize(count);
        }
    }

    /// Pixel-wise max over all blobs; ties go to the lowest vertex index.
    pub fn render(&self) -> RenderedTriplet {
        let w = self.w;
        let mut images: ImageTriplet = std::array::from_fn(|_| Image::new(w, w));
        let mut argmax: [Vec<u32>; 3] = std::array::from_fn(|_| vec![NO_BLOB; w * w]);
        for c in 0..3 {
            let img = &mut images[c].data;
            let am = &mut argmax[c];
            for k in 0..self.n {
                let iota = self.blobs[c * self.n + k].iota;
                self.for_each(c, k, |i, j, e, _| {
                    let v = iota * e;
                    let p = j * w + i;
                    if v > img[p] {
                        img[p] = v;
                        am[p] = k as u32;
                    }
                });
            }
        }
        RenderedTriplet { images, argmax }
    }

    /// Adjoint of [`render`](Self::render): `grad[c]` is d loss / d R_c.
    pub fn backward_render(
        &self,
        rendered: &RenderedTriplet,
        grad: &[Vec<f64>; 3],
        out: &mut BlobGrad,
    ) {
        let w = self.w;
        for c in 0..3 {
            for (p, &g) in grad[c].iter().enumerate() {
                let k = rendered.argmax[c][p];
                if g == 0.0 || k == NO_BLOB {
                    continue;
                }
                let k = k as usize;
                let (i, j) = (p % w, p / w);
                let b = &self.blobs[c * self.n + k];
                let Some((e, qr)) = self.lookup(c, k, i, j) else {
                    continue;
                };
                let (dq, ds, dr) = blob_partials(b, i, j, e, qr);
                let gi = g * b.iota;
                out.q[c][k][0] += gi * dq[0];
                out.q[c][k][1] += gi * dq[1];
                out.sigma_bar[c][k] += gi * ds;
                out.iota_bar[c][k] += g * e;
                out.rho[c] += gi * dr;
            }
        }
    }

    /// Per-view correlations sum(B * I) / (sigma_bar * iota_bar).
    pub fn correlations(&self, images: &ImageTriplet) -> [Vec<f64>; 3] {
        std::array::from_fn(|c| {
            let img = &images[c];
            (0..self.n)
                .map(|k| {
                    let mut s = 0.0;
                    self.for_each(c, k, |i, j, e, _| s += e * img.get(i, j));
                    s / self.blobs[c * self.n + k].sigma
                })
                .collect()
        })
    }

    /// Adjoint of [`correlations`](Self::correlations) (images are constant).
    pub fn backward_correlations(
        &self,
        images: &ImageTriplet,
        grad: &[Vec<f64>; 3],
        out: &mut BlobGrad,
    ) {
        for c in 0..3 {
            let img = &images[c];
            for k in 0..self.n {
                let g = grad[c][k];
                if g == 0.0 {
                    continue;
                }
                let b = &self.blobs[c * self.n + k];
                let (mut sq0, mut sq1, mut ss, mut sr, mut sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
                self.for_each(c, k, |i, j, e, qr| {
                    let v = img.get(i, j);
                    if v == 0.0 {
                        return;
                    }
                    let (dq, ds, dr) = blob_partials(b, i, j, e, qr);
                    sq0 += v * dq[0];
                    sq1 += v * dq[1];
                    ss += v * ds;
                    sr += v * dr;
                    sum += v * e;
                });
                let inv = g / b.sigma;
                out.q[c][k][0] += inv * sq0;
                out.q[c][k][1] += inv * sq1;
                out.sigma_bar[c][k] += inv * ss - g * sum / (b.sigma * b.sigma);
                out.rho[c] += inv * sr;
            }
        }
    }

    /// Max over vertices of the peak-normalised blobs weighted by `weights`.
    pub fn weighted_max(&self, weights: &[f64]) -> ImageTriplet {
        let w = self.w;
        let mut images: ImageTriplet = std::array::from_fn(|_| Image::new(w, w));
        for (c, img) in images.iter_mut().enumerate() {
            for (k, &s) in weights.iter().enumerate() {
                if s <= 0.0 {
                    continue;
                }
                self.for_each(c, k, |i, j, e, _| {
                    let p = j * w + i;
                    img.data[p] = img.data[p].max(e * s);
                });
            }
        }
        images
    }
}

/// Convenience: taper, build the blob field and render.
pub fn render(
    q: &ProjectedCurve,
    params: &RenderParams,
    limits: &RenderLimits,
) -> Result<RenderedTriplet> {
    let tapered = taper_params(params, limits, q[0].len());
    Ok(BlobField::build(q, &tapered, &params.rho, limits)?.render())
}
