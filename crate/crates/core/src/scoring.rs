//! Per-vertex multi-view scores, middle-out tapering and input masking.

use serde::{Deserialize, Serialize};

use crate::raster::{Image, ImageTriplet};
use crate::render::BlobField;

/// Mask value outside the detected region.
pub const MASK_FLOOR: f64 = 0.2;

/// Raw, tapered and normalised scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreProfile {
    pub s: Vec<f64>,
    pub s_prime: Vec<f64>,
    pub s_hat: Vec<f64>,
}

/// Scores together with the routing needed to differentiate them.
#[derive(Debug, Clone)]
pub struct ScoreTape {
    pub profile: ScoreProfile,
    /// View attaining the minimum for each vertex.
    pub view: Vec<usize>,
    /// Index whose raw score each tapered score copies.
    pub source: Vec<usize>,
}

/// `S_n = min_c sum(B I) / (sigma_bar iota_bar)`; also returns the arg-min
/// view (lowest index on ties).
pub fn raw_scores(field: &BlobField, images: &ImageTriplet) -> (Vec<f64>, Vec<usize>) {
    let corr = field.correlations(images);
    let n = field.vertex_count();
    let mut s = Vec::with_capacity(n);
    let mut view = Vec::with_capacity(n);
    for k in 0..n {
        let mut best = 0;
        for c in 1..3 {
            if corr[c][k] < corr[best][k] {
                best = c;
            }
        }
        s.push(corr[best][k]);
        view.push(best);
    }
    (s, view)
}

/// Middle-out running minimum anchored at `floor(N/2)` and its normalisation;
/// the third output maps each tapered entry to the raw index it copies.
pub fn taper_and_normalize(s: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let n = s.len();
    if n == 0 {
        return (vec![], vec![], vec![]);
    }
    let mid = n / 2;
    let mut sp = s.to_vec();
    let mut source: Vec<usize> = (0..n).collect();
    for k in (0..mid).rev() {
        if sp[k + 1] < s[k] {
            sp[k] = sp[k + 1];
            source[k] = source[k + 1];
        }
    }
    for k in mid + 1..n {
        if sp[k - 1] < s[k] {
            sp[k] = sp[k - 1];
            source[k] = source[k - 1];
        }
    }
    let max = sp.iter().copied().fold(0.0, f64::max);
    let hat = if max > 0.0 {
        sp.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; n]
    };
    (sp, hat, source)
}

impl ScoreTape {
    pub fn compute(field: &BlobField, images: &ImageTriplet) -> Self {
        let (s, view) = raw_scores(field, images);
        let (s_prime, s_hat, source) = taper_and_normalize(&s);
        Self {
            profile: ScoreProfile { s, s_prime, s_hat },
            view,
            source,
        }
    }

    /// Maps `d loss / dS'` to `d loss / d correlation[c][n]`.
    pub fn backward(&self, grad_s_prime: &[f64]) -> [Vec<f64>; 3] {
        let n = self.view.len();
        let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; n]);
        for (k, &g) in grad_s_prime.iter().enumerate() {
            if g != 0.0 {
                let src = self.source[k];
                out[self.view[src]][src] += g;
            }
        }
        out
    }
}

/// Two-valued masks, constant for the gradient engine.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub m: ImageTriplet,
    pub theta: f64,
}

impl MaskSet {
    /// Masks that keep every pixel.
    pub fn ones(w: usize) -> Self {
        Self {
            m: std::array::from_fn(|_| Image::filled(w, w, 1.0)),
            theta: 0.0,
        }
    }
}

/// Mask = 1 wherever some score-weighted, peak-normalised blob reaches
/// `theta`, [`MASK_FLOOR`] elsewhere.
pub fn build_masks(field: &BlobField, s_hat: &[f64], theta: f64) -> MaskSet {
    let mut m = field.weighted_max(s_hat);
    for img in &mut m {
        for v in &mut img.data {
            *v = if *v >= theta { 1.0 } else { MASK_FLOOR };
        }
    }
    MaskSet { m, theta }
}

/// `I* = M * I` pixel-wise.
pub fn apply_masks(masks: &MaskSet, images: &ImageTriplet) -> ImageTriplet {
    std::array::from_fn(|c| {
        let mut out = images[c].clone();
        for (v, m) in out.data.iter_mut().zip(&masks.m[c].data) {
            *v *= m;
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::ProjectedCurve;
    use crate::render::{taper_params, RenderLimits, RenderParams};

    #[test]
    fn taper_example() {
        let (sp, hat, src) = taper_and_normalize(&[0.2, 0.9, 0.5, 1.0, 0.3]);
        assert_eq!(sp, vec![0.2, 0.5, 0.5, 0.5, 0.3]);
        let expect = [0.4, 1.0, 1.0, 1.0, 0.6];
        for (a, b) in hat.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(src, vec![0, 2, 2, 2, 4]);
    }

    #[test]
    fn taper_constant_and_zero() {
        let (sp, hat, _) = taper_and_normalize(&[0.7; 6]);
        assert_eq!(sp, vec![0.7; 6]);
        assert!(hat.iter().all(|&v| v == 1.0));
        let (_, hat, _) = taper_and_normalize(&[0.0; 6]);
        assert!(hat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn taper_suppresses_second_peak() {
        let s = [0.0, 1.0, 0.0, 0.0, 0.8, 1.0, 0.9, 0.1];
        let (sp, _, _) = taper_and_normalize(&s);
        // anchor 4: plateau 0.8 around the middle, left peak cut off by the zero gap
        assert_eq!(sp, vec![0.0, 0.0, 0.0, 0.0, 0.8, 0.8, 0.8, 0.1]);
    }

    fn scene(w: usize, n: usize) -> (BlobField, RenderLimits) {
        let limits = RenderLimits {
            sigma_min: 2.0,
            iota_min: 0.2,
            w,
            cutoff_eps: 1e-4,
        };
        let q: ProjectedCurve =
            std::array::from_fn(|_| (0..n).map(|k| [10.0 + 2.0 * k as f64, 20.0]).collect());
        let p = RenderParams::uniform(3.0, 0.8, 1.0);
        let t = taper_params(&p, &limits, n);
        (BlobField::build(&q, &t, &p.rho, &limits).unwrap(), limits)
    }

    #[test]
    fn min_over_views() {
        let (field, _) = scene(48, 8);
        let ones: ImageTriplet = std::array::from_fn(|_| Image::filled(48, 48, 1.0));
        let (s, _) = raw_scores(&field, &ones);
        // middle vertex: sigma_bar = 3, integral 2 pi sigma^2 / sigma
        let expect = 2.0 * std::f64::consts::PI * 3.0;
        assert!((s[4] - expect).abs() / expect < 0.02);
        let mut one_dark = ones.clone();
        one_dark[1] = Image::new(48, 48);
        let (s, view) = raw_scores(&field, &one_dark);
        assert!(s.iter().all(|&v| v == 0.0));
        assert!(view.iter().all(|&c| c == 1));
        let zeros: ImageTriplet = std::array::from_fn(|_| Image::new(48, 48));
        assert!(raw_scores(&field, &zeros).0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mask_extremes() {
        let (field, _) = scene(48, 8);
        let hat = vec![1.0; 8];
        let all = build_masks(&field, &hat, 0.0);
        assert!(all.m.iter().all(|m| m.data.iter().all(|&v| v == 1.0)));
        let none = build_masks(&field, &hat, 1.0 + 1e-9);
        assert!(none
            .m
            .iter()
            .all(|m| m.data.iter().all(|&v| v == MASK_FLOOR)));
        let some = build_masks(&field, &hat, 0.1);
        assert_eq!(some.m[0].get(18, 20), 1.0);
        assert_eq!(some.m[0].get(18, 45), MASK_FLOOR);
    }

    #[test]
    fn apply_masks_is_elementwise() {
        let (field, _) = scene(48, 8);
        let masks = build_masks(&field, &[1.0; 8], 0.1);
        let img: ImageTriplet =
            std::array::from_fn(|c| Image::from_fn(48, 48, |i, j| ((i + j + c) % 5) as f64 / 4.0));
        let out = apply_masks(&masks, &img);
        for c in 0..3 {
            for p in 0..48 * 48 {
                let m = masks.m[c].data[p];
                let expect = if m == 1.0 {
                    img[c].data[p]
                } else {
                    0.2 * img[c].data[p]
                };
                assert_eq!(out[c].data[p], expect);
            }
        }
    }
}
