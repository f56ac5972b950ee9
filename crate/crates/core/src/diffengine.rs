//! Flattened parameter vector, objective interface and a central-difference
//! gradient validator.

use serde::{Deserialize, Serialize};

use crate::camera::{CameraTriplet, TRIPLET_PARAMS};
use crate::curve::{Curvature, Vec3};
use crate::error::{Error, Result};
use crate::render::RenderParams;

/// Learning-rate group of a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Curve,
    Render,
    Camera,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Curve, Group::Render, Group::Camera];

    pub fn name(self) -> &'static str {
        match self {
            Group::Curve => "curve",
            Group::Render => "render",
            Group::Camera => "camera",
        }
    }
}

/// Index arithmetic for a curve of `n` vertices. Storage order:
/// anchor position (3), anchor tangent (3), anchor normal (3), curvature
/// (2N), raw length (1), sigma (3), iota (3), rho (3), camera triplet (48).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n: usize,
}

impl Layout {
    pub const P: usize = 0;
    pub const T: usize = 3;
    pub const M1: usize = 6;
    pub const K: usize = 9;

    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn length_raw(&self) -> usize {
        Self::K + 2 * self.n
    }

    pub fn sigma(&self) -> usize {
        self.length_raw() + 1
    }

    pub fn iota(&self) -> usize {
        self.sigma() + 3
    }

    pub fn rho(&self) -> usize {
        self.iota() + 3
    }

    pub fn camera(&self) -> usize {
        self.rho() + 3
    }

    pub fn len(&self) -> usize {
        self.camera() + TRIPLET_PARAMS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn group(&self, i: usize) -> Group {
        if i < self.sigma() {
            Group::Curve
        } else if i < self.camera() {
            Group::Render
        } else {
            Group::Camera
        }
    }

    pub fn range(&self, g: Group) -> std::ops::Range<usize> {
        match g {
            Group::Curve => 0..self.sigma(),
            Group::Render => self.sigma()..self.camera(),
            Group::Camera => self.camera()..self.len(),
        }
    }

    /// Typical magnitude of a unit change in scalar `i`, used for
    /// finite-difference steps. Chosen so a step of 1e-4 units moves image
    /// features by well under a tenth of a pixel in a typical rig.
    pub fn fd_scale(&self, i: usize) -> f64 {
        if i >= self.camera() {
            let k = (i - self.camera()) % 15;
            if i - self.camera() >= 45 {
                return 1.0;
            }
            return match k {
                0 | 1 => 100.0,
                4..=6 => 0.01,
                _ => 1.0,
            };
        }
        1.0
    }

    /// Human-readable name of scalar `i`.
    pub fn name(&self, i: usize) -> String {
        const CAM: [&str; 15] = crate::camera::CAMERA_PARAM_NAMES;
        if i < 9 {
            let part = ["P", "T", "M1"][i / 3];
            format!("{part}[{}]", i % 3)
        } else if i < self.length_raw() {
            let k = i - Self::K;
            format!("K[{}][{}]", k / 2, k % 2)
        } else if i == self.length_raw() {
            "length_raw".into()
        } else if i < self.camera() {
            let k = i - self.sigma();
            format!("{}[{}]", ["sigma", "iota", "rho"][k / 3], k % 3)
        } else {
            let k = i - self.camera();
            if k >= 45 {
                ["dx", "dy", "dz"][k - 45].to_string()
            } else {
                format!("cam{}.{}", k / 15, CAM[k % 15])
            }
        }
    }
}

/// All optimisable scalars of one frame in a flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl ParameterSet {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        p: Vec3,
        t: Vec3,
        m1: Vec3,
        k: &Curvature,
        length_raw: f64,
        render: &RenderParams,
        triplet: &CameraTriplet,
    ) -> Self {
        let layout = Layout::new(k.len());
        let mut values = Vec::with_capacity(layout.len());
        values.extend(p.iter());
        values.extend(t.iter());
        values.extend(m1.iter());
        for r in k.rows() {
            values.extend(r);
        }
        values.push(length_raw);
        values.extend(render.to_array());
        values.extend(triplet.to_array());
        Self { layout, values }
    }

    fn vec3(&self, at: usize) -> Vec3 {
        Vec3::new(self.values[at], self.values[at + 1], self.values[at + 2])
    }

    pub fn p(&self) -> Vec3 {
        self.vec3(Layout::P)
    }

    pub fn t(&self) -> Vec3 {
        self.vec3(Layout::T)
    }

    pub fn m1(&self) -> Vec3 {
        self.vec3(Layout::M1)
    }

    pub fn k(&self) -> Curvature {
        let raw = &self.values[Layout::K..self.layout.length_raw()];
        Curvature::from_rows(raw.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn set_k(&mut self, k: &Curvature) {
        for (n, r) in k.rows().iter().enumerate() {
            self.values[Layout::K + 2 * n] = r[0];
            self.values[Layout::K + 2 * n + 1] = r[1];
        }
    }

    pub fn length_raw(&self) -> f64 {
        self.values[self.layout.length_raw()]
    }

    pub fn render(&self) -> RenderParams {
        let mut a = [0.0; 9];
        a.copy_from_slice(&self.values[self.layout.sigma()..self.layout.camera()]);
        RenderParams::from_array(&a)
    }

    pub fn set_render(&mut self, r: &RenderParams) {
        let at = self.layout.sigma();
        self.values[at..at + 9].copy_from_slice(&r.to_array());
    }

    pub fn camera(&self) -> [f64; TRIPLET_PARAMS] {
        let mut a = [0.0; TRIPLET_PARAMS];
        a.copy_from_slice(&self.values[self.layout.camera()..]);
        a
    }

    /// Triplet built from the stored scalars, keeping `template`'s frozen mask.
    pub fn triplet(&self, template: &CameraTriplet) -> CameraTriplet {
        let mut t = *template;
        t.set_from_array(&self.camera());
        t
    }

    pub fn set_camera(&mut self, t: &CameraTriplet) {
        let at = self.layout.camera();
        self.values[at..].copy_from_slice(&t.to_array());
    }
}

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Value plus a fingerprint of every discrete choice made while
    /// evaluating (max winners, min views, active pairs). Two points with
    /// equal fingerprints lie in the same smooth piece of the objective.
    fn value_with_routing(&self, x: &[f64]) -> Result<(f64, Option<u64>)> {
        Ok((self.value(x)?, None))
    }
}

/// `sum(x^2)`, used to sanity-check gradient plumbing.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticProbe;

impl Objective for QuadraticProbe {
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(x.iter().map(|v| v * v).sum())
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(x)?, x.iter().map(|v| 2.0 * v).collect()))
    }
}

/// Gradient of an objective at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Filled in by [`finite_difference_check`] when one was run.
    pub max_fd_error: Option<f64>,
}

/// Evaluates the analytic gradient and rejects non-finite output.
pub fn gradient<O: Objective + ?Sized>(objective: &O, x: &[f64]) -> Result<GradientReport> {
    let (value, gradient) = objective.value_and_gradient(x)?;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            stage: "objective value",
        });
    }
    if gradient.len() != x.len() {
        return Err(Error::invalid(
            "gradient length differs from parameter length",
        ));
    }
    if !gradient.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite { stage: "gradient" });
    }
    Ok(GradientReport {
        value,
        gradient,
        max_fd_error: None,
    })
}

/// Comparison of one scalar's analytic and numerical derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct FdEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    /// Roundoff scale of `numeric`: `eps |f(x)| / h`.
    pub noise: f64,
    /// Step of the probe that produced `numeric`.
    pub step: f64,
    /// Even the smallest step straddles a kink (e.g. a pixel-max tie), so
    /// the entry is excluded from the maxima.
    pub non_smooth: bool,
}

impl FdEntry {
    /// `|analytic - numeric| <= rtol |numeric| + 10 noise`.
    pub fn passes(&self, rtol: f64) -> bool {
        (self.analytic - self.numeric).abs() <= rtol * self.numeric.abs() + 10.0 * self.noise
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub entries: Vec<FdEntry>,
    /// Largest relative error over smooth entries.
    pub max_error: f64,
}

impl FdReport {
    pub fn flagged(&self) -> impl Iterator<Item = &FdEntry> {
        self.entries.iter().filter(|e| e.non_smooth)
    }

    /// Smooth entries failing [`FdEntry::passes`].
    pub fn failures(&self, rtol: f64) -> impl Iterator<Item = &FdEntry> {
        self.entries
            .iter()
            .filter(move |e| !e.non_smooth && !e.passes(rtol))
    }

    /// Largest smooth-entry error among indices accepted by `select`.
    pub fn max_error_where(&self, select: impl Fn(usize) -> bool) -> f64 {
        self.entries
            .iter()
            .filter(|e| !e.non_smooth && select(e.index))
            .map(|e| e.rel_error)
            .fold(0.0, f64::max)
    }
}

/// Relative error used throughout: `|a - f| / (|f| + 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-8)
}

/// Step reductions tried, by a factor of 8 each, when a probe straddles a
/// non-smooth point.
pub const FD_REFINEMENTS: usize = 2;

/// Central differences at `x` for each `(index, step)`. Each derivative is
/// also estimated with half the step; a probe is non-smooth when the two
/// estimates disagree by more than `kink_tol` (relative, beyond roundoff) or
/// when the objective reports different routing anywhere in the probed
/// interval. Non-smooth probes are retried with smaller steps; entries that
/// stay non-smooth are flagged.
pub fn finite_difference_check<O: Objective + ?Sized>(
    objective: &O,
    x: &[f64],
    probes: &[(usize, f64)],
    kink_tol: f64,
) -> Result<FdReport> {
    if probes.iter().any(|(_, h)| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::invalid("finite-difference steps must be positive"));
    }
    let (_, grad) = objective.value_and_gradient(x)?;
    let (f0, centre) = objective.value_with_routing(x)?;
    let mut work = x.to_vec();
    let mut central = |i: usize, h: f64| -> Result<(f64, bool)> {
        work[i] = x[i] + h;
        let (up, ru) = objective.value_with_routing(&work)?;
        work[i] = x[i] - h;
        let (dn, rd) = objective.value_with_routing(&work)?;
        work[i] = x[i];
        Ok(((up - dn) / (2.0 * h), ru != centre || rd != centre))
    };
    let mut entries = Vec::with_capacity(probes.len());
    for &(i, h0) in probes {
        let mut h = h0;
        let mut entry = None;
        for _ in 0..=FD_REFINEMENTS {
            let (full, switch_full) = central(i, h)?;
            let (half, switch_half) = central(i, 0.5 * h)?;
            let noise = f64::EPSILON * f0.abs().max(f64::MIN_POSITIVE) / h;
            // Richardson combination cancels the leading truncation term.
            let numeric = (4.0 * half - full) / 3.0;
            let kink = (full - half).abs() > kink_tol * half.abs() + 10.0 * noise;
            let non_smooth = switch_full || switch_half || kink;
            entry = Some(FdEntry {
                index: i,
                analytic: grad[i],
                numeric,
                rel_error: relative_error(grad[i], numeric),
                noise,
                step: h,
                non_smooth,
            });
            if !non_smooth {
                break;
            }
            h /= 8.0;
        }
        entries.extend(entry);
    }
    let max_error = entries
        .iter()
        .filter(|e| !e.non_smooth)
        .map(|e| e.rel_error)
        .fold(0.0, f64::max);
    Ok(FdReport { entries, max_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_probe() {
        let x = vec![0.5, -1.25, 3.0];
        let g = gradient(&QuadraticProbe, &x).unwrap();
        assert_eq!(g.gradient, vec![1.0, -2.5, 6.0]);
        let probes: Vec<_> = (0..3).map(|i| (i, 1e-4)).collect();
        let r = finite_difference_check(&QuadraticProbe, &x, &probes, 1e-6).unwrap();
        assert!(r.max_error < 1e-10);
        assert_eq!(r.flagged().count(), 0);
        assert!(finite_difference_check(&QuadraticProbe, &x, &[(0, 0.0)], 1e-6).is_err());
    }

    struct Kink;
    impl Objective for Kink {
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok(x[0].abs())
        }
        fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((x[0].abs(), vec![if x[0] > 0.0 { 1.0 } else { -1.0 }]))
        }
    }

    #[test]
    fn kinks_are_flagged() {
        let r = finite_difference_check(&Kink, &[1e-7], &[(0, 1e-4)], 1e-6).unwrap();
        assert_eq!(r.flagged().count(), 1);
        assert_eq!(r.max_error, 0.0);
        // A smaller step clears the kink.
        let r = finite_difference_check(&Kink, &[3e-5], &[(0, 1e-4)], 1e-6).unwrap();
        assert_eq!(r.flagged().count(), 0);
        assert_eq!(r.entries[0].step, 1e-4 / 8.0);
        assert!(r.max_error < 1e-12);
    }

    #[test]
    fn layout_roundtrip() {
        let k = Curvature::from_rows((0..8).map(|i| [i as f64, -(i as f64)]).collect());
        let r = RenderParams::uniform(3.0, 0.5, 1.5);
        let t = CameraTriplet::orthogonal_rig(1000.0, [50.0, 50.0], 20.0);
        let ps = ParameterSet::assemble(
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::x(),
            Vec3::y(),
            &k,
            0.3,
            &r,
            &t,
        );
        assert_eq!(ps.values.len(), ps.layout.len());
        assert_eq!(ps.layout.len(), 2 * 8 + 67);
        assert_eq!(ps.k(), k);
        assert_eq!(ps.render(), r);
        assert_eq!(ps.triplet(&t), t);
        assert_eq!(ps.length_raw(), 0.3);
        assert_eq!(ps.p(), Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(ps.layout.group(ps.layout.length_raw()), Group::Curve);
        assert_eq!(ps.layout.group(ps.layout.sigma()), Group::Render);
        assert_eq!(ps.layout.group(ps.layout.camera()), Group::Camera);
        assert_eq!(ps.layout.name(ps.layout.camera() + 46), "dy");
        assert_eq!(ps.layout.name(ps.layout.camera() + 17), "cam1.cx");
    }
}
