//! Run configuration read from TOML. Keys follow the symbols of the
//! non-optimisable parameter, weight and learning-rate tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::FrozenMask;
use crate::curve::{CentreShiftConfig, CurveConstraints};
use crate::error::{Error, Result};
use crate::losses::{LossUnits, LossWeights};
use crate::optimizer::{
    AblationToggles, FrameSettings, OptimizerConfig, SequenceOptions, UnitScales,
};
use crate::render::{RenderLimits, RenderParams};

/// Every tunable of a reconstruction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub w: usize,
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    pub l_min: f64,
    pub l_max: f64,
    pub k_max: f64,
    pub sigma_min: f64,
    pub iota_min: f64,
    pub theta: f64,
    pub alpha: usize,
    pub beta: f64,
    pub gamma: usize,

    pub omega_px: f64,
    pub omega_sc: f64,
    pub omega_sm: f64,
    pub omega_t: f64,
    pub omega_i: f64,

    pub lambda_p: f64,
    pub lambda_r: f64,
    pub lambda_eta: f64,
    pub lambda_min: f64,

    pub max_steps_first: usize,
    pub max_steps_frame: usize,
    pub seed: u64,
    /// Ablation variant letters, e.g. `"ce"`.
    pub ablate: String,
    /// Input images have a dark foreground.
    pub invert: bool,
    /// Accept values outside the documented ranges.
    pub allow_out_of_range: bool,

    pub loss_units: LossUnits,
    pub improvement_threshold: f64,
    pub decay: f64,
    pub patience: usize,
    pub window: usize,
    pub tolerance: f64,
    pub initial_length: f64,
    pub growth_steps: usize,
    pub initial_sigma: f64,
    pub initial_iota: f64,
    pub initial_rho: f64,
    /// Optimise every camera scalar rather than the shared shifts only.
    pub free_cameras: bool,
    pub unit_scales: UnitScales,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = CurveConstraints::default();
        let l = RenderLimits::default();
        let s = CentreShiftConfig::default();
        let w = LossWeights::default();
        let o = OptimizerConfig::default();
        let f = FrameSettings::default();
        Self {
            w: l.w,
            n: c.n,
            l_min: c.l_min,
            l_max: c.l_max,
            k_max: c.k_max,
            sigma_min: l.sigma_min,
            iota_min: l.iota_min,
            theta: f.theta,
            alpha: s.alpha,
            beta: s.beta,
            gamma: s.gamma,
            omega_px: w.px,
            omega_sc: w.sc,
            omega_sm: w.sm,
            omega_t: w.t,
            omega_i: w.i,
            lambda_p: o.lambda_p,
            lambda_r: o.lambda_r,
            lambda_eta: o.lambda_eta,
            lambda_min: o.lambda_min,
            max_steps_first: o.max_steps_first,
            max_steps_frame: o.max_steps_frame,
            seed: 0,
            ablate: String::new(),
            invert: true,
            allow_out_of_range: false,
            loss_units: f.units,
            improvement_threshold: o.improvement_threshold,
            decay: o.decay,
            patience: o.patience,
            window: o.window,
            tolerance: o.tolerance,
            initial_length: o.initial_length,
            growth_steps: o.growth_steps,
            initial_sigma: f.initial_render.sigma[0],
            initial_iota: f.initial_render.iota[0],
            initial_rho: f.initial_render.rho[0],
            free_cameras: false,
            unit_scales: o.unit_scales,
        }
    }
}

/// Documented range of one scalar.
struct Range {
    key: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn ranges(&self) -> Vec<Range> {
        let r = |key, value, lo, hi| Range { key, value, lo, hi };
        vec![
            r("w", self.w as f64, 200.0, 350.0),
            r("N", self.n as f64, 128.0, 128.0),
            r("l_min", self.l_min, 0.5, 1.0),
            r("l_max", self.l_max, 1.0, 2.0),
            r("k_max", self.k_max, 3.0, 3.0),
            r("sigma_min", self.sigma_min, 2.0, 4.0),
            r("iota_min", self.iota_min, 0.15, 0.3),
            r("theta", self.theta, 0.1, 0.1),
            r("alpha", self.alpha as f64, 3.0, 6.0),
            r("beta", self.beta, 0.05, 0.1),
            r("gamma", self.gamma as f64, 1.0, 2.0),
            r("omega_px", self.omega_px, 0.1, 0.1),
            r("omega_sc", self.omega_sc, 0.01, 0.01),
            r("omega_sm", self.omega_sm, 10.0, 100.0),
            r("omega_t", self.omega_t, 10.0, 100.0),
            r("omega_i", self.omega_i, 0.1, 1.0),
            r("lambda_p", self.lambda_p, 1e-3, 1e-3),
            r("lambda_r", self.lambda_r, 1e-4, 1e-4),
            r("lambda_eta", self.lambda_eta, 1e-5, 1e-5),
            r("lambda_min", self.lambda_min, 1e-6, 1e-6),
        ]
    }

    /// Keys whose values lie outside their documented ranges.
    pub fn out_of_range(&self) -> Vec<String> {
        self.ranges()
            .into_iter()
            .filter(|r| !(r.value >= r.lo * (1.0 - 1e-12) && r.value <= r.hi * (1.0 + 1e-12)))
            .map(|r| {
                if r.lo == r.hi {
                    format!("{} = {} (documented value {})", r.key, r.value, r.lo)
                } else {
                    format!(
                        "{} = {} (documented range {}..{})",
                        r.key, r.value, r.lo, r.hi
                    )
                }
            })
            .collect()
    }

    /// Range check (unless overridden) followed by the structural checks of
    /// every component.
    pub fn validate(&self) -> Result<()> {
        if !self.allow_out_of_range {
            let bad = self.out_of_range();
            if !bad.is_empty() {
                return Err(Error::Config(format!(
                    "values outside documented ranges (set allow_out_of_range = true to accept): {}",
                    bad.join(", ")
                )));
            }
        }
        self.toggles()?;
        self.sequence_options()?;
        Ok(())
    }

    pub fn toggles(&self) -> Result<AblationToggles> {
        AblationToggles::from_letters(&self.ablate)
    }

    pub fn frame_settings(&self) -> FrameSettings {
        FrameSettings {
            constraints: CurveConstraints {
                n: self.n,
                l_min: self.l_min,
                l_max: self.l_max,
                k_max: self.k_max,
            },
            limits: RenderLimits {
                sigma_min: self.sigma_min,
                iota_min: self.iota_min,
                w: self.w,
                ..RenderLimits::default()
            },
            weights: LossWeights {
                px: self.omega_px,
                sc: self.omega_sc,
                sm: self.omega_sm,
                t: self.omega_t,
                i: self.omega_i,
            },
            units: self.loss_units,
            theta: self.theta,
            centre_shift: CentreShiftConfig {
                alpha: self.alpha,
                beta: self.beta,
                gamma: self.gamma,
            },
            frozen: if self.free_cameras {
                FrozenMask::all_free()
            } else {
                FrozenMask::shifts_only()
            },
            initial_render: RenderParams::uniform(
                self.initial_sigma,
                self.initial_iota,
                self.initial_rho,
            ),
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            lambda_p: self.lambda_p,
            lambda_r: self.lambda_r,
            lambda_eta: self.lambda_eta,
            lambda_min: self.lambda_min,
            decay: self.decay,
            patience: self.patience,
            improvement_threshold: self.improvement_threshold,
            max_steps_first: self.max_steps_first,
            max_steps_frame: self.max_steps_frame,
            window: self.window,
            tolerance: self.tolerance,
            initial_length: self.initial_length,
            growth_steps: self.growth_steps,
            unit_scales: self.unit_scales,
            ..OptimizerConfig::default()
        }
    }

    pub fn sequence_options(&self) -> Result<SequenceOptions> {
        let settings = self.frame_settings();
        settings.validate()?;
        let optimizer = self.optimizer();
        optimizer.validate()?;
        Ok(SequenceOptions {
            settings,
            optimizer,
            toggles: self.toggles()?,
            seed: self.seed,
        })
    }
}
