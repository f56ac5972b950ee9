//! Reconstruction runs over frame directories: per-frame records, run
//! summaries, overlay panels and evaluation against synthetic ground truth.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::camera::{
    load_calibration, project_curve, CalibrationFile, CameraTriplet, TripletShifts,
};
use crate::config::RunConfig;
use crate::curve::Vec3;
use crate::error::{Error, Result};
use crate::evaluate::{distance_profile, evaluate_frame, profile_samples, EvaluationReport};
use crate::io::FrameDirectory;
use crate::losses::LossBreakdown;
use crate::optimizer::{
    crop_triplet, process_sequence, AblationToggles, FrameSolution, FrameSource, ProgressEvent,
};
use crate::raster::ImageTriplet;
use crate::render::{render, RenderLimits, RenderParams};
use crate::synth::TruthRecord;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

/// Solution of one frame as written to the records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub k: Vec<[f64; 2]>,
    pub length: f64,
    pub p: Vec<[f64; 3]>,
    pub shifts: TripletShifts,
    /// Full camera triplet, present when scalars beyond the shifts were optimised.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cameras: Option<CalibrationFile>,
    pub sigma: [f64; 3],
    pub iota: [f64; 3],
    pub rho: [f64; 3],
    pub losses: LossBreakdown,
    pub s_hat: Vec<f64>,
    pub converged: bool,
    pub steps: usize,
    /// Ablation variant letters in effect.
    pub ablate: String,
}

impl FrameRecord {
    pub fn from_solution(sol: &FrameSolution, toggles: &AblationToggles) -> Self {
        let full = sol.cameras.frozen.0[..sol.cameras.frozen.0.len() - 3]
            .iter()
            .any(|f| !f);
        Self {
            frame: sol.frame,
            k: sol.state.k.rows().to_vec(),
            length: sol.state.length,
            p: sol.state.p.iter().map(|v| [v.x, v.y, v.z]).collect(),
            shifts: sol.cameras.shifts,
            cameras: full.then(|| CalibrationFile::from(&sol.cameras)),
            sigma: sol.render.sigma,
            iota: sol.render.iota,
            rho: sol.render.rho,
            losses: sol.losses,
            s_hat: sol.scores.s_hat.clone(),
            converged: sol.converged,
            steps: sol.steps,
            ablate: toggles.letters(),
        }
    }

    pub fn points(&self) -> Vec<Vec3> {
        self.p.iter().map(|v| Vec3::new(v[0], v[1], v[2])).collect()
    }

    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            sigma: self.sigma,
            iota: self.iota,
            rho: self.rho,
        }
    }

    /// Cameras of this frame: the stored triplet or `base` with the stored shifts.
    pub fn cameras(&self, base: &CameraTriplet) -> Result<CameraTriplet> {
        let mut out = match &self.cameras {
            Some(c) => c.clone().into_triplet()?,
            None => *base,
        };
        out.shifts = self.shifts;
        Ok(out)
    }
}

pub fn read_records(path: &Path) -> Result<Vec<FrameRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Mean, minimum and maximum of one loss term over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count().max(1) as f64;
        Self {
            mean: values.clone().sum::<f64>() / n,
            min: values.clone().fold(f64::INFINITY, f64::min),
            max: values.fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub px: Stats,
    pub sc: Stats,
    pub sm: Stats,
    pub t: Stats,
    pub i: Stats,
    pub total: Stats,
}

/// Run-level document written next to the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub frames: usize,
    pub converged: usize,
    /// Frames that stopped at the step budget or on a non-finite value.
    pub flagged: Vec<usize>,
    pub steps: usize,
    pub losses: LossStats,
}

impl RunSummary {
    pub fn new(config: &RunConfig, records: &[FrameRecord]) -> Self {
        let term =
            |f: fn(&LossBreakdown) -> f64| Stats::of(records.iter().map(move |r| f(&r.losses)));
        Self {
            config: config.clone(),
            frames: records.len(),
            converged: records.iter().filter(|r| r.converged).count(),
            flagged: records
                .iter()
                .filter(|r| !r.converged)
                .map(|r| r.frame)
                .collect(),
            steps: records.iter().map(|r| r.steps).sum(),
            losses: LossStats {
                px: term(|l| l.px),
                sc: term(|l| l.sc),
                sm: term(|l| l.sm),
                t: term(|l| l.t),
                i: term(|l| l.i),
                total: term(|l| l.total),
            },
        }
    }

    pub fn complete(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Frames read from a directory in index order.
pub struct DirectorySource {
    pub dir: FrameDirectory,
    pub w: usize,
}

impl FrameSource for DirectorySource {
    fn len(&self) -> usize {
        self.dir.len()
    }

    fn load(&self, index: usize) -> Result<ImageTriplet> {
        self.dir.load(self.dir.frames[index], self.w)
    }

    fn frame_number(&self, index: usize) -> usize {
        self.dir.frames[index]
    }
}

fn draw_polyline(img: &mut RgbImage, x0: u32, pts: &[[f64; 2]], w: usize, colour: Rgb<u8>) {
    let mut put = |x: f64, y: f64| {
        let (i, j) = (x.round(), y.round());
        if i >= 0.0 && j >= 0.0 && (i as usize) < w && (j as usize) < w {
            img.put_pixel(x0 + i as u32, j as u32, colour);
        }
    };
    for s in pts.windows(2) {
        let (a, b) = (s[0], s[1]);
        let steps = ((b[0] - a[0]).abs().max((b[1] - a[1]).abs()).ceil() as usize).max(1);
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            put(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]));
        }
    }
}

/// Three views side by side: the target in red and blue, the render in
/// green (agreement reads grey) and the projected midline in yellow.
pub fn overlay_panel(
    crops: &ImageTriplet,
    cameras: &CameraTriplet,
    points: &[Vec3],
    params: &RenderParams,
    limits: &RenderLimits,
    crop_offset: &[[f64; 2]; 3],
) -> Result<RgbImage> {
    let w = limits.w;
    let mut q = project_curve(cameras, points)?;
    for (c, view) in q.iter_mut().enumerate() {
        for v in view.iter_mut() {
            v[0] -= crop_offset[c][0];
            v[1] -= crop_offset[c][1];
        }
    }
    let rendered = render(&q, params, limits)?;
    let byte = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut img = RgbImage::new(3 * w as u32, w as u32);
    for c in 0..3 {
        let x0 = (c * w) as u32;
        for j in 0..w {
            for i in 0..w {
                let raw = byte(crops[c].get(i, j));
                let ren = byte(rendered.images[c].get(i, j));
                img.put_pixel(x0 + i as u32, j as u32, Rgb([raw, ren, raw]));
            }
        }
        draw_polyline(&mut img, x0, &q[c], w, Rgb([255, 255, 0]));
    }
    Ok(img)
}

pub fn overlay_file_name(frame: usize) -> String {
    format!("overlay_{frame:06}.png")
}

/// Paths and flags of one reconstruction run.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub frames: PathBuf,
    pub calib: PathBuf,
    pub out: PathBuf,
    pub overlays: bool,
}

/// Reconstructs every frame in `paths.frames`, appending one record per
/// frame to the records file and writing the summary at the end.
pub fn reconstruct(
    cfg: &RunConfig,
    paths: &RunPaths,
    sink: &mut dyn FnMut(&ProgressEvent),
) -> Result<RunSummary> {
    cfg.validate()?;
    let opts = cfg.sequence_options()?;
    let mut cameras = load_calibration(&paths.calib)?;
    cameras.frozen = opts.settings.frozen;
    let source = DirectorySource {
        dir: FrameDirectory::open(&paths.frames, cfg.invert)?,
        w: cfg.w,
    };
    std::fs::create_dir_all(&paths.out).map_err(|e| Error::io(&paths.out, e))?;
    let records_path = paths.out.join(RECORDS_FILE);
    let file = File::create(&records_path).map_err(|e| Error::io(&records_path, e))?;
    let mut writer = BufWriter::new(file);
    let mut records = Vec::with_capacity(source.len());
    let mut on_frame = |sol: &FrameSolution| -> Result<()> {
        let record = FrameRecord::from_solution(sol, &opts.toggles);
        serde_json::to_writer(&mut writer, &record)?;
        writer
            .write_all(b"\n")
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io(&records_path, e))?;
        if paths.overlays {
            let full = source.dir.load(sol.frame, cfg.w)?;
            let crops = crop_triplet(&full, &sol.crop_offset, cfg.w);
            let panel = overlay_panel(
                &crops,
                &sol.cameras,
                &sol.state.p,
                &sol.render,
                &opts.settings.limits,
                &sol.crop_offset,
            )?;
            let path = paths.out.join(overlay_file_name(sol.frame));
            panel
                .save(&path)
                .map_err(|source| Error::Image { path, source })?;
        }
        if sol.converged {
            log::info!(
                "frame {}: converged after {} steps, loss {:.6}",
                sol.frame,
                sol.steps,
                sol.losses.total
            );
        } else {
            log::warn!(
                "frame {}: not converged after {} steps, loss {:.6}",
                sol.frame,
                sol.steps,
                sol.losses.total
            );
        }
        records.push(record);
        Ok(())
    };
    process_sequence(&source, &cameras, &opts, sink, &mut on_frame)?;
    let summary = RunSummary::new(cfg, &records);
    let path = paths.out.join(SUMMARY_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&summary)?)
        .map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

/// Compares records with ground truth frame by frame; `base` supplies the
/// camera scalars the records do not store.
pub fn evaluate_records(
    records: &[FrameRecord],
    truth: &[TruthRecord],
    base: &CameraTriplet,
    bins: usize,
) -> Result<EvaluationReport> {
    let mut frames = Vec::with_capacity(records.len());
    let mut samples = Vec::new();
    for r in records {
        let t = truth
            .iter()
            .find(|t| t.frame == r.frame)
            .ok_or_else(|| Error::invalid(format!("no ground truth for frame {}", r.frame)))?;
        let cams = r.cameras(base)?;
        let true_cams = t.true_cameras.clone().into_triplet()?;
        let points = r.points();
        frames.push(evaluate_frame(
            r.frame, &points, &cams, &t.curve.p, &true_cams,
        )?);
        samples.extend(profile_samples(&points, &cams, &t.curve.p, &true_cams)?);
    }
    EvaluationReport::new(frames, distance_profile(&samples, bins))
}
