//! C interface to the midline library.
//!
//! Configurations, calibrations and record sets are opaque handles created
//! by `*_load`/`*_default` and released with the matching `*_free`. Every
//! fallible call returns a [`MidlineStatus`]; the message of the last error
//! on the calling thread is available through [`midline_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use midline::camera::{load_calibration, project_curve, CameraTriplet};
use midline::config::RunConfig;
use midline::curve::Vec3;
use midline::pipeline::{read_records, reconstruct, FrameRecord, RunPaths};
use midline::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MidlineStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    Numerical = 5,
    /// A buffer supplied by the caller is too small.
    BufferTooSmall = 6,
    Panic = 7,
}

/// Resolved run configuration.
pub struct MidlineConfig(RunConfig);

/// Camera triplet read from a calibration file.
pub struct MidlineCameras(CameraTriplet);

/// Frame records read from a records file.
pub struct MidlineRecords(Vec<FrameRecord>);

/// Outcome of a reconstruction run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MidlineRunSummary {
    pub frames: usize,
    pub converged: usize,
    pub steps: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> MidlineStatus {
    match e {
        Error::Io { .. } | Error::Image { .. } | Error::MissingImage { .. } => MidlineStatus::Io,
        Error::Config(_) | Error::Json(_) => MidlineStatus::Config,
        Error::ProjectionSingularity { .. }
        | Error::NonFinite { .. }
        | Error::Diverged(_)
        | Error::CoincidentVertices(..) => MidlineStatus::Numerical,
        _ => MidlineStatus::InvalidArgument,
    }
}

struct Failure(MidlineStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MidlineStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic for `midline_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MidlineStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MidlineStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            MidlineStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            MidlineStatus::InvalidArgument,
            format!("{what} is not UTF-8"),
        )
    })?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn publish<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    // SAFETY: checked non-null; the caller provides writable storage.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating to `cap` bytes. Returns the buffer
/// size needed for the whole message.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn midline_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Creates a configuration holding the documented defaults.
///
/// # Safety
/// `out` must point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn midline_config_default(out: *mut *mut MidlineConfig) -> MidlineStatus {
    guard(|| publish(out, MidlineConfig(RunConfig::default())))
}

/// Reads and validates a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must point to writable
/// storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn midline_config_load(
    path: *const c_char,
    out: *mut *mut MidlineConfig,
) -> MidlineStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        publish(out, MidlineConfig(RunConfig::load(&path)?))
    })
}

/// Sets the random seed of a configuration.
///
/// # Safety
/// `cfg` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn midline_config_set_seed(
    cfg: *mut MidlineConfig,
    seed: u64,
) -> MidlineStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        cfg.0.seed = seed;
        Ok(())
    })
}

/// Replaces the ablation letters of a configuration, e.g. `"ce"`.
///
/// # Safety
/// `cfg` must be a live handle; `letters` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn midline_config_set_ablate(
    cfg: *mut MidlineConfig,
    letters: *const c_char,
) -> MidlineStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        let letters = path_arg(letters, "letters")?.to_string_lossy().into_owned();
        let mut next = cfg.0.clone();
        next.ablate = letters;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn midline_config_free(cfg: *mut MidlineConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Reconstructs every frame in `frames_dir`, writing records, the summary
/// and optional overlays to `out_dir`. Returns `Ok` even when frames fail
/// to converge; compare `summary.converged` with `summary.frames`.
///
/// # Safety
/// `cfg` must be a live handle; the paths NUL-terminated strings;
/// `summary` null or writable.
#[no_mangle]
pub unsafe extern "C" fn midline_reconstruct(
    cfg: *const MidlineConfig,
    frames_dir: *const c_char,
    calib_path: *const c_char,
    out_dir: *const c_char,
    overlays: bool,
    summary: *mut MidlineRunSummary,
) -> MidlineStatus {
    guard(|| {
        let cfg = handle(cfg, "config")?;
        let paths = RunPaths {
            frames: path_arg(frames_dir, "frames_dir")?,
            calib: path_arg(calib_path, "calib_path")?,
            out: path_arg(out_dir, "out_dir")?,
            overlays,
        };
        let s = reconstruct(&cfg.0, &paths, &mut |_| {})?;
        if let Some(out) = summary.as_mut() {
            *out = MidlineRunSummary {
                frames: s.frames,
                converged: s.converged,
                steps: s.steps,
            };
        }
        Ok(())
    })
}

/// Reads a calibration file (JSON or TOML).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn midline_cameras_load(
    path: *const c_char,
    out: *mut *mut MidlineCameras,
) -> MidlineStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        publish(out, MidlineCameras(load_calibration(&path)?))
    })
}

/// Projects `n` points (`xyz` triples) into the three views. `out` receives
/// `3 * n` pixel pairs, view-major.
///
/// # Safety
/// `points` must hold `3 * n` doubles and `out` have room for `6 * n`.
#[no_mangle]
pub unsafe extern "C" fn midline_project(
    cams: *const MidlineCameras,
    points: *const f64,
    n: usize,
    out: *mut f64,
) -> MidlineStatus {
    guard(|| {
        let cams = handle(cams, "cameras")?;
        if n == 0 {
            return Ok(());
        }
        if points.is_null() || out.is_null() {
            return Err(null("point buffer"));
        }
        let xyz = std::slice::from_raw_parts(points, 3 * n);
        let p: Vec<Vec3> = xyz
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect();
        let q = project_curve(&cams.0, &p)?;
        let dst = std::slice::from_raw_parts_mut(out, 6 * n);
        for (c, view) in q.iter().enumerate() {
            for (i, uv) in view.iter().enumerate() {
                dst[2 * (c * n + i)] = uv[0];
                dst[2 * (c * n + i) + 1] = uv[1];
            }
        }
        Ok(())
    })
}

/// # Safety
/// `cams` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn midline_cameras_free(cams: *mut MidlineCameras) {
    if !cams.is_null() {
        drop(Box::from_raw(cams));
    }
}

/// Reads a JSON-Lines records file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn midline_records_load(
    path: *const c_char,
    out: *mut *mut MidlineRecords,
) -> MidlineStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        publish(out, MidlineRecords(read_records(&path)?))
    })
}

/// Number of records, or 0 for a null handle.
///
/// # Safety
/// `rec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn midline_records_len(rec: *const MidlineRecords) -> usize {
    rec.as_ref().map_or(0, |r| r.0.len())
}

/// Copies the midline of record `index` into `points` as `xyz` triples.
/// `vertices` receives the vertex count; when `capacity` (in vertices) is
/// too small nothing is copied and `BufferTooSmall` is returned.
///
/// # Safety
/// `rec` must be a live handle; `points` must have room for `3 * capacity`
/// doubles; `vertices`, `frame` and `converged` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn midline_records_get(
    rec: *const MidlineRecords,
    index: usize,
    points: *mut f64,
    capacity: usize,
    vertices: *mut usize,
    frame: *mut usize,
    converged: *mut bool,
) -> MidlineStatus {
    guard(|| {
        let rec = handle(rec, "records")?;
        let r = rec.0.get(index).ok_or_else(|| {
            Failure(
                MidlineStatus::InvalidArgument,
                format!("record {index} out of range ({} records)", rec.0.len()),
            )
        })?;
        if let Some(v) = vertices.as_mut() {
            *v = r.p.len();
        }
        if let Some(f) = frame.as_mut() {
            *f = r.frame;
        }
        if let Some(c) = converged.as_mut() {
            *c = r.converged;
        }
        if capacity < r.p.len() {
            return Err(Failure(
                MidlineStatus::BufferTooSmall,
                format!("record has {} vertices, buffer holds {capacity}", r.p.len()),
            ));
        }
        if points.is_null() {
            return Err(null("points"));
        }
        let dst = std::slice::from_raw_parts_mut(points, 3 * r.p.len());
        for (d, p) in dst.chunks_exact_mut(3).zip(&r.p) {
            d.copy_from_slice(p);
        }
        Ok(())
    })
}

/// # Safety
/// `rec` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn midline_records_free(rec: *mut MidlineRecords) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}
