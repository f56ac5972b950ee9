//! Image ingestion and frame discovery.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::raster::{Image, ImageTriplet};

/// File name of camera `c`'s image for frame `t`.
pub fn frame_file_name(t: usize, c: usize) -> String {
    format!("frame_{t:06}_cam{c}.png")
}

/// Reads an 8- or 16-bit grayscale PNG normalised to [0, 1]; colour input is
/// converted to luma first.
pub fn read_gray(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let data = match img {
        image::DynamicImage::ImageLuma8(b) => {
            b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()
        }
        image::DynamicImage::ImageLuma16(b) => b
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => other
            .into_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
    };
    Ok(Image {
        width,
        height,
        data,
    })
}

fn quantise(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Writes a 16-bit grayscale PNG, optionally storing `1 - v`.
pub fn write_gray16(path: &Path, img: &Image, invert: bool) -> Result<()> {
    let raw: Vec<u16> = img
        .data
        .iter()
        .map(|&v| quantise(if invert { 1.0 - v } else { v }, 65535.0) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, raw)
            .ok_or_else(|| Error::invalid("image buffer size mismatch"))?;
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes an 8-bit grayscale PNG, optionally storing `1 - v`.
pub fn write_gray8(path: &Path, img: &Image, invert: bool) -> Result<()> {
    let raw: Vec<u8> = img
        .data
        .iter()
        .map(|&v| quantise(if invert { 1.0 - v } else { v }, 255.0) as u8)
        .collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, raw)
            .ok_or_else(|| Error::invalid("image buffer size mismatch"))?;
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Directory of `frame_{t:06}_cam{c}.png` triplets.
#[derive(Debug, Clone)]
pub struct FrameDirectory {
    pub dir: PathBuf,
    pub frames: Vec<usize>,
    /// Store `1 - v` on load (dark foreground input).
    pub invert: bool,
}

impl FrameDirectory {
    /// Lists the frame indices present in `dir` (any camera), sorted.
    pub fn open(dir: &Path, invert: bool) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut frames = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if let Some(t) = parse_frame_name(name) {
                frames.push(t);
            }
        }
        frames.sort_unstable();
        frames.dedup();
        if frames.is_empty() {
            return Err(Error::invalid(format!(
                "no frame images found in {}",
                dir.display()
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            frames,
            invert,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Loads the three images of frame `t`, checking they share a size of at
    /// least `w` pixels.
    pub fn load(&self, t: usize, w: usize) -> Result<ImageTriplet> {
        let mut out = Vec::with_capacity(3);
        for c in 0..3 {
            let path = self.dir.join(frame_file_name(t, c));
            if !path.exists() {
                return Err(Error::MissingImage {
                    frame: t,
                    camera: c,
                    path,
                });
            }
            let mut img = read_gray(&path)?;
            if img.width < w || img.height < w {
                return Err(Error::ImageTooSmall {
                    path,
                    width: img.width as u32,
                    height: img.height as u32,
                    w,
                });
            }
            if self.invert {
                for v in &mut img.data {
                    *v = 1.0 - *v;
                }
            }
            out.push(img);
        }
        let [a, b, c]: [Image; 3] = out.try_into().expect("three images");
        if !(a.same_shape(&b) && a.same_shape(&c)) {
            return Err(Error::invalid(format!(
                "frame {t}: camera images differ in size"
            )));
        }
        Ok([a, b, c])
    }
}

fn parse_frame_name(name: &str) -> Option<usize> {
    let rest = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    let (t, cam) = rest.split_once("_cam")?;
    if t.len() != 6 || cam.len() != 1 || !cam.chars().all(|c| ('0'..='2').contains(&c)) {
        return None;
    }
    t.parse().ok()
}
