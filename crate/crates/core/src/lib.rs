pub mod camera;
pub mod config;
pub mod curve;
pub mod diffengine;
pub mod error;
pub mod evaluate;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod objective;
pub mod optimizer;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
