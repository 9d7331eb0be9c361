//! Desk-scale orientation-adversary training against banding in accelerated
//! Cartesian MRI: synthetic multi-coil data, a cascaded U-Net predictor, a
//! ResNet orientation adversary with a gradient penalty, a dithering
//! baseline, and banding metrics.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod dither;
mod error;
pub mod image;
pub mod io;
pub mod kspace;
pub mod metrics;
pub mod models;
pub mod parallel;
pub mod pgm;
pub mod training;

pub use config::{PenaltyTarget, TrainConfig};
pub use error::{Error, Result};
pub use image::Image;
