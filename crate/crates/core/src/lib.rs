//! Generative 3D tracking of articulated hands and rigid objects from a
//! calibrated RGB stereo pair.
//!
//! A scene hypothesis (hand and object poses) is rendered into both views and
//! scored by how well the colors at the two projections of every mutually
//! visible surface point agree, weighted by a per-pixel distinctiveness map.
//! A constriction-factor particle swarm maximizes that score frame by frame,
//! warm-started from the previous solution.
//!
//! Module map:
//!
//! - [`camera`]: pinhole stereo geometry and calibration files.
//! - [`scene`]: skinned kinematic models, poses and the flat hypothesis vector.
//! - [`render`]: deterministic software rasterizer and synthetic frames.
//! - [`distinct`]: structure-tensor distinctiveness maps.
//! - [`objective`]: stereo color-consistency score with occlusion exclusion.
//! - [`pso`]: particle swarm optimizer.
//! - [`tracker`]: the per-frame tracking loop.
//! - [`eval`]: metrics, dataset generation and parameter sweeps.

pub mod camera;
pub mod distinct;
mod error;
pub mod eval;
pub mod imageio;
pub mod objective;
pub mod pso;
pub mod render;
pub mod scene;
pub mod tracker;

pub use error::{Error, Result};
