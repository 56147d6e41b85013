use image::RgbImage;

use super::{rasterize, Shading};
use crate::camera::{PinholeCamera, Pixel, StereoRig};
use crate::scene::{PoseVector, SceneState};
use crate::{Error, Result};

/// A rendered stereo pair with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticFrame {
    pub left: RgbImage,
    pub right: RgbImage,
    pub truth: PoseVector,
    /// Marker projections per view, entry-major (`None` when behind).
    pub left_joints: Vec<Option<Pixel>>,
    pub right_joints: Vec<Option<Pixel>>,
}

/// Composites the textured scene over a background pair, unshaded.
/// `textures` holds one per-vertex colour list per scene entry.
pub fn synthesize_frame(
    state: &SceneState,
    rig: &StereoRig,
    background: (&RgbImage, &RgbImage),
    textures: &[&[[u8; 3]]],
) -> Result<SyntheticFrame> {
    let expected = rig.resolution();
    for img in [background.0, background.1] {
        if img.dimensions() != expected {
            return Err(Error::ResolutionMismatch {
                expected,
                got: img.dimensions(),
            });
        }
    }
    if textures.len() != state.entries.len() {
        return Err(Error::DimensionMismatch {
            expected: state.entries.len(),
            got: textures.len(),
        });
    }
    for (t, e) in textures.iter().zip(&state.entries) {
        if t.len() != e.model.vertices.len() {
            return Err(Error::DimensionMismatch {
                expected: e.model.vertices.len(),
                got: t.len(),
            });
        }
    }
    let meshes = state.posed_meshes();
    let compose = |camera: &PinholeCamera, bg: &RgbImage| {
        let buffers = rasterize(&meshes, camera, Shading::Vertex(textures));
        let colors = buffers.color.as_ref().expect("vertex shading produces colour");
        let mut out = bg.clone();
        for (i, id) in buffers.point_id.iter().enumerate() {
            if !id.is_background() {
                let (x, y) = ((i % buffers.width) as u32, (i / buffers.width) as u32);
                out.put_pixel(x, y, image::Rgb(colors[i]));
            }
        }
        out
    };
    let joints = |camera: &PinholeCamera| {
        state
            .entries
            .iter()
            .flat_map(|e| e.model.joint_centers(&e.pose))
            .map(|p| camera.project(&p))
            .collect()
    };
    Ok(SyntheticFrame {
        left: compose(&rig.left, background.0),
        right: compose(&rig.right, background.1),
        truth: state.flatten(),
        left_joints: joints(&rig.left),
        right_joints: joints(&rig.right),
    })
}
