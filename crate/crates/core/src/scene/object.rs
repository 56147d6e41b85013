//! Rigid object models: a single bone, no articulation, three anchors.

use nalgebra::{Isometry3, Vector3};

use super::{Bone, Handedness, KinematicModel, Marker};
use crate::camera::Point3;

/// A `width x height x depth` box centred on its origin, with faces split
/// into cells no larger than `spacing` mm. Its three anchor markers are
/// non-collinear corners.
pub fn box_model(width: f64, height: f64, depth: f64, spacing: f64) -> KinematicModel {
    let half = Vector3::new(width, height, depth) / 2.0;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    // (normal axis, sign); the two in-plane axes are chosen so that
    // u x v points along the outward normal
    for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)] {
        let (ua, va) = match axis {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        let nu = ((2.0 * half[ua] / spacing).ceil() as usize).max(1);
        let nv = ((2.0 * half[va] / spacing).ceil() as usize).max(1);
        let start = vertices.len() as u32;
        for j in 0..=nv {
            for i in 0..=nu {
                let mut p = Vector3::zeros();
                p[axis] = sign * half[axis];
                p[ua] = -half[ua] + 2.0 * half[ua] * i as f64 / nu as f64;
                p[va] = -half[va] + 2.0 * half[va] * j as f64 / nv as f64;
                vertices.push(Point3::from(p));
            }
        }
        let row = nu as u32 + 1;
        for j in 0..nv as u32 {
            for i in 0..nu as u32 {
                let a = start + j * row + i;
                let (b, c, d) = (a + 1, a + row + 1, a + row);
                if sign > 0.0 {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, c, b]);
                    triangles.push([a, d, c]);
                }
            }
        }
    }
    let weights = vec![vec![(0, 1.0)]; vertices.len()];
    let markers = [
        Point3::new(-half.x, -half.y, -half.z),
        Point3::new(half.x, -half.y, -half.z),
        Point3::new(-half.x, half.y, half.z),
    ]
    .into_iter()
    .map(|offset| Marker { bone: 0, offset })
    .collect();
    KinematicModel::new(
        "box",
        Handedness::None,
        vec![Bone {
            name: "body".into(),
            parent: None,
            rest: Isometry3::identity(),
        }],
        vec![],
        vertices,
        triangles,
        weights,
        markers,
    )
    .expect("box model is valid")
}
