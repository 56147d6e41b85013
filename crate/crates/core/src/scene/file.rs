//! JSON skinned-model format.
//!
//! ```json
//! {
//!   "name": "hand",
//!   "handedness": "right",
//!   "bones": [ { "name": "palm", "parent": null,
//!                "translation": [0, 0, 0], "rotation": [1, 0, 0, 0] }, ... ],
//!   "dofs": [ { "bone": 1, "axis": [1, 0, 0], "min": -0.26, "max": 1.57 }, ... ],
//!   "vertices": [ [x, y, z], ... ],
//!   "triangles": [ [a, b, c], ... ],
//!   "weights": [ [ [bone, weight], ... ], ... ],
//!   "markers": [ { "bone": 0, "offset": [0, 0, 0] }, ... ],
//!   "colors": [ [r, g, b], ... ]
//! }
//! ```
//!
//! Rest transforms are relative to the parent bone; rotations are unit
//! quaternions, scalar first; angles in radians, lengths in mm. `colors` is
//! optional. A rigid object has a single bone and an empty `dofs` list.

use std::path::Path;

use nalgebra::{Isometry3, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{Bone, Dof, Handedness, KinematicModel, Marker};
use crate::camera::Point3;
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoneFile {
    name: String,
    parent: Option<usize>,
    translation: [f64; 3],
    rotation: [f64; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DofFile {
    bone: usize,
    axis: [f64; 3],
    min: f64,
    max: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkerFile {
    bone: usize,
    offset: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    handedness: Handedness,
    bones: Vec<BoneFile>,
    dofs: Vec<DofFile>,
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[u32; 3]>,
    weights: Vec<Vec<(usize, f64)>>,
    markers: Vec<MarkerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    colors: Option<Vec<[u8; 3]>>,
}

pub fn model_from_json(text: &str) -> Result<KinematicModel> {
    let f: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let bones = f
        .bones
        .into_iter()
        .map(|b| {
            let [w, x, y, z] = b.rotation;
            let q = Quaternion::new(w, x, y, z);
            if (q.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "bone {} rotation is not a unit quaternion",
                    b.name
                )));
            }
            Ok(Bone {
                name: b.name,
                parent: b.parent,
                rest: Isometry3::from_parts(
                    Translation3::from(Vector3::from(b.translation)),
                    UnitQuaternion::new_unchecked(q),
                ),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dofs = f
        .dofs
        .into_iter()
        .map(|d| {
            let axis = Vector3::from(d.axis);
            if (axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Validation("dof axis is not unit length".into()));
            }
            Ok(Dof {
                bone: d.bone,
                axis: Unit::new_unchecked(axis),
                min: d.min,
                max: d.max,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let model = KinematicModel::new(
        f.name,
        f.handedness,
        bones,
        dofs,
        f.vertices.into_iter().map(Point3::from).collect(),
        f.triangles,
        f.weights,
        f.markers
            .into_iter()
            .map(|m| Marker {
                bone: m.bone,
                offset: Point3::from(m.offset),
            })
            .collect(),
    )?;
    match f.colors {
        Some(c) => model.with_colors(c),
        None => Ok(model),
    }
}

pub fn model_to_json(model: &KinematicModel) -> String {
    let f = ModelFile {
        name: model.name.clone(),
        handedness: model.handedness,
        bones: model
            .bones
            .iter()
            .map(|b| {
                let q = b.rest.rotation.quaternion();
                let t = b.rest.translation.vector;
                BoneFile {
                    name: b.name.clone(),
                    parent: b.parent,
                    translation: [t.x, t.y, t.z],
                    rotation: [q.w, q.i, q.j, q.k],
                }
            })
            .collect(),
        dofs: model
            .dofs
            .iter()
            .map(|d| DofFile {
                bone: d.bone,
                axis: [d.axis.x, d.axis.y, d.axis.z],
                min: d.min,
                max: d.max,
            })
            .collect(),
        vertices: model.vertices.iter().map(|p| [p.x, p.y, p.z]).collect(),
        triangles: model.triangles.to_vec(),
        weights: model.weights.clone(),
        markers: model
            .markers
            .iter()
            .map(|m| MarkerFile {
                bone: m.bone,
                offset: [m.offset.x, m.offset.y, m.offset.z],
            })
            .collect(),
        colors: model.colors.clone(),
    };
    serde_json::to_string(&f).expect("model serializes")
}

pub fn load_model(path: impl AsRef<Path>) -> Result<KinematicModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

pub fn save_model(model: &KinematicModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}
