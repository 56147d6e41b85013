//! Parametric scene models: skinned kinematic trees, their poses, and the
//! flat hypothesis vector searched by the optimizer.
//!
//! A model's pose is `[x, y, z, qw, qx, qy, qz, angle_0, .., angle_k]`: the
//! root position (mm), the root orientation and one angle (radians) per
//! articulated degree of freedom. A hand has 20 articulation angles (27
//! parameters), a rigid object none (7 parameters). A scene concatenates the
//! poses of its models.

mod file;
pub mod hand;
pub mod object;

use std::sync::Arc;

use nalgebra::{Isometry3, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};

use crate::camera::Point3;
use crate::{Error, Result};

pub use file::{load_model, model_from_json, model_to_json, save_model};

/// Number of pose parameters taken by the root position and orientation.
pub const ROOT_DIMS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Right,
    Left,
    None,
}

impl Handedness {
    fn mirrored(self) -> Self {
        match self {
            Handedness::Right => Handedness::Left,
            Handedness::Left => Handedness::Right,
            Handedness::None => Handedness::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bone {
    pub name: String,
    /// Parent bone; always a smaller index. `None` only for bone 0.
    pub parent: Option<usize>,
    /// Rest transform relative to the parent (the model frame for the root).
    pub rest: Isometry3<f64>,
}

/// One articulated rotational degree of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct Dof {
    pub bone: usize,
    /// Rotation axis in the bone's local frame.
    pub axis: Unit<Vector3<f64>>,
    pub min: f64,
    pub max: f64,
}

/// A point rigidly attached to a bone, used for error metrics: joint
/// centres on hands, anchor points on rigid objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub bone: usize,
    pub offset: Point3,
}

/// A skinned mesh driven by a kinematic tree.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicModel {
    pub name: String,
    pub handedness: Handedness,
    pub bones: Vec<Bone>,
    pub dofs: Vec<Dof>,
    /// Rest-pose vertex positions in the model frame (mm).
    pub vertices: Vec<Point3>,
    pub triangles: Arc<Vec<[u32; 3]>>,
    /// Per-vertex `(bone, weight)` lists.
    pub weights: Vec<Vec<(usize, f64)>>,
    pub markers: Vec<Marker>,
    /// Optional per-vertex texture.
    pub colors: Option<Vec<[u8; 3]>>,
    bone_dofs: Vec<Vec<usize>>,
    inverse_bind: Vec<Isometry3<f64>>,
}

impl KinematicModel {
    /// Assembles and validates a model.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        handedness: Handedness,
        bones: Vec<Bone>,
        dofs: Vec<Dof>,
        vertices: Vec<Point3>,
        triangles: Vec<[u32; 3]>,
        weights: Vec<Vec<(usize, f64)>>,
        markers: Vec<Marker>,
    ) -> Result<Self> {
        let mut model = KinematicModel {
            name: name.into(),
            handedness,
            bones,
            dofs,
            vertices,
            triangles: Arc::new(triangles),
            weights,
            markers,
            colors: None,
            bone_dofs: Vec::new(),
            inverse_bind: Vec::new(),
        };
        model.validate()?;
        model.rebuild_cache();
        Ok(model)
    }

    pub fn with_colors(mut self, colors: Vec<[u8; 3]>) -> Result<Self> {
        if colors.len() != self.vertices.len() {
            return Err(Error::Validation(format!(
                "{} colors for {} vertices",
                colors.len(),
                self.vertices.len()
            )));
        }
        self.colors = Some(colors);
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.bones.is_empty() {
            return bad("model has no bones".into());
        }
        for (i, bone) in self.bones.iter().enumerate() {
            match (i, bone.parent) {
                (0, None) => {}
                (0, Some(_)) => return bad("bone 0 must be the root".into()),
                (_, None) => return bad(format!("bone {i} has no parent; only one root allowed")),
                (_, Some(p)) if p >= i => {
                    return bad(format!("bone {i} has parent {p}; parents must precede children"))
                }
                _ => {}
            }
        }
        for (k, dof) in self.dofs.iter().enumerate() {
            if dof.bone >= self.bones.len() {
                return bad(format!("dof {k} references missing bone {}", dof.bone));
            }
            if !(dof.min.is_finite() && dof.max.is_finite() && dof.min <= dof.max) {
                return bad(format!("dof {k} has invalid bounds [{}, {}]", dof.min, dof.max));
            }
        }
        if self.weights.len() != self.vertices.len() {
            return bad(format!(
                "{} weight lists for {} vertices",
                self.weights.len(),
                self.vertices.len()
            ));
        }
        for (v, w) in self.weights.iter().enumerate() {
            if w.is_empty() || w.iter().any(|&(b, _)| b >= self.bones.len()) {
                return bad(format!("vertex {v} has invalid skin weights"));
            }
            let sum: f64 = w.iter().map(|&(_, x)| x).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return bad(format!("vertex {v} skin weights sum to {sum}"));
            }
        }
        let n = self.vertices.len() as u32;
        if self.triangles.iter().flatten().any(|&i| i >= n) {
            return bad("triangle index out of range".into());
        }
        if self.markers.iter().any(|m| m.bone >= self.bones.len()) {
            return bad("marker references missing bone".into());
        }
        if let Some(c) = &self.colors {
            if c.len() != self.vertices.len() {
                return bad("color count does not match vertex count".into());
            }
        }
        Ok(())
    }

    fn rebuild_cache(&mut self) {
        self.bone_dofs = vec![Vec::new(); self.bones.len()];
        for (k, dof) in self.dofs.iter().enumerate() {
            self.bone_dofs[dof.bone].push(k);
        }
        let rest = self.rest_pose();
        self.inverse_bind = self
            .forward_kinematics(&rest)
            .into_iter()
            .map(|t| t.inverse())
            .collect();
    }

    /// Number of pose parameters.
    pub fn dims(&self) -> usize {
        ROOT_DIMS + self.dofs.len()
    }

    /// Identity root transform with every articulation angle at zero.
    pub fn rest_pose(&self) -> Pose {
        Pose::identity(self.dofs.len())
    }

    /// Per-bone world transforms. The root is placed at the pose's position
    /// and orientation; every child composes parent, rest and joint rotation.
    pub fn forward_kinematics(&self, pose: &Pose) -> Vec<Isometry3<f64>> {
        let root = Isometry3::from_parts(Translation3::from(pose.position), pose.orientation);
        let mut world: Vec<Isometry3<f64>> = Vec::with_capacity(self.bones.len());
        for (i, bone) in self.bones.iter().enumerate() {
            let parent = match bone.parent {
                Some(p) => world[p],
                None => root,
            };
            let mut local = bone.rest;
            for &k in &self.bone_dofs[i] {
                let dof = &self.dofs[k];
                local.rotation *= UnitQuaternion::from_axis_angle(&dof.axis, pose.angles[k]);
            }
            world.push(parent * local);
        }
        world
    }

    /// Linear blend skinning of the rest mesh by bone world transforms.
    pub fn skin(&self, transforms: &[Isometry3<f64>]) -> PosedMesh {
        let skinning: Vec<Isometry3<f64>> = transforms
            .iter()
            .zip(&self.inverse_bind)
            .map(|(t, inv)| t * inv)
            .collect();
        let vertices = self
            .vertices
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| match w.as_slice() {
                [(b, _)] => skinning[*b] * v,
                _ => {
                    let mut acc = Vector3::zeros();
                    for &(b, weight) in w {
                        acc += (skinning[b] * v).coords * weight;
                    }
                    Point3::from(acc)
                }
            })
            .collect();
        PosedMesh {
            vertices,
            triangles: Arc::clone(&self.triangles),
        }
    }

    pub fn posed_mesh(&self, pose: &Pose) -> PosedMesh {
        self.skin(&self.forward_kinematics(pose))
    }

    /// World positions of the model's markers, in marker order.
    pub fn joint_centers(&self, pose: &Pose) -> Vec<Point3> {
        let world = self.forward_kinematics(pose);
        self.markers.iter().map(|m| world[m.bone] * m.offset).collect()
    }

    /// Reflection of the model through the x = 0 plane. Triangle winding is
    /// reversed so outward normals stay outward, and rotation axes are
    /// reflected as axial vectors so that equal angles give mirrored poses.
    pub fn mirror(&self) -> KinematicModel {
        let reflect = |p: &Point3| Point3::new(-p.x, p.y, p.z);
        let bones = self
            .bones
            .iter()
            .map(|b| Bone {
                name: b.name.clone(),
                parent: b.parent,
                rest: mirror_isometry(&b.rest),
            })
            .collect();
        let dofs = self
            .dofs
            .iter()
            .map(|d| Dof {
                bone: d.bone,
                axis: Unit::new_unchecked(Vector3::new(d.axis.x, -d.axis.y, -d.axis.z)),
                min: d.min,
                max: d.max,
            })
            .collect();
        let mut model = KinematicModel {
            name: self.name.clone(),
            handedness: self.handedness.mirrored(),
            bones,
            dofs,
            vertices: self.vertices.iter().map(reflect).collect(),
            triangles: Arc::new(self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect()),
            weights: self.weights.clone(),
            markers: self
                .markers
                .iter()
                .map(|m| Marker {
                    bone: m.bone,
                    offset: reflect(&m.offset),
                })
                .collect(),
            colors: self.colors.clone(),
            bone_dofs: Vec::new(),
            inverse_bind: Vec::new(),
        };
        model.rebuild_cache();
        model
    }

    /// Lower and upper bounds of every pose parameter. Positions are
    /// unbounded, quaternion components lie in [-1, 1].
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::NEG_INFINITY; 3];
        let mut hi = vec![f64::INFINITY; 3];
        lo.extend([-1.0; 4]);
        hi.extend([1.0; 4]);
        for d in &self.dofs {
            lo.push(d.min);
            hi.push(d.max);
        }
        (lo, hi)
    }
}

fn mirror_isometry(t: &Isometry3<f64>) -> Isometry3<f64> {
    let q = t.rotation.quaternion();
    Isometry3::from_parts(
        Translation3::new(-t.translation.x, t.translation.y, t.translation.z),
        UnitQuaternion::new_unchecked(Quaternion::new(q.w, q.i, -q.j, -q.k)),
    )
}

/// World-space vertices of a posed model sharing the model's triangles.
#[derive(Debug, Clone)]
pub struct PosedMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Arc<Vec<[u32; 3]>>,
}

/// Root position and orientation plus articulation angles.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub angles: Vec<f64>,
}

/// Pose of a 20-angle hand model (27 parameters).
pub type HandPose = Pose;
/// Pose of a rigid object (7 parameters).
pub type RigidPose = Pose;

impl Pose {
    pub fn identity(n_angles: usize) -> Self {
        Pose {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
            angles: vec![0.0; n_angles],
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>, angles: Vec<f64>) -> Self {
        Pose {
            position,
            orientation,
            angles,
        }
    }

    pub fn dims(&self) -> usize {
        ROOT_DIMS + self.angles.len()
    }

    pub fn write_to(&self, out: &mut Vec<f64>) {
        let q = self.orientation.quaternion();
        out.extend([self.position.x, self.position.y, self.position.z]);
        out.extend([q.w, q.i, q.j, q.k]);
        out.extend(&self.angles);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dims());
        self.write_to(&mut v);
        v
    }

    /// Decodes a parameter slice, renormalizing the quaternion block. A
    /// quaternion already unit-norm to within 1e-12 is kept as is.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() < ROOT_DIMS {
            return Err(Error::DimensionMismatch {
                expected: ROOT_DIMS,
                got: values.len(),
            });
        }
        let q = Quaternion::new(values[3], values[4], values[5], values[6]);
        let norm = q.norm();
        let orientation = if !(norm > 1e-12) || !norm.is_finite() {
            UnitQuaternion::identity()
        } else if (norm - 1.0).abs() <= 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_unchecked(q / norm)
        };
        Ok(Pose {
            position: Vector3::new(values[0], values[1], values[2]),
            orientation,
            angles: values[ROOT_DIMS..].to_vec(),
        })
    }

    /// The pose of the mirrored model that reproduces the reflection of
    /// this pose's posed geometry.
    pub fn mirrored(&self) -> Pose {
        let q = self.orientation.quaternion();
        Pose {
            position: Vector3::new(-self.position.x, self.position.y, self.position.z),
            orientation: UnitQuaternion::new_unchecked(Quaternion::new(q.w, q.i, -q.j, -q.k)),
            angles: self.angles.clone(),
        }
    }

    /// Checks unit quaternion and joint bounds against a model.
    pub fn validate(&self, model: &KinematicModel) -> Result<()> {
        if self.angles.len() != model.dofs.len() {
            return Err(Error::DimensionMismatch {
                expected: model.dims(),
                got: self.dims(),
            });
        }
        if (self.orientation.quaternion().norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation("orientation is not a unit quaternion".into()));
        }
        for (k, (a, d)) in self.angles.iter().zip(&model.dofs).enumerate() {
            if *a < d.min || *a > d.max {
                return Err(Error::Validation(format!(
                    "angle {k} = {a} outside [{}, {}]",
                    d.min, d.max
                )));
            }
        }
        Ok(())
    }

    /// This pose moved by a world-frame rigid transform.
    pub fn transformed(&self, t: &Isometry3<f64>) -> Pose {
        Pose {
            position: t.rotation * self.position + t.translation.vector,
            orientation: t.rotation * self.orientation,
            angles: self.angles.clone(),
        }
    }
}

/// A model instance in a scene.
#[derive(Debug, Clone)]
pub struct SceneEntry {
    pub model: Arc<KinematicModel>,
    pub pose: Pose,
}

/// Every tracked model together with its pose: one full hypothesis.
#[derive(Debug, Clone)]
pub struct SceneState {
    pub entries: Vec<SceneEntry>,
}

impl PartialEq for SceneState {
    fn eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| (Arc::ptr_eq(&a.model, &b.model) || a.model == b.model) && a.pose == b.pose)
    }
}

impl SceneState {
    pub fn new(entries: Vec<SceneEntry>) -> Self {
        SceneState { entries }
    }

    pub fn single(model: Arc<KinematicModel>, pose: Pose) -> Self {
        SceneState {
            entries: vec![SceneEntry { model, pose }],
        }
    }

    /// Total number of pose parameters.
    pub fn dims(&self) -> usize {
        self.entries.iter().map(|e| e.model.dims()).sum()
    }

    pub fn posed_meshes(&self) -> Vec<PosedMesh> {
        self.entries
            .iter()
            .map(|e| e.model.posed_mesh(&e.pose))
            .collect()
    }

    pub fn flatten(&self) -> PoseVector {
        let n = self.dims();
        let mut values = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for e in &self.entries {
            e.pose.write_to(&mut values);
            let (lo, hi) = e.model.bounds();
            lower.extend(lo);
            upper.extend(hi);
        }
        PoseVector {
            values,
            lower,
            upper,
        }
    }

    /// Rebuilds a state with this state's models from a flat vector.
    pub fn unflatten(&self, values: &[f64]) -> Result<SceneState> {
        let n = self.dims();
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: values.len(),
            });
        }
        let mut offset = 0;
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let d = e.model.dims();
                let pose = Pose::from_slice(&values[offset..offset + d])?;
                offset += d;
                Ok(SceneEntry {
                    model: Arc::clone(&e.model),
                    pose,
                })
            })
            .collect::<Result<_>>()?;
        Ok(SceneState { entries })
    }

    /// Offsets of each entry's block inside the flat vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.entries
            .iter()
            .map(|e| {
                let o = acc;
                acc += e.model.dims();
                o
            })
            .collect()
    }
}

/// A flattened scene state with per-dimension bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseVector {
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PoseVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn clamp(&mut self) {
        for ((v, lo), hi) in self.values.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}
