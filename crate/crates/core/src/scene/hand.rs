//! Built-in procedural right hand: 21 bones, 26 degrees of freedom.
//!
//! Model frame: origin at the wrist, fingers along +y, thumb on the +x side,
//! palm facing +z. Each finger is a chain of three capsule segments plus a
//! mesh-less tip bone; the palm is an ellipsoid. Every finger has two
//! degrees of freedom at its base joint (abduction about z, flexion about x)
//! and one flexion at each of the two distal joints.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

use super::{Bone, Dof, Handedness, KinematicModel, Marker};
use crate::camera::Point3;

/// Tessellation of the procedural hand mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandMesh {
    /// Vertices around each capsule ring.
    pub around: usize,
    /// Spacing between capsule body rings (mm).
    pub ring_spacing: f64,
    /// Rings per hemispherical cap.
    pub cap_rings: usize,
}

impl Default for HandMesh {
    fn default() -> Self {
        HandMesh {
            around: 8,
            ring_spacing: 8.0,
            cap_rings: 2,
        }
    }
}

struct Finger {
    name: &'static str,
    base: [f64; 3],
    /// Rest rotation of the base bone about z (degrees).
    splay: f64,
    lengths: [f64; 3],
    radii: [f64; 3],
    /// Bounds in degrees: base abduction, base flexion, middle, distal.
    bounds: [(f64, f64); 4],
}

const FINGERS: [Finger; 5] = [
    Finger {
        name: "thumb",
        base: [24.0, 16.0, 6.0],
        splay: -50.0,
        lengths: [40.0, 32.0, 26.0],
        radii: [11.0, 9.5, 8.5],
        bounds: [(-30.0, 40.0), (-20.0, 60.0), (-10.0, 70.0), (-15.0, 80.0)],
    },
    Finger {
        name: "index",
        base: [25.0, 86.0, 0.0],
        splay: -6.0,
        lengths: [40.0, 24.0, 19.0],
        radii: [9.0, 8.0, 7.5],
        bounds: [(-25.0, 20.0), (-15.0, 90.0), (0.0, 100.0), (0.0, 80.0)],
    },
    Finger {
        name: "middle",
        base: [8.0, 90.0, 0.0],
        splay: 0.0,
        lengths: [44.0, 28.0, 21.0],
        radii: [9.5, 8.5, 7.5],
        bounds: [(-15.0, 15.0), (-15.0, 90.0), (0.0, 100.0), (0.0, 80.0)],
    },
    Finger {
        name: "ring",
        base: [-9.0, 86.0, 0.0],
        splay: 5.0,
        lengths: [41.0, 27.0, 20.0],
        radii: [9.0, 8.0, 7.0],
        bounds: [(-15.0, 15.0), (-15.0, 90.0), (0.0, 100.0), (0.0, 80.0)],
    },
    Finger {
        name: "little",
        base: [-25.0, 78.0, 0.0],
        splay: 12.0,
        lengths: [32.0, 20.0, 18.0],
        radii: [8.0, 7.0, 6.5],
        bounds: [(-20.0, 25.0), (-15.0, 90.0), (0.0, 100.0), (0.0, 80.0)],
    },
];

const PALM_CENTER: [f64; 3] = [0.0, 45.0, 0.0];
const PALM_AXES: [f64; 3] = [40.0, 50.0, 14.0];

fn segment_names(finger: &str) -> [String; 4] {
    let parts = if finger == "thumb" {
        ["metacarpal", "proximal", "distal", "tip"]
    } else {
        ["proximal", "middle", "distal", "tip"]
    };
    parts.map(|p| format!("{finger}_{p}"))
}

fn joint_names(finger: &str) -> [String; 4] {
    let parts = if finger == "thumb" {
        ["cmc", "mcp", "ip", "tip"]
    } else {
        ["mcp", "pip", "dip", "tip"]
    };
    parts.map(|p| format!("{finger}_{p}"))
}

/// Names of the 21 joint-centre markers, in marker order.
pub fn marker_names() -> Vec<String> {
    let mut names = vec!["wrist".to_string()];
    for f in &FINGERS {
        names.extend(joint_names(f.name));
    }
    names
}

pub fn marker_index(name: &str) -> Option<usize> {
    marker_names().iter().position(|n| n == name)
}

/// The built-in right hand at default tessellation.
pub fn builtin_right_hand() -> KinematicModel {
    right_hand(HandMesh::default())
}

pub fn right_hand(mesh: HandMesh) -> KinematicModel {
    let mut bones = vec![Bone {
        name: "palm".into(),
        parent: None,
        rest: Isometry3::identity(),
    }];
    let mut dofs = Vec::new();
    let mut markers = vec![Marker {
        bone: 0,
        offset: Point3::origin(),
    }];
    let mut builder = MeshBuilder::default();
    builder.ellipsoid(
        0,
        &Isometry3::identity(),
        Point3::from(PALM_CENTER),
        Vector3::from(PALM_AXES),
        mesh.around + 6,
        mesh.around + 2,
    );

    for f in &FINGERS {
        let names = segment_names(f.name);
        let base_rest = Isometry3::from_parts(
            Translation3::from(Vector3::from(f.base)),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), f.splay.to_radians()),
        );
        let mut world = base_rest;
        let mut parent = 0;
        for s in 0..4 {
            let rest = if s == 0 {
                base_rest
            } else {
                Isometry3::translation(0.0, f.lengths[s - 1], 0.0)
            };
            if s > 0 {
                world *= rest;
            }
            let bone = bones.len();
            bones.push(Bone {
                name: names[s].clone(),
                parent: Some(parent),
                rest,
            });
            markers.push(Marker {
                bone,
                offset: Point3::origin(),
            });
            let deg = |(lo, hi): (f64, f64)| (lo.to_radians(), hi.to_radians());
            match s {
                0 => {
                    let (lo, hi) = deg(f.bounds[0]);
                    dofs.push(Dof {
                        bone,
                        axis: Vector3::z_axis(),
                        min: lo,
                        max: hi,
                    });
                    let (lo, hi) = deg(f.bounds[1]);
                    dofs.push(Dof {
                        bone,
                        axis: Vector3::x_axis(),
                        min: lo,
                        max: hi,
                    });
                }
                1 | 2 => {
                    let (lo, hi) = deg(f.bounds[s + 1]);
                    dofs.push(Dof {
                        bone,
                        axis: Vector3::x_axis(),
                        min: lo,
                        max: hi,
                    });
                }
                _ => {}
            }
            if s < 3 {
                builder.capsule(bone, &world, f.lengths[s], f.radii[s], &mesh);
            }
            parent = bone;
        }
    }

    KinematicModel::new(
        "hand",
        Handedness::Right,
        bones,
        dofs,
        builder.vertices,
        builder.triangles,
        builder.weights,
        markers,
    )
    .expect("built-in hand is valid")
}

/// Accumulates rigidly skinned primitives.
#[derive(Default)]
pub(crate) struct MeshBuilder {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
    pub weights: Vec<Vec<(usize, f64)>>,
}

impl MeshBuilder {
    fn push(&mut self, bone: usize, p: Point3) -> u32 {
        self.vertices.push(p);
        self.weights.push(vec![(bone, 1.0)]);
        (self.vertices.len() - 1) as u32
    }

    /// Closed surface from a pole, `rings` of `around` vertices and a
    /// second pole. Rings run from the first pole to the second; the caller
    /// picks the ordering so that the winding faces outward.
    fn lathe(&mut self, bone: usize, first: Point3, rings: &[Vec<Point3>], last: Point3) {
        let a = first;
        let top = self.push(bone, a);
        let mut ring_start = Vec::with_capacity(rings.len());
        for ring in rings {
            ring_start.push(self.vertices.len() as u32);
            for p in ring {
                self.push(bone, *p);
            }
        }
        let bottom = self.push(bone, last);
        let n = rings[0].len() as u32;
        for j in 0..n {
            let k = (j + 1) % n;
            self.triangles.push([top, ring_start[0] + k, ring_start[0] + j]);
        }
        for r in 0..rings.len() - 1 {
            let (s0, s1) = (ring_start[r], ring_start[r + 1]);
            for j in 0..n {
                let k = (j + 1) % n;
                self.triangles.push([s0 + j, s0 + k, s1 + k]);
                self.triangles.push([s0 + j, s1 + k, s1 + j]);
            }
        }
        let last_ring = *ring_start.last().unwrap();
        for j in 0..n {
            let k = (j + 1) % n;
            self.triangles.push([bottom, last_ring + j, last_ring + k]);
        }
    }

    /// Capsule along the bone's local +y from 0 to `length`.
    pub fn capsule(&mut self, bone: usize, to_model: &Isometry3<f64>, length: f64, radius: f64, mesh: &HandMesh) {
        let around = mesh.around.max(3);
        let ring = |y: f64, r: f64| -> Vec<Point3> {
            (0..around)
                .map(|j| {
                    let t = std::f64::consts::TAU * j as f64 / around as f64;
                    // counter-clockwise seen from +y
                    to_model * Point3::new(r * t.cos(), y, -r * t.sin())
                })
                .collect()
        };
        let mut rings = Vec::new();
        let caps = mesh.cap_rings.max(1);
        for i in 1..=caps {
            let phi = std::f64::consts::FRAC_PI_2 * i as f64 / (caps as f64 + 0.0);
            let phi = phi.min(std::f64::consts::FRAC_PI_2);
            rings.push(ring(-radius * phi.cos(), radius * phi.sin()));
        }
        let body = ((length / mesh.ring_spacing).ceil() as usize).max(1);
        for i in 1..body {
            rings.push(ring(length * i as f64 / body as f64, radius));
        }
        for i in (1..=caps).rev() {
            let phi = std::f64::consts::FRAC_PI_2 * i as f64 / caps as f64;
            rings.push(ring(length + radius * phi.cos(), radius * phi.sin()));
        }
        self.lathe(
            bone,
            to_model * Point3::new(0.0, -radius, 0.0),
            &rings,
            to_model * Point3::new(0.0, length + radius, 0.0),
        );
    }

    /// Axis-aligned ellipsoid (in the bone frame) with poles on -y / +y.
    pub fn ellipsoid(
        &mut self,
        bone: usize,
        to_model: &Isometry3<f64>,
        center: Point3,
        axes: Vector3<f64>,
        around: usize,
        stacks: usize,
    ) {
        let around = around.max(3);
        let stacks = stacks.max(2);
        let rings: Vec<Vec<Point3>> = (1..stacks)
            .map(|i| {
                let phi = std::f64::consts::PI * i as f64 / stacks as f64;
                (0..around)
                    .map(|j| {
                        let t = std::f64::consts::TAU * j as f64 / around as f64;
                        let local = Point3::new(
                            center.x + axes.x * phi.sin() * t.cos(),
                            center.y - axes.y * phi.cos(),
                            center.z - axes.z * phi.sin() * t.sin(),
                        );
                        to_model * local
                    })
                    .collect()
            })
            .collect();
        self.lathe(
            bone,
            to_model * Point3::new(center.x, center.y - axes.y, center.z),
            &rings,
            to_model * Point3::new(center.x, center.y + axes.y, center.z),
        );
    }
}
