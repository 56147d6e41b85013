//! Brute-force reference implementations and scene builders shared by the
//! integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use handtrack::camera::{PinholeCamera, Pixel, Point3, StereoRig};
use handtrack::distinct::ScalarMap;
use handtrack::objective::{mutual_correspondences, Correspondence, ObjectiveContext, ObjectiveParams, ViewData};
use handtrack::render::Roi;
use handtrack::scene::{Bone, Handedness, KinematicModel, Marker, Pose, PosedMesh, SceneEntry, SceneState};
use image::RgbImage;
use nalgebra::{Isometry3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A single-bone rigid model around an arbitrary triangle list.
pub fn rigid_model(name: &str, vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> KinematicModel {
    let markers = vertices
        .iter()
        .take(3)
        .map(|&offset| Marker { bone: 0, offset })
        .collect();
    let weights = vec![vec![(0, 1.0)]; vertices.len()];
    KinematicModel::new(
        name,
        Handedness::None,
        vec![Bone {
            name: "root".into(),
            parent: None,
            rest: Isometry3::identity(),
        }],
        Vec::new(),
        vertices,
        triangles,
        weights,
        markers,
    )
    .unwrap()
}

/// An axis-aligned rectangle in the model's z = 0 plane, facing -z.
pub fn quad(x0: f64, y0: f64, x1: f64, y1: f64) -> KinematicModel {
    let v = vec![
        Point3::new(x0, y0, 0.0),
        Point3::new(x1, y0, 0.0),
        Point3::new(x1, y1, 0.0),
        Point3::new(x0, y1, 0.0),
    ];
    rigid_model("quad", v, vec![[0, 1, 2], [0, 2, 3]])
}

pub fn placed(model: KinematicModel, position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> SceneEntry {
    SceneEntry {
        model: Arc::new(model),
        pose: Pose::new(position, orientation, Vec::new()),
    }
}

pub fn random_orientation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(
        rng.random_range(-3.2..3.2),
        rng.random_range(-1.5..1.5),
        rng.random_range(-3.2..3.2),
    )
}

/// Random triangles scattered in front of a camera at the origin.
pub fn triangle_soup(rng: &mut impl Rng, count: usize, depth: (f64, f64), spread: f64) -> KinematicModel {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for k in 0..count {
        let c = Vector3::new(
            rng.random_range(-spread..spread),
            rng.random_range(-spread..spread),
            rng.random_range(depth.0..depth.1),
        );
        for _ in 0..3 {
            let d = Vector3::new(
                rng.random_range(-40.0..40.0),
                rng.random_range(-40.0..40.0),
                rng.random_range(-40.0..40.0),
            );
            vertices.push(Point3::from(c + d));
        }
        let i = 3 * k as u32;
        triangles.push([i, i + 1, i + 2]);
    }
    rigid_model("soup", vertices, triangles)
}

/// A random stereo rig at `width x height`: the right camera sits about
/// `baseline` mm to the right, slightly rotated.
pub fn random_rig(rng: &mut impl Rng, width: u32, height: u32, baseline: f64) -> StereoRig {
    let f = rng.random_range(0.8..1.2) * width as f64;
    let cx = (width as f64 - 1.0) / 2.0 + rng.random_range(-5.0..5.0);
    let cy = (height as f64 - 1.0) / 2.0 + rng.random_range(-5.0..5.0);
    let left = PinholeCamera::new(f, f * rng.random_range(0.95..1.05), cx, cy, width, height);
    let rot = UnitQuaternion::from_euler_angles(
        rng.random_range(-0.03..0.03),
        rng.random_range(-0.08..0.0),
        rng.random_range(-0.03..0.03),
    );
    let centre = Vector3::new(baseline, rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    let right = left.clone().with_pose(rot, -(rot * centre));
    StereoRig::new(left, right).unwrap()
}

/// Signed doubled area of `(p0, p1, p2)`.
fn edge(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> f64 {
    (p1.0 - p0.0) * (p2.1 - p0.1) - (p1.1 - p0.1) * (p2.0 - p0.0)
}

/// Depth seen through pixel centre `(x, y)` of a full-frame camera, by
/// testing every triangle. Edges are inclusive, the earliest triangle wins
/// ties, depth is stored in single precision.
pub fn oracle_depth(meshes: &[PosedMesh], camera: &PinholeCamera, x: f64, y: f64, cull: bool) -> Option<f32> {
    let mut best = f32::INFINITY;
    for mesh in meshes {
        for tri in mesh.triangles.iter() {
            let pc: Vec<Vector3<f64>> = tri.iter().map(|&i| camera.to_camera(&mesh.vertices[i as usize])).collect();
            if pc.iter().any(|p| p.z < 1.0) {
                continue;
            }
            let uv: Vec<(f64, f64)> = pc
                .iter()
                .map(|p| (camera.cx + camera.fx * p.x / p.z, camera.cy + camera.fy * p.y / p.z))
                .collect();
            let area = edge(uv[0], uv[1], uv[2]);
            if area.abs() < 1e-12 || (cull && area > 0.0) {
                continue;
            }
            let p = (x, y);
            let la = edge(uv[1], uv[2], p) / area;
            let lb = edge(uv[2], uv[0], p) / area;
            let lc = edge(uv[0], uv[1], p) / area;
            if la < 0.0 || lb < 0.0 || lc < 0.0 {
                continue;
            }
            let z = (1.0 / (la / pc[0].z + lb / pc[1].z + lc / pc[2].z)) as f32;
            if z < best {
                best = z;
            }
        }
    }
    best.is_finite().then_some(best)
}

/// Oracle depth over a window, row-major, `+inf` where nothing is seen.
pub fn oracle_depth_map(meshes: &[PosedMesh], camera: &PinholeCamera, roi: Roi, cull: bool) -> Vec<f32> {
    let mut out = Vec::with_capacity((roi.width * roi.height) as usize);
    for y in roi.y0..=roi.y1() {
        for x in roi.x0..=roi.x1() {
            out.push(oracle_depth(meshes, camera, x as f64, y as f64, cull).unwrap_or(f32::INFINITY));
        }
    }
    out
}

pub struct OracleView<'a> {
    pub camera: &'a PinholeCamera,
    pub image: &'a RgbImage,
    pub roi: Roi,
    /// Distinctiveness over the ROI.
    pub c: &'a ScalarMap,
}

pub type PixelPair = ((u32, u32), (u32, u32));

/// Every mutually visible pixel pair, found from both views, with full-frame
/// pixel coordinates `(left, right)`.
pub fn oracle_pairs(meshes: &[PosedMesh], left: &OracleView, right: &OracleView, r: f64, cull: bool) -> BTreeSet<PixelPair> {
    let dl = oracle_depth_map(meshes, left.camera, left.roi, cull);
    let dr = oracle_depth_map(meshes, right.camera, right.roi, cull);
    let mut pairs = BTreeSet::new();
    for (from, to, d_from, d_to, from_left) in [(left, right, &dl, &dr, true), (right, left, &dr, &dl, false)] {
        for j in 0..from.roi.height {
            for i in 0..from.roi.width {
                let z = d_from[(j * from.roi.width + i) as usize];
                if !z.is_finite() {
                    continue;
                }
                let (x, y) = (from.roi.x0 + i, from.roi.y0 + j);
                let cam = from.camera;
                let pc = Vector3::new(
                    (x as f64 - cam.cx) / cam.fx * z as f64,
                    (y as f64 - cam.cy) / cam.fy * z as f64,
                    z as f64,
                );
                let world = cam.to_world(&pc);
                let Some(px) = to.camera.project(&world) else { continue };
                let (u, v) = ((px.u + 0.5).floor(), (px.v + 0.5).floor());
                let (rx0, ry0) = (to.roi.x0 as f64, to.roi.y0 as f64);
                if u < rx0 || v < ry0 || u > to.roi.x1() as f64 || v > to.roi.y1() as f64 {
                    continue;
                }
                let (xo, yo) = (u as u32, v as u32);
                let zo = d_to[((yo - to.roi.y0) * to.roi.width + xo - to.roi.x0) as usize];
                if !zo.is_finite() {
                    continue;
                }
                let tc = to.camera;
                let qc = Vector3::new(
                    (xo as f64 - tc.cx) / tc.fx * zo as f64,
                    (yo as f64 - tc.cy) / tc.fy * zo as f64,
                    zo as f64,
                );
                if (tc.to_world(&qc) - world).norm() <= r {
                    pairs.insert(if from_left { ((x, y), (xo, yo)) } else { ((xo, yo), (x, y)) });
                }
            }
        }
    }
    pairs
}

/// Sum of `min(C_l, C_r) * exp(-beta |I_l - I_r| / 255)` over the oracle
/// pairs, Euclidean colour distance.
pub fn oracle_score(meshes: &[PosedMesh], left: &OracleView, right: &OracleView, beta: f64, r: f64, cull: bool) -> f64 {
    oracle_pairs(meshes, left, right, r, cull)
        .into_iter()
        .map(|((xl, yl), (xr, yr))| {
            let cl = left.c.get((xl - left.roi.x0) as usize, (yl - left.roi.y0) as usize);
            let cr = right.c.get((xr - right.roi.x0) as usize, (yr - right.roi.y0) as usize);
            let (a, b) = (left.image.get_pixel(xl, yl).0, right.image.get_pixel(xr, yr).0);
            let dist = (0..3)
                .map(|k| ((a[k] as f64 - b[k] as f64) / 255.0).powi(2))
                .sum::<f64>()
                .sqrt();
            cl.min(cr) * (-beta * dist).exp()
        })
        .sum()
}

/// Distinctiveness written out pixel by pixel: Rec.601 grey, central
/// differences with replicated borders, unweighted window sums, closed-form
/// eigenvalues, medians by full sort, logistic sigmoids, threshold.
pub fn oracle_distinctiveness(image: &RgbImage, window: usize, threshold: f64) -> Vec<f64> {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let grey = |x: i64, y: i64| {
        let p = image.get_pixel(x.clamp(0, w - 1) as u32, y.clamp(0, h - 1) as u32).0;
        (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
    };
    let grad = |x: i64, y: i64| {
        let (x, y) = (x.clamp(0, w - 1), y.clamp(0, h - 1));
        ((grey(x + 1, y) - grey(x - 1, y)) / 2.0, (grey(x, y + 1) - grey(x, y - 1)) / 2.0)
    };
    let r = (window / 2) as i64;
    let mut eig = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (gx, gy) = grad(x + dx, y + dy);
                    sxx += gx * gx;
                    sxy += gx * gy;
                    syy += gy * gy;
                }
            }
            let tr = sxx + syy;
            let det = sxx * syy - sxy * sxy;
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            let l1 = (tr / 2.0 + disc).max(0.0);
            let l2 = (tr / 2.0 - disc).max(0.0).min(l1);
            eig.push((l1, l2));
        }
    }
    let valid: Vec<(f64, f64)> = eig
        .iter()
        .filter(|(l1, l2)| l1 * l1 + l2 * l2 > 0.0)
        .map(|&(l1, l2)| ((l1 * l1 + l2 * l2).sqrt().ln(), (l2 / l1).atan()))
        .collect();
    if valid.is_empty() {
        return vec![0.0; eig.len()];
    }
    let sorted_median = |mut v: Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    };
    let md = sorted_median(valid.iter().map(|v| v.0).collect());
    let ma = sorted_median(valid.iter().map(|v| v.1).collect());
    eig.iter()
        .map(|&(l1, l2)| {
            if l1 * l1 + l2 * l2 <= 0.0 {
                return 0.0;
            }
            let d = (l1 * l1 + l2 * l2).sqrt().ln();
            let a = (l2 / l1).atan();
            let c = 1.0 / (1.0 + (-(d - md)).exp()) / (1.0 + (-(a - ma)).exp());
            if c > threshold {
                c
            } else {
                0.0
            }
        })
        .collect()
}

pub fn noise_image(rng: &mut impl Rng, width: u32, height: u32) -> RgbImage {
    RgbImage::from_fn(width, height, |_, _| image::Rgb([rng.random(), rng.random(), rng.random()]))
}

pub fn state_of(entries: Vec<SceneEntry>) -> SceneState {
    SceneState::new(entries)
}

/// A random scene for checking the objective against the oracle, rendered
/// with random vertex colours over a noise background. Even seeds use two
/// closed boxes and back-face culling, odd seeds a triangle soup without.
pub struct ObjectiveScene {
    pub rig: StereoRig,
    pub state: SceneState,
    pub left: RgbImage,
    pub right: RgbImage,
    pub cull: bool,
}

pub fn objective_scene(seed: u64) -> ObjectiveScene {
    use handtrack::render::synthesize_frame;
    use handtrack::scene::object::box_model;

    let mut rng = rng(seed);
    let baseline = rng.random_range(60.0..120.0);
    let rig = random_rig(&mut rng, 200, 160, baseline);
    let cull = seed % 2 == 0;
    let entries = if cull {
        (0..2)
            .map(|_| {
                let b = box_model(
                    rng.random_range(40.0..90.0),
                    rng.random_range(40.0..90.0),
                    rng.random_range(30.0..70.0),
                    25.0,
                );
                let p = Vector3::new(
                    rng.random_range(-60.0..100.0),
                    rng.random_range(-50.0..50.0),
                    rng.random_range(450.0..650.0),
                );
                placed(b, p, random_orientation(&mut rng))
            })
            .collect()
    } else {
        vec![placed(
            triangle_soup(&mut rng, 150, (400.0, 700.0), 120.0),
            Vector3::new(30.0, 0.0, 0.0),
            UnitQuaternion::identity(),
        )]
    };
    let state = SceneState::new(entries);
    let textures: Vec<Vec<[u8; 3]>> = state
        .entries
        .iter()
        .map(|e| e.model.vertices.iter().map(|_| [rng.random(), rng.random(), rng.random()]).collect())
        .collect();
    let refs: Vec<&[[u8; 3]]> = textures.iter().map(|t| t.as_slice()).collect();
    let bg_l = noise_image(&mut rng, 200, 160);
    let bg_r = noise_image(&mut rng, 200, 160);
    let frame = synthesize_frame(&state, &rig, (&bg_l, &bg_r), &refs).unwrap();
    ObjectiveScene {
        rig,
        state,
        left: frame.left,
        right: frame.right,
        cull,
    }
}

pub fn triangle_count(state: &SceneState) -> usize {
    state.entries.iter().map(|e| e.model.triangles.len()).sum()
}

/// Parallel 320x240 rig, f = 500, 100 mm baseline. The principal point is
/// off the pixel grid so that no quad edge passes through a pixel centre.
pub fn occlusion_rig() -> StereoRig {
    StereoRig::parallel(500.0, 160.25, 120.25, 320, 240, 100.0).unwrap()
}

/// A 600 x 400 mm backdrop at 1000 mm and, optionally, a 40 x 120 mm
/// occluder at 500 mm in front of its centre.
pub fn occlusion_scene(with_occluder: bool) -> SceneState {
    let mut entries = vec![placed(
        quad(-300.0, -200.0, 300.0, 200.0),
        Vector3::new(0.0, 0.0, 1000.0),
        UnitQuaternion::identity(),
    )];
    if with_occluder {
        entries.push(placed(
            quad(-20.0, -60.0, 20.0, 60.0),
            Vector3::new(0.0, 0.0, 500.0),
            UnitQuaternion::identity(),
        ));
    }
    SceneState::new(entries)
}

/// Uniform grey frames with constant distinctiveness over full-frame ROIs,
/// so that every mutually visible pixel pair is reported.
pub fn flat_context(rig: &StereoRig) -> ObjectiveContext {
    let (w, h) = rig.resolution();
    let image = RgbImage::from_pixel(w, h, image::Rgb([128, 128, 128]));
    let view = |camera| {
        let c = ScalarMap::from_fn(w as usize, h as usize, |_, _| 0.5);
        ViewData::new(camera, &image, Roi::full(w, h), c).unwrap()
    };
    let params = ObjectiveParams {
        occlusion_range: 3.0,
        cull_back_faces: false,
        ..ObjectiveParams::default()
    };
    ObjectiveContext::new(rig.clone(), view(&rig.left), view(&rig.right), params).unwrap()
}

fn in_block(p: &Pixel, x: (i64, i64), y: (i64, i64)) -> bool {
    let (u, v) = key(p);
    (x.0..=x.1).contains(&u) && (y.0..=y.1).contains(&v)
}

pub struct OcclusionCounts {
    /// Backdrop pairs whose left pixel lies behind the occluder.
    pub hidden_left: usize,
    /// Backdrop pairs at the right-view image of that hidden patch.
    pub hidden_right: usize,
    pub occluder: usize,
}

pub fn occlusion_counts(state: &SceneState, rig: &StereoRig) -> OcclusionCounts {
    let corrs: Vec<Correspondence> = mutual_correspondences(state, &flat_context(rig));
    let backdrop = |c: &&Correspondence| c.point.z > 900.0;
    OcclusionCounts {
        hidden_left: corrs
            .iter()
            .filter(backdrop)
            .filter(|c| in_block(&c.left, (141, 180), (61, 180)))
            .count(),
        hidden_right: corrs
            .iter()
            .filter(backdrop)
            .filter(|c| in_block(&c.right, (91, 130), (61, 180)))
            .count(),
        occluder: corrs.iter().filter(|c| c.point.z < 600.0).count(),
    }
}


/// Nearest pixel of a continuous image position.
pub fn key(p: &Pixel) -> (i64, i64) {
    ((p.u + 0.5).floor() as i64, (p.v + 0.5).floor() as i64)
}
