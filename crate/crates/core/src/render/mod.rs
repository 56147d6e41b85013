//! Deterministic z-buffered software rasterizer.
//!
//! Every pixel is sampled once at its centre; the nearest surface wins. For
//! each covered pixel the buffers keep the camera-frame depth and a compact
//! [`PointId`] naming the mesh, the triangle and the perspective-correct
//! barycentric coordinates of the surface point seen there, so the world
//! point can be recovered without a float3 per pixel. Back faces are not
//! culled.

mod synth;
pub mod texture;

use nalgebra::Vector3;

use crate::camera::{PinholeCamera, Pixel, Point3, StereoRig};
use crate::scene::{PosedMesh, SceneState};
use crate::{Error, Result};

pub use synth::{synthesize_frame, SyntheticFrame};

/// Triangles with a vertex closer than this (mm) are not drawn.
pub const NEAR_PLANE: f64 = 1.0;

/// Identifier of the surface point seen by a pixel.
///
/// Bit layout: mesh index (8 bits), triangle index (24 bits), then the
/// barycentric weights of the triangle's second and third vertex quantized
/// to 16 bits each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointId(pub u64);

impl PointId {
    pub const BACKGROUND: PointId = PointId(u64::MAX);
    const SCALE: f64 = 65535.0;

    #[inline]
    pub fn new(mesh: usize, triangle: usize, b1: f64, b2: f64) -> PointId {
        debug_assert!(mesh < 255 && triangle < (1 << 24));
        // round half up; `as` saturates, so out-of-range weights clamp
        let q = |b: f64| ((b * Self::SCALE + 0.5) as u32).min(Self::SCALE as u32) as u64;
        PointId(((mesh as u64) << 56) | ((triangle as u64) << 32) | (q(b1) << 16) | q(b2))
    }

    #[inline]
    pub fn is_background(self) -> bool {
        self == Self::BACKGROUND
    }

    pub fn mesh(self) -> usize {
        (self.0 >> 56) as usize
    }

    pub fn triangle(self) -> usize {
        ((self.0 >> 32) & 0xFF_FFFF) as usize
    }

    /// Barycentric weights of the triangle's three vertices.
    pub fn barycentrics(self) -> [f64; 3] {
        let b1 = ((self.0 >> 16) & 0xFFFF) as f64 / Self::SCALE;
        let b2 = (self.0 & 0xFFFF) as f64 / Self::SCALE;
        [1.0 - b1 - b2, b1, b2]
    }

    /// World point on the posed meshes this id refers to.
    pub fn world_point(self, meshes: &[PosedMesh]) -> Point3 {
        let mesh = &meshes[self.mesh()];
        let [a, b, c] = mesh.triangles[self.triangle()];
        let [w0, w1, w2] = self.barycentrics();
        Point3::from(
            mesh.vertices[a as usize].coords * w0
                + mesh.vertices[b as usize].coords * w1
                + mesh.vertices[c as usize].coords * w2,
        )
    }
}

/// Per-view raster outputs for one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderBuffers {
    pub width: usize,
    pub height: usize,
    /// Camera-frame depth (mm); `+inf` where nothing was drawn.
    pub depth: Vec<f32>,
    pub point_id: Vec<PointId>,
    /// Shaded colour, present when rendering with a colour [`Shading`].
    pub color: Option<Vec<[u8; 3]>>,
    dirty: Option<Bbox>,
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bbox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Bbox {
    fn extend(self, other: Bbox) -> Bbox {
        Bbox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

impl RenderBuffers {
    pub fn new(width: usize, height: usize, with_color: bool) -> Self {
        RenderBuffers {
            width,
            height,
            depth: vec![f32::INFINITY; width * height],
            point_id: vec![PointId::BACKGROUND; width * height],
            color: with_color.then(|| vec![[0; 3]; width * height]),
            dirty: None,
        }
    }

    /// Resets to background, resizing if needed. Only the region touched by
    /// the previous draw is cleared.
    pub fn reset(&mut self, width: usize, height: usize, with_color: bool) {
        if self.width != width || self.height != height || self.color.is_some() != with_color {
            *self = RenderBuffers::new(width, height, with_color);
            return;
        }
        if let Some(b) = self.dirty.take() {
            for y in b.y0..=b.y1 {
                let row = y * width;
                self.depth[row + b.x0..=row + b.x1].fill(f32::INFINITY);
                self.point_id[row + b.x0..=row + b.x1].fill(PointId::BACKGROUND);
                if let Some(c) = &mut self.color {
                    c[row + b.x0..=row + b.x1].fill([0; 3]);
                }
            }
        }
    }

    /// Bounding box of the drawn pixels, if any. May be loose by the
    /// extent of triangles that lost every depth test.
    pub fn drawn_region(&self) -> Option<Bbox> {
        self.dirty
    }

    /// Tight bounding box of non-background pixels.
    pub fn footprint(&self) -> Option<Bbox> {
        let region = self.dirty?;
        let mut out: Option<Bbox> = None;
        for y in region.y0..=region.y1 {
            for x in region.x0..=region.x1 {
                if self.depth[y * self.width + x].is_finite() {
                    let b = Bbox {
                        x0: x,
                        y0: y,
                        x1: x,
                        y1: y,
                    };
                    out = Some(out.map_or(b, |o| o.extend(b)));
                }
            }
        }
        out
    }

    pub fn covered_pixels(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }

    /// Depth as 16-bit grey levels in whole millimetres, 0 for background.
    pub fn depth_u16(&self) -> Vec<u16> {
        self.depth
            .iter()
            .map(|&d| if d.is_finite() { d.round().clamp(1.0, 65535.0) as u16 } else { 0 })
            .collect()
    }
}

/// How drawn pixels are coloured.
#[derive(Debug, Clone, Copy)]
pub enum Shading<'a> {
    /// Depth and point ids only.
    Geometry,
    /// Depth only; point ids stay background.
    Depth,
    /// Every mesh in one flat colour.
    Flat([u8; 3]),
    /// Per-vertex colours, one slice per mesh, interpolated perspective
    /// correctly (ambient light only).
    Vertex(&'a [&'a [[u8; 3]]]),
}

impl Shading<'_> {
    fn has_color(&self) -> bool {
        !matches!(self, Shading::Geometry | Shading::Depth)
    }
}

/// Reusable per-vertex scratch space.
#[derive(Debug, Default)]
pub struct Rasterizer {
    projected: Vec<[f64; 3]>,
    /// Skip triangles whose outward side faces away from the camera. Only
    /// valid for closed, outward-wound meshes seen from outside, where it
    /// does not change the result.
    pub cull_back_faces: bool,
}

impl Rasterizer {
    pub fn culling() -> Self {
        Rasterizer {
            projected: Vec::new(),
            cull_back_faces: true,
        }
    }

    /// Draws `meshes` into `buffers` (which must match the camera size) on
    /// top of whatever is already there.
    pub fn draw(
        &mut self,
        buffers: &mut RenderBuffers,
        meshes: &[PosedMesh],
        camera: &PinholeCamera,
        shading: Shading<'_>,
    ) {
        let (w, h) = (buffers.width, buffers.height);
        debug_assert_eq!((w, h), (camera.width as usize, camera.height as usize));
        if w == 0 || h == 0 {
            return;
        }
        for (mi, mesh) in meshes.iter().enumerate() {
            self.projected.clear();
            self.projected.extend(mesh.vertices.iter().map(|p| {
                let pc = camera.to_camera(p);
                if pc.z < NEAR_PLANE {
                    [f64::NAN, f64::NAN, -1.0]
                } else {
                    [camera.cx + camera.fx * pc.x / pc.z, camera.cy + camera.fy * pc.y / pc.z, pc.z]
                }
            }));
            let ids = !matches!(shading, Shading::Depth);
            let colors = match shading {
                Shading::Vertex(per_mesh) => Some(per_mesh[mi]),
                _ => None,
            };
            for (ti, tri) in mesh.triangles.iter().enumerate() {
                let [ia, ib, ic] = tri.map(|i| i as usize);
                let (a, b, c) = (self.projected[ia], self.projected[ib], self.projected[ic]);
                if a[2] < 0.0 || b[2] < 0.0 || c[2] < 0.0 {
                    continue;
                }
                let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
                if area.abs() < 1e-12 || !area.is_finite() {
                    continue;
                }
                // the image-plane area has the sign of a . n in camera space
                // (fx, fy > 0), negative when the outward normal faces us
                if self.cull_back_faces && area > 0.0 {
                    continue;
                }
                let min_u = ceil_i(a[0].min(b[0]).min(c[0])).max(0);
                let max_u = floor_i(a[0].max(b[0]).max(c[0])).min(w as i64 - 1);
                let min_v = ceil_i(a[1].min(b[1]).min(c[1])).max(0);
                let max_v = floor_i(a[1].max(b[1]).max(c[1])).min(h as i64 - 1);
                if min_u > max_u || min_v > max_v {
                    continue;
                }
                let (x0, x1, y0, y1) = (min_u as usize, max_u as usize, min_v as usize, max_v as usize);
                // edge functions, affine in (x, y): e_k is the signed area
                // opposite vertex k, so e_k / area is its barycentric
                let inv_area = 1.0 / area;
                let (sa, sb, sc) = ((b[1] - c[1]) * inv_area, (c[1] - a[1]) * inv_area, (a[1] - b[1]) * inv_area);
                let (ta, tb) = ((c[0] - b[0]) * inv_area, (a[0] - c[0]) * inv_area);
                let (oa, ob) = ((b[0] * c[1] - b[1] * c[0]) * inv_area, (c[0] * a[1] - c[1] * a[0]) * inv_area);
                let (iza, izb, izc) = (1.0 / a[2], 1.0 / b[2], 1.0 / c[2]);
                let mut touched = false;
                for y in y0..y1 + 1 {
                    let py = y as f64;
                    let row = y * w;
                    let px0 = x0 as f64;
                    let mut la = oa + sa * px0 + ta * py;
                    let mut lb = ob + sb * px0 + tb * py;
                    let mut lc = 1.0 - la - lb;
                    for x in x0..x1 + 1 {
                        let (ea, eb, ec) = (la, lb, lc);
                        la += sa;
                        lb += sb;
                        lc += sc;
                        if ea < 0.0 || eb < 0.0 || ec < 0.0 {
                            continue;
                        }
                        let z = 1.0 / (ea * iza + eb * izb + ec * izc);
                        let idx = row + x;
                        let zf = z as f32;
                        if zf >= buffers.depth[idx] {
                            continue;
                        }
                        buffers.depth[idx] = zf;
                        touched = true;
                        if !ids {
                            continue;
                        }
                        let wb = eb * izb * z;
                        let wc = ec * izc * z;
                        buffers.point_id[idx] = PointId::new(mi, ti, wb, wc);
                        if let Some(out) = &mut buffers.color {
                            out[idx] = match (shading, colors) {
                                (_, Some(cols)) => {
                                    let wa = 1.0 - wb - wc;
                                    let (ca, cb, cc) = (cols[ia], cols[ib], cols[ic]);
                                    std::array::from_fn(|k| {
                                        (wa * ca[k] as f64 + wb * cb[k] as f64 + wc * cc[k] as f64)
                                            .round()
                                            .clamp(0.0, 255.0) as u8
                                    })
                                }
                                (Shading::Flat(col), None) => col,
                                _ => [0; 3],
                            };
                        }
                    }
                }
                if touched {
                    let b = Bbox { x0, y0, x1, y1 };
                    buffers.dirty = Some(buffers.dirty.map_or(b, |d| d.extend(b)));
                }
            }
        }
    }
}

/// Saturating ceil and floor to integers; libm-free on baseline x86-64.
#[inline]
fn ceil_i(v: f64) -> i64 {
    let t = v as i64;
    t + ((t as f64) < v) as i64
}

#[inline]
fn floor_i(v: f64) -> i64 {
    let t = v as i64;
    t - ((t as f64) > v) as i64
}

/// Rasterizes posed meshes into fresh buffers of the camera's size.
pub fn rasterize(meshes: &[PosedMesh], camera: &PinholeCamera, shading: Shading<'_>) -> RenderBuffers {
    let mut buffers = RenderBuffers::new(camera.width as usize, camera.height as usize, shading.has_color());
    Rasterizer::default().draw(&mut buffers, meshes, camera, shading);
    buffers
}

/// Every drawn pixel with the world-space surface point seen through it,
/// recovered from its point id.
pub fn visible_points(buffers: &RenderBuffers, meshes: &[PosedMesh]) -> Vec<(Point3, Pixel)> {
    let Some(region) = buffers.dirty else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for y in region.y0..=region.y1 {
        for x in region.x0..=region.x1 {
            let id = buffers.point_id[y * buffers.width + x];
            if !id.is_background() {
                out.push((id.world_point(meshes), Pixel::new(x as f64, y as f64)));
            }
        }
    }
    out
}

/// World point seen through pixel `(x, y)`, recovered from its depth.
#[inline]
pub fn depth_point(camera: &PinholeCamera, x: usize, y: usize, depth: f32) -> Point3 {
    let pc = Vector3::new(
        (x as f64 - camera.cx) / camera.fx * depth as f64,
        (y as f64 - camera.cy) / camera.fy * depth as f64,
        depth as f64,
    );
    camera.to_world(&pc)
}

/// A rectangular image window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Roi {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
}

impl Roi {
    pub fn full(width: u32, height: u32) -> Roi {
        Roi {
            x0: 0,
            y0: 0,
            width,
            height,
        }
    }

    /// Last column, inclusive.
    pub fn x1(&self) -> u32 {
        self.x0 + self.width - 1
    }

    /// Last row, inclusive.
    pub fn y1(&self) -> u32 {
        self.y0 + self.height - 1
    }

    /// `bbox` grown by `margin` pixels on every side and clamped to a
    /// `width x height` image.
    pub fn around(bbox: Bbox, margin: u32, width: u32, height: u32) -> Roi {
        let x0 = (bbox.x0 as u32).saturating_sub(margin);
        let y0 = (bbox.y0 as u32).saturating_sub(margin);
        let x1 = (bbox.x1 as u32 + margin).min(width - 1);
        let y1 = (bbox.y1 as u32 + margin).min(height - 1);
        Roi {
            x0,
            y0,
            width: x1 - x0 + 1,
            height: y1 - y0 + 1,
        }
    }

    pub fn camera(&self, full: &PinholeCamera) -> PinholeCamera {
        full.crop(self.x0, self.y0, self.width, self.height)
    }

    pub fn contains(&self, other: &Roi) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1() <= self.x1() && other.y1() <= self.y1()
    }
}

/// Per-view regions of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StereoRoi {
    pub left: Roi,
    pub right: Roi,
}

/// Bounding boxes of the rendered state in both full-resolution views,
/// expanded by `margin` and clamped to the image.
pub fn model_roi(state: &SceneState, rig: &StereoRig, margin: u32) -> Result<StereoRoi> {
    let meshes = state.posed_meshes();
    let roi = |camera: &PinholeCamera| -> Result<Roi> {
        let buffers = rasterize(&meshes, camera, Shading::Geometry);
        let bbox = buffers.footprint().ok_or(Error::EmptyProjection)?;
        Ok(Roi::around(bbox, margin, camera.width, camera.height))
    };
    Ok(StereoRoi {
        left: roi(&rig.left)?,
        right: roi(&rig.right)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn cam() -> PinholeCamera {
        PinholeCamera::new(500.0, 500.0, 320.0, 240.0, 640, 480)
    }

    pub(crate) fn triangle_mesh(points: [[f64; 3]; 3]) -> PosedMesh {
        PosedMesh {
            vertices: points.iter().map(|p| Point3::from(*p)).collect(),
            triangles: Arc::new(vec![[0, 1, 2]]),
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let b = rasterize(&[], &cam(), Shading::Geometry);
        assert_eq!(b.covered_pixels(), 0);
        assert!(b.depth.iter().all(|d| d.is_infinite()));
        assert!(visible_points(&b, &[]).is_empty());
    }

    #[test]
    fn facing_triangle_depth() {
        let m = triangle_mesh([[-50.0, -50.0, 700.0], [50.0, -50.0, 700.0], [0.0, 60.0, 700.0]]);
        let b = rasterize(&[m], &cam(), Shading::Geometry);
        let d = b.depth[240 * 640 + 320];
        assert!((d - 700.0).abs() <= 0.5, "{d}");
    }

    #[test]
    fn nearer_triangle_wins() {
        let far = triangle_mesh([[-100.0, -100.0, 800.0], [100.0, -100.0, 800.0], [0.0, 100.0, 800.0]]);
        let near = triangle_mesh([[-60.0, -60.0, 500.0], [60.0, -60.0, 500.0], [0.0, 60.0, 500.0]]);
        for order in [vec![far.clone(), near.clone()], vec![near.clone(), far.clone()]] {
            let near_index = if order[0].vertices[0].z == 500.0 { 0 } else { 1 };
            let b = rasterize(&order, &cam(), Shading::Geometry);
            let near_only = rasterize(&[near.clone()], &cam(), Shading::Geometry);
            for (i, id) in near_only.point_id.iter().enumerate() {
                if !id.is_background() {
                    assert_eq!(b.point_id[i].mesh(), near_index);
                }
            }
        }
    }

    #[test]
    fn visible_points_count_and_reprojection() {
        let m = triangle_mesh([[-30.0, -20.0, 600.0], [40.0, -25.0, 650.0], [0.0, 35.0, 620.0]]);
        let b = rasterize(&[m.clone()], &cam(), Shading::Geometry);
        let pts = visible_points(&b, &[m]);
        assert_eq!(pts.len(), b.covered_pixels());
        for (p, px) in pts {
            let q = cam().project(&p).unwrap();
            assert!(q.distance(&px) <= 0.5);
        }
    }

    #[test]
    fn behind_camera_not_drawn() {
        let m = triangle_mesh([[-50.0, -50.0, -700.0], [50.0, -50.0, -700.0], [0.0, 60.0, -700.0]]);
        assert_eq!(rasterize(&[m], &cam(), Shading::Geometry).covered_pixels(), 0);
    }

    #[test]
    fn roi_arithmetic() {
        let bbox = Bbox {
            x0: 100,
            y0: 50,
            x1: 120,
            y1: 60,
        };
        let r = Roi::around(bbox, 10, 640, 480);
        assert_eq!((r.x0, r.y0, r.x1(), r.y1()), (90, 40, 130, 70));
        let edge = Bbox {
            x0: 3,
            y0: 470,
            x1: 630,
            y1: 479,
        };
        let r = Roi::around(edge, 10, 640, 480);
        assert_eq!((r.x0, r.y0, r.x1(), r.y1()), (0, 460, 639, 479));
    }

    #[test]
    fn reset_clears_drawn_region() {
        let m = triangle_mesh([[-50.0, -50.0, 700.0], [50.0, -50.0, 700.0], [0.0, 60.0, 700.0]]);
        let mut b = RenderBuffers::new(640, 480, true);
        let mut r = Rasterizer::default();
        r.draw(&mut b, &[m], &cam(), Shading::Flat([10, 20, 30]));
        assert!(b.covered_pixels() > 0);
        b.reset(640, 480, true);
        assert_eq!(b, RenderBuffers::new(640, 480, true));
    }

    #[test]
    fn point_id_round_trip() {
        let id = PointId::new(3, 123_456, 0.25, 0.5);
        assert_eq!(id.mesh(), 3);
        assert_eq!(id.triangle(), 123_456);
        let [a, b, c] = id.barycentrics();
        assert!((a - 0.25).abs() < 1e-4 && (b - 0.25).abs() < 1e-4 && (c - 0.5).abs() < 1e-4);
    }
}
