//! Stereo colour-consistency score of a scene hypothesis.
//!
//! The hypothesis is rendered into both ROI views. Every surface point seen
//! in one view is projected into the other and kept only if the other view
//! sees the same point there, i.e. its rendered surface point lies within
//! `r` mm. Each kept pair of pixels contributes
//!
//! ```text
//! s = min(C_l(p_l), C_r(p_r)) * exp(-beta * |I_l(p_l) - I_r(p_r)|)
//! ```
//!
//! with colours scaled to [0, 1] per channel and nearest-pixel sampling. Both
//! views are swept; a pixel pair found by both sweeps counts once.

use image::RgbImage;
use nalgebra::{Matrix3, Vector3};

use crate::camera::{PinholeCamera, Pixel, Point3, StereoRig, View};
use crate::distinct::{self, AngleMode, DistinctivenessMap, ScalarMap};
use crate::render::{depth_point, Rasterizer, RenderBuffers, Roi, Shading, StereoRoi};
use crate::scene::{PosedMesh, SceneState};
use crate::{Error, Result};

/// Distance between two RGB colours in [0, 1]^3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorNorm {
    #[default]
    Euclidean,
    L1,
}

impl ColorNorm {
    #[inline]
    pub fn distance(self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        let (d0, d1, d2) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
        match self {
            ColorNorm::Euclidean => (d0 * d0 + d1 * d1 + d2 * d2).sqrt(),
            ColorNorm::L1 => d0.abs() + d1.abs() + d2.abs(),
        }
    }
}

/// Tunables of the score.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ObjectiveParams {
    /// Steepness of the colour-similarity exponential.
    pub beta: f64,
    /// Occlusion tolerance (mm).
    pub occlusion_range: f64,
    pub color_norm: ColorNorm,
    /// Render with back-face culling. Exact for closed, outward-wound
    /// meshes, which all built-in models are.
    pub cull_back_faces: bool,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        ObjectiveParams {
            beta: 100.0,
            occlusion_range: 3.0,
            color_norm: ColorNorm::Euclidean,
            cull_back_faces: true,
        }
    }
}

/// How the distinctiveness maps are built from the ROI crops.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MapParams {
    pub threshold: f64,
    pub window: usize,
    pub angle: AngleMode,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams {
            threshold: 0.1,
            window: 3,
            angle: AngleMode::Ratio,
        }
    }
}

/// One view's ROI crop: camera, colours and distinctiveness.
#[derive(Debug, Clone)]
pub struct ViewData {
    pub roi: Roi,
    /// The full camera cropped to the ROI.
    pub camera: PinholeCamera,
    pub colors: Vec<[f64; 3]>,
    pub distinct: ScalarMap,
}

impl ViewData {
    pub fn new(full_camera: &PinholeCamera, image: &RgbImage, roi: Roi, distinct: ScalarMap) -> Result<ViewData> {
        let res = (full_camera.width, full_camera.height);
        if image.dimensions() != res {
            return Err(Error::ResolutionMismatch {
                expected: res,
                got: image.dimensions(),
            });
        }
        if roi.x1() >= res.0 || roi.y1() >= res.1 {
            return Err(Error::Validation(format!("ROI {roi:?} exceeds the image")));
        }
        if (distinct.width, distinct.height) != (roi.width as usize, roi.height as usize) {
            return Err(Error::ResolutionMismatch {
                expected: (roi.width, roi.height),
                got: (distinct.width as u32, distinct.height as u32),
            });
        }
        let mut colors = Vec::with_capacity((roi.width * roi.height) as usize);
        for y in roi.y0..=roi.y1() {
            for x in roi.x0..=roi.x1() {
                let p = image.get_pixel(x, y).0;
                colors.push(p.map(|c| c as f64 / 255.0));
            }
        }
        Ok(ViewData {
            roi,
            camera: roi.camera(full_camera),
            colors,
            distinct,
        })
    }

    #[inline]
    fn width(&self) -> usize {
        self.roi.width as usize
    }

    #[inline]
    fn height(&self) -> usize {
        self.roi.height as usize
    }

    /// Crop-local index of the pixel nearest to a full-frame coordinate.
    #[inline]
    fn index_of(&self, px: &Pixel) -> Option<usize> {
        let local = Pixel::new(px.u - self.roi.x0 as f64, px.v - self.roi.y0 as f64);
        local.nearest(self.width(), self.height()).map(|(x, y)| y * self.width() + x)
    }
}

/// Everything the score needs for one frame. Read-only once built, so one
/// context serves concurrent evaluations.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    pub rig: StereoRig,
    pub left: ViewData,
    pub right: ViewData,
    pub params: ObjectiveParams,
}

impl ObjectiveContext {
    pub fn new(rig: StereoRig, left: ViewData, right: ViewData, params: ObjectiveParams) -> Result<Self> {
        if !(params.beta > 0.0) || !(params.occlusion_range > 0.0) {
            return Err(Error::BadConfig(format!(
                "beta and occlusion range must be positive, got {} and {}",
                params.beta, params.occlusion_range
            )));
        }
        Ok(ObjectiveContext {
            rig,
            left,
            right,
            params,
        })
    }

    /// Crops both frames to their ROIs and computes the distinctiveness
    /// maps over the crops.
    pub fn from_frames(
        rig: &StereoRig,
        frames: (&RgbImage, &RgbImage),
        roi: StereoRoi,
        maps: MapParams,
        params: ObjectiveParams,
    ) -> Result<Self> {
        let view = |camera: &PinholeCamera, image: &RgbImage, roi: Roi| -> Result<(ViewData, DistinctivenessMap)> {
            let res = (camera.width, camera.height);
            if image.dimensions() != res {
                return Err(Error::ResolutionMismatch {
                    expected: res,
                    got: image.dimensions(),
                });
            }
            let crop = image::imageops::crop_imm(image, roi.x0, roi.y0, roi.width, roi.height).to_image();
            let map = distinct::distinctiveness_map(&crop, maps.window, maps.threshold, maps.angle)?;
            Ok((ViewData::new(camera, image, roi, map.c.clone())?, map))
        };
        let (left, _) = view(&rig.left, frames.0, roi.left)?;
        let (right, _) = view(&rig.right, frames.1, roi.right)?;
        Self::new(rig.clone(), left, right, params)
    }

    pub fn view(&self, view: View) -> &ViewData {
        match view {
            View::Left => &self.left,
            View::Right => &self.right,
        }
    }

    pub fn roi(&self) -> StereoRoi {
        StereoRoi {
            left: self.left.roi,
            right: self.right.roi,
        }
    }

    /// Zeroes distinctiveness outside per-view foreground masks (full-frame,
    /// non-zero = foreground).
    pub fn apply_masks(&mut self, left: &image::GrayImage, right: &image::GrayImage) {
        for (view, mask) in [(&mut self.left, left), (&mut self.right, right)] {
            let roi = view.roi;
            for y in 0..roi.height {
                for x in 0..roi.width {
                    if mask.get_pixel(roi.x0 + x, roi.y0 + y).0[0] == 0 {
                        view.distinct.data[(y * roi.width + x) as usize] = 0.0;
                    }
                }
            }
        }
    }
}

/// A model point seen by both views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub point: Point3,
    /// Full-frame left pixel.
    pub left: Pixel,
    /// Full-frame right pixel.
    pub right: Pixel,
    /// The view whose sweep found the point.
    pub source: View,
}

/// Reusable render targets for repeated evaluations on one thread.
#[derive(Debug, Default)]
pub struct Scratch {
    raster: Rasterizer,
    left: Option<RenderBuffers>,
    right: Option<RenderBuffers>,
    /// Per left crop pixel: `(stamp, right index)` of its kept partner.
    partner: Vec<(u32, u32)>,
    stamp: u32,
}

impl Scratch {
    fn render(&mut self, meshes: &[PosedMesh], ctx: &ObjectiveContext) {
        for (slot, view) in [(&mut self.left, &ctx.left), (&mut self.right, &ctx.right)] {
            let (w, h) = (view.width(), view.height());
            let buffers = slot.get_or_insert_with(|| RenderBuffers::new(w, h, false));
            buffers.reset(w, h, false);
            self.raster.cull_back_faces = ctx.params.cull_back_faces;
            self.raster.draw(buffers, meshes, &view.camera, Shading::Depth);
        }
        let n = ctx.left.width() * ctx.left.height();
        if self.partner.len() != n {
            self.partner = vec![(0, 0); n];
            self.stamp = 0;
        }
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.partner.fill((0, 0));
            self.stamp = 1;
        }
    }
}

/// Camera-to-camera transform between the two crop cameras.
struct Transfer<'a> {
    from: &'a ViewData,
    to: &'a ViewData,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    /// Reciprocal focal lengths of the source and target cameras.
    inv_from: (f64, f64),
    inv_to: (f64, f64),
}

impl<'a> Transfer<'a> {
    fn new(from: &'a ViewData, to: &'a ViewData) -> Self {
        let (ca, cb) = (&from.camera, &to.camera);
        let rel = cb.rotation * ca.rotation.inverse();
        Transfer {
            from,
            to,
            rotation: rel.to_rotation_matrix().into_inner(),
            translation: cb.translation - rel * ca.translation,
            inv_from: (1.0 / ca.fx, 1.0 / ca.fy),
            inv_to: (1.0 / cb.fx, 1.0 / cb.fy),
        }
    }

    /// Follows the surface point seen at source pixel `(x, y)` into the
    /// other view. Returns the other view's crop index and continuous
    /// crop-local pixel when that view sees the same point within `range`.
    #[inline]
    fn follow(&self, x: usize, y: usize, depth: f32, other: &RenderBuffers, range2: f64) -> Option<(usize, Pixel)> {
        let a = &self.from.camera;
        let z = depth as f64;
        let pa = Vector3::new((x as f64 - a.cx) * self.inv_from.0 * z, (y as f64 - a.cy) * self.inv_from.1 * z, z);
        let pb = self.rotation * pa + self.translation;
        let b = &self.to.camera;
        if pb.z <= 0.0 {
            return None;
        }
        let iz = 1.0 / pb.z;
        let px = Pixel::new(b.cx + b.fx * pb.x * iz, b.cy + b.fy * pb.y * iz);
        let (xb, yb) = px.nearest(other.width, other.height)?;
        let idx = yb * other.width + xb;
        let zb = other.depth[idx];
        if !zb.is_finite() {
            return None;
        }
        let zb = zb as f64;
        let qb = Vector3::new((xb as f64 - b.cx) * self.inv_to.0 * zb, (yb as f64 - b.cy) * self.inv_to.1 * zb, zb);
        ((qb - pb).norm_squared() <= range2).then_some((idx, px))
    }
}

/// Colour consistency of one correspondence.
pub fn point_score(corr: &Correspondence, ctx: &ObjectiveContext) -> f64 {
    let (Some(il), Some(ir)) = (ctx.left.index_of(&corr.left), ctx.right.index_of(&corr.right)) else {
        return 0.0;
    };
    pair_score(il, ir, ctx)
}

#[inline]
fn pair_score(il: usize, ir: usize, ctx: &ObjectiveContext) -> f64 {
    let c = ctx.left.distinct.data[il].min(ctx.right.distinct.data[ir]);
    if c == 0.0 {
        return 0.0;
    }
    let dist = ctx.params.color_norm.distance(&ctx.left.colors[il], &ctx.right.colors[ir]);
    c * (-ctx.params.beta * dist).exp()
}

/// Model points of the hypothesis visible in both views.
pub fn mutual_correspondences(state: &SceneState, ctx: &ObjectiveContext) -> Vec<Correspondence> {
    let mut scratch = Scratch::default();
    let mut out = Vec::new();
    sweep(state, ctx, &mut scratch, false, |c| out.push(c.expand(ctx)));
    out
}

/// Total colour consistency of a hypothesis.
pub fn score(state: &SceneState, ctx: &ObjectiveContext) -> f64 {
    score_with(state, ctx, &mut Scratch::default())
}

/// [`score`] reusing caller-owned render buffers.
pub fn score_with(state: &SceneState, ctx: &ObjectiveContext, scratch: &mut Scratch) -> f64 {
    let mut total = 0.0;
    // pixels with zero distinctiveness contribute exactly zero, so they
    // can be skipped before the transfer
    sweep(state, ctx, scratch, true, |c| total += pair_score(c.left_index, c.right_index, ctx));
    total
}

/// A kept pixel pair in crop-local terms.
struct Pair {
    left_index: usize,
    right_index: usize,
    source: View,
    source_depth: f32,
    /// Continuous crop-local pixel in the non-source view.
    projected: Pixel,
}

impl Pair {
    fn expand(&self, ctx: &ObjectiveContext) -> Correspondence {
        let (src, other) = match self.source {
            View::Left => (&ctx.left, &ctx.right),
            View::Right => (&ctx.right, &ctx.left),
        };
        let src_index = match self.source {
            View::Left => self.left_index,
            View::Right => self.right_index,
        };
        let (x, y) = (src_index % src.width(), src_index / src.width());
        let point = depth_point(&src.camera, x, y, self.source_depth);
        let at_src = Pixel::new((x as u32 + src.roi.x0) as f64, (y as u32 + src.roi.y0) as f64);
        let at_other = Pixel::new(
            self.projected.u + other.roi.x0 as f64,
            self.projected.v + other.roi.y0 as f64,
        );
        let (left, right) = match self.source {
            View::Left => (at_src, at_other),
            View::Right => (at_other, at_src),
        };
        Correspondence {
            point,
            left,
            right,
            source: self.source,
        }
    }
}

/// Visits kept pairs in order: the left sweep in raster order, then the
/// right sweep. With `skip_flat`, pixels whose own distinctiveness is zero
/// are not followed; a pair skipped by the left sweep may then come up in
/// the right sweep, but it scores zero either way.
fn sweep(
    state: &SceneState,
    ctx: &ObjectiveContext,
    scratch: &mut Scratch,
    skip_flat: bool,
    mut visit: impl FnMut(&Pair),
) {
    let meshes = state.posed_meshes();
    scratch.render(&meshes, ctx);
    let range2 = ctx.params.occlusion_range * ctx.params.occlusion_range;
    let stamp = scratch.stamp;
    let (lbuf, rbuf) = (scratch.left.as_ref().unwrap(), scratch.right.as_ref().unwrap());

    let l2r = Transfer::new(&ctx.left, &ctx.right);
    if let Some(region) = lbuf.drawn_region() {
        for y in region.y0..=region.y1 {
            for x in region.x0..=region.x1 {
                let il = y * lbuf.width + x;
                let depth = lbuf.depth[il];
                if !depth.is_finite() || (skip_flat && ctx.left.distinct.data[il] == 0.0) {
                    continue;
                }
                if let Some((ir, projected)) = l2r.follow(x, y, depth, rbuf, range2) {
                    scratch.partner[il] = (stamp, ir as u32);
                    visit(&Pair {
                        left_index: il,
                        right_index: ir,
                        source: View::Left,
                        source_depth: depth,
                        projected,
                    });
                }
            }
        }
    }

    let r2l = Transfer::new(&ctx.right, &ctx.left);
    if let Some(region) = rbuf.drawn_region() {
        for y in region.y0..=region.y1 {
            for x in region.x0..=region.x1 {
                let ir = y * rbuf.width + x;
                let depth = rbuf.depth[ir];
                if !depth.is_finite() || (skip_flat && ctx.right.distinct.data[ir] == 0.0) {
                    continue;
                }
                if let Some((il, projected)) = r2l.follow(x, y, depth, lbuf, range2) {
                    if scratch.partner[il] == (stamp, ir as u32) {
                        continue;
                    }
                    visit(&Pair {
                        left_index: il,
                        right_index: ir,
                        source: View::Right,
                        source_depth: depth,
                        projected,
                    });
                }
            }
        }
    }
}

/// Per-correspondence debug table with a header row.
pub fn correspondences_csv(corrs: &[Correspondence], ctx: &ObjectiveContext) -> String {
    let mut out = String::from("x,y,z,ul,vl,ur,vr,c_left,c_right,color_distance,s,source\n");
    for c in corrs {
        let (il, ir) = (ctx.left.index_of(&c.left), ctx.right.index_of(&c.right));
        let (cl, cr, dist) = match (il, ir) {
            (Some(il), Some(ir)) => (
                ctx.left.distinct.data[il],
                ctx.right.distinct.data[ir],
                ctx.params.color_norm.distance(&ctx.left.colors[il], &ctx.right.colors[ir]),
            ),
            _ => (f64::NAN, f64::NAN, f64::NAN),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            c.point.x,
            c.point.y,
            c.point.z,
            c.left.u,
            c.left.v,
            c.right.u,
            c.right.v,
            cl,
            cr,
            dist,
            point_score(c, ctx),
            match c.source {
                View::Left => "left",
                View::Right => "right",
            }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat_ctx(cl: f64, cr: f64, color_l: [u8; 3], color_r: [u8; 3], beta: f64) -> ObjectiveContext {
        let rig = StereoRig::parallel(100.0, 15.5, 15.5, 32, 32, 50.0).unwrap();
        let roi = Roi::full(32, 32);
        let il = RgbImage::from_pixel(32, 32, image::Rgb(color_l));
        let ir = RgbImage::from_pixel(32, 32, image::Rgb(color_r));
        let map = |v: f64| ScalarMap::from_fn(32, 32, |_, _| v);
        let left = ViewData::new(&rig.left, &il, roi, map(cl)).unwrap();
        let right = ViewData::new(&rig.right, &ir, roi, map(cr)).unwrap();
        ObjectiveContext::new(
            rig,
            left,
            right,
            ObjectiveParams {
                beta,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn corr() -> Correspondence {
        Correspondence {
            point: Point3::new(0.0, 0.0, 500.0),
            left: Pixel::new(10.2, 11.0),
            right: Pixel::new(3.0, 11.4),
            source: View::Left,
        }
    }

    #[test]
    fn identical_colours_take_the_min() {
        let ctx = flat_ctx(0.4, 0.6, [90, 40, 200], [90, 40, 200], 100.0);
        assert_abs_diff_eq!(point_score(&corr(), &ctx), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn zero_distinctiveness_annihilates() {
        let ctx = flat_ctx(0.0, 0.6, [90, 40, 200], [90, 40, 200], 100.0);
        assert_eq!(point_score(&corr(), &ctx), 0.0);
    }

    #[test]
    fn colour_difference_decays() {
        // 0.02 difference in one channel is not representable in 8 bits, so
        // use 51/255 = 0.2 with beta = 10: exp(-2)
        let ctx = flat_ctx(1.0, 1.0, [100, 100, 100], [151, 100, 100], 10.0);
        assert_abs_diff_eq!(point_score(&corr(), &ctx), (-2.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn empty_scene_scores_zero() {
        let ctx = flat_ctx(0.5, 0.5, [1, 2, 3], [1, 2, 3], 100.0);
        let state = SceneState::new(vec![]);
        assert!(mutual_correspondences(&state, &ctx).is_empty());
        assert_eq!(score(&state, &ctx), 0.0);
    }

    #[test]
    fn rejects_nonpositive_beta() {
        let ctx = flat_ctx(0.5, 0.5, [1, 2, 3], [1, 2, 3], 100.0);
        let r = ObjectiveContext::new(
            ctx.rig.clone(),
            ctx.left.clone(),
            ctx.right.clone(),
            ObjectiveParams {
                beta: 0.0,
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::BadConfig(_))));
    }
}
