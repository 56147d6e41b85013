//! Calibrated pinhole stereo geometry.
//!
//! The world frame is the left camera frame: a loaded rig normally has the
//! left camera at identity and the right camera expressed relative to it.
//! All lengths are millimetres, all image coordinates pixels, with pixel
//! `(i, j)` centred on the continuous coordinate `(i, j)`.

use std::path::Path;

use nalgebra::{Point3 as NPoint3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A world-frame point in millimetres.
pub type Point3 = NPoint3<f64>;

/// Continuous image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Pixel { u, v }
    }

    /// Index of the pixel whose centre is nearest, if it lies inside a
    /// `width x height` image.
    #[inline]
    pub fn nearest(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        let x = self.u + 0.5;
        let y = self.v + 0.5;
        // truncation is floor once the range check has passed
        if x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64 {
            Some((x as usize, y as usize))
        } else {
            None
        }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// An undistorted pinhole camera with its world-to-camera pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World to camera rotation.
    pub rotation: UnitQuaternion<f64>,
    /// World to camera translation (mm).
    pub translation: Vector3<f64>,
    pub width: u32,
    pub height: u32,
}

impl PinholeCamera {
    /// A camera at the world origin looking down +z.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        PinholeCamera {
            fx,
            fy,
            cx,
            cy,
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            width,
            height,
        }
    }

    pub fn with_pose(mut self, rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        self.rotation = rotation;
        self.translation = translation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .chain(self.translation.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation("non-finite camera parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Validation(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        let norm = self.rotation.quaternion().norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "rotation quaternion norm {norm} is not 1"
            )));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(Error::Validation(format!(
                "cx={} outside (0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::Validation(format!(
                "cy={} outside (0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    /// World point expressed in the camera frame.
    #[inline]
    pub fn to_camera(&self, p: &Point3) -> Vector3<f64> {
        self.rotation * p.coords + self.translation
    }

    /// Camera-frame point back in the world frame.
    #[inline]
    pub fn to_world(&self, pc: &Vector3<f64>) -> Point3 {
        Point3::from(self.rotation.inverse() * (pc - self.translation))
    }

    /// Projects a camera-frame point; `None` when its depth is not positive.
    #[inline]
    pub fn project_camera_frame(&self, pc: &Vector3<f64>) -> Option<Pixel> {
        if pc.z <= 0.0 {
            return None;
        }
        Some(Pixel {
            u: self.cx + self.fx * pc.x / pc.z,
            v: self.cy + self.fy * pc.y / pc.z,
        })
    }

    /// Projects a world point; `None` when it is not in front of the camera.
    #[inline]
    pub fn project(&self, p: &Point3) -> Option<Pixel> {
        self.project_camera_frame(&self.to_camera(p))
    }

    /// Camera-frame point at depth `z` along the ray through `px`.
    #[inline]
    pub fn unproject_camera_frame(&self, px: &Pixel, z: f64) -> Vector3<f64> {
        Vector3::new((px.u - self.cx) / self.fx * z, (px.v - self.cy) / self.fy * z, z)
    }

    /// Optical centre in world coordinates.
    pub fn center(&self) -> Point3 {
        Point3::from(-(self.rotation.inverse() * self.translation))
    }

    /// World-frame unit ray direction through a pixel.
    pub fn ray_direction(&self, px: &Pixel) -> Vector3<f64> {
        let d = Vector3::new((px.u - self.cx) / self.fx, (px.v - self.cy) / self.fy, 1.0);
        (self.rotation.inverse() * d).normalize()
    }

    /// The same camera restricted to a sub-window with top-left corner
    /// `(x0, y0)`. Pixel `(i, j)` of the crop is pixel `(x0 + i, y0 + j)` of
    /// the full image. The principal point may fall outside the crop.
    pub fn crop(&self, x0: u32, y0: u32, width: u32, height: u32) -> PinholeCamera {
        PinholeCamera {
            cx: self.cx - x0 as f64,
            cy: self.cy - y0 as f64,
            width,
            height,
            ..self.clone()
        }
    }
}

/// Two calibrated cameras of identical resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoRig {
    pub left: PinholeCamera,
    pub right: PinholeCamera,
}

impl StereoRig {
    pub fn new(left: PinholeCamera, right: PinholeCamera) -> Result<Self> {
        let rig = StereoRig { left, right };
        rig.validate()?;
        Ok(rig)
    }

    /// A rectified-style rig: left camera at the world origin, right camera
    /// displaced by `baseline` mm along +x, both with the same intrinsics.
    pub fn parallel(fx: f64, cx: f64, cy: f64, width: u32, height: u32, baseline: f64) -> Result<Self> {
        let left = PinholeCamera::new(fx, fx, cx, cy, width, height);
        let right = left
            .clone()
            .with_pose(UnitQuaternion::identity(), Vector3::new(-baseline, 0.0, 0.0));
        Self::new(left, right)
    }

    pub fn validate(&self) -> Result<()> {
        self.left.validate()?;
        self.right.validate()?;
        if (self.left.width, self.left.height) != (self.right.width, self.right.height) {
            return Err(Error::Validation(format!(
                "camera resolutions differ: {}x{} vs {}x{}",
                self.left.width, self.left.height, self.right.width, self.right.height
            )));
        }
        if self.baseline() <= 0.0 {
            return Err(Error::Validation("stereo baseline must be positive".into()));
        }
        Ok(())
    }

    /// Distance between the two optical centres (mm).
    pub fn baseline(&self) -> f64 {
        (self.left.center() - self.right.center()).norm()
    }

    pub fn resolution(&self) -> (u32, u32) {
        (self.left.width, self.left.height)
    }

    pub fn view(&self, view: View) -> &PinholeCamera {
        match view {
            View::Left => &self.left,
            View::Right => &self.right,
        }
    }
}

/// One of the two stereo views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum View {
    Left,
    Right,
}

impl View {
    pub fn other(self) -> View {
        match self {
            View::Left => View::Right,
            View::Right => View::Left,
        }
    }
}

/// Midpoint of the shortest segment between the back-projected rays of `pl`
/// in the left camera and `pr` in the right camera.
pub fn triangulate(pl: &Pixel, pr: &Pixel, rig: &StereoRig) -> Result<Point3> {
    let o1 = rig.left.center();
    let o2 = rig.right.center();
    let d1 = rig.left.ray_direction(pl);
    let d2 = rig.right.ray_direction(pr);
    let w = o1 - o2;
    let b = d1.dot(&d2);
    let denom = 1.0 - b * b;
    if denom < 1e-14 {
        return Err(Error::ParallelRays);
    }
    let d = d1.dot(&w);
    let e = d2.dot(&w);
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    let p1 = o1 + d1 * s;
    let p2 = o2 + d2 * t;
    Ok(Point3::from((p1.coords + p2.coords) * 0.5))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    /// w, x, y, z
    quat: [f64; 4],
    trans: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    left: CameraFile,
    right: CameraFile,
}

impl From<&CameraFile> for PinholeCamera {
    fn from(c: &CameraFile) -> Self {
        let [w, x, y, z] = c.quat;
        PinholeCamera {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            // validated afterwards; keep the stored values bit-exact
            rotation: UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z)),
            translation: Vector3::from(c.trans),
            width: c.width,
            height: c.height,
        }
    }
}

impl From<&PinholeCamera> for CameraFile {
    fn from(c: &PinholeCamera) -> Self {
        let q = c.rotation.quaternion();
        CameraFile {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            quat: [q.w, q.i, q.j, q.k],
            trans: [c.translation.x, c.translation.y, c.translation.z],
        }
    }
}

/// Parses a calibration document (see `load_calibration`).
pub fn parse_calibration(text: &str) -> Result<StereoRig> {
    let file: CalibrationFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    StereoRig::new((&file.left).into(), (&file.right).into())
}

/// Loads a stereo calibration from a JSON file of the form
///
/// ```json
/// { "left":  { "fx": 600, "fy": 600, "cx": 319.5, "cy": 239.5,
///              "width": 640, "height": 480,
///              "quat": [1, 0, 0, 0], "trans": [0, 0, 0] },
///   "right": { ..., "trans": [-120, 0, 0] } }
/// ```
///
/// `quat` is the world-to-camera rotation, scalar first; `trans` is the
/// world-to-camera translation in mm.
pub fn load_calibration(path: impl AsRef<Path>) -> Result<StereoRig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calibration(&text)
}

pub fn calibration_to_json(rig: &StereoRig) -> String {
    let file = CalibrationFile {
        left: (&rig.left).into(),
        right: (&rig.right).into(),
    };
    serde_json::to_string_pretty(&file).expect("calibration serializes")
}

pub fn save_calibration(rig: &StereoRig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, calibration_to_json(rig)).map_err(|e| Error::io(path, e))
}
