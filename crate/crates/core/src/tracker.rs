//! Frame-to-frame tracking: crop around the last solution, score
//! hypotheses by stereo colour consistency, search with PSO warm-started
//! at the last solution.

use std::cell::RefCell;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::camera::StereoRig;
use crate::distinct::AngleMode;
use crate::objective::{self, ColorNorm, MapParams, ObjectiveContext, ObjectiveParams, Scratch};
use crate::pso::{self, SearchSpace, SwarmConfig};
use crate::render::{model_roi, Roi, StereoRoi};
use crate::scene::{SceneState, ROOT_DIMS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub particles: usize,
    pub generations: usize,
    pub c1: f64,
    pub c2: f64,
    pub seed: u64,
    /// Search window half-widths around the previous solution.
    pub pos_range_mm: f64,
    pub rot_range_deg: f64,
    pub angle_range_deg: f64,
    pub beta: f64,
    /// Distinctiveness threshold.
    pub wt: f64,
    /// Occlusion tolerance (mm).
    pub r: f64,
    pub window: usize,
    pub angle_mode: AngleMode,
    pub color_norm: ColorNorm,
    /// ROI margin in pixels at 640 px image width, scaled with the width.
    pub roi_margin: u32,
    /// Zero distinctiveness outside supplied foreground masks.
    pub use_masks: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        let swarm = SwarmConfig::default();
        TrackerConfig {
            particles: swarm.particles,
            generations: swarm.generations,
            c1: swarm.c1,
            c2: swarm.c2,
            seed: swarm.seed,
            pos_range_mm: 40.0,
            rot_range_deg: 10.0,
            angle_range_deg: 10.0,
            beta: 100.0,
            wt: 0.1,
            r: 3.0,
            window: 3,
            angle_mode: AngleMode::Ratio,
            color_norm: ColorNorm::Euclidean,
            roi_margin: 40,
            use_masks: false,
        }
    }
}

impl TrackerConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: TrackerConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn swarm(&self) -> SwarmConfig {
        SwarmConfig {
            particles: self.particles,
            generations: self.generations,
            c1: self.c1,
            c2: self.c2,
            seed: self.seed,
            ..SwarmConfig::default()
        }
    }

    pub fn objective(&self) -> ObjectiveParams {
        ObjectiveParams {
            beta: self.beta,
            occlusion_range: self.r,
            color_norm: self.color_norm,
            ..ObjectiveParams::default()
        }
    }

    pub fn maps(&self) -> MapParams {
        MapParams {
            threshold: self.wt,
            window: self.window,
            angle: self.angle_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.swarm().validate()?;
        let ranges = [self.pos_range_mm, self.rot_range_deg, self.angle_range_deg];
        if ranges.iter().any(|r| !(*r >= 0.0)) || self.rot_range_deg > 180.0 {
            return Err(Error::BadConfig(format!("bad search ranges {ranges:?}")));
        }
        if !(self.beta > 0.0) || !(self.r > 0.0) || !(0.0..1.0).contains(&self.wt) {
            return Err(Error::BadConfig(format!(
                "need beta > 0, r > 0 and 0 <= wt < 1, got {}, {}, {}",
                self.beta, self.r, self.wt
            )));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::BadConfig(format!("window must be odd and >= 3, got {}", self.window)));
        }
        Ok(())
    }

    /// The ROI margin for a rig's image width.
    pub fn margin_for(&self, rig: &StereoRig) -> u32 {
        (self.roi_margin as f64 * rig.resolution().0 as f64 / 640.0).round() as u32
    }

    /// The search window around `state`. Quaternion components get
    /// sin(rot_range / 2), the largest component change a rotation of that
    /// angle can cause.
    pub fn search_space(&self, state: &SceneState) -> SearchSpace {
        let flat = state.flatten();
        let quat = (self.rot_range_deg.to_radians() / 2.0).sin();
        let angle = self.angle_range_deg.to_radians();
        let mut range = Vec::with_capacity(flat.len());
        for e in &state.entries {
            range.extend([self.pos_range_mm; 3]);
            range.extend([quat; 4]);
            range.extend(std::iter::repeat_n(angle, e.model.dims() - ROOT_DIMS));
        }
        // a center pushed outside its bounds (e.g. by a hand-written initial
        // pose) would make the space invalid; clamp it in
        let mut center = flat.clone();
        center.clamp();
        SearchSpace {
            center: center.values,
            range,
            lower: flat.lower,
            upper: flat.upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub scene: SceneState,
    pub score: f64,
    /// Frames processed so far.
    pub frame: usize,
    pub roi: StereoRoi,
    pub history: Vec<SceneState>,
}

/// A stereo pair with optional foreground masks.
#[derive(Debug, Clone, Copy)]
pub struct StereoFrame<'a> {
    pub left: &'a RgbImage,
    pub right: &'a RgbImage,
    pub masks: Option<(&'a GrayImage, &'a GrayImage)>,
}

impl<'a> StereoFrame<'a> {
    pub fn new(left: &'a RgbImage, right: &'a RgbImage) -> Self {
        StereoFrame {
            left,
            right,
            masks: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tracker {
    pub rig: StereoRig,
    pub config: TrackerConfig,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

impl Tracker {
    pub fn new(rig: StereoRig, config: TrackerConfig) -> Result<Self> {
        rig.validate()?;
        config.validate()?;
        Ok(Tracker { rig, config })
    }

    /// Starts tracking from a known pose.
    pub fn init(&self, initial: SceneState) -> Result<TrackerState> {
        let roi = model_roi(&initial, &self.rig, self.config.margin_for(&self.rig))?;
        Ok(TrackerState {
            scene: initial,
            score: f64::NAN,
            frame: 0,
            roi,
            history: Vec::new(),
        })
    }

    /// The scoring context for `frame` inside `roi`.
    pub fn context(&self, frame: &StereoFrame<'_>, roi: StereoRoi) -> Result<ObjectiveContext> {
        let mut ctx = ObjectiveContext::from_frames(
            &self.rig,
            (frame.left, frame.right),
            roi,
            self.config.maps(),
            self.config.objective(),
        )?;
        if self.config.use_masks {
            if let Some((ml, mr)) = frame.masks {
                ctx.apply_masks(ml, mr);
            }
        }
        Ok(ctx)
    }

    /// Best hypothesis near `previous` for the given crops.
    pub fn solve(&self, previous: &SceneState, ctx: &ObjectiveContext, seed: u64) -> Result<(SceneState, f64)> {
        let space = self.config.search_space(previous);
        let swarm = self.config.swarm().with_seed(seed);
        let best = pso::try_optimize(
            |x| {
                let hypothesis = previous.unflatten(x)?;
                Ok::<_, Error>(SCRATCH.with(|s| objective::score_with(&hypothesis, ctx, &mut s.borrow_mut())))
            },
            &space,
            &swarm,
        )?;
        Ok((previous.unflatten(&best.position)?, best.score))
    }

    /// Tracks one frame. On error the caller keeps the previous state.
    pub fn track_frame(&self, state: &TrackerState, frame: &StereoFrame<'_>) -> Result<TrackerState> {
        let res = self.rig.resolution();
        for img in [frame.left, frame.right] {
            if img.dimensions() != res {
                return Err(Error::ResolutionMismatch {
                    expected: res,
                    got: img.dimensions(),
                });
            }
        }
        let margin = self.config.margin_for(&self.rig);
        let ctx = self.context(frame, state.roi)?;
        let seed = frame_seed(self.config.seed, state.frame);
        let (mut scene, mut score) = self.solve(&state.scene, &ctx, seed)?;
        let footprint = model_roi(&scene, &self.rig, 0)?;
        if touches_border(&footprint, &state.roi, res) {
            let wide = model_roi(&state.scene, &self.rig, 2 * margin)?;
            let ctx = self.context(frame, wide)?;
            (scene, score) = self.solve(&state.scene, &ctx, seed)?;
        }
        let roi = model_roi(&scene, &self.rig, margin)?;
        let mut history = state.history.clone();
        history.push(scene.clone());
        Ok(TrackerState {
            scene,
            score,
            frame: state.frame + 1,
            roi,
            history,
        })
    }
}

/// Per-frame PSO seed so that consecutive frames do not reuse one stream.
fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (frame as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Whether a footprint reaches an ROI edge that is not also the image edge.
fn touches_border(footprint: &StereoRoi, roi: &StereoRoi, (w, h): (u32, u32)) -> bool {
    let side = |f: &Roi, r: &Roi| {
        (f.x0 <= r.x0 && r.x0 > 0)
            || (f.y0 <= r.y0 && r.y0 > 0)
            || (f.x1() >= r.x1() && r.x1() + 1 < w)
            || (f.y1() >= r.y1() && r.y1() + 1 < h)
    };
    side(&footprint.left, &roi.left) || side(&footprint.right, &roi.right)
}
