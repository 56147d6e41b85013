//! Synthetic stereo sequences: generation and the on-disk layout.
//!
//! A sequence directory holds `L_000000.png`, `R_000000.png`, ... for every
//! frame, `calib.json`, `scene.json` (the tracked models), and optionally
//! `gt.csv` with one flat scene vector per frame.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use image::RgbImage;
use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::motion::{random_script, MotionLimits, MotionScript};
use crate::camera::{self, StereoRig};
use crate::imageio;
use crate::render::{synthesize_frame, texture};
use crate::scene::{self, hand, object, Handedness, KinematicModel, Pose, SceneEntry, SceneState};
use crate::{Error, Result};

/// One model of a scene description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    /// The built-in hand.
    Hand { handedness: Handedness },
    /// A box with the given edge lengths (mm).
    Box { size: [f64; 3] },
    /// A model file, relative to the scene file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub models: Vec<ModelSpec>,
}

impl SceneSpec {
    pub fn build(&self, base: &Path) -> Result<Vec<Arc<KinematicModel>>> {
        self.models
            .iter()
            .map(|m| {
                Ok(Arc::new(match m {
                    ModelSpec::Hand {
                        handedness: Handedness::Left,
                    } => hand::builtin_right_hand().mirror(),
                    ModelSpec::Hand { .. } => hand::builtin_right_hand(),
                    ModelSpec::Box { size } => object::box_model(size[0], size[1], size[2], 10.0),
                    ModelSpec::File { path } => scene::load_model(base.join(path))?,
                }))
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene specs serialize")
    }
}

/// The three benchmark scene types.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    SingleHand,
    HandObject,
    TwoHands,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-hand" => Ok(Scenario::SingleHand),
            "hand-object" => Ok(Scenario::HandObject),
            "two-hands" => Ok(Scenario::TwoHands),
            other => Err(Error::Parse(format!(
                "unknown scenario {other:?}; expected single-hand, hand-object or two-hands"
            ))),
        }
    }
}

impl Scenario {
    pub fn scene_spec(self) -> SceneSpec {
        let right = ModelSpec::Hand {
            handedness: Handedness::Right,
        };
        let models = match self {
            Scenario::SingleHand => vec![right],
            Scenario::HandObject => vec![right, ModelSpec::Box { size: [60.0, 80.0, 50.0] }],
            Scenario::TwoHands => vec![
                right,
                ModelSpec::Hand {
                    handedness: Handedness::Left,
                },
            ],
        };
        SceneSpec { models }
    }

    /// Starting poses in front of a rig whose cameras sit at x = 0 and
    /// x = baseline, looking down +z with y pointing down the image.
    pub fn initial_state(self, models: &[Arc<KinematicModel>], baseline: f64) -> SceneState {
        let mid = baseline / 2.0;
        // fingers up the image, palm away from the cameras, slight tilt
        let upright = UnitQuaternion::from_euler_angles(0.15, 0.1, std::f64::consts::PI);
        let relaxed: Vec<f64> = models[0].dofs.iter().map(|d| d.min + 0.2 * (d.max - d.min)).collect();
        let hand_pose = |x: f64| Pose::new(Vector3::new(x, 60.0, 650.0), upright, relaxed.clone());
        let poses = match self {
            Scenario::SingleHand => vec![hand_pose(mid)],
            Scenario::HandObject => vec![
                hand_pose(mid - 40.0),
                Pose::new(
                    Vector3::new(mid + 80.0, 0.0, 630.0),
                    UnitQuaternion::from_euler_angles(0.3, 0.5, 0.2),
                    vec![],
                ),
            ],
            Scenario::TwoHands => {
                let left = hand_pose(-(mid + 110.0)).mirrored();
                vec![hand_pose(mid - 110.0), left]
            }
        };
        SceneState::new(
            models
                .iter()
                .zip(poses)
                .map(|(m, pose)| SceneEntry {
                    model: Arc::clone(m),
                    pose,
                })
                .collect(),
        )
    }
}

/// The 640x480 benchmark rig: 600 px focal length, 120 mm baseline.
pub fn default_rig() -> StereoRig {
    StereoRig::parallel(600.0, 319.5, 239.5, 640, 480, 120.0).expect("valid rig")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub scenario: Scenario,
    pub frames: usize,
    pub seed: u64,
    /// Feature size of the surface texture (mm).
    pub texture_scale: f64,
    /// Flat colours on a flat background instead of textures.
    pub untextured: bool,
    pub limits: MotionLimits,
}

impl GenerateOptions {
    pub fn new(scenario: Scenario, frames: usize, seed: u64) -> Self {
        GenerateOptions {
            scenario,
            frames,
            seed,
            texture_scale: 10.0,
            untextured: false,
            limits: MotionLimits::default(),
        }
    }
}

/// A sequence held in memory.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub rig: StereoRig,
    pub spec: SceneSpec,
    pub script: MotionScript,
    pub truth: Vec<SceneState>,
    pub frames: Vec<(RgbImage, RgbImage)>,
}

/// Renders a scenario with a random script.
pub fn synthesize(options: &GenerateOptions, rig: &StereoRig) -> Result<SyntheticSequence> {
    let spec = options.scenario.scene_spec();
    let models = spec.build(Path::new("."))?;
    let start = options.scenario.initial_state(&models, rig.baseline());
    let script = random_script(&start, options.frames, options.seed, options.limits);
    render_script(rig, spec, &start, script, options)
}

/// Renders an explicit script.
pub fn render_script(
    rig: &StereoRig,
    spec: SceneSpec,
    template: &SceneState,
    script: MotionScript,
    options: &GenerateOptions,
) -> Result<SyntheticSequence> {
    let truth = script.states(template)?;
    let textures: Vec<Vec<[u8; 3]>> = template
        .entries
        .iter()
        .enumerate()
        .map(|(k, e)| {
            if options.untextured {
                texture::uniform_texture(&e.model, [200, 150, 120])
            } else {
                texture::vertex_texture(&e.model, options.seed.wrapping_add(1000 + k as u64), options.texture_scale)
            }
        })
        .collect();
    let slices: Vec<&[[u8; 3]]> = textures.iter().map(|t| t.as_slice()).collect();
    let (bl, br) = if options.untextured {
        texture::uniform_background(rig, [60, 60, 60])
    } else {
        texture::plane_background(rig, options.seed.wrapping_add(7), 1500.0, 25.0)
    };
    let frames = truth
        .iter()
        .map(|s| synthesize_frame(s, rig, (&bl, &br), &slices).map(|f| (f.left, f.right)))
        .collect::<Result<_>>()?;
    Ok(SyntheticSequence {
        rig: rig.clone(),
        spec,
        script,
        truth,
        frames,
    })
}

/// Anything that yields stereo frames with an initial pose.
pub trait FrameSource: Sync {
    fn rig(&self) -> &StereoRig;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// The pose tracking starts from (frame 0's truth).
    fn initial(&self) -> Result<SceneState>;
    fn frame(&self, i: usize) -> Result<(Cow<'_, RgbImage>, Cow<'_, RgbImage>)>;
    fn truth(&self, i: usize) -> Option<SceneState>;
}

impl FrameSource for SyntheticSequence {
    fn rig(&self) -> &StereoRig {
        &self.rig
    }

    fn len(&self) -> usize {
        self.frames.len()
    }

    fn initial(&self) -> Result<SceneState> {
        self.truth.first().cloned().ok_or(Error::Validation("empty sequence".into()))
    }

    fn frame(&self, i: usize) -> Result<(Cow<'_, RgbImage>, Cow<'_, RgbImage>)> {
        let (l, r) = self
            .frames
            .get(i)
            .ok_or_else(|| Error::Validation(format!("no frame {i}")))?;
        Ok((Cow::Borrowed(l), Cow::Borrowed(r)))
    }

    fn truth(&self, i: usize) -> Option<SceneState> {
        self.truth.get(i).cloned()
    }
}

pub fn frame_paths(dir: &Path, i: usize) -> (PathBuf, PathBuf) {
    (dir.join(format!("L_{i:06}.png")), dir.join(format!("R_{i:06}.png")))
}

/// Flat scene vectors as CSV with a `frame,p0,p1,...` header.
pub fn poses_csv(states: &[SceneState]) -> String {
    let n = states.first().map_or(0, |s| s.dims());
    let mut out = String::from("frame");
    for k in 0..n {
        write!(out, ",p{k}").unwrap();
    }
    out.push('\n');
    for (i, s) in states.iter().enumerate() {
        write!(out, "{i}").unwrap();
        for v in s.flatten().values {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses [`poses_csv`] output into `(frame, values)` rows.
pub fn parse_poses_csv(text: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty pose table".into()))?;
    let cols = header.split(',').count();
    if !header.starts_with("frame") {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    lines
        .enumerate()
        .map(|(row, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(Error::Parse(format!(
                    "row {}: {} fields, expected {cols}",
                    row + 1,
                    fields.len()
                )));
            }
            let frame = fields[0]
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
            let values = fields[1..]
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
            Ok((frame, values))
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl SyntheticSequence {
    /// Writes the sequence directory (created if missing).
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, (l, r)) in self.frames.iter().enumerate() {
            let (pl, pr) = frame_paths(dir, i);
            imageio::write_png(l, &pl)?;
            imageio::write_png(r, &pr)?;
        }
        camera::save_calibration(&self.rig, dir.join("calib.json"))?;
        write_text(&dir.join("scene.json"), &self.spec.to_json())?;
        write_text(&dir.join("motion.json"), &self.script.to_json())?;
        write_text(&dir.join("gt.csv"), &poses_csv(&self.truth))
    }
}

/// Synthesizes a scenario and writes it to `dir`.
pub fn generate_dataset(options: &GenerateOptions, rig: &StereoRig, dir: &Path) -> Result<Sequence> {
    synthesize(options, rig)?.write(dir)?;
    Sequence::open(dir, None)
}

/// A sequence directory on disk.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub dir: PathBuf,
    pub rig: StereoRig,
    /// Models with frame 0's poses, when ground truth exists.
    pub template: SceneState,
    pub frames: usize,
    pub truth: Option<Vec<Vec<f64>>>,
}

impl Sequence {
    /// Opens a sequence. `calib` overrides `dir/calib.json`.
    pub fn open(dir: &Path, calib: Option<&Path>) -> Result<Self> {
        let calib_path = calib.map_or_else(|| dir.join("calib.json"), Path::to_path_buf);
        let rig = camera::load_calibration(&calib_path)?;
        let scene_path = dir.join("scene.json");
        let text = std::fs::read_to_string(&scene_path).map_err(|e| Error::io(&scene_path, e))?;
        let models = SceneSpec::parse(&text)?.build(dir)?;
        let template = SceneState::new(
            models
                .into_iter()
                .map(|m| SceneEntry {
                    pose: m.rest_pose(),
                    model: m,
                })
                .collect(),
        );
        let mut frames = 0;
        while frame_paths(dir, frames).0.exists() {
            frames += 1;
        }
        let gt_path = dir.join("gt.csv");
        let truth = if gt_path.exists() {
            let text = std::fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
            let rows = parse_poses_csv(&text)?;
            let mut truth = Vec::with_capacity(rows.len());
            for (k, (frame, values)) in rows.into_iter().enumerate() {
                if frame != k {
                    return Err(Error::Parse(format!("gt.csv: row {k} is frame {frame}")));
                }
                if values.len() != template.dims() {
                    return Err(Error::DimensionMismatch {
                        expected: template.dims(),
                        got: values.len(),
                    });
                }
                truth.push(values);
            }
            Some(truth)
        } else {
            None
        };
        Ok(Sequence {
            dir: dir.to_path_buf(),
            rig,
            template,
            frames,
            truth,
        })
    }
}

impl FrameSource for Sequence {
    fn rig(&self) -> &StereoRig {
        &self.rig
    }

    fn len(&self) -> usize {
        self.frames
    }

    fn initial(&self) -> Result<SceneState> {
        self.truth(0)
            .ok_or_else(|| Error::Validation(format!("{}: no ground truth for frame 0", self.dir.display())))
    }

    fn frame(&self, i: usize) -> Result<(Cow<'_, RgbImage>, Cow<'_, RgbImage>)> {
        let (pl, pr) = frame_paths(&self.dir, i);
        Ok((Cow::Owned(imageio::read_rgb(&pl)?), Cow::Owned(imageio::read_rgb(&pr)?)))
    }

    fn truth(&self, i: usize) -> Option<SceneState> {
        let values = self.truth.as_ref()?.get(i)?;
        self.template.unflatten(values).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_rig() -> StereoRig {
        StereoRig::parallel(150.0, 79.5, 59.5, 160, 120, 120.0).unwrap()
    }

    #[test]
    fn scenario_dimensions() {
        for (scenario, n) in [
            (Scenario::SingleHand, 27),
            (Scenario::HandObject, 34),
            (Scenario::TwoHands, 54),
        ] {
            let models = scenario.scene_spec().build(Path::new(".")).unwrap();
            let state = scenario.initial_state(&models, 120.0);
            assert_eq!(state.dims(), n);
            for e in &state.entries {
                e.pose.validate(&e.model).unwrap();
            }
        }
    }

    #[test]
    fn pose_table_round_trip() {
        let models = Scenario::HandObject.scene_spec().build(Path::new(".")).unwrap();
        let state = Scenario::HandObject.initial_state(&models, 120.0);
        let csv = poses_csv(&[state.clone(), state.clone()]);
        assert!(csv.starts_with("frame,p0,p1,"));
        let rows = parse_poses_csv(&csv).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].0, 1);
        assert_eq!(rows[1].1, state.flatten().values);
        assert!(parse_poses_csv("frame,p0\n0,1,2\n").is_err());
    }

    #[test]
    fn two_keyframes_ten_frames_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let rig = small_rig();
        let spec = Scenario::SingleHand.scene_spec();
        let models = spec.build(Path::new(".")).unwrap();
        let start = Scenario::SingleHand.initial_state(&models, rig.baseline());
        let mut end = start.clone();
        end.entries[0].pose.position.z += 100.0;
        let script = MotionScript {
            frames: 10,
            keyframes: vec![start.flatten().values, end.flatten().values],
        };
        let options = GenerateOptions::new(Scenario::SingleHand, 10, 1);
        let seq = render_script(&rig, spec, &start, script, &options).unwrap();
        seq.write(dir.path()).unwrap();
        let back = Sequence::open(dir.path(), None).unwrap();
        assert_eq!(back.len(), 10);
        let truth = back.truth.as_ref().unwrap();
        assert_eq!(truth.len(), 10);
        assert!((truth[5][2] - (start.entries[0].pose.position.z + 50.0)).abs() < 1e-9);
        let (l, _) = back.frame(3).unwrap();
        assert_eq!(*l, seq.frames[3].0);
    }

    #[test]
    fn same_seed_same_frames() {
        let rig = small_rig();
        let options = GenerateOptions::new(Scenario::TwoHands, 3, 9);
        let a = synthesize(&options, &rig).unwrap();
        let b = synthesize(&options, &rig).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(poses_csv(&a.truth), poses_csv(&b.truth));
    }

    #[test]
    fn unknown_scenario() {
        assert!("one-hand".parse::<Scenario>().is_err());
        assert_eq!("two-hands".parse::<Scenario>().unwrap(), Scenario::TwoHands);
    }
}
