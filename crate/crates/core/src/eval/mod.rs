//! Tracking metrics, synthetic datasets, sequence runs and parameter sweeps.

pub mod dataset;
pub mod motion;
pub mod sweep;

use std::fmt::Write as _;

use nalgebra::Isometry3;

use crate::camera::Point3;
use crate::scene::{KinematicModel, Pose, SceneState};
use crate::tracker::{StereoFrame, Tracker, TrackerConfig};
use crate::{Error, Result};

pub use dataset::{FrameSource, GenerateOptions, Scenario, Sequence, SyntheticSequence};

/// Mean distance between corresponding joint-centre markers (mm).
pub fn hand_error(model: &KinematicModel, estimated: &Pose, truth: &Pose) -> f64 {
    let a = model.joint_centers(estimated);
    let b = model.joint_centers(truth);
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(&b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64
}

fn isometry(pose: &Pose) -> Isometry3<f64> {
    Isometry3::from_parts(pose.position.into(), pose.orientation)
}

/// Mean distance of three model-frame anchors carried by both poses (mm).
pub fn object_error(estimated: &Pose, truth: &Pose, anchors: &[Point3; 3]) -> Result<f64> {
    let [a, b, c] = anchors;
    let area = (b - a).cross(&(c - a)).norm();
    let scale = (b - a).norm().max((c - a).norm());
    if !(area > 1e-9 * scale * scale) {
        return Err(Error::CollinearAnchors);
    }
    let (te, tt) = (isometry(estimated), isometry(truth));
    Ok(anchors.iter().map(|p| (te * p - tt * p).norm()).sum::<f64>() / 3.0)
}

/// Error of one frame: one value per scene entry and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameError {
    pub per_object: Vec<f64>,
    pub mean: f64,
}

/// Articulated models are scored on their joint markers, rigid ones on
/// their first three markers as anchors.
pub fn frame_error(estimated: &SceneState, truth: &SceneState) -> Result<FrameError> {
    if estimated.entries.len() != truth.entries.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.entries.len(),
            got: estimated.entries.len(),
        });
    }
    let per_object = estimated
        .entries
        .iter()
        .zip(&truth.entries)
        .map(|(e, t)| {
            let model = &t.model;
            if model.dofs.is_empty() && model.bones.len() == 1 {
                let rest = model.joint_centers(&Pose::identity(0));
                let anchors: [Point3; 3] = rest
                    .get(..3)
                    .and_then(|s| s.try_into().ok())
                    .ok_or(Error::CollinearAnchors)?;
                object_error(&e.pose, &t.pose, &anchors)
            } else {
                Ok(hand_error(model, &e.pose, &t.pose))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = if per_object.is_empty() {
        0.0
    } else {
        per_object.iter().sum::<f64>() / per_object.len() as f64
    };
    Ok(FrameError { per_object, mean })
}

/// Success thresholds used for reports: 5 to 50 mm in 5 mm steps.
pub fn default_thresholds() -> Vec<f64> {
    (1..=10).map(|k| 5.0 * k as f64).collect()
}

/// Fraction of frames with error at or below each threshold.
pub fn success_curve(errors: &[f64], thresholds: &[f64]) -> Vec<(f64, f64)> {
    thresholds
        .iter()
        .map(|&t| {
            let ok = errors.iter().filter(|&&e| e <= t).count();
            let frac = if errors.is_empty() { 0.0 } else { ok as f64 / errors.len() as f64 };
            (t, frac)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub frames: Vec<FrameError>,
    pub mean: f64,
    pub success: Vec<(f64, f64)>,
}

impl SequenceReport {
    pub fn new(frames: Vec<FrameError>) -> Self {
        let errors: Vec<f64> = frames.iter().map(|f| f.mean).collect();
        let mean = if errors.is_empty() {
            0.0
        } else {
            errors.iter().sum::<f64>() / errors.len() as f64
        };
        SequenceReport {
            success: success_curve(&errors, &default_thresholds()),
            frames,
            mean,
        }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.mean).collect()
    }

    /// Fraction of frames with error below `threshold`.
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.frames.iter().filter(|f| f.mean < threshold).count() as f64 / self.frames.len() as f64
    }

    /// `frame,mean,e0,e1,...` table.
    pub fn errors_csv(&self) -> String {
        let n = self.frames.first().map_or(0, |f| f.per_object.len());
        let mut out = String::from("frame,mean");
        for k in 0..n {
            write!(out, ",e{k}").unwrap();
        }
        out.push('\n');
        for (i, f) in self.frames.iter().enumerate() {
            write!(out, "{i},{}", f.mean).unwrap();
            for e in &f.per_object {
                write!(out, ",{e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn success_csv(&self) -> String {
        let mut out = String::from("threshold_mm,fraction\n");
        for (t, f) in &self.success {
            writeln!(out, "{t},{f}").unwrap();
        }
        out
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        let n = values.len();
        if n == 0 {
            return Stats {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stats { mean, std, n }
    }

    /// Square root of the mean of two variances.
    pub fn pooled_std(&self, other: &Stats) -> f64 {
        (0.5 * (self.std * self.std + other.std * other.std)).sqrt()
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    crate::distinct::median(&mut v)
}

/// The result of tracking a sequence.
#[derive(Debug, Clone)]
pub struct TrackOutcome {
    /// One solution per tracked frame.
    pub states: Vec<SceneState>,
    pub scores: Vec<f64>,
    /// Frame at which the tracked scene left the view, if it did.
    pub lost_at: Option<usize>,
}

impl TrackOutcome {
    /// Errors against the source's ground truth, when available for every
    /// tracked frame.
    pub fn report(&self, source: &dyn FrameSource) -> Result<Option<SequenceReport>> {
        let mut frames = Vec::with_capacity(self.states.len());
        for (i, s) in self.states.iter().enumerate() {
            let Some(truth) = source.truth(i) else {
                return Ok(None);
            };
            frames.push(frame_error(s, &truth)?);
        }
        Ok(Some(SequenceReport::new(frames)))
    }
}

/// Tracks every frame of `source`, initialised at frame 0's ground truth.
/// Frame 0 is tracked like any other. Stops early if the scene leaves the
/// view; other errors are returned with the frame index.
pub fn track_source(source: &dyn FrameSource, config: &TrackerConfig) -> Result<TrackOutcome> {
    let mut outcome = TrackOutcome {
        states: Vec::new(),
        scores: Vec::new(),
        lost_at: None,
    };
    if source.is_empty() {
        return Ok(outcome);
    }
    let tracker = Tracker::new(source.rig().clone(), *config)?;
    let mut state = tracker.init(source.initial()?)?;
    for i in 0..source.len() {
        let wrap = |e: Error| Error::Frame {
            frame: i,
            source: Box::new(e),
        };
        let (l, r) = source.frame(i).map_err(wrap)?;
        match tracker.track_frame(&state, &StereoFrame::new(&l, &r)) {
            Ok(next) => state = next,
            Err(Error::EmptyProjection) => {
                outcome.lost_at = Some(i);
                break;
            }
            Err(e) => return Err(wrap(e)),
        }
        outcome.states.push(state.scene.clone());
        outcome.scores.push(state.score);
    }
    Ok(outcome)
}

/// Opens a sequence directory and tracks it.
pub fn track_sequence(
    dir: &std::path::Path,
    config: &TrackerConfig,
) -> Result<(TrackOutcome, Option<SequenceReport>)> {
    let seq = Sequence::open(dir, None)?;
    let outcome = track_source(&seq, config)?;
    let report = outcome.report(&seq)?;
    Ok((outcome, report))
}

/// Errors of a trajectory table against a ground-truth table.
pub fn compare_tables(template: &SceneState, trajectory: &str, truth: &str) -> Result<SequenceReport> {
    let est = dataset::parse_poses_csv(trajectory)?;
    let gt = dataset::parse_poses_csv(truth)?;
    let frames = est
        .iter()
        .map(|(frame, values)| {
            let (_, t) = gt
                .iter()
                .find(|(f, _)| f == frame)
                .ok_or_else(|| Error::Validation(format!("no ground truth for frame {frame}")))?;
            frame_error(&template.unflatten(values)?, &template.unflatten(t)?)
        })
        .collect::<Result<_>>()?;
    Ok(SequenceReport::new(frames))
}
