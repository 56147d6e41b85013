//! Keyframed motion scripts.
//!
//! A script holds flat scene vectors spread evenly over a sequence. Frame
//! `i` of `n` sits at time `t = i / n` along the keyframes, so the last
//! keyframe itself is never reached. Positions and joint angles are
//! interpolated linearly, orientations spherically.

use std::path::Path;

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scene::{SceneState, ROOT_DIMS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionScript {
    pub frames: usize,
    pub keyframes: Vec<Vec<f64>>,
}

impl MotionScript {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scripts serialize")
    }

    pub fn validate(&self, template: &SceneState) -> Result<()> {
        if self.keyframes.is_empty() {
            return Err(Error::Validation("a motion script needs at least one keyframe".into()));
        }
        for k in &self.keyframes {
            if k.len() != template.dims() {
                return Err(Error::DimensionMismatch {
                    expected: template.dims(),
                    got: k.len(),
                });
            }
        }
        Ok(())
    }

    /// The scene at frame `i`.
    pub fn state_at(&self, template: &SceneState, i: usize) -> Result<SceneState> {
        self.validate(template)?;
        let last = self.keyframes.len() - 1;
        let s = if self.frames == 0 {
            0.0
        } else {
            i as f64 / self.frames as f64 * last as f64
        };
        let k = (s.floor() as usize).min(last);
        let values = if k == last {
            self.keyframes[last].clone()
        } else {
            interpolate(template, &self.keyframes[k], &self.keyframes[k + 1], s - k as f64)
        };
        template.unflatten(&values)
    }

    /// Every frame of the sequence.
    pub fn states(&self, template: &SceneState) -> Result<Vec<SceneState>> {
        (0..self.frames).map(|i| self.state_at(template, i)).collect()
    }
}

fn quat(v: &[f64]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]))
}

fn interpolate(template: &SceneState, a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + (y - x) * t).collect();
    for offset in template.offsets() {
        let q = quat(&a[offset + 3..offset + 7]).slerp(&quat(&b[offset + 3..offset + 7]), t);
        let q = q.quaternion();
        out[offset + 3..offset + 7].copy_from_slice(&[q.w, q.i, q.j, q.k]);
    }
    out
}

/// Speed limits for [`random_script`], per frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionLimits {
    pub step_mm: f64,
    pub step_deg: f64,
    pub joint_step_deg: f64,
    /// Frames between keyframes.
    pub spacing: usize,
    /// How far the root may wander from its start (mm, degrees).
    pub reach_mm: f64,
    pub reach_deg: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        MotionLimits {
            step_mm: 2.5,
            step_deg: 0.6,
            joint_step_deg: 1.5,
            spacing: 10,
            reach_mm: 50.0,
            reach_deg: 20.0,
        }
    }
}

/// A smooth random script starting at `start`: every keyframe heads for a
/// random target near the start, no faster than `limits` allow.
pub fn random_script(start: &SceneState, frames: usize, seed: u64, limits: MotionLimits) -> MotionScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spacing = limits.spacing.max(1);
    let keys = frames.div_ceil(spacing) + 1;
    let first = start.flatten();
    let mut keyframes = vec![first.values.clone()];
    let seg = spacing as f64;
    for _ in 1..keys {
        let prev = keyframes.last().unwrap().clone();
        let mut next = prev.clone();
        for (e, offset) in start.entries.iter().zip(start.offsets()) {
            let origin = Vector3::from_column_slice(&first.values[offset..offset + 3]);
            let here = Vector3::from_column_slice(&prev[offset..offset + 3]);
            let target = origin + Vector3::from_fn(|_, _| rng.random_range(-1.0..=1.0)) * limits.reach_mm;
            let mut delta = target - here;
            let max = limits.step_mm * seg;
            if delta.norm() > max {
                delta *= max / delta.norm();
            }
            next[offset..offset + 3].copy_from_slice((here + delta).as_slice());

            let q0 = quat(&first.values[offset + 3..offset + 7]);
            let qh = quat(&prev[offset + 3..offset + 7]);
            let axis = Unit::new_normalize(Vector3::from_fn(|_, _| rng.random_range(-1.0..=1.0)));
            let angle = rng.random_range(0.0..=limits.reach_deg.to_radians());
            let qt = q0 * UnitQuaternion::from_axis_angle(&axis, angle);
            let gap = qh.angle_to(&qt);
            let max = (limits.step_deg * seg).to_radians();
            let q = if gap > max { qh.slerp(&qt, max / gap) } else { qt };
            let q = q.quaternion();
            next[offset + 3..offset + 7].copy_from_slice(&[q.w, q.i, q.j, q.k]);

            for (k, d) in e.model.dofs.iter().enumerate() {
                let i = offset + ROOT_DIMS + k;
                // stay in the lower part of the range: relaxed, mostly open
                let hi = d.min + 0.6 * (d.max - d.min);
                let target = rng.random_range(d.min..=hi);
                let max = (limits.joint_step_deg * seg).to_radians();
                next[i] = prev[i] + (target - prev[i]).clamp(-max, max);
            }
        }
        keyframes.push(next);
    }
    MotionScript { frames, keyframes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{hand, Pose, SceneState};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn state(z: f64) -> SceneState {
        let model = Arc::new(hand::builtin_right_hand());
        SceneState::single(model, Pose::new(Vector3::new(0.0, 0.0, z), UnitQuaternion::identity(), vec![0.0; 20]))
    }

    #[test]
    fn frame_centred_midpoint() {
        let a = state(500.0).flatten().values;
        let b = state(600.0).flatten().values;
        let script = MotionScript {
            frames: 10,
            keyframes: vec![a, b],
        };
        let s = script.state_at(&state(0.0), 5).unwrap();
        assert_abs_diff_eq!(s.entries[0].pose.position.z, 550.0, epsilon = 1e-12);
        assert_eq!(script.states(&state(0.0)).unwrap().len(), 10);
    }

    #[test]
    fn slerp_halves_the_angle() {
        let mut a = state(500.0);
        let mut b = a.clone();
        a.entries[0].pose.orientation = UnitQuaternion::identity();
        b.entries[0].pose.orientation = UnitQuaternion::from_euler_angles(0.0, 0.0, 1.0);
        let script = MotionScript {
            frames: 2,
            keyframes: vec![a.flatten().values, b.flatten().values],
        };
        let mid = script.state_at(&a, 1).unwrap();
        assert_abs_diff_eq!(mid.entries[0].pose.orientation.angle(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn random_script_respects_limits() {
        let start = state(650.0);
        let limits = MotionLimits::default();
        let script = random_script(&start, 40, 3, limits);
        assert_eq!(script, random_script(&start, 40, 3, limits));
        let states = script.states(&start).unwrap();
        for w in states.windows(2) {
            let (p, q) = (&w[0].entries[0].pose, &w[1].entries[0].pose);
            assert!((p.position - q.position).norm() <= limits.step_mm + 1e-9);
            assert!(p.orientation.angle_to(&q.orientation) <= limits.step_deg.to_radians() + 1e-9);
            q.validate(&start.entries[0].model).unwrap();
        }
    }

    #[test]
    fn wrong_keyframe_size() {
        let script = MotionScript {
            frames: 3,
            keyframes: vec![vec![0.0; 5]],
        };
        assert!(matches!(script.state_at(&state(1.0), 0), Err(Error::DimensionMismatch { .. })));
    }
}
