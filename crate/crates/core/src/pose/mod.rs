//! Pose sequences, imitation rewards, evaluation metrics and the PPO
//! clipped surrogate.

mod metrics;
mod reward;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use metrics::{
    avg_acceleration, discounted_returns, keypoint_error_2d, mpjpe, ppo_clip_loss,
    velocity_error, Keypoints2D, PpoConfig, DEFAULT_KEYPOINTS, HIP, SHOULDER,
};
pub use reward::{
    reward_end_effector, reward_pose, reward_root_pose, reward_root_velocity, rewards,
    total_reward, RewardBreakdown, RewardWeights,
};

/// Deviation from unit norm accepted when a frame is validated.
pub const UNIT_TOLERANCE: f64 = 1e-6;
/// Deviation from unit norm accepted by [`quat_rel_angle`].
pub const ANGLE_INPUT_TOLERANCE: f64 = 1e-3;

/// Names of the end-effectors the reward compares, in the order reported.
pub const END_EFFECTORS: [&str; 5] = ["head", "left_hand", "right_hand", "left_foot", "right_foot"];

/// Quaternion `w + xi + yj + zk`, serialized as `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quat {
    fn from([w, x, y, z]: [f64; 4]) -> Self {
        Self { w, x, y, z }
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation by `angle` radians about `axis` (normalized here).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conj(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn mul(&self, r: &Quat) -> Self {
        let a = self;
        Self::new(
            a.w * r.w - a.x * r.x - a.y * r.y - a.z * r.z,
            a.w * r.x + a.x * r.w + a.y * r.z - a.z * r.y,
            a.w * r.y - a.x * r.z + a.y * r.w + a.z * r.x,
            a.w * r.z + a.x * r.y - a.y * r.x + a.z * r.w,
        )
    }

    fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Angle in `[0, π]` of the rotation taking `q_hat` to `q`; `q` and `−q`
/// are the same rotation.
pub fn quat_rel_angle(q: &Quat, q_hat: &Quat) -> Result<f64> {
    for (name, v) in [("estimate", q), ("reference", q_hat)] {
        if !v.is_finite() || (v.norm() - 1.0).abs() > ANGLE_INPUT_TOLERANCE {
            return Err(Error::InvalidData(format!(
                "{name} quaternion {:?} is not unit length (norm {})",
                <[f64; 4]>::from(*v),
                v.norm()
            )));
        }
    }
    let r = q.normalized().mul(&q_hat.normalized().conj());
    let vec = (r.x * r.x + r.y * r.y + r.z * r.z).sqrt();
    Ok(2.0 * vec.atan2(r.w.abs()))
}

/// Humanoid state at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFrame {
    /// Root position, meters; the z component is the root height.
    pub root_pos: [f64; 3],
    pub root_quat: Quat,
    /// Local rotation of every non-root joint.
    pub joints: BTreeMap<String, Quat>,
    /// World position of every joint, root included, meters.
    pub joint_pos: BTreeMap<String, [f64; 3]>,
    /// Root-relative end-effector positions, meters.
    #[serde(default)]
    pub end_effectors: BTreeMap<String, [f64; 3]>,
    /// Root linear velocity, m/s.
    pub lin_vel: [f64; 3],
    /// Root angular velocity, rad/s.
    pub ang_vel: [f64; 3],
    /// Joint velocities, one per actuated degree of freedom.
    #[serde(default)]
    pub joint_vel: Vec<f64>,
}

fn finite3(v: &[f64; 3]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl PoseFrame {
    pub fn root_height(&self) -> f64 {
        self.root_pos[2]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidData(what));
        for (name, q) in std::iter::once(("root", &self.root_quat))
            .chain(self.joints.iter().map(|(k, q)| (k.as_str(), q)))
        {
            if !q.is_finite() || (q.norm() - 1.0).abs() > UNIT_TOLERANCE {
                return bad(format!("quaternion of `{name}` has norm {}", q.norm()));
            }
        }
        let vectors = [&self.root_pos, &self.lin_vel, &self.ang_vel]
            .into_iter()
            .chain(self.joint_pos.values())
            .chain(self.end_effectors.values());
        for v in vectors {
            if !finite3(v) {
                return bad(format!("non-finite vector {v:?}"));
            }
        }
        if self.joint_vel.iter().any(|v| !v.is_finite()) {
            return bad("non-finite joint velocity".into());
        }
        Ok(())
    }

    /// Root linear velocity, root angular velocity and joint velocities,
    /// concatenated.
    pub fn velocity_vector(&self) -> Vec<f64> {
        self.lin_vel
            .iter()
            .chain(&self.ang_vel)
            .chain(&self.joint_vel)
            .copied()
            .collect()
    }
}

/// Frames sampled at a uniform rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    frames: Vec<PoseFrame>,
    rate_hz: f64,
}

fn same_keys<V>(a: &BTreeMap<String, V>, b: &BTreeMap<String, V>) -> bool {
    a.len() == b.len() && a.keys().zip(b.keys()).all(|(x, y)| x == y)
}

impl PoseSequence {
    pub fn new(frames: Vec<PoseFrame>, rate_hz: f64) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::param("rate", format!("{rate_hz} must be > 0")));
        }
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidData("pose sequence is empty".into()))?;
        for (t, f) in frames.iter().enumerate() {
            f.validate()
                .map_err(|e| Error::InvalidData(format!("frame {t}: {e}")))?;
            if !same_keys(&f.joints, &first.joints)
                || !same_keys(&f.joint_pos, &first.joint_pos)
                || f.joint_vel.len() != first.joint_vel.len()
            {
                return Err(Error::PoseMismatch(format!(
                    "frame {t} has a different joint layout than frame 0"
                )));
            }
        }
        Ok(Self { frames, rate_hz })
    }

    pub fn frames(&self) -> &[PoseFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    /// Parse one JSON frame object per non-blank line.
    pub fn from_jsonl(text: &str, rate_hz: f64) -> Result<Self> {
        Self::parse_lines(text.lines().map(|l| Ok(l.to_owned())), rate_hz, Path::new("<memory>"))
    }

    pub fn read_jsonl(path: impl AsRef<Path>, rate_hz: f64) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let lines = BufReader::new(file).lines().map(|l| l.map_err(|e| Error::io(path, e)));
        Self::parse_lines(lines, rate_hz, path)
    }

    fn parse_lines(
        lines: impl Iterator<Item = Result<String>>,
        rate_hz: f64,
        path: &Path,
    ) -> Result<Self> {
        let mut frames = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let frame: PoseFrame = serde_json::from_str(&line)
                .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
            frames.push(frame);
        }
        Self::new(frames, rate_hz)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for f in &self.frames {
            serde_json::to_writer(&mut out, f).expect("pose frames serialize");
            out.push(b'\n');
        }
        std::fs::File::create(path)
            .and_then(|mut file| file.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// A 20-joint frame with all five end-effectors.
    pub fn frame(offset: f64) -> PoseFrame {
        let mut joints = BTreeMap::new();
        let mut joint_pos = BTreeMap::new();
        joint_pos.insert("root".to_owned(), [offset, 0.0, 1.0]);
        for j in 0..19 {
            let name = format!("joint{j:02}");
            joints.insert(name.clone(), Quat::from_axis_angle([1.0, 0.5, -0.2], 0.05 * j as f64));
            joint_pos.insert(name, [offset + 0.1 * j as f64, 0.02 * j as f64, 1.0 - 0.04 * j as f64]);
        }
        let end_effectors = END_EFFECTORS
            .iter()
            .enumerate()
            .map(|(i, n)| (n.to_string(), [0.1 * i as f64, -0.2, 0.3]))
            .collect();
        PoseFrame {
            root_pos: [offset, 0.0, 1.0],
            root_quat: Quat::IDENTITY,
            joints,
            joint_pos,
            end_effectors,
            lin_vel: [0.5, 0.0, 0.0],
            ang_vel: [0.0, 0.0, 0.1],
            joint_vel: vec![0.0; 6],
        }
    }

    pub fn sequence(len: usize) -> PoseSequence {
        PoseSequence::new((0..len).map(|t| frame(0.1 * t as f64)).collect(), 30.0).unwrap()
    }
}
