use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PoseSequence;
use crate::error::{Error, Result};

/// Keypoint placed at the origin by [`keypoint_error_2d`].
pub const HIP: &str = "hip";
/// Keypoint whose vertical distance to the hip is normalized to 0.5.
pub const SHOULDER: &str = "shoulder";
/// Default 2D skeleton.
pub const DEFAULT_KEYPOINTS: [&str; 11] = [
    "hip",
    "shoulder",
    "head",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::PoseMismatch(format!("{a} frames vs {b} in ground truth")));
    }
    if a == 0 {
        return Err(Error::InvalidData("pose sequence is empty".into()));
    }
    Ok(())
}

/// Mean root-relative joint position error, millimeters.
pub fn mpjpe(seq: &PoseSequence, gt: &PoseSequence) -> Result<f64> {
    check_lengths(seq.len(), gt.len())?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, (f, g)) in seq.frames().iter().zip(gt.frames()).enumerate() {
        if f.joint_pos.len() != g.joint_pos.len() {
            return Err(Error::PoseMismatch(format!(
                "frame {t}: {} joint positions vs {}",
                f.joint_pos.len(),
                g.joint_pos.len()
            )));
        }
        for (name, p) in &f.joint_pos {
            let q = g.joint_pos.get(name).ok_or_else(|| {
                Error::PoseMismatch(format!("frame {t}: joint `{name}` missing from ground truth"))
            })?;
            let d: f64 = (0..3)
                .map(|i| ((p[i] - f.root_pos[i]) - (q[i] - g.root_pos[i])).powi(2))
                .sum();
            sum += d.sqrt();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidData("no joint positions to compare".into()));
    }
    Ok(1000.0 * sum / count as f64)
}

/// Mean norm of the per-frame difference of concatenated velocities.
pub fn velocity_error(seq: &PoseSequence, gt: &PoseSequence) -> Result<f64> {
    check_lengths(seq.len(), gt.len())?;
    let mut sum = 0.0;
    for (t, (f, g)) in seq.frames().iter().zip(gt.frames()).enumerate() {
        let (a, b) = (f.velocity_vector(), g.velocity_vector());
        if a.len() != b.len() {
            return Err(Error::PoseMismatch(format!(
                "frame {t}: {} velocity components vs {}",
                a.len(),
                b.len()
            )));
        }
        sum += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    }
    Ok(sum / seq.len() as f64)
}

/// Mean absolute joint acceleration, from forward differences of the joint
/// velocities at the sequence rate. The last frame repeats the preceding
/// difference; a single frame has zero acceleration.
pub fn avg_acceleration(seq: &PoseSequence) -> Result<f64> {
    let frames = seq.frames();
    let n = frames[0].joint_vel.len();
    if n == 0 {
        return Err(Error::InvalidData("sequence has no joint velocities".into()));
    }
    let t_len = frames.len();
    if t_len < 2 {
        return Ok(0.0);
    }
    let step_l1 = |t: usize| -> f64 {
        frames[t + 1]
            .joint_vel
            .iter()
            .zip(&frames[t].joint_vel)
            .map(|(b, a)| ((b - a) * seq.rate_hz()).abs())
            .sum()
    };
    let sum: f64 = (0..t_len - 1).map(step_l1).sum::<f64>() + step_l1(t_len - 2);
    Ok(sum / (t_len * n) as f64)
}

/// Per-frame 2D keypoints by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Keypoints2D {
    pub frames: Vec<BTreeMap<String, [f64; 2]>>,
}

impl Keypoints2D {
    pub fn new(frames: Vec<BTreeMap<String, [f64; 2]>>) -> Self {
        Self { frames }
    }

    /// One JSON object `{name: [x, y], ...}` per non-blank line.
    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut frames = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let frame = serde_json::from_str(&line)
                .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
            frames.push(frame);
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Hip at the origin, shoulder–hip vertical distance scaled to 0.5.
fn normalize(frame: &BTreeMap<String, [f64; 2]>, t: usize) -> Result<BTreeMap<&str, [f64; 2]>> {
    let get = |name: &str| {
        frame
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidData(format!("frame {t}: keypoint `{name}` missing")))
    };
    let hip = get(HIP)?;
    let shoulder = get(SHOULDER)?;
    let height = (shoulder[1] - hip[1]).abs();
    if !(height > 0.0 && height.is_finite()) {
        return Err(Error::DegeneratePose(format!(
            "frame {t}: shoulder and hip at the same height"
        )));
    }
    let scale = 0.5 / height;
    Ok(frame
        .iter()
        .map(|(k, p)| (k.as_str(), [(p[0] - hip[0]) * scale, (p[1] - hip[1]) * scale]))
        .collect())
}

/// Mean distance between normalized keypoints over frames and keypoints.
pub fn keypoint_error_2d(kp: &Keypoints2D, gt: &Keypoints2D) -> Result<f64> {
    check_lengths(kp.len(), gt.len())?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, (a, b)) in kp.frames.iter().zip(&gt.frames).enumerate() {
        let (a, b) = (normalize(a, t)?, normalize(b, t)?);
        if a.len() != b.len() {
            return Err(Error::PoseMismatch(format!(
                "frame {t}: {} keypoints vs {}",
                a.len(),
                b.len()
            )));
        }
        for (name, p) in &a {
            let q = b.get(name).ok_or_else(|| {
                Error::PoseMismatch(format!("frame {t}: keypoint `{name}` missing from ground truth"))
            })?;
            sum += (p[0] - q[0]).hypot(p[1] - q[1]);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Clip range and discount of the policy-gradient objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub epsilon: f64,
    pub gamma: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self { epsilon: 0.2, gamma: 0.95 }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::param("epsilon", format!("{} must be >= 0", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param("gamma", format!("{} must be in [0, 1]", self.gamma)));
        }
        Ok(())
    }
}

/// `min(w·A, clip(w, 1−ε, 1+ε)·A)` for probability ratio `w` and advantage `A`.
pub fn ppo_clip_loss(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Discounted return from each step to the end of the episode.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *o = acc;
    }
    out
}
