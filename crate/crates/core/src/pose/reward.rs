use serde::{Deserialize, Serialize};

use super::{quat_rel_angle, PoseFrame, END_EFFECTORS};
use crate::error::{Error, Result};

/// Weights of the four imitation terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub pose: f64,
    pub end_effector: f64,
    pub root_pose: f64,
    pub root_velocity: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            pose: 0.5,
            end_effector: 0.3,
            root_pose: 0.1,
            root_velocity: 0.1,
        }
    }
}

impl RewardWeights {
    pub fn new(pose: f64, end_effector: f64, root_pose: f64, root_velocity: f64) -> Result<Self> {
        let w = Self {
            pose,
            end_effector,
            root_pose,
            root_velocity,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.pose, self.end_effector, self.root_pose, self.root_velocity] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param("weights", format!("{v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// `exp(−2·Σ_j θ_j²)` over the local joint rotations.
pub fn reward_pose(frame: &PoseFrame, gt: &PoseFrame) -> Result<f64> {
    if frame.joints.len() != gt.joints.len() {
        return Err(Error::PoseMismatch(format!(
            "{} joints vs {} in ground truth",
            frame.joints.len(),
            gt.joints.len()
        )));
    }
    let mut sum = 0.0;
    for (name, q) in &frame.joints {
        let q_hat = gt
            .joints
            .get(name)
            .ok_or_else(|| Error::PoseMismatch(format!("joint `{name}` missing from ground truth")))?;
        sum += quat_rel_angle(q, q_hat)?.powi(2);
    }
    Ok((-2.0 * sum).exp())
}

/// `exp(−20·Σ_e ‖e − ê‖²)` over head, hands and feet.
pub fn reward_end_effector(frame: &PoseFrame, gt: &PoseFrame) -> Result<f64> {
    let mut sum = 0.0;
    for name in END_EFFECTORS {
        let get = |f: &PoseFrame, who: &str| {
            f.end_effectors
                .get(name)
                .ok_or_else(|| Error::PoseMismatch(format!("end-effector `{name}` missing from {who}")))
                .copied()
        };
        sum += sq_dist(&get(frame, "estimate")?, &get(gt, "ground truth")?);
    }
    Ok((-20.0 * sum).exp())
}

/// `exp(−300·((h − ĥ)² + θ_root²))`.
pub fn reward_root_pose(frame: &PoseFrame, gt: &PoseFrame) -> Result<f64> {
    let dh = frame.root_height() - gt.root_height();
    let angle = quat_rel_angle(&frame.root_quat, &gt.root_quat)?;
    Ok((-300.0 * (dh * dh + angle * angle)).exp())
}

/// `exp(−‖l − l̂‖² − 0.1·‖ω − ω̂‖²)`.
pub fn reward_root_velocity(frame: &PoseFrame, gt: &PoseFrame) -> Result<f64> {
    Ok((-sq_dist(&frame.lin_vel, &gt.lin_vel) - 0.1 * sq_dist(&frame.ang_vel, &gt.ang_vel)).exp())
}

/// All four terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub pose: f64,
    pub end_effector: f64,
    pub root_pose: f64,
    pub root_velocity: f64,
    pub total: f64,
}

pub fn rewards(frame: &PoseFrame, gt: &PoseFrame, w: &RewardWeights) -> Result<RewardBreakdown> {
    w.validate()?;
    let pose = reward_pose(frame, gt)?;
    let end_effector = reward_end_effector(frame, gt)?;
    let root_pose = reward_root_pose(frame, gt)?;
    let root_velocity = reward_root_velocity(frame, gt)?;
    Ok(RewardBreakdown {
        pose,
        end_effector,
        root_pose,
        root_velocity,
        total: w.pose * pose
            + w.end_effector * end_effector
            + w.root_pose * root_pose
            + w.root_velocity * root_velocity,
    })
}

pub fn total_reward(frame: &PoseFrame, gt: &PoseFrame, w: &RewardWeights) -> Result<f64> {
    rewards(frame, gt, w).map(|r| r.total)
}
