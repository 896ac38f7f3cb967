use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Action;

/// Distance covered by one forward action, meters.
pub const FORWARD_STEP: f64 = 0.25;
/// Rotation of one turn action, degrees.
pub const TURN_DEGREES: f64 = 15.0;
/// An episode succeeds when it ends within this distance of the goal, meters.
pub const SUCCESS_DISTANCE: f64 = 3.0;

/// Planar pose. Heading 0 points along +x and grows counterclockwise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_heading(heading),
        }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn apply(&self, action: Action) -> Pose {
        match action {
            Action::Stop => *self,
            Action::Forward => {
                let rad = self.heading.to_radians();
                Pose {
                    x: self.x + FORWARD_STEP * rad.cos(),
                    y: self.y + FORWARD_STEP * rad.sin(),
                    heading: self.heading,
                }
            }
            Action::TurnLeft => Pose::new(self.x, self.y, self.heading + TURN_DEGREES),
            Action::TurnRight => Pose::new(self.x, self.y, self.heading - TURN_DEGREES),
        }
    }
}

/// Maps any finite angle into `[0, 360)`.
pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

pub fn apply_action(pose: &Pose, action: usize) -> Result<Pose> {
    Ok(pose.apply(Action::from_index(action)?))
}

/// Folds an action sequence into the visited poses, start included.
pub fn rollout(start: Pose, actions: &[Action]) -> Vec<Pose> {
    let mut poses = Vec::with_capacity(actions.len() + 1);
    poses.push(start);
    let mut p = start;
    for &a in actions {
        p = p.apply(a);
        poses.push(p);
    }
    poses
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Trajectory length, meters.
    pub tl: f64,
    /// Final distance to the goal, meters.
    pub ne: f64,
    pub sr: f64,
    pub spl: f64,
}

pub fn metrics(trajectory: &[Pose], goal: &Pose, shortest: f64) -> Result<Metrics> {
    let Some(last) = trajectory.last() else {
        return Err(Error::invalid("empty trajectory"));
    };
    if !(shortest > 0.0 && shortest.is_finite()) {
        return Err(Error::invalid(format!("shortest path length must be positive, got {shortest}")));
    }
    let tl: f64 = trajectory.windows(2).map(|w| w[0].distance(&w[1])).sum();
    let ne = last.distance(goal);
    let sr = if ne <= SUCCESS_DISTANCE { 1.0 } else { 0.0 };
    let spl = sr * shortest / tl.max(shortest);
    Ok(Metrics { tl, ne, sr, spl })
}
