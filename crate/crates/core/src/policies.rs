//! Reference steering policies.

use crate::channel::{angle_between, look_angles, unit_direction, BeamOrientation};
use crate::env::{apply_action, ActionIndex};
use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    /// Grid-constrained greedy steering toward the true node position.
    Oracle,
    /// Never moves the initial beam.
    FixedBeam,
    /// Greedy action from a trained Q-network.
    DqnGreedy,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Oracle => "oracle",
            PolicyKind::FixedBeam => "fixed",
            PolicyKind::DqnGreedy => "dqn",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(PolicyKind::Oracle),
            "fixed" | "fixed_beam" => Ok(PolicyKind::FixedBeam),
            "dqn" | "dqn_greedy" => Ok(PolicyKind::DqnGreedy),
            other => Err(Error::Validation(format!(
                "unknown policy {other:?} (expected oracle, fixed, or dqn)"
            ))),
        }
    }
}

/// Angular error (rad) left after applying `action` to `beam`, against the
/// look direction `target`.
pub fn post_action_error(
    beam: BeamOrientation,
    action: ActionIndex,
    refine_angle: f64,
    target: Vec3,
) -> f64 {
    angle_between(apply_action(beam, action, refine_angle).direction(), target)
}

/// Picks the action whose resulting orientation is closest (great-circle) to
/// the receiver as seen from the true node position. Ties go to the lowest index.
pub fn oracle_action(
    node: Vec3,
    rx: Vec3,
    beam: BeamOrientation,
    refine_angle: f64,
) -> Result<ActionIndex> {
    let (zenith, azimuth, _) = look_angles(node, rx)?;
    let target = unit_direction(zenith, azimuth);
    let mut best = ActionIndex::CENTER;
    let mut best_err = f64::INFINITY;
    for a in ActionIndex::all() {
        let err = post_action_error(beam, a, refine_angle, target);
        if err < best_err {
            best = a;
            best_err = err;
        }
    }
    Ok(best)
}

pub fn fixed_action() -> ActionIndex {
    ActionIndex::CENTER
}
