//! Behaviour-controller policy turning confidences into localization commands.

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidencePair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    FlipPose,
    PurgeReflection,
    ResetOrientation,
}

impl CommandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::FlipPose => "flip_pose",
            CommandKind::PurgeReflection => "purge_reflection",
            CommandKind::ResetOrientation => "reset_orientation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BCCommand {
    pub kind: CommandKind,
    pub frame: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub flip_margin: f64,
    pub purge_margin: f64,
    pub hold_frames: u32,
    pub cooldown_frames: u32,
    pub train_margin: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            flip_margin: 0.25,
            purge_margin: 0.25,
            hold_frames: 10,
            cooldown_frames: 30,
            train_margin: 0.15,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(unit(self.flip_margin) && unit(self.purge_margin) && unit(self.train_margin)) {
            return Err(Error::invalid("bc margins must lie in (0, 1)"));
        }
        if self.hold_frames < 1 || self.cooldown_frames < self.hold_frames {
            return Err(Error::invalid("bc.hold_frames must be >= 1 and <= bc.cooldown_frames"));
        }
        Ok(())
    }
}

/// Controller memory carried from one frame to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    /// Index of the next frame to be decided.
    pub frame: u64,
    pub flip_streak: u32,
    pub purge_streak: u32,
    pub last_command: Option<u64>,
    /// A fall arrived during cooldown; the reset goes out once cooldown ends.
    pub pending_reset: bool,
}

impl ControllerState {
    pub fn in_cooldown(&self, frame: u64, cfg: &ControllerConfig) -> bool {
        self.last_command
            .is_some_and(|last| frame.saturating_sub(last) < u64::from(cfg.cooldown_frames))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub command: Option<BCCommand>,
    pub training_gate: bool,
}

/// One frame of the policy.
///
/// A fall yields `ResetOrientation` (deferred to the end of any running
/// cooldown). A reflected-pose lead above `flip_margin` held for
/// `hold_frames` frames yields `FlipPose`. A current-pose lead above
/// `purge_margin` held as long, while self-localization is multimodal,
/// yields `PurgeReflection`. The training gate is open only outside cooldown,
/// with no reset pending, while the current pose leads by more than
/// `train_margin`.
pub fn decide(
    smoothed: ConfidencePair,
    selfloc_multimodal: bool,
    fall: bool,
    state: ControllerState,
    cfg: &ControllerConfig,
) -> (Decision, ControllerState) {
    let mut s = state;
    let frame = s.frame;
    s.frame += 1;
    if fall {
        s.pending_reset = true;
    }
    let margin = smoothed.margin();
    s.flip_streak = if -margin > cfg.flip_margin {
        s.flip_streak.saturating_add(1)
    } else {
        0
    };
    s.purge_streak = if margin > cfg.purge_margin && selfloc_multimodal {
        s.purge_streak.saturating_add(1)
    } else {
        0
    };

    let mut command = None;
    if !s.in_cooldown(frame, cfg) {
        let kind = if s.pending_reset {
            Some(CommandKind::ResetOrientation)
        } else if s.flip_streak >= cfg.hold_frames {
            Some(CommandKind::FlipPose)
        } else if s.purge_streak >= cfg.hold_frames {
            Some(CommandKind::PurgeReflection)
        } else {
            None
        };
        if let Some(kind) = kind {
            command = Some(BCCommand { kind, frame });
            s.last_command = Some(frame);
            s.flip_streak = 0;
            s.purge_streak = 0;
            s.pending_reset = false;
        }
    }

    let training_gate = !s.in_cooldown(frame, cfg) && !s.pending_reset && margin > cfg.train_margin;
    (
        Decision {
            command,
            training_gate,
        },
        s,
    )
}
