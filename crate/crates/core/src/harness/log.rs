//! JSON-lines trial logs, one object per frame.

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidencePair;
use crate::controller::CommandKind;
use crate::error::{Error, Result};
use crate::orientation_filter::ClusterEstimate;
use crate::selfloc::Pose2D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub time: f64,
    pub truth: Pose2D,
    pub estimate: Pose2D,
    pub multimodal: bool,
    pub head_yaw: f64,
    pub believed_view_center: f64,
    pub visible_tiles: usize,
    pub cluster: ClusterEstimate,
    pub confidence: ConfidencePair,
    pub smoothed: ConfidencePair,
    pub training_gate: bool,
    pub fall: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub command: Option<CommandKind>,
    /// `(azimuth, weight)` of every orientation particle; verbose logs only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub particles: Option<Vec<(f64, f64)>>,
}

/// Serializes records as newline-terminated JSON objects.
pub fn write_log(records: &[FrameRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("frame records always serialize"));
        out.push('\n');
    }
    out
}

/// Parses one line; `line` is only used for error reporting.
pub fn parse_log_line(text: &str, line: usize) -> Result<FrameRecord> {
    serde_json::from_str(text).map_err(|e| Error::LogFormat {
        line,
        message: e.to_string(),
    })
}

/// Parses a whole log, skipping blank lines. Frames must be strictly increasing.
pub fn parse_log(text: &str) -> Result<Vec<FrameRecord>> {
    let mut out: Vec<FrameRecord> = Vec::new();
    for (i, l) in text.lines().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let r = parse_log_line(l, i + 1)?;
        if out.last().is_some_and(|p| p.frame >= r.frame) {
            return Err(Error::LogFormat {
                line: i + 1,
                message: format!("frame {} does not follow frame {}", r.frame, out.last().map_or(0, |p| p.frame)),
            });
        }
        out.push(r);
    }
    Ok(out)
}
