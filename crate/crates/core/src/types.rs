//! Shared data model for the whole pipeline.
//!
//! All values here are immutable after construction and safe to share across
//! threads. Invariants are not enforced by constructors; [`Validate::validate`]
//! reports the first violated invariant so callers can decide whether to
//! reject or repair.

use serde::{Deserialize, Serialize};

/// Number of keypoints per detection (COCO ordering).
pub const KEYPOINT_COUNT: usize = 17;

/// Number of joints after the five head keypoints are collapsed into one.
pub const REDUCED_JOINT_COUNT: usize = 14;

/// Number of action classes.
pub const ACTION_CLASS_COUNT: usize = 5;

/// Default frame rate when a manifest does not override it.
pub const DEFAULT_FPS: f64 = 30.0;

/// An invariant violation found by [`Validate::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Which type the violation was found on.
    pub entity: &'static str,
    /// Human-readable description of the first violated invariant.
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

impl std::error::Error for Violation {}

/// Invariant check returning the first violation, if any.
pub trait Validate {
    fn validate(&self) -> Result<(), Violation>;
}

/// Axis-aligned box in source-frame pixel coordinates, corner form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

impl Validate for BoundingBox {
    fn validate(&self) -> Result<(), Violation> {
        let fields = [self.x_min, self.y_min, self.x_max, self.y_max];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Violation {
                entity: "BoundingBox",
                message: "coordinates must be finite".into(),
            });
        }
        if self.x_min > self.x_max {
            return Err(Violation {
                entity: "BoundingBox",
                message: "x_min > x_max".into(),
            });
        }
        if self.y_min > self.y_max {
            return Err(Violation {
                entity: "BoundingBox",
                message: "y_min > y_max".into(),
            });
        }
        Ok(())
    }
}

/// One estimated body-joint location with confidence.
///
/// Missing keypoints are confidence 0 at (0, 0), never absent entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
    pub joint_id: u8,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64, joint_id: u8) -> Self {
        Self {
            x,
            y,
            confidence,
            joint_id,
        }
    }

    /// The missing-keypoint convention: confidence 0 at the origin.
    pub fn missing(joint_id: u8) -> Self {
        Self::new(0.0, 0.0, 0.0, joint_id)
    }
}

impl Validate for Keypoint {
    fn validate(&self) -> Result<(), Violation> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Violation {
                entity: "Keypoint",
                message: format!("confidence {} outside [0,1]", self.confidence),
            });
        }
        if usize::from(self.joint_id) >= KEYPOINT_COUNT {
            return Err(Violation {
                entity: "Keypoint",
                message: format!("joint_id {} >= {}", self.joint_id, KEYPOINT_COUNT),
            });
        }
        Ok(())
    }
}

/// One person in one frame: box, 17 keypoints, detection score, and an
/// optional appearance embedding used by long-term fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: u64,
    pub bbox: BoundingBox,
    pub keypoints: Vec<Keypoint>,
    pub score: f64,
    pub detection_id: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub embedding: Option<Vec<f64>>,
}

impl Validate for Detection {
    fn validate(&self) -> Result<(), Violation> {
        self.bbox.validate()?;
        if self.keypoints.len() != KEYPOINT_COUNT {
            return Err(Violation {
                entity: "Detection",
                message: format!(
                    "expected {} keypoints, got {}",
                    KEYPOINT_COUNT,
                    self.keypoints.len()
                ),
            });
        }
        for (i, kp) in self.keypoints.iter().enumerate() {
            kp.validate()?;
            if usize::from(kp.joint_id) != i {
                return Err(Violation {
                    entity: "Detection",
                    message: format!("keypoint {} carries joint_id {}", i, kp.joint_id),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Violation {
                entity: "Detection",
                message: format!("score {} outside [0,1]", self.score),
            });
        }
        Ok(())
    }
}

/// A maximal run of one identity over strictly consecutive frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    pub tracklet_id: u64,
    pub detections: Vec<Detection>,
}

impl Tracklet {
    pub fn start_frame(&self) -> u64 {
        self.detections.first().map_or(0, |d| d.frame_index)
    }

    pub fn end_frame(&self) -> u64 {
        self.detections.last().map_or(0, |d| d.frame_index)
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

impl Validate for Tracklet {
    fn validate(&self) -> Result<(), Violation> {
        if self.detections.is_empty() {
            return Err(Violation {
                entity: "Tracklet",
                message: "empty tracklet".into(),
            });
        }
        for pair in self.detections.windows(2) {
            if pair[1].frame_index != pair[0].frame_index + 1 {
                return Err(Violation {
                    entity: "Tracklet",
                    message: format!(
                        "non-consecutive frames {} -> {}",
                        pair[0].frame_index, pair[1].frame_index
                    ),
                });
            }
        }
        for det in &self.detections {
            det.validate()?;
        }
        Ok(())
    }
}

/// The fused target timeline: ordered, temporally disjoint tracklets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Track {
    pub tracklets: Vec<Tracklet>,
}

impl Track {
    /// Total number of frames covered by any tracklet.
    pub fn covered_frames(&self) -> u64 {
        self.tracklets.iter().map(|t| t.len() as u64).sum()
    }

    /// The target detection at `frame`, if the track covers it.
    pub fn detection_at(&self, frame: u64) -> Option<&Detection> {
        self.tracklets
            .iter()
            .find(|t| t.start_frame() <= frame && frame <= t.end_frame())
            .map(|t| &t.detections[(frame - t.start_frame()) as usize])
    }

    /// Maximal runs of consecutive covered frames, ascending.
    pub fn covered_runs(&self) -> Vec<(u64, u64)> {
        let mut runs: Vec<(u64, u64)> = Vec::new();
        for t in &self.tracklets {
            match runs.last_mut() {
                Some(last) if last.1 + 1 == t.start_frame() => last.1 = t.end_frame(),
                _ => runs.push((t.start_frame(), t.end_frame())),
            }
        }
        runs
    }
}

impl Validate for Track {
    fn validate(&self) -> Result<(), Violation> {
        for t in &self.tracklets {
            t.validate()?;
        }
        for pair in self.tracklets.windows(2) {
            if pair[0].start_frame() > pair[1].start_frame() {
                return Err(Violation {
                    entity: "Track",
                    message: "tracklets not sorted by start frame".into(),
                });
            }
            if pair[1].start_frame() <= pair[0].end_frame() {
                return Err(Violation {
                    entity: "Track",
                    message: format!(
                        "tracklets {} and {} overlap in time",
                        pair[0].tracklet_id, pair[1].tracklet_id
                    ),
                });
            }
        }
        Ok(())
    }
}

/// The five action classes, in fixed reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionLabel {
    Sitting,
    SitToStand,
    Standing,
    Walking,
    StandToSit,
}

impl ActionLabel {
    pub const ALL: [ActionLabel; ACTION_CLASS_COUNT] = [
        ActionLabel::Sitting,
        ActionLabel::SitToStand,
        ActionLabel::Standing,
        ActionLabel::Walking,
        ActionLabel::StandToSit,
    ];

    /// Position in the fixed reporting order.
    pub fn index(self) -> usize {
        match self {
            ActionLabel::Sitting => 0,
            ActionLabel::SitToStand => 1,
            ActionLabel::Standing => 2,
            ActionLabel::Walking => 3,
            ActionLabel::StandToSit => 4,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Canonical file label.
    pub fn as_str(self) -> &'static str {
        match self {
            ActionLabel::Sitting => "sitting",
            ActionLabel::SitToStand => "sit_to_stand",
            ActionLabel::Standing => "standing",
            ActionLabel::Walking => "walking",
            ActionLabel::StandToSit => "stand_to_sit",
        }
    }

    /// Parse a label, accepting snake-case and hyphenated spellings.
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "sitting" => Some(ActionLabel::Sitting),
            "sit_to_stand" => Some(ActionLabel::SitToStand),
            "standing" => Some(ActionLabel::Standing),
            "walking" => Some(ActionLabel::Walking),
            "stand_to_sit" => Some(ActionLabel::StandToSit),
            _ => None,
        }
    }
}

impl std::fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A labeled, contiguous frame range of the target track.
///
/// `detections[i]` is the target detection at frame `start_frame + i`;
/// `None` records a frame the track does not cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionClip {
    pub start_frame: u64,
    pub end_frame: u64,
    pub label: ActionLabel,
    pub subject_id: String,
    pub detections: Vec<Option<Detection>>,
}

impl ActionClip {
    /// Number of frames spanned, including missing ones.
    pub fn frame_count(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn duration_secs(&self, fps: f64) -> f64 {
        self.frame_count() as f64 / fps
    }
}

impl Validate for ActionClip {
    fn validate(&self) -> Result<(), Violation> {
        if self.start_frame > self.end_frame {
            return Err(Violation {
                entity: "ActionClip",
                message: "start_frame > end_frame".into(),
            });
        }
        if self.detections.len() as u64 != self.frame_count() {
            return Err(Violation {
                entity: "ActionClip",
                message: format!(
                    "expected {} per-frame slots, got {}",
                    self.frame_count(),
                    self.detections.len()
                ),
            });
        }
        Ok(())
    }
}

/// The classifier input: per-joint time-colorized heatmaps stacked into a
/// `(14 * C, H, W)` grid with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEvolutionMap {
    pub values: ndarray::Array3<f32>,
}

impl PoseEvolutionMap {
    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }

    /// Time-encoding channels per joint.
    pub fn time_channels(&self) -> usize {
        self.channels() / REDUCED_JOINT_COUNT
    }
}

impl Validate for PoseEvolutionMap {
    fn validate(&self) -> Result<(), Violation> {
        if !self.channels().is_multiple_of(REDUCED_JOINT_COUNT) {
            return Err(Violation {
                entity: "PoseEvolutionMap",
                message: format!(
                    "channel count {} is not a multiple of {}",
                    self.channels(),
                    REDUCED_JOINT_COUNT
                ),
            });
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Violation {
                entity: "PoseEvolutionMap",
                message: format!("value {} outside [0,1]", v),
            });
        }
        Ok(())
    }
}
