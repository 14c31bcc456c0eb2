//! Segment the fused target track into labeled action clips, balance class
//! counts, and split clips into train/val/test by subject.

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::ingest::AnnotationSpan;
use crate::rng::{indexed_rng, stage_rng};
use crate::types::{ActionClip, ActionLabel, Track, ACTION_CLASS_COUNT};

/// Clips shorter than this many seconds are dropped.
pub const DEFAULT_MIN_DURATION_SECS: f64 = 0.2;
/// Clips longer than this many seconds are cut into windows of this length.
pub const DEFAULT_MAX_DURATION_SECS: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum ClipperError {
    #[error("subject {0:?} appears in both the train/val and test lists")]
    SubjectOverlap(String),
    #[error("subject {0:?} is in neither the train/val nor the test list")]
    UnknownSubject(String),
    #[error("invalid split config: {0}")]
    InvalidConfig(String),
}

/// Cut each annotated span into clips covered by the track.
///
/// A span first intersects the track's covered frame set; every maximal
/// contiguous covered run inside the span is a piece. Pieces shorter than
/// `min_dur` seconds are dropped; longer pieces are cut into consecutive
/// `max_dur` windows, and the trailing remainder is kept only if it is at
/// least `min_dur` long.
pub fn segment_clips(
    track: &Track,
    spans: &[AnnotationSpan],
    fps: f64,
    min_dur: f64,
    max_dur: f64,
) -> Vec<ActionClip> {
    assert!(fps > 0.0 && min_dur >= 0.0 && max_dur >= min_dur);
    let window_frames = ((max_dur * fps) + 1e-9).floor().max(1.0) as u64;
    let long_enough = |frames: u64| frames as f64 / fps >= min_dur - 1e-9;

    let runs = track.covered_runs();
    let mut clips = Vec::new();
    for span in spans {
        for &(run_start, run_end) in &runs {
            let start = run_start.max(span.start_frame);
            let end = run_end.min(span.end_frame);
            if start > end {
                continue;
            }
            let mut cursor = start;
            while cursor <= end {
                let clip_end = (cursor + window_frames - 1).min(end);
                let frames = clip_end - cursor + 1;
                if long_enough(frames) {
                    clips.push(ActionClip {
                        start_frame: cursor,
                        end_frame: clip_end,
                        label: span.label,
                        subject_id: span.subject_id.clone(),
                        detections: (cursor..=clip_end)
                            .map(|f| track.detection_at(f).cloned())
                            .collect(),
                    });
                }
                cursor = clip_end + 1;
            }
        }
    }
    clips
}

/// Under-sample classes above `cap` without replacement; clip contents and
/// relative order are preserved.
pub fn balance(clips: &[ActionClip], cap: usize, seed: u64) -> Vec<ActionClip> {
    let mut keep = vec![true; clips.len()];
    for label in ActionLabel::ALL {
        let indices: Vec<usize> = clips
            .iter()
            .enumerate()
            .filter(|(_, c)| c.label == label)
            .map(|(i, _)| i)
            .collect();
        if indices.len() <= cap {
            continue;
        }
        let mut rng = indexed_rng(seed, "balance", label.index() as u64);
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        for &drop in &shuffled[cap..] {
            keep[drop] = false;
        }
    }
    clips
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(c, _)| c.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    /// Subjects held out entirely for testing.
    pub test_subjects: Vec<String>,
    /// When given, the explicit train/val subject list; overlap with the
    /// test list is a config error.
    pub trainval_subjects: Option<Vec<String>>,
    /// Fraction of the train/val pool that becomes validation, by clip.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_subjects: Vec::new(),
            trainval_subjects: None,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitClips {
    pub train: Vec<ActionClip>,
    pub val: Vec<ActionClip>,
    pub test: Vec<ActionClip>,
}

/// Assign clips to train/val/test.
///
/// Test takes every clip of a held-out subject; the remaining clips are
/// split by seeded shuffle into train and validation, by clip rather than
/// by subject.
pub fn split_by_subject(
    clips: &[ActionClip],
    cfg: &SplitConfig,
) -> Result<SplitClips, ClipperError> {
    if !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(ClipperError::InvalidConfig(format!(
            "val_fraction {} outside [0, 1)",
            cfg.val_fraction
        )));
    }
    if let Some(trainval) = &cfg.trainval_subjects {
        if let Some(overlap) = trainval.iter().find(|s| cfg.test_subjects.contains(s)) {
            return Err(ClipperError::SubjectOverlap(overlap.clone()));
        }
    }

    let mut pool_indices = Vec::new();
    let mut split = SplitClips::default();
    for (i, clip) in clips.iter().enumerate() {
        if cfg.test_subjects.contains(&clip.subject_id) {
            split.test.push(clip.clone());
        } else if cfg
            .trainval_subjects
            .as_ref()
            .is_some_and(|list| !list.contains(&clip.subject_id))
        {
            return Err(ClipperError::UnknownSubject(clip.subject_id.clone()));
        } else {
            pool_indices.push(i);
        }
    }

    let mut shuffled = pool_indices;
    shuffled.shuffle(&mut stage_rng(cfg.seed, "subject-split"));
    let train_count = (shuffled.len() as f64 * (1.0 - cfg.val_fraction)).floor() as usize;
    let mut train_idx: Vec<usize> = shuffled[..train_count].to_vec();
    let mut val_idx: Vec<usize> = shuffled[train_count..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    split.train = train_idx.iter().map(|&i| clips[i].clone()).collect();
    split.val = val_idx.iter().map(|&i| clips[i].clone()).collect();
    Ok(split)
}

pub use crate::types::ACTION_CLASS_COUNT as CLASS_COUNT;

/// Per-class clip counts in label order.
pub fn class_counts(clips: &[ActionClip]) -> [usize; ACTION_CLASS_COUNT] {
    let mut counts = [0usize; ACTION_CLASS_COUNT];
    for clip in clips {
        counts[clip.label.index()] += 1;
    }
    counts
}
