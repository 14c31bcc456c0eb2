//! Long-term tracking: prune short or keypoint-poor tracklets, compare each
//! surviving tracklet's best detection to a reference tracklet by appearance
//! distance, and fuse the accepted ones into the single target track.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::types::{BoundingBox, Detection, Track, Tracklet};

/// Dimensionality of [`fallback_descriptor`]: a 3x3 spatial grid with an
/// 8-bin histogram per color channel in every cell.
pub const FALLBACK_DESCRIPTOR_DIM: usize = 3 * 3 * 3 * 8;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("no tracklets to fuse")]
    NoTracklets,
    #[error("reference tracklet {0} is not in the tracklet set")]
    UnknownReference(u64),
    #[error("representative detection {0} has no embedding")]
    MissingEmbedding(u64),
    #[error("tracklet {0} has no ground-truth label")]
    MissingGroundTruth(u64),
}

/// How a distance threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AcceptRule {
    /// Accept below a fixed distance.
    Absolute(f64),
    /// Accept below `alpha * median(all pairwise representative distances)`;
    /// robust to the scale of the embedding space.
    RelativeToMedian { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    /// Minimum tracklet length in frames.
    pub min_length: usize,
    /// Minimum mean count of confident keypoints per detection.
    pub min_mean_keypoints: f64,
    /// Keypoint confidence floor used by the mean-keypoint count.
    pub confidence_floor: f64,
    pub accept_rule: AcceptRule,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            min_length: 15,
            min_mean_keypoints: 5.0,
            confidence_floor: 0.05,
            accept_rule: AcceptRule::RelativeToMedian { alpha: 0.6 },
        }
    }
}

/// Why a tracklet ended up in or out of the target track.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictReason {
    Pruned,
    Fused,
    Rejected,
}

impl std::fmt::Display for VerdictReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerdictReason::Pruned => "pruned",
            VerdictReason::Fused => "fused",
            VerdictReason::Rejected => "rejected",
        })
    }
}

/// Per-tracklet outcome of the fusion stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackletVerdict {
    pub tracklet_id: u64,
    pub predicted_target: bool,
    /// Appearance distance to the reference; absent for pruned tracklets.
    pub distance: Option<f64>,
    pub reason: VerdictReason,
}

fn mean_confident_keypoints(tracklet: &Tracklet, floor: f64) -> f64 {
    let total: usize = tracklet
        .detections
        .iter()
        .map(|d| d.keypoints.iter().filter(|k| k.confidence >= floor).count())
        .sum();
    total as f64 / tracklet.detections.len() as f64
}

fn survives(tracklet: &Tracklet, cfg: &FusionConfig) -> bool {
    tracklet.len() >= cfg.min_length
        && mean_confident_keypoints(tracklet, cfg.confidence_floor) >= cfg.min_mean_keypoints
}

/// Keep tracklets that are long enough and have enough confident keypoints.
pub fn prune(tracklets: &[Tracklet], cfg: &FusionConfig) -> Vec<Tracklet> {
    tracklets
        .iter()
        .filter(|t| survives(t, cfg))
        .cloned()
        .collect()
}

/// The highest-score detection; ties go to the earliest frame.
pub fn sample_representative(tracklet: &Tracklet) -> &Detection {
    tracklet
        .detections
        .iter()
        .reduce(|best, det| if det.score > best.score { det } else { best })
        .expect("tracklets are non-empty")
}

/// Euclidean distance between two appearance vectors.
pub fn affinity(left: &[f64], right: &[f64]) -> Result<f64, FusionError> {
    if left.len() != right.len() {
        return Err(FusionError::DimensionMismatch {
            left: left.len(),
            right: right.len(),
        });
    }
    Ok(left
        .iter()
        .zip(right)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Color-histogram stand-in for a learned appearance embedding.
///
/// The box crop is split into a 3x3 grid; each cell contributes an 8-bin
/// histogram per color channel. The concatenation is L2-normalized, so
/// distances are comparable across crop sizes. An empty crop yields the zero
/// vector.
pub fn fallback_descriptor(image: &image::RgbImage, bbox: &BoundingBox) -> Vec<f64> {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let x0 = (bbox.x_min.floor() as i64).clamp(0, w);
    let x1 = (bbox.x_max.ceil() as i64).clamp(0, w);
    let y0 = (bbox.y_min.floor() as i64).clamp(0, h);
    let y1 = (bbox.y_max.ceil() as i64).clamp(0, h);
    let mut descriptor = vec![0.0f64; FALLBACK_DESCRIPTOR_DIM];
    let (cw, ch) = (x1 - x0, y1 - y0);
    if cw <= 0 || ch <= 0 {
        return descriptor;
    }
    for y in y0..y1 {
        let cell_row = (((y - y0) * 3) / ch).min(2) as usize;
        for x in x0..x1 {
            let cell_col = (((x - x0) * 3) / cw).min(2) as usize;
            let pixel = image.get_pixel(x as u32, y as u32);
            for (channel, &value) in pixel.0.iter().enumerate() {
                let bin = usize::from(value) / 32;
                let index = (((cell_row * 3 + cell_col) * 3) + channel) * 8 + bin;
                descriptor[index] += 1.0;
            }
        }
    }
    let norm = descriptor.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut descriptor {
            *v /= norm;
        }
    }
    descriptor
}

/// Fused track plus the per-tracklet audit trail.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutcome {
    pub track: Track,
    pub verdicts: Vec<TrackletVerdict>,
    /// Distance threshold actually applied.
    pub threshold: f64,
}

fn resolve_embedding<'a>(
    detection: &'a Detection,
    embeddings: &'a BTreeMap<u64, Vec<f64>>,
) -> Result<&'a [f64], FusionError> {
    embeddings
        .get(&detection.detection_id)
        .map(Vec::as_slice)
        .or(detection.embedding.as_deref())
        .ok_or(FusionError::MissingEmbedding(detection.detection_id))
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("distances are not NaN"));
    let n = values.len();
    if n == 0 {
        return f64::INFINITY;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Fuse the tracklets most similar in appearance to the reference tracklet
/// into one temporally disjoint track.
///
/// The reference tracklet is exempt from pruning and always accepted. When
/// two accepted tracklets overlap in time the one closer to the reference
/// wins and the other is recorded as rejected.
pub fn fuse_target_track(
    tracklets: &[Tracklet],
    reference_id: u64,
    embeddings: &BTreeMap<u64, Vec<f64>>,
    cfg: &FusionConfig,
) -> Result<FusionOutcome, FusionError> {
    if tracklets.is_empty() {
        return Err(FusionError::NoTracklets);
    }
    let reference_index = tracklets
        .iter()
        .position(|t| t.tracklet_id == reference_id)
        .ok_or(FusionError::UnknownReference(reference_id))?;

    let survivor_indices: Vec<usize> = tracklets
        .iter()
        .enumerate()
        .filter(|(i, t)| *i == reference_index || survives(t, cfg))
        .map(|(i, _)| i)
        .collect();

    let representatives: Vec<&Detection> = survivor_indices
        .iter()
        .map(|&i| sample_representative(&tracklets[i]))
        .collect();
    let vectors: Vec<&[f64]> = representatives
        .iter()
        .map(|d| resolve_embedding(d, embeddings))
        .collect::<Result<_, _>>()?;

    let ref_pos = survivor_indices
        .iter()
        .position(|&i| i == reference_index)
        .expect("reference survives by construction");
    let distances: Vec<f64> = vectors
        .iter()
        .map(|v| affinity(v, vectors[ref_pos]))
        .collect::<Result<_, _>>()?;

    let threshold = match cfg.accept_rule {
        AcceptRule::Absolute(t) => t,
        AcceptRule::RelativeToMedian { alpha } => {
            let mut pairwise = Vec::new();
            for i in 0..vectors.len() {
                for j in i + 1..vectors.len() {
                    pairwise.push(affinity(vectors[i], vectors[j])?);
                }
            }
            alpha * median(pairwise)
        }
    };

    // closest-first greedy keeps the smaller-distance tracklet of any
    // overlapping pair; the reference outranks everything
    let mut accepted: Vec<usize> = (0..survivor_indices.len())
        .filter(|&p| p == ref_pos || distances[p] < threshold)
        .collect();
    accepted.sort_by(|&a, &b| {
        let key = |p: usize| {
            (
                p != ref_pos,
                distances[p],
                tracklets[survivor_indices[p]].tracklet_id,
            )
        };
        key(a).partial_cmp(&key(b)).expect("distances are not NaN")
    });
    let mut kept: Vec<usize> = Vec::new();
    let mut overlap_rejected: Vec<usize> = Vec::new();
    for p in accepted {
        let t = &tracklets[survivor_indices[p]];
        let overlaps = kept.iter().any(|&k| {
            let other = &tracklets[survivor_indices[k]];
            t.start_frame() <= other.end_frame() && other.start_frame() <= t.end_frame()
        });
        if overlaps {
            overlap_rejected.push(p);
        } else {
            kept.push(p);
        }
    }

    let mut track_tracklets: Vec<Tracklet> = kept
        .iter()
        .map(|&p| tracklets[survivor_indices[p]].clone())
        .collect();
    track_tracklets.sort_by_key(Tracklet::start_frame);
    let track = Track {
        tracklets: track_tracklets,
    };

    let verdicts = tracklets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let pos = survivor_indices.iter().position(|&s| s == i);
            match pos {
                None => TrackletVerdict {
                    tracklet_id: t.tracklet_id,
                    predicted_target: false,
                    distance: None,
                    reason: VerdictReason::Pruned,
                },
                Some(p) => {
                    let fused = kept.contains(&p);
                    TrackletVerdict {
                        tracklet_id: t.tracklet_id,
                        predicted_target: fused,
                        distance: Some(distances[p]),
                        reason: if fused {
                            VerdictReason::Fused
                        } else {
                            VerdictReason::Rejected
                        },
                    }
                }
            }
        })
        .collect();

    Ok(FusionOutcome {
        track,
        verdicts,
        threshold,
    })
}

/// Fraction of tracklets whose target/non-target verdict matches the ground
/// truth; pruned tracklets count as predicted non-target.
pub fn tracking_accuracy(
    verdicts: &[TrackletVerdict],
    truth: &BTreeMap<u64, bool>,
) -> Result<f64, FusionError> {
    if verdicts.is_empty() {
        return Ok(1.0);
    }
    let mut correct = 0usize;
    for v in verdicts {
        let actual = truth
            .get(&v.tracklet_id)
            .ok_or(FusionError::MissingGroundTruth(v.tracklet_id))?;
        if *actual == v.predicted_target {
            correct += 1;
        }
    }
    Ok(correct as f64 / verdicts.len() as f64)
}
