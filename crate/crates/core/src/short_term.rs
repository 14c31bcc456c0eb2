//! Short-term tracking: link per-frame detections into tracklets by IoU
//! between consecutive frames.
//!
//! Matching is solved exactly per frame transition. Pairs whose IoU falls
//! below the threshold are cost-forbidden before solving rather than
//! filtered afterwards, so the solver cannot trade one good match for two
//! bad ones. An unmatched tracklet closes immediately; bridging gaps is the
//! long-term fusion stage's job.

use thiserror::Error;

use crate::assignment::{solve_assignment, CostMatrix, FORBIDDEN};
use crate::types::{BoundingBox, Detection, Tracklet};

/// Default IoU floor below which a pair cannot be linked.
pub const DEFAULT_TAU_IOU: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("frame {got} does not follow previous frame {expected}; close the state first")]
    FrameDiscontinuity { expected: u64, got: u64 },
    #[error("detection {detection_id} carries frame {got}, expected {expected}")]
    MixedFrames {
        detection_id: u64,
        expected: u64,
        got: u64,
    },
}

/// Intersection over union of two boxes; 0 when the union has no area.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let intersection = ix * iy;
    let union = a.area() + b.area() - intersection;
    if union <= 0.0 {
        0.0
    } else {
        intersection / union
    }
}

/// Fold state of the per-frame linker.
///
/// `active` tracklets all end exactly at the previously processed frame and
/// are the only ones a new detection may extend.
#[derive(Debug, Default)]
pub struct TrackerState {
    active: Vec<Tracklet>,
    closed: Vec<Tracklet>,
    next_tracklet_id: u64,
    last_frame: Option<u64>,
}

impl TrackerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn active(&self) -> &[Tracklet] {
        &self.active
    }

    pub fn closed(&self) -> &[Tracklet] {
        &self.closed
    }

    /// Move every active tracklet to closed; the next frame starts fresh.
    pub fn close_all(&mut self) {
        self.closed.append(&mut self.active);
        self.last_frame = None;
    }

    /// Link one frame's detections against the active tracklets.
    pub fn link_frame(
        &mut self,
        frame: u64,
        detections: &[Detection],
        tau_iou: f64,
    ) -> Result<(), TrackError> {
        if let Some(last) = self.last_frame {
            if frame != last + 1 {
                return Err(TrackError::FrameDiscontinuity {
                    expected: last + 1,
                    got: frame,
                });
            }
        }
        for det in detections {
            if det.frame_index != frame {
                return Err(TrackError::MixedFrames {
                    detection_id: det.detection_id,
                    expected: frame,
                    got: det.frame_index,
                });
            }
        }

        let mut costs = CostMatrix::new(self.active.len(), detections.len(), FORBIDDEN);
        for (i, tracklet) in self.active.iter().enumerate() {
            let tail = &tracklet
                .detections
                .last()
                .expect("active tracklets are non-empty")
                .bbox;
            for (j, det) in detections.iter().enumerate() {
                let overlap = iou(tail, &det.bbox);
                if overlap >= tau_iou {
                    costs.set(i, j, 1.0 - overlap);
                }
            }
        }
        let matching = solve_assignment(&costs).expect("IoU costs are finite");

        let mut detection_match: Vec<Option<usize>> = vec![None; detections.len()];
        for &(row, col) in &matching.pairs {
            detection_match[col] = Some(row);
        }

        let previous = std::mem::take(&mut self.active);
        let mut extended: Vec<Option<Tracklet>> = previous.into_iter().map(Some).collect();
        let mut next_active = Vec::with_capacity(detections.len());
        // extended tracklets keep their relative order, new ones follow in
        // detection order
        for (j, det) in detections.iter().enumerate() {
            if let Some(i) = detection_match[j] {
                let mut tracklet = extended[i].take().expect("each tracklet matched once");
                tracklet.detections.push(det.clone());
                next_active.push(tracklet);
            }
        }
        for det in detections
            .iter()
            .enumerate()
            .filter(|(j, _)| detection_match[*j].is_none())
            .map(|(_, d)| d)
        {
            next_active.push(Tracklet {
                tracklet_id: self.next_tracklet_id,
                detections: vec![det.clone()],
            });
            self.next_tracklet_id += 1;
        }
        // unmatched actives close immediately
        for tracklet in extended.into_iter().flatten() {
            self.closed.push(tracklet);
        }

        self.active = next_active;
        self.last_frame = Some(frame);
        Ok(())
    }

    /// Close everything and return all tracklets sorted by id.
    pub fn finish(mut self) -> Vec<Tracklet> {
        self.close_all();
        self.closed.sort_by_key(|t| t.tracklet_id);
        self.closed
    }
}

/// Build the full tracklet set from per-frame detection groups.
///
/// Groups must be ordered by frame index. A gap between groups closes every
/// active tracklet: the no-abrupt-movement assumption behind IoU linking
/// does not hold across missing frames.
pub fn build_tracklets(frames: &[(u64, Vec<Detection>)], tau_iou: f64) -> Vec<Tracklet> {
    let mut state = TrackerState::new();
    for (frame, detections) in frames {
        let continuous = match state.last_frame {
            None => true,
            Some(last) => *frame == last + 1,
        };
        if !continuous {
            state.close_all();
        }
        state
            .link_frame(*frame, detections, tau_iou)
            .expect("discontinuities are closed before linking");
    }
    state.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Keypoint, KEYPOINT_COUNT};

    fn boxed_detection(frame: u64, id: u64, x: f64, y: f64, w: f64, h: f64) -> Detection {
        Detection {
            frame_index: frame,
            bbox: BoundingBox::new(x, y, x + w, y + h),
            keypoints: (0..KEYPOINT_COUNT as u8).map(Keypoint::missing).collect(),
            score: 0.9,
            detection_id: id,
            embedding: None,
        }
    }

    #[test]
    fn iou_of_identical_box_is_one() {
        let b = BoundingBox::new(2.0, 3.0, 12.0, 9.0);
        assert_eq!(iou(&b, &b), 1.0);
    }

    #[test]
    fn iou_of_disjoint_boxes_is_zero() {
        let a = BoundingBox::new(0.0, 0.0, 1.0, 1.0);
        let b = BoundingBox::new(5.0, 5.0, 6.0, 6.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_half_shift_is_one_third() {
        // unit-cell count: 50 shared cells out of 150 in the union
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BoundingBox::new(5.0, 0.0, 15.0, 10.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_of_degenerate_boxes_is_zero() {
        let a = BoundingBox::new(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou(&a, &a), 0.0);
    }

    #[test]
    fn first_frame_starts_new_tracklets() {
        let mut state = TrackerState::new();
        let dets = vec![
            boxed_detection(0, 0, 0.0, 0.0, 10.0, 10.0),
            boxed_detection(0, 1, 50.0, 0.0, 10.0, 10.0),
        ];
        state.link_frame(0, &dets, 0.5).unwrap();
        assert_eq!(state.active().len(), 2);
        assert_eq!(state.active()[0].tracklet_id, 0);
        assert_eq!(state.active()[1].tracklet_id, 1);
    }

    #[test]
    fn overlapping_detection_extends_tracklet() {
        let mut state = TrackerState::new();
        state
            .link_frame(0, &[boxed_detection(0, 0, 0.0, 0.0, 10.0, 10.0)], 0.5)
            .unwrap();
        // shift by 0.5 px: iou = 9.5 / 10.5 ~ 0.9
        state
            .link_frame(1, &[boxed_detection(1, 1, 0.5, 0.0, 10.0, 10.0)], 0.5)
            .unwrap();
        assert_eq!(state.active().len(), 1);
        assert_eq!(state.active()[0].len(), 2);
        assert!(state.closed().is_empty());
    }

    #[test]
    fn below_threshold_closes_and_restarts() {
        let mut state = TrackerState::new();
        state
            .link_frame(0, &[boxed_detection(0, 0, 0.0, 0.0, 10.0, 10.0)], 0.5)
            .unwrap();
        // disjoint: iou 0 < tau, so the pair is forbidden
        state
            .link_frame(1, &[boxed_detection(1, 1, 100.0, 0.0, 10.0, 10.0)], 0.5)
            .unwrap();
        assert_eq!(state.closed().len(), 1);
        assert_eq!(state.active().len(), 1);
        assert_eq!(state.active()[0].tracklet_id, 1);
    }

    #[test]
    fn two_actors_keep_their_identities() {
        // iou(a0,d0) ~ 0.82, iou(a1,d1) ~ 0.82, cross pairs below tau:
        // of the two complete matchings only the diagonal is allowed
        let mut state = TrackerState::new();
        let frame0 = vec![
            boxed_detection(0, 0, 0.0, 0.0, 10.0, 10.0),
            boxed_detection(0, 1, 14.0, 0.0, 10.0, 10.0),
        ];
        state.link_frame(0, &frame0, 0.5).unwrap();
        let frame1 = vec![
            boxed_detection(1, 2, 1.0, 0.0, 10.0, 10.0),
            boxed_detection(1, 3, 15.0, 0.0, 10.0, 10.0),
        ];
        state.link_frame(1, &frame1, 0.5).unwrap();
        assert_eq!(state.active().len(), 2);
        let by_id: Vec<_> = state
            .active()
            .iter()
            .map(|t| (t.tracklet_id, t.detections.last().unwrap().detection_id))
            .collect();
        assert!(by_id.contains(&(0, 2)));
        assert!(by_id.contains(&(1, 3)));
    }

    #[test]
    fn discontinuity_is_an_error() {
        let mut state = TrackerState::new();
        state
            .link_frame(0, &[boxed_detection(0, 0, 0.0, 0.0, 10.0, 10.0)], 0.5)
            .unwrap();
        let err = state
            .link_frame(5, &[boxed_detection(5, 1, 0.0, 0.0, 10.0, 10.0)], 0.5)
            .unwrap_err();
        assert_eq!(
            err,
            TrackError::FrameDiscontinuity {
                expected: 1,
                got: 5
            }
        );
    }

    fn walk_frames(frames: u64, skip: Option<std::ops::Range<u64>>) -> Vec<(u64, Vec<Detection>)> {
        let mut out = Vec::new();
        let mut id = 0;
        for f in 0..frames {
            if skip.as_ref().is_some_and(|r| r.contains(&f)) {
                continue;
            }
            let x = f as f64 * 0.5;
            out.push((f, vec![boxed_detection(f, id, x, 0.0, 20.0, 40.0)]));
            id += 1;
        }
        out
    }

    #[test]
    fn continuous_actor_yields_one_tracklet() {
        let tracklets = build_tracklets(&walk_frames(700, None), DEFAULT_TAU_IOU);
        assert_eq!(tracklets.len(), 1);
        assert_eq!(tracklets[0].len(), 700);
        assert!(crate::types::Validate::validate(&tracklets[0]).is_ok());
    }

    #[test]
    fn occlusion_dropout_splits_the_identity() {
        let tracklets = build_tracklets(&walk_frames(100, Some(40..50)), DEFAULT_TAU_IOU);
        assert_eq!(tracklets.len(), 2);
        assert_eq!(tracklets[0].len(), 40);
        assert_eq!(tracklets[1].len(), 50);
    }

    #[test]
    fn partition_property_on_jittered_input() {
        use rand::Rng;
        let mut rng = crate::rng::stage_rng(3, "short-term-partition");
        let mut frames: Vec<(u64, Vec<Detection>)> = Vec::new();
        let mut id = 0;
        for f in 0..120u64 {
            let mut group = Vec::new();
            for a in 0..3 {
                if rng.gen_bool(0.1) {
                    continue; // drop some detections
                }
                let x = a as f64 * 60.0 + rng.gen_range(-4.0..4.0);
                group.push(boxed_detection(f, id, x, 0.0, 20.0, 40.0));
                id += 1;
            }
            frames.push((f, group));
        }
        let total: usize = frames.iter().map(|(_, g)| g.len()).sum();
        let tracklets = build_tracklets(&frames, DEFAULT_TAU_IOU);
        let linked: usize = tracklets.iter().map(Tracklet::len).sum();
        assert_eq!(linked, total);
        let mut ids: Vec<u64> = tracklets
            .iter()
            .flat_map(|t| t.detections.iter().map(|d| d.detection_id))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), total);
        for t in &tracklets {
            assert!(crate::types::Validate::validate(t).is_ok());
        }
    }

    #[test]
    fn raising_tau_never_merges_tracklets() {
        use rand::Rng;
        let mut rng = crate::rng::stage_rng(5, "short-term-monotone");
        let mut frames: Vec<(u64, Vec<Detection>)> = Vec::new();
        let mut id = 0;
        for f in 0..80u64 {
            let x = f as f64 * rng.gen_range(0.0..6.0);
            frames.push((f, vec![boxed_detection(f, id, x, 0.0, 20.0, 40.0)]));
            id += 1;
        }
        let mut last_count = 0;
        for tau in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let count = build_tracklets(&frames, tau).len();
            assert!(
                count >= last_count,
                "tau {} gave {} < {}",
                tau,
                count,
                last_count
            );
            last_count = count;
        }
    }

    #[test]
    fn deterministic_output() {
        let frames = walk_frames(50, Some(20..25));
        let a = build_tracklets(&frames, DEFAULT_TAU_IOU);
        let b = build_tracklets(&frames, DEFAULT_TAU_IOU);
        assert_eq!(a, b);
    }
}
