//! Property tests for the spec-level invariants that hold over whole input
//! families rather than single examples.

use proptest::prelude::*;

use poseact_core::assignment::{solve_assignment, CostMatrix};
use poseact_core::ingest;
use poseact_core::pose_evolution::time_encoding;
use poseact_core::short_term::iou;
use poseact_core::types::{
    BoundingBox, Detection, Keypoint, Track, Tracklet, Validate, KEYPOINT_COUNT,
};

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (
        -100.0f64..100.0,
        -100.0f64..100.0,
        0.0f64..60.0,
        0.0f64..60.0,
    )
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h))
}

fn arb_detection(frame: u64, id: u64) -> impl Strategy<Value = Detection> {
    (arb_box(), 0.0f64..=1.0).prop_map(move |(bbox, score)| Detection {
        frame_index: frame,
        bbox,
        keypoints: (0..KEYPOINT_COUNT as u8).map(Keypoint::missing).collect(),
        score,
        detection_id: id,
        embedding: None,
    })
}

fn arb_track() -> impl Strategy<Value = Track> {
    // up to 4 tracklets with random lengths, placed on disjoint ranges
    prop::collection::vec((1usize..6, 1u64..10), 1..4).prop_flat_map(|pieces| {
        let mut start = 0u64;
        let mut strategies = Vec::new();
        for (index, (len, gap)) in pieces.into_iter().enumerate() {
            let frames: Vec<u64> = (start..start + len as u64).collect();
            start += len as u64 + gap;
            let dets: Vec<BoxedStrategy<Detection>> = frames
                .iter()
                .map(|&f| arb_detection(f, f * 100 + index as u64).boxed())
                .collect();
            strategies.push(dets.prop_map(move |detections| Tracklet {
                tracklet_id: index as u64,
                detections,
            }));
        }
        strategies.prop_map(|tracklets| Track { tracklets })
    })
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let forward = iou(&a, &b);
        prop_assert_eq!(forward, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&forward));
    }

    #[test]
    fn iou_of_a_box_with_itself(b in arb_box()) {
        let expected = if b.area() > 0.0 { 1.0 } else { 0.0 };
        prop_assert_eq!(iou(&b, &b), expected);
    }

    #[test]
    fn time_encoding_is_a_partition_of_unity(
        total in 1usize..80,
        channels in 2usize..8,
        t_fraction in 0.0f64..1.0,
    ) {
        let t = ((total - 1) as f64 * t_fraction) as usize;
        let weights = time_encoding(t, total, channels);
        prop_assert!(weights.iter().all(|w| *w >= 0.0));
        let sum: f64 = weights.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(weights.iter().filter(|w| **w > 0.0).count() <= 2);
    }

    #[test]
    fn assignment_scaling_preserves_the_argmin(
        entries in prop::collection::vec(0.0f64..100.0, 9),
        lambda in 0.01f64..50.0,
    ) {
        let rows: Vec<Vec<f64>> = entries.chunks(3).map(<[f64]>::to_vec).collect();
        let matrix = CostMatrix::from_rows(&rows);
        let base = solve_assignment(&matrix).unwrap();
        let scaled = solve_assignment(&matrix.map_finite(|v| v * lambda)).unwrap();
        prop_assert!((scaled.total_cost / lambda - base.total_cost).abs() < 1e-6 * (1.0 + base.total_cost));
    }

    #[test]
    fn track_serialization_round_trips(track in arb_track()) {
        prop_assert!(track.validate().is_ok());
        let text = ingest::write_track(&track);
        let reparsed = ingest::parse_track(&text).unwrap();
        prop_assert_eq!(track, reparsed);
    }

    #[test]
    fn detection_ids_ignore_whitespace_layout(blank_lines in prop::collection::vec(0usize..4, 3)) {
        let record = |frame: u64| format!(
            "{{\"frame\":{},\"box\":[0,0,1,1],\"score\":0.5,\"keypoints\":[{}]}}",
            frame,
            vec!["[0,0,0]"; 17].join(",")
        );
        let dense = format!("{}\n{}\n{}\n", record(0), record(1), record(1));
        let mut spaced = String::new();
        for (i, line) in dense.lines().enumerate() {
            for _ in 0..blank_lines[i] {
                spaced.push('\n');
            }
            spaced.push_str(line);
            spaced.push('\n');
        }
        let a = ingest::parse_detections(std::io::Cursor::new(dense)).unwrap();
        let b = ingest::parse_detections(std::io::Cursor::new(spaced)).unwrap();
        prop_assert_eq!(a, b);
    }
}
