//! File boundary of the pipeline: parsers for detection, embedding, and
//! annotation files, and writers for every artifact a run emits.
//!
//! All parsers are pure over the full stream and every writer/parser pair
//! round-trips: `parse(write(x)) == x`. Detection ids are assigned by record
//! order, so reformatting whitespace never changes them.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{TrackletVerdict, VerdictReason};
use crate::types::{
    ActionLabel, BoundingBox, Detection, Keypoint, Track, Tracklet, ACTION_CLASS_COUNT,
    DEFAULT_FPS, KEYPOINT_COUNT,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("manifest: {message}")]
    Manifest { message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One annotated behavior span, in frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSpan {
    pub start_frame: u64,
    pub end_frame: u64,
    pub label: ActionLabel,
    pub subject_id: String,
}

/// Run-level metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub frame_width: u32,
    pub frame_height: u32,
    pub subject_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reference_tracklet_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reference_detection_id: Option<u64>,
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

/// Appearance embeddings keyed by detection id, all of one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    pub vectors: BTreeMap<u64, Vec<f64>>,
    pub dimension: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    frame: u64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    score: f64,
    keypoints: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    detection_id: u64,
    embedding: Vec<f64>,
}

/// Parse newline-delimited detection records grouped by ascending frame.
///
/// Detection ids count records in file order; blank lines are skipped and do
/// not consume an id.
pub fn parse_detections(reader: impl BufRead) -> Result<Vec<(u64, Vec<Detection>)>, IngestError> {
    let mut groups: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    let mut next_id: u64 = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DetectionRecord =
            serde_json::from_str(&line).map_err(|e| IngestError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        if record.keypoints.len() != KEYPOINT_COUNT {
            return Err(IngestError::Schema {
                line: line_no,
                message: format!(
                    "expected {} keypoints, got {}",
                    KEYPOINT_COUNT,
                    record.keypoints.len()
                ),
            });
        }
        let keypoints = record
            .keypoints
            .iter()
            .enumerate()
            .map(|(j, [x, y, c])| Keypoint::new(*x, *y, *c, j as u8))
            .collect();
        let detection = Detection {
            frame_index: record.frame,
            bbox: BoundingBox::new(
                record.bbox[0],
                record.bbox[1],
                record.bbox[2],
                record.bbox[3],
            ),
            keypoints,
            score: record.score,
            detection_id: next_id,
            embedding: None,
        };
        next_id += 1;
        groups.entry(record.frame).or_default().push(detection);
    }
    Ok(groups.into_iter().collect())
}

/// Serialize per-frame detection groups as newline-delimited records.
pub fn write_detections(frames: &[(u64, Vec<Detection>)]) -> String {
    let mut out = String::new();
    for (_, group) in frames {
        for det in group {
            let record = DetectionRecord {
                frame: det.frame_index,
                bbox: [
                    det.bbox.x_min,
                    det.bbox.y_min,
                    det.bbox.x_max,
                    det.bbox.y_max,
                ],
                score: det.score,
                keypoints: det
                    .keypoints
                    .iter()
                    .map(|k| [k.x, k.y, k.confidence])
                    .collect(),
            };
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

/// Parse embedding records into a lookup table of one fixed dimension.
pub fn parse_embeddings(reader: impl BufRead) -> Result<EmbeddingTable, IngestError> {
    let mut table = EmbeddingTable::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| IngestError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        match table.dimension {
            None => table.dimension = Some(record.embedding.len()),
            Some(dim) if dim != record.embedding.len() => {
                return Err(IngestError::Schema {
                    line: line_no,
                    message: format!(
                        "embedding dimension {} does not match earlier dimension {}",
                        record.embedding.len(),
                        dim
                    ),
                });
            }
            Some(_) => {}
        }
        if table
            .vectors
            .insert(record.detection_id, record.embedding)
            .is_some()
        {
            return Err(IngestError::Schema {
                line: line_no,
                message: format!("duplicate embedding for detection {}", record.detection_id),
            });
        }
    }
    Ok(table)
}

pub fn write_embeddings(table: &EmbeddingTable) -> String {
    let mut out = String::new();
    for (id, vector) in &table.vectors {
        let record = EmbeddingRecord {
            detection_id: *id,
            embedding: vector.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Parse annotation spans from CSV with header
/// `start_frame,end_frame,label,subject`.
///
/// Returns spans sorted by start frame plus a warning per overlapping pair;
/// overlaps are accepted, not rejected.
pub fn parse_annotations(
    reader: impl std::io::Read,
) -> Result<(Vec<AnnotationSpan>, Vec<String>), IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut spans = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| IngestError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| -> Result<&str, IngestError> {
            record.get(i).ok_or_else(|| IngestError::Schema {
                line,
                message: format!("missing column {}", i),
            })
        };
        let start_frame: u64 = field(0)?.trim().parse().map_err(|_| IngestError::Parse {
            line,
            message: format!("bad start_frame {:?}", field(0).unwrap_or_default()),
        })?;
        let end_frame: u64 = field(1)?.trim().parse().map_err(|_| IngestError::Parse {
            line,
            message: format!("bad end_frame {:?}", field(1).unwrap_or_default()),
        })?;
        let label_text = field(2)?;
        let label = ActionLabel::parse(label_text).ok_or_else(|| IngestError::Schema {
            line,
            message: format!("unknown action label {:?}", label_text),
        })?;
        if start_frame > end_frame {
            return Err(IngestError::Schema {
                line,
                message: format!("span {}..{} is inverted", start_frame, end_frame),
            });
        }
        spans.push(AnnotationSpan {
            start_frame,
            end_frame,
            label,
            subject_id: field(3)?.trim().to_string(),
        });
    }
    spans.sort_by_key(|s| s.start_frame);
    let mut warnings = Vec::new();
    for i in 0..spans.len() {
        for j in i + 1..spans.len() {
            if spans[j].start_frame > spans[i].end_frame {
                break;
            }
            warnings.push(format!(
                "spans {}..{} ({}) and {}..{} ({}) overlap",
                spans[i].start_frame,
                spans[i].end_frame,
                spans[i].label,
                spans[j].start_frame,
                spans[j].end_frame,
                spans[j].label
            ));
        }
    }
    Ok((spans, warnings))
}

pub fn write_annotations(spans: &[AnnotationSpan]) -> String {
    let mut out = String::from("start_frame,end_frame,label,subject\n");
    for span in spans {
        out.push_str(&format!(
            "{},{},{},{}\n",
            span.start_frame, span.end_frame, span.label, span.subject_id
        ));
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<RunManifest, IngestError> {
    let manifest: RunManifest = toml::from_str(text).map_err(|e| IngestError::Manifest {
        message: e.to_string(),
    })?;
    if manifest.fps <= 0.0 {
        return Err(IngestError::Manifest {
            message: format!("fps must be positive, got {}", manifest.fps),
        });
    }
    if manifest.frame_width == 0 || manifest.frame_height == 0 {
        return Err(IngestError::Manifest {
            message: "frame dimensions must be positive".into(),
        });
    }
    Ok(manifest)
}

pub fn write_manifest(manifest: &RunManifest) -> String {
    toml::to_string(manifest).expect("manifest serializes")
}

pub fn write_track(track: &Track) -> String {
    serde_json::to_string_pretty(track).expect("track serializes")
}

pub fn parse_track(text: &str) -> Result<Track, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::Parse {
        line: 0,
        message: e.to_string(),
    })
}

pub fn write_tracklets(tracklets: &[Tracklet]) -> String {
    serde_json::to_string_pretty(tracklets).expect("tracklets serialize")
}

pub fn parse_tracklets(text: &str) -> Result<Vec<Tracklet>, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::Parse {
        line: 0,
        message: e.to_string(),
    })
}

/// One row of the clip manifest CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipRecord {
    pub clip_id: u64,
    pub subject: String,
    pub label: ActionLabel,
    pub start_frame: u64,
    pub end_frame: u64,
    pub split: String,
}

pub fn write_clip_records(records: &[ClipRecord]) -> String {
    let mut out = String::from("clip_id,subject,label,start_frame,end_frame,split\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.clip_id, r.subject, r.label, r.start_frame, r.end_frame, r.split
        ));
    }
    out
}

pub fn parse_clip_records(reader: impl std::io::Read) -> Result<Vec<ClipRecord>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| IngestError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let get = |i: usize| record.get(i).unwrap_or_default().trim().to_string();
        let label = ActionLabel::parse(&get(2)).ok_or_else(|| IngestError::Schema {
            line,
            message: format!("unknown action label {:?}", get(2)),
        })?;
        let parse_u64 = |s: String| -> Result<u64, IngestError> {
            s.parse().map_err(|_| IngestError::Parse {
                line,
                message: format!("bad integer {:?}", s),
            })
        };
        records.push(ClipRecord {
            clip_id: parse_u64(get(0))?,
            subject: get(1),
            label,
            start_frame: parse_u64(get(3))?,
            end_frame: parse_u64(get(4))?,
            split: get(5),
        });
    }
    Ok(records)
}

pub fn write_verdicts(verdicts: &[TrackletVerdict]) -> String {
    let mut out = String::from("tracklet_id,predicted_target,distance,reason\n");
    for v in verdicts {
        let distance = v.distance.map_or(String::new(), |d| format!("{}", d));
        out.push_str(&format!(
            "{},{},{},{}\n",
            v.tracklet_id,
            if v.predicted_target { 1 } else { 0 },
            distance,
            v.reason
        ));
    }
    out
}

pub fn parse_verdicts(reader: impl std::io::Read) -> Result<Vec<TrackletVerdict>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut verdicts = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| IngestError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let get = |i: usize| record.get(i).unwrap_or_default().trim().to_string();
        let distance = match get(2).as_str() {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| IngestError::Parse {
                line,
                message: format!("bad distance {:?}", s),
            })?),
        };
        let reason = match get(3).as_str() {
            "pruned" => VerdictReason::Pruned,
            "fused" => VerdictReason::Fused,
            "rejected" => VerdictReason::Rejected,
            other => {
                return Err(IngestError::Schema {
                    line,
                    message: format!("unknown verdict reason {:?}", other),
                })
            }
        };
        verdicts.push(TrackletVerdict {
            tracklet_id: get(0).parse().map_err(|_| IngestError::Parse {
                line,
                message: format!("bad tracklet id {:?}", get(0)),
            })?,
            predicted_target: get(1) == "1",
            distance,
            reason,
        });
    }
    Ok(verdicts)
}

/// Confusion matrix CSV: one header row, then one row per true label.
pub fn write_confusion(matrix: &[[u64; ACTION_CLASS_COUNT]; ACTION_CLASS_COUNT]) -> String {
    let mut out = String::from("true_label");
    for label in ActionLabel::ALL {
        out.push_str(&format!(",pred_{}", label));
    }
    out.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        out.push_str(ActionLabel::from_index(i).expect("5 labels").as_str());
        for v in row {
            out.push_str(&format!(",{}", v));
        }
        out.push('\n');
    }
    out
}

pub fn parse_confusion(
    reader: impl std::io::Read,
) -> Result<[[u64; ACTION_CLASS_COUNT]; ACTION_CLASS_COUNT], IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut matrix = [[0u64; ACTION_CLASS_COUNT]; ACTION_CLASS_COUNT];
    for (i, result) in rdr.records().enumerate() {
        let record = result.map_err(|e| IngestError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        if i >= ACTION_CLASS_COUNT {
            return Err(IngestError::Schema {
                line: 0,
                message: "too many confusion rows".into(),
            });
        }
        for j in 0..ACTION_CLASS_COUNT {
            matrix[i][j] = record
                .get(j + 1)
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|_| IngestError::Parse {
                    line: 0,
                    message: format!("bad count in confusion row {}", i),
                })?;
        }
    }
    Ok(matrix)
}

/// Key/value summary CSV used for run reports.
pub fn write_summary(rows: &[(String, String)]) -> String {
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{},{}\n", k, v));
    }
    out
}

const POSE_MAP_MAGIC: &[u8; 4] = b"PEVT";
const POSE_MAP_VERSION: u32 = 1;

/// Self-describing binary pose-evolution tensor: magic, version, the
/// time-channel count and downscale factor it was rendered with, the
/// (channels, height, width) shape, then little-endian f32 values.
pub fn write_pose_map(
    writer: &mut impl std::io::Write,
    map: &crate::types::PoseEvolutionMap,
    time_channels: u32,
    scale: f64,
) -> Result<(), IngestError> {
    writer.write_all(POSE_MAP_MAGIC)?;
    writer.write_all(&POSE_MAP_VERSION.to_le_bytes())?;
    writer.write_all(&time_channels.to_le_bytes())?;
    writer.write_all(&scale.to_le_bytes())?;
    for dim in [map.channels(), map.height(), map.width()] {
        writer.write_all(&(dim as u32).to_le_bytes())?;
    }
    for v in map.values.iter() {
        writer.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Parse a pose-evolution tensor file; returns the map plus the channel
/// count and scale recorded in the header.
pub fn parse_pose_map(
    reader: &mut impl std::io::Read,
) -> Result<(crate::types::PoseEvolutionMap, u32, f64), IngestError> {
    let bad = |message: &str| IngestError::Parse {
        line: 0,
        message: message.into(),
    };
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != POSE_MAP_MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let mut word = [0u8; 4];
    reader.read_exact(&mut word)?;
    if u32::from_le_bytes(word) != POSE_MAP_VERSION {
        return Err(bad("unsupported version"));
    }
    reader.read_exact(&mut word)?;
    let time_channels = u32::from_le_bytes(word);
    let mut dword = [0u8; 8];
    reader.read_exact(&mut dword)?;
    let scale = f64::from_le_bytes(dword);
    let mut dims = [0usize; 3];
    for dim in &mut dims {
        reader.read_exact(&mut word)?;
        *dim = u32::from_le_bytes(word) as usize;
    }
    let count = dims[0] * dims[1] * dims[2];
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        reader.read_exact(&mut word)?;
        values.push(f32::from_le_bytes(word));
    }
    let values = ndarray::Array3::from_shape_vec((dims[0], dims[1], dims[2]), values)
        .map_err(|e| bad(&e.to_string()))?;
    Ok((
        crate::types::PoseEvolutionMap { values },
        time_channels,
        scale,
    ))
}
