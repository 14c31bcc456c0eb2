//! Pose-evolution features: per-joint Gaussian heatmaps, colorized by a
//! piecewise-linear time encoding over C channels, accumulated over the clip
//! and max-normalized per channel, then stacked over the 14 reduced joints.

use ndarray::{Array2, Array3, Axis};

use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::rng::indexed_rng;
use crate::types::{ActionClip, Keypoint, PoseEvolutionMap, REDUCED_JOINT_COUNT};

/// Channels below this accumulated maximum normalize to all-zero instead of
/// dividing by noise.
pub const NORMALIZATION_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PoseEvolutionError {
    #[error("clip contains no detections")]
    EmptyClip,
    #[error("invalid encoding config: {0}")]
    InvalidConfig(String),
}

/// Rendering parameters for pose-evolution maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingConfig {
    /// Time-encoding channels per joint.
    pub channels: usize,
    /// Gaussian std in pixels at working resolution.
    pub sigma: f64,
    /// Downscale factor from source-frame to working resolution.
    pub scale: f64,
    /// Keypoints below this confidence render as all-zero maps.
    pub confidence_floor: f64,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            channels: 3,
            sigma: 2.0,
            scale: 0.125,
            confidence_floor: 0.05,
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<(), PoseEvolutionError> {
        if self.channels < 2 {
            return Err(PoseEvolutionError::InvalidConfig(format!(
                "channels must be >= 2, got {}",
                self.channels
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(PoseEvolutionError::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(PoseEvolutionError::InvalidConfig(format!(
                "scale must be in (0, 1], got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// Working grid size for a source frame.
    pub fn working_size(&self, frame_width: u32, frame_height: u32) -> (usize, usize) {
        let h = (f64::from(frame_height) * self.scale).ceil() as usize;
        let w = (f64::from(frame_width) * self.scale).ceil() as usize;
        (h.max(1), w.max(1))
    }
}

/// Reduce a 17-keypoint pose to the 14 joints the evolution maps use.
///
/// The five head keypoints (nose, eyes, ears) collapse into one: the
/// confidence-weighted centroid of those at or above `floor`, carrying the
/// maximum of the five confidences, or missing when none qualify. A neck
/// joint is derived as the shoulder midpoint, carrying the weaker shoulder's
/// confidence; the twelve body joints pass through unchanged. Output order:
/// head, neck, then joints 5..16.
pub fn reduce_head(pose: &[Keypoint], floor: f64) -> Vec<Keypoint> {
    assert_eq!(pose.len(), 17, "expected a 17-keypoint pose");
    let head = &pose[..5];
    let weight: f64 = head
        .iter()
        .filter(|k| k.confidence >= floor)
        .map(|k| k.confidence)
        .sum();
    let max_conf = head.iter().map(|k| k.confidence).fold(0.0f64, f64::max);
    let head_kp = if weight > 0.0 && max_conf >= floor {
        let x = head
            .iter()
            .filter(|k| k.confidence >= floor)
            .map(|k| k.x * k.confidence)
            .sum::<f64>()
            / weight;
        let y = head
            .iter()
            .filter(|k| k.confidence >= floor)
            .map(|k| k.y * k.confidence)
            .sum::<f64>()
            / weight;
        Keypoint::new(x, y, max_conf, 0)
    } else {
        Keypoint::missing(0)
    };
    let (left_shoulder, right_shoulder) = (&pose[5], &pose[6]);
    let neck_kp = if left_shoulder.confidence >= floor && right_shoulder.confidence >= floor {
        Keypoint::new(
            (left_shoulder.x + right_shoulder.x) / 2.0,
            (left_shoulder.y + right_shoulder.y) / 2.0,
            left_shoulder.confidence.min(right_shoulder.confidence),
            1,
        )
    } else {
        Keypoint::missing(1)
    };
    let mut reduced = Vec::with_capacity(REDUCED_JOINT_COUNT);
    reduced.push(head_kp);
    reduced.push(neck_kp);
    for (offset, kp) in pose[5..].iter().enumerate() {
        reduced.push(Keypoint::new(kp.x, kp.y, kp.confidence, (offset + 2) as u8));
    }
    reduced
}

/// Gaussian heatmap for one keypoint at working resolution.
///
/// `grid[y][x] = conf * exp(-((x - kx)^2 + (y - ky)^2) / (2 sigma^2))`
/// evaluated at integer pixel centers; all-zero when the confidence is
/// below `floor`.
pub fn joint_heatmap(
    kp: &Keypoint,
    height: usize,
    width: usize,
    sigma: f64,
    floor: f64,
) -> Array2<f64> {
    let mut grid = Array2::zeros((height, width));
    if kp.confidence < floor {
        return grid;
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    // the kernel is separable: exp(-(dx^2+dy^2)) = exp(-dx^2) * exp(-dy^2)
    let col_factors: Vec<f64> = (0..width)
        .map(|x| (-(x as f64 - kp.x).powi(2) * inv).exp())
        .collect();
    for (y, mut row) in grid.axis_iter_mut(Axis(0)).enumerate() {
        let ry = kp.confidence * (-(y as f64 - kp.y).powi(2) * inv).exp();
        for (x, cell) in row.iter_mut().enumerate() {
            *cell = ry * col_factors[x];
        }
    }
    grid
}

/// Piecewise-linear time encoding of frame `t` of `total` into `channels`
/// weights.
///
/// Normalized time ramps linearly from channel 0 at the clip start to the
/// last channel at the clip end; at any instant at most two adjacent
/// channels are nonzero and the weights sum to one.
pub fn time_encoding(t: usize, total: usize, channels: usize) -> Vec<f64> {
    assert!(total >= 1 && t < total, "frame index out of range");
    assert!(channels >= 2, "need at least two channels");
    let mut weights = vec![0.0; channels];
    let u = if total == 1 {
        0.0
    } else {
        t as f64 / (total - 1) as f64
    };
    let scaled = u * (channels - 1) as f64;
    let segment = (scaled.floor() as usize).min(channels - 2);
    let s = scaled - segment as f64;
    weights[segment] = 1.0 - s;
    weights[segment + 1] = s;
    weights
}

/// Accumulate one joint's heatmap sequence into a time-colorized,
/// per-channel max-normalized `(C, H, W)` grid.
pub fn joint_evolution(sequence: &[Array2<f64>], channels: usize) -> Array3<f64> {
    assert!(!sequence.is_empty(), "need at least one frame");
    let (height, width) = sequence[0].dim();
    let total = sequence.len();
    let mut raw = Array3::<f64>::zeros((channels, height, width));
    for (t, frame) in sequence.iter().enumerate() {
        for (j, weight) in time_encoding(t, total, channels).into_iter().enumerate() {
            if weight == 0.0 {
                continue;
            }
            let mut channel = raw.index_axis_mut(Axis(0), j);
            channel.zip_mut_with(frame, |acc, &v| *acc += weight * v);
        }
    }
    normalize_channels(&mut raw);
    raw
}

fn normalize_channels(raw: &mut Array3<f64>) {
    for mut channel in raw.axis_iter_mut(Axis(0)) {
        let max = channel.iter().fold(0.0f64, |a, &b| a.max(b));
        if max > NORMALIZATION_EPSILON {
            channel.mapv_inplace(|v| v / max);
        } else {
            channel.fill(0.0);
        }
    }
}

/// Pose-evolution map from per-frame pose lists.
///
/// Each frame slot holds the 17-keypoint poses present at that instant:
/// usually zero or one (the tracked target), more when rendering every actor
/// for the no-tracking comparison. Frames with no poses contribute nothing
/// but still occupy their place on the time axis.
pub fn evolution_from_poses(
    poses_per_frame: &[Vec<Vec<Keypoint>>],
    cfg: &EncodingConfig,
    frame_width: u32,
    frame_height: u32,
) -> Result<PoseEvolutionMap, PoseEvolutionError> {
    cfg.validate()?;
    if poses_per_frame.iter().all(Vec::is_empty) {
        return Err(PoseEvolutionError::EmptyClip);
    }
    let (height, width) = cfg.working_size(frame_width, frame_height);
    let total = poses_per_frame.len();
    let c = cfg.channels;
    let mut raw = Array3::<f64>::zeros((REDUCED_JOINT_COUNT * c, height, width));
    let inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);

    for (t, poses) in poses_per_frame.iter().enumerate() {
        if poses.is_empty() {
            continue;
        }
        let weights = time_encoding(t, total, c);
        for pose in poses {
            let reduced = reduce_head(pose, cfg.confidence_floor);
            for (joint, kp) in reduced.iter().enumerate() {
                if kp.confidence < cfg.confidence_floor {
                    continue;
                }
                let kx = kp.x * cfg.scale;
                let ky = kp.y * cfg.scale;
                let col_factors: Vec<f64> = (0..width)
                    .map(|x| (-(x as f64 - kx).powi(2) * inv).exp())
                    .collect();
                for (j, &weight) in weights.iter().enumerate() {
                    if weight == 0.0 {
                        continue;
                    }
                    let mut channel = raw.index_axis_mut(Axis(0), joint * c + j);
                    for (y, mut row) in channel.axis_iter_mut(Axis(0)).enumerate() {
                        let coeff = weight * kp.confidence * (-(y as f64 - ky).powi(2) * inv).exp();
                        if coeff == 0.0 {
                            continue;
                        }
                        for (x, cell) in row.iter_mut().enumerate() {
                            *cell += coeff * col_factors[x];
                        }
                    }
                }
            }
        }
    }
    normalize_channels(&mut raw);
    Ok(PoseEvolutionMap {
        values: raw.mapv(|v| v as f32),
    })
}

/// Pose-evolution map of a target clip.
pub fn pose_evolution_map(
    clip: &ActionClip,
    cfg: &EncodingConfig,
    frame_width: u32,
    frame_height: u32,
) -> Result<PoseEvolutionMap, PoseEvolutionError> {
    let poses: Vec<Vec<Vec<Keypoint>>> = clip
        .detections
        .iter()
        .map(|slot| match slot {
            Some(det) => vec![det.keypoints.clone()],
            None => Vec::new(),
        })
        .collect();
    evolution_from_poses(&poses, cfg, frame_width, frame_height)
}

/// Add clamped white noise to a map; identical seeds give identical output.
pub fn augment_noise(map: &PoseEvolutionMap, sigma: f64, seed: u64) -> PoseEvolutionMap {
    if sigma == 0.0 {
        return map.clone();
    }
    let mut rng = indexed_rng(seed, "augment-noise", 0);
    let normal = Normal::new(0.0f64, sigma).expect("sigma is non-negative");
    let values = map.values.mapv(|v| {
        let perturbed = f64::from(v) + normal.sample(&mut rng);
        perturbed.clamp(0.0, 1.0) as f32
    });
    PoseEvolutionMap { values }
}

/// Render one joint's 3-channel evolution as an RGB image for inspection.
///
/// Only defined for C = 3; other channel counts have no canonical color
/// mapping.
pub fn evolution_to_rgb(map: &PoseEvolutionMap, joint: usize) -> Option<image::RgbImage> {
    if map.time_channels() != 3 || joint >= REDUCED_JOINT_COUNT {
        return None;
    }
    let (h, w) = (map.height() as u32, map.width() as u32);
    let mut image = image::RgbImage::new(w, h);
    for (x, y, pixel) in image.enumerate_pixels_mut() {
        let sample =
            |c: usize| (map.values[[joint * 3 + c, y as usize, x as usize]] * 255.0).round() as u8;
        *pixel = image::Rgb([sample(0), sample(1), sample(2)]);
    }
    Some(image)
}
