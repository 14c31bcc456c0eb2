//! Layered configuration: built-in defaults, overridden by the config file,
//! overridden by command-line flags.

use std::path::Path;

use serde::Deserialize;

use crate::CliError;

/// Every tunable with its resolved value.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub tau_iou: f64,
    pub alpha: f64,
    /// Fixed fusion distance threshold; when set it replaces the relative
    /// median rule.
    pub absolute_threshold: Option<f64>,
    pub channels: usize,
    pub scale: f64,
    pub sigma_heat: f64,
    pub confidence_floor: f64,
    pub min_track_length: usize,
    pub min_mean_keypoints: f64,
    pub min_clip_secs: f64,
    pub max_clip_secs: f64,
    pub val_fraction: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub sigma_aug: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 0,
            tau_iou: 0.3,
            alpha: 0.6,
            absolute_threshold: None,
            channels: 3,
            scale: 0.125,
            sigma_heat: 2.0,
            confidence_floor: 0.05,
            min_track_length: 15,
            min_mean_keypoints: 5.0,
            min_clip_secs: 0.2,
            max_clip_secs: 4.0,
            val_fraction: 0.1,
            learning_rate: 0.01,
            batch_size: 70,
            dropout: 0.3,
            epochs: 30,
            sigma_aug: 0.01,
        }
    }
}

/// Optional overrides read from `--config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub tau_iou: Option<f64>,
    pub alpha: Option<f64>,
    pub absolute_threshold: Option<f64>,
    pub channels: Option<usize>,
    pub scale: Option<f64>,
    pub sigma_heat: Option<f64>,
    pub confidence_floor: Option<f64>,
    pub min_track_length: Option<usize>,
    pub min_mean_keypoints: Option<f64>,
    pub min_clip_secs: Option<f64>,
    pub max_clip_secs: Option<f64>,
    pub val_fraction: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub sigma_aug: Option<f64>,
}

/// Flag-level overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct GlobalOverrides {
    pub seed: Option<u64>,
    pub channels: Option<usize>,
    pub scale: Option<f64>,
    pub tau_iou: Option<f64>,
    pub alpha: Option<f64>,
}

impl Settings {
    pub fn resolve(
        config_path: Option<&Path>,
        overrides: &GlobalOverrides,
    ) -> Result<Self, CliError> {
        let mut settings = Settings::default();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {}", path.display(), e))
            })?;
            let file: FileConfig = toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad config {}: {}", path.display(), e)))?;
            settings.apply_file(&file);
        }
        settings.apply_flags(overrides);
        settings.validate()?;
        Ok(settings)
    }

    fn apply_file(&mut self, file: &FileConfig) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = file.$field.clone() { self.$field = v; })*
            };
        }
        take!(
            seed,
            tau_iou,
            alpha,
            channels,
            scale,
            sigma_heat,
            confidence_floor,
            min_track_length,
            min_mean_keypoints,
            min_clip_secs,
            max_clip_secs,
            val_fraction,
            learning_rate,
            batch_size,
            dropout,
            epochs,
            sigma_aug
        );
        if file.absolute_threshold.is_some() {
            self.absolute_threshold = file.absolute_threshold;
        }
    }

    fn apply_flags(&mut self, flags: &GlobalOverrides) {
        if let Some(v) = flags.seed {
            self.seed = v;
        }
        if let Some(v) = flags.channels {
            self.channels = v;
        }
        if let Some(v) = flags.scale {
            self.scale = v;
        }
        if let Some(v) = flags.tau_iou {
            self.tau_iou = v;
        }
        if let Some(v) = flags.alpha {
            self.alpha = v;
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let check = |ok: bool, field: &str, detail: String| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Config(format!("{}: {}", field, detail)))
            }
        };
        check(
            self.channels >= 2,
            "channels",
            format!("must be >= 2, got {}", self.channels),
        )?;
        check(
            self.scale > 0.0 && self.scale <= 1.0,
            "scale",
            format!("must be in (0, 1], got {}", self.scale),
        )?;
        check(
            (0.0..=1.0).contains(&self.tau_iou),
            "tau_iou",
            format!("must be in [0, 1], got {}", self.tau_iou),
        )?;
        check(
            self.alpha > 0.0,
            "alpha",
            format!("must be positive, got {}", self.alpha),
        )?;
        check(
            self.sigma_heat > 0.0,
            "sigma_heat",
            format!("must be positive, got {}", self.sigma_heat),
        )?;
        check(
            (0.0..1.0).contains(&self.dropout),
            "dropout",
            format!("must be in [0, 1), got {}", self.dropout),
        )?;
        check(self.batch_size > 0, "batch_size", "must be positive".into())?;
        check(
            (0.0..1.0).contains(&self.val_fraction),
            "val_fraction",
            format!("must be in [0, 1), got {}", self.val_fraction),
        )?;
        check(
            self.max_clip_secs >= self.min_clip_secs && self.min_clip_secs >= 0.0,
            "clip durations",
            "need 0 <= min_clip_secs <= max_clip_secs".into(),
        )?;
        Ok(())
    }

    pub fn fusion_config(&self) -> poseact_core::fusion::FusionConfig {
        poseact_core::fusion::FusionConfig {
            min_length: self.min_track_length,
            min_mean_keypoints: self.min_mean_keypoints,
            confidence_floor: self.confidence_floor,
            accept_rule: match self.absolute_threshold {
                Some(t) => poseact_core::fusion::AcceptRule::Absolute(t),
                None => poseact_core::fusion::AcceptRule::RelativeToMedian { alpha: self.alpha },
            },
        }
    }

    pub fn encoding_config(&self) -> poseact_core::pose_evolution::EncodingConfig {
        poseact_core::pose_evolution::EncodingConfig {
            channels: self.channels,
            sigma: self.sigma_heat,
            scale: self.scale,
            confidence_floor: self.confidence_floor,
        }
    }

    pub fn train_config(&self) -> poseact_core::classifier::TrainConfig {
        poseact_core::classifier::TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            dropout: self.dropout,
            epochs: self.epochs,
            sigma_aug: self.sigma_aug,
            seed: self.seed,
            stop_at_val_accuracy: None,
            verbose: true,
        }
    }
}
