//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use rayon::prelude::*;

use poseact_core::classifier::{
    evaluate, finite_difference_check, load_checkpoint, save_checkpoint, train, Dataset,
    NetworkSpec,
};
use poseact_core::clipper::{balance, segment_clips, split_by_subject, SplitConfig};
use poseact_core::fusion::{
    fallback_descriptor, fuse_target_track, sample_representative, tracking_accuracy,
};
use poseact_core::ingest::{
    self, parse_annotations, parse_clip_records, parse_detections, parse_embeddings,
    parse_manifest, parse_pose_map, parse_track, write_annotations, write_clip_records,
    write_confusion, write_detections, write_embeddings, write_manifest, write_pose_map,
    write_summary, write_track, write_tracklets, write_verdicts, ClipRecord, EmbeddingTable,
    RunManifest,
};
use poseact_core::pose_evolution::{evolution_to_rgb, pose_evolution_map};
use poseact_core::rng::derive_seed;
use poseact_core::short_term::build_tracklets;
use poseact_core::synthetic::{
    generate_action_dataset, generate_scenario, ActionDatasetConfig, OcclusionEvent, ScenarioConfig,
};
use poseact_core::types::{ActionClip, ActionLabel, Track, Tracklet};

use crate::render::confusion_image;
use crate::settings::Settings;
use crate::CliError;

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {}", path.display(), e)))
}

fn open(path: &Path) -> Result<BufReader<fs::File>, CliError> {
    Ok(BufReader::new(fs::File::open(path).map_err(|e| {
        CliError::Input(format!("cannot open {}: {}", path.display(), e))
    })?))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {}", path.display(), e)))
}

// ---------------------------------------------------------------------------
// track

#[derive(Args)]
pub struct TrackArgs {
    /// Newline-delimited detection records.
    #[arg(long)]
    detections: PathBuf,
    /// Run manifest with frame geometry and the reference hint.
    #[arg(long)]
    manifest: PathBuf,
    /// Appearance embeddings keyed by detection id.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Directory of `{frame:06}.png` images for the color-histogram
    /// fallback; exclusive with --embeddings.
    #[arg(long = "frames-dir")]
    frames_dir: Option<PathBuf>,
    /// Ground-truth identity CSV (detection_id,actor,is_target) for scoring.
    #[arg(long)]
    identities: Option<PathBuf>,
}

fn load_identity_truth(path: &Path) -> Result<BTreeMap<u64, bool>, CliError> {
    let mut truth = BTreeMap::new();
    let text = read_to_string(path)?;
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CliError::Input(format!(
                "{} line {}: expected detection_id,actor,is_target",
                path.display(),
                i + 1
            )));
        }
        let id: u64 = fields[0].trim().parse().map_err(|_| {
            CliError::Input(format!(
                "{} line {}: bad detection id",
                path.display(),
                i + 1
            ))
        })?;
        truth.insert(id, fields[2].trim() == "1");
    }
    Ok(truth)
}

/// Majority ground-truth label per tracklet.
fn tracklet_truth(
    tracklets: &[Tracklet],
    detection_truth: &BTreeMap<u64, bool>,
) -> Result<BTreeMap<u64, bool>, CliError> {
    let mut truth = BTreeMap::new();
    for t in tracklets {
        let mut positive = 0usize;
        for det in &t.detections {
            let is_target = detection_truth.get(&det.detection_id).ok_or_else(|| {
                CliError::Input(format!(
                    "detection {} missing from identities",
                    det.detection_id
                ))
            })?;
            if *is_target {
                positive += 1;
            }
        }
        truth.insert(t.tracklet_id, positive * 2 > t.len());
    }
    Ok(truth)
}

fn resolve_reference(
    manifest: &RunManifest,
    tracklets: &[Tracklet],
    survivors: &[Tracklet],
) -> Result<(u64, bool), CliError> {
    if let Some(id) = manifest.reference_tracklet_id {
        if !tracklets.iter().any(|t| t.tracklet_id == id) {
            return Err(CliError::Input(format!(
                "reference tracklet {} not produced by short-term tracking",
                id
            )));
        }
        return Ok((id, false));
    }
    if let Some(det_id) = manifest.reference_detection_id {
        let holder = tracklets
            .iter()
            .find(|t| t.detections.iter().any(|d| d.detection_id == det_id))
            .ok_or_else(|| {
                CliError::Input(format!(
                    "reference detection {} not in any tracklet",
                    det_id
                ))
            })?;
        return Ok((holder.tracklet_id, false));
    }
    // unsupervised fallback: propose the longest tracklet that survives
    // pruning
    let longest = survivors.iter().max_by_key(|t| t.len()).ok_or_else(|| {
        CliError::Input(
            "no tracklet survives pruning; provide a reference hint in the manifest".into(),
        )
    })?;
    let ties = survivors
        .iter()
        .filter(|t| t.len() == longest.len())
        .count();
    if ties > 1 {
        return Err(CliError::Config(format!(
            "no reference hint in the manifest and {} tracklets tie at length {}; \
             set reference_tracklet_id or reference_detection_id",
            ties,
            longest.len()
        )));
    }
    Ok((longest.tracklet_id, true))
}

pub fn run_track(args: &TrackArgs, settings: &Settings, out: &Path) -> Result<(), CliError> {
    if args.embeddings.is_some() && args.frames_dir.is_some() {
        return Err(CliError::Config(
            "--embeddings and --frames-dir are exclusive: distances are only \
             comparable within one feature space"
                .into(),
        ));
    }
    let manifest = parse_manifest(&read_to_string(&args.manifest)?)?;
    let frames = parse_detections(open(&args.detections)?)?;
    let total_detections: usize = frames.iter().map(|(_, g)| g.len()).sum();
    let tracklets = build_tracklets(&frames, settings.tau_iou);
    if tracklets.is_empty() {
        return Err(CliError::Input("no detections to track".into()));
    }

    let embeddings: EmbeddingTable = match (&args.embeddings, &args.frames_dir) {
        (Some(_), Some(_)) => unreachable!("rejected above"),
        (Some(path), None) => parse_embeddings(open(path)?)?,
        (None, Some(dir)) => {
            let mut table = EmbeddingTable::default();
            let mut image_cache: BTreeMap<u64, image::RgbImage> = BTreeMap::new();
            for tracklet in &tracklets {
                let rep = sample_representative(tracklet);
                if let std::collections::btree_map::Entry::Vacant(slot) =
                    image_cache.entry(rep.frame_index)
                {
                    let path = dir.join(format!("{:06}.png", rep.frame_index));
                    let image = image::open(&path)
                        .map_err(|e| {
                            CliError::Input(format!("cannot open {}: {}", path.display(), e))
                        })?
                        .to_rgb8();
                    slot.insert(image);
                }
                let descriptor = fallback_descriptor(&image_cache[&rep.frame_index], &rep.bbox);
                if descriptor.iter().all(|v| *v == 0.0) {
                    eprintln!(
                        "warning: zero-area crop for detection {} (frame {})",
                        rep.detection_id, rep.frame_index
                    );
                }
                table.vectors.insert(rep.detection_id, descriptor);
            }
            table.dimension = table.vectors.values().next().map(Vec::len);
            table
        }
        (None, None) => {
            return Err(CliError::Config(
                "an embedding source is required: pass --embeddings or --frames-dir".into(),
            ))
        }
    };

    let fusion_cfg = settings.fusion_config();
    let survivors = poseact_core::fusion::prune(&tracklets, &fusion_cfg);
    let (reference_id, unsupervised) = resolve_reference(&manifest, &tracklets, &survivors)?;
    let outcome = fuse_target_track(&tracklets, reference_id, &embeddings.vectors, &fusion_cfg)
        .map_err(|e| CliError::Input(e.to_string()))?;

    write_file(&out.join("tracklets.json"), &write_tracklets(&tracklets))?;
    write_file(&out.join("track.json"), &write_track(&outcome.track))?;
    write_file(
        &out.join("verdicts.csv"),
        &write_verdicts(&outcome.verdicts),
    )?;

    let first_frame = frames.first().map_or(0, |(f, _)| *f);
    let last_frame = frames.last().map_or(0, |(f, _)| *f);
    let span = (last_frame - first_frame + 1).max(1);
    let coverage = outcome.track.covered_frames() as f64 / span as f64;
    let fused = outcome
        .verdicts
        .iter()
        .filter(|v| v.predicted_target)
        .count();
    let mut summary = vec![
        ("detections".to_string(), total_detections.to_string()),
        ("tracklet_count".to_string(), tracklets.len().to_string()),
        ("fused_tracklets".to_string(), fused.to_string()),
        (
            "reference_tracklet_id".to_string(),
            reference_id.to_string(),
        ),
        (
            "unsupervised_reference".to_string(),
            unsupervised.to_string(),
        ),
        (
            "fusion_threshold".to_string(),
            format!("{}", outcome.threshold),
        ),
        ("coverage_fraction".to_string(), format!("{}", coverage)),
    ];
    if let Some(identities) = &args.identities {
        let truth = tracklet_truth(&tracklets, &load_identity_truth(identities)?)?;
        let accuracy = tracking_accuracy(&outcome.verdicts, &truth)
            .map_err(|e| CliError::Input(e.to_string()))?;
        summary.push(("tracking_accuracy".to_string(), format!("{}", accuracy)));
    }
    write_file(&out.join("summary.csv"), &write_summary(&summary))?;
    for (key, value) in &summary {
        println!("{}: {}", key, value);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// featurize

#[derive(Args)]
pub struct FeaturizeArgs {
    /// Fused target track.
    #[arg(long)]
    track: PathBuf,
    /// Annotated behavior spans CSV.
    #[arg(long)]
    annotations: PathBuf,
    /// Run manifest with frame geometry.
    #[arg(long)]
    manifest: PathBuf,
    /// Subjects held out entirely for the test split, comma separated.
    #[arg(long = "test-subjects", value_delimiter = ',')]
    test_subjects: Vec<String>,
    /// Cap per class applied to the training split.
    #[arg(long = "cap-per-class")]
    cap_per_class: Option<usize>,
    /// Fraction of non-test clips assigned to validation.
    #[arg(long = "val-fraction")]
    val_fraction: Option<f64>,
    /// Also write per-joint RGB images of each tensor (3-channel maps only).
    #[arg(long = "dump-png")]
    dump_png: bool,
}

fn clip_tensor_name(clip_id: u64) -> String {
    format!("clip_{:05}.pet", clip_id)
}

pub fn run_featurize(
    args: &FeaturizeArgs,
    settings: &Settings,
    out: &Path,
) -> Result<(), CliError> {
    let manifest = parse_manifest(&read_to_string(&args.manifest)?)?;
    let track = parse_track(&read_to_string(&args.track)?)?;
    let (spans, warnings) = parse_annotations(open(&args.annotations)?)?;
    for warning in &warnings {
        eprintln!("warning: {}", warning);
    }

    let clips = segment_clips(
        &track,
        &spans,
        manifest.fps,
        settings.min_clip_secs,
        settings.max_clip_secs,
    );
    if clips.is_empty() {
        eprintln!("warning: no clips survive segmentation; writing an empty manifest");
        write_file(&out.join("clips.csv"), &write_clip_records(&[]))?;
        return Ok(());
    }

    let val_fraction = args.val_fraction.unwrap_or(settings.val_fraction);
    let split = split_by_subject(
        &clips,
        &SplitConfig {
            test_subjects: args.test_subjects.clone(),
            trainval_subjects: None,
            val_fraction,
            seed: derive_seed(settings.seed, "split"),
        },
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let train_clips = match args.cap_per_class {
        Some(cap) => balance(&split.train, cap, derive_seed(settings.seed, "balance")),
        None => split.train,
    };

    let labeled: Vec<(&ActionClip, &str)> = train_clips
        .iter()
        .map(|c| (c, "train"))
        .chain(split.val.iter().map(|c| (c, "val")))
        .chain(split.test.iter().map(|c| (c, "test")))
        .collect();

    let encoding = settings.encoding_config();
    let maps: Vec<_> = labeled
        .par_iter()
        .map(|(clip, _)| {
            pose_evolution_map(clip, &encoding, manifest.frame_width, manifest.frame_height)
        })
        .collect();

    let dump_png = if args.dump_png && settings.channels != 3 {
        eprintln!(
            "warning: skipping PNG dump, it needs 3 channels and this run uses {}",
            settings.channels
        );
        false
    } else {
        args.dump_png
    };
    let mut records = Vec::with_capacity(labeled.len());
    for (clip_id, ((clip, split_name), map)) in labeled.iter().zip(maps).enumerate() {
        let map = map.map_err(|e| CliError::Input(format!("clip {}: {}", clip_id, e)))?;
        let path = out.join(clip_tensor_name(clip_id as u64));
        let mut writer = BufWriter::new(fs::File::create(&path)?);
        write_pose_map(&mut writer, &map, settings.channels as u32, settings.scale)?;
        writer.flush()?;
        if dump_png {
            let png_dir = out.join(format!("png_clip_{:05}", clip_id));
            fs::create_dir_all(&png_dir)?;
            for joint in 0..poseact_core::types::REDUCED_JOINT_COUNT {
                if let Some(image) = evolution_to_rgb(&map, joint) {
                    image
                        .save(png_dir.join(format!("joint_{:02}.png", joint)))
                        .map_err(|e| CliError::Input(e.to_string()))?;
                }
            }
        }
        records.push(ClipRecord {
            clip_id: clip_id as u64,
            subject: clip.subject_id.clone(),
            label: clip.label,
            start_frame: clip.start_frame,
            end_frame: clip.end_frame,
            split: split_name.to_string(),
        });
    }
    write_file(&out.join("clips.csv"), &write_clip_records(&records))?;
    println!(
        "featurized {} clips ({} train, {} val, {} test)",
        records.len(),
        records.iter().filter(|r| r.split == "train").count(),
        records.iter().filter(|r| r.split == "val").count(),
        records.iter().filter(|r| r.split == "test").count(),
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train / eval

#[derive(Args)]
pub struct TrainArgs {
    /// Directory produced by featurize (clips.csv plus tensors).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long = "sigma-aug")]
    sigma_aug: Option<f64>,
    /// Stop as soon as validation accuracy reaches this value.
    #[arg(long = "target-val-acc")]
    target_val_accuracy: Option<f64>,
}

fn load_split(data: &Path, records: &[ClipRecord], split: &str) -> Result<Dataset, CliError> {
    let mut dataset = Dataset::default();
    for record in records.iter().filter(|r| r.split == split) {
        let path = data.join(clip_tensor_name(record.clip_id));
        let (map, _, _) = parse_pose_map(&mut open(&path)?)?;
        dataset.push(map.values, record.label.index());
    }
    Ok(dataset)
}

fn spec_from_dataset(dataset: &Dataset) -> Result<NetworkSpec, CliError> {
    let dims = dataset
        .maps
        .first()
        .ok_or_else(|| CliError::Input("dataset has no tensors".into()))?
        .dim();
    Ok(NetworkSpec::new(dims.0, dims.1, dims.2))
}

pub fn run_train(args: &TrainArgs, settings: &Settings, out: &Path) -> Result<(), CliError> {
    let records = parse_clip_records(open(&args.data.join("clips.csv"))?)?;
    let train_set = load_split(&args.data, &records, "train")?;
    let val_set = load_split(&args.data, &records, "val")?;
    if train_set.is_empty() {
        return Err(CliError::Input("no clips in the train split".into()));
    }
    if val_set.is_empty() {
        return Err(CliError::Config(
            "no clips in the val split; re-featurize with a positive val_fraction".into(),
        ));
    }
    let spec = spec_from_dataset(&train_set)?;
    let mut cfg = settings.train_config();
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.dropout {
        cfg.dropout = v;
    }
    if let Some(v) = args.sigma_aug {
        cfg.sigma_aug = v;
    }
    cfg.stop_at_val_accuracy = args.target_val_accuracy;

    let (params, history) =
        train(&train_set, &val_set, &spec, &cfg).map_err(|e| CliError::Input(e.to_string()))?;

    let mut writer = BufWriter::new(fs::File::create(out.join("checkpoint.bin"))?);
    save_checkpoint(&mut writer, &spec, &params).map_err(|e| CliError::Internal(e.to_string()))?;
    writer.flush()?;

    let mut history_csv = String::from("epoch,train_loss,val_accuracy\n");
    for stats in &history {
        history_csv.push_str(&format!(
            "{},{},{}\n",
            stats.epoch, stats.train_loss, stats.val_accuracy
        ));
    }
    write_file(&out.join("history.csv"), &history_csv)?;

    let best = history
        .iter()
        .map(|h| h.val_accuracy)
        .fold(0.0f64, f64::max);
    println!(
        "trained {} epochs, best validation accuracy {:.4}",
        history.len(),
        best
    );
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory produced by featurize.
    #[arg(long)]
    data: PathBuf,
    /// Which split to evaluate.
    #[arg(long, default_value = "test")]
    split: String,
}

pub fn run_eval(args: &EvalArgs, out: &Path) -> Result<(), CliError> {
    let (spec, params) = load_checkpoint(&mut open(&args.checkpoint)?)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let records = parse_clip_records(open(&args.data.join("clips.csv"))?)?;
    let dataset = load_split(&args.data, &records, &args.split)?;
    if dataset.is_empty() {
        return Err(CliError::Config(format!(
            "no clips in split {:?}; available splits: train, val, test",
            args.split
        )));
    }
    let metrics = evaluate(&params, &spec, &dataset);

    let mut rows = vec![(
        "overall_accuracy".to_string(),
        format!("{}", metrics.overall_accuracy),
    )];
    for label in ActionLabel::ALL {
        rows.push((
            format!("accuracy_{}", label),
            format!("{}", metrics.per_class_accuracy[label.index()]),
        ));
    }
    write_file(&out.join("metrics.csv"), &write_summary(&rows))?;
    write_file(
        &out.join("confusion.csv"),
        &write_confusion(&metrics.confusion),
    )?;
    confusion_image(&metrics.confusion)
        .save(out.join("confusion.png"))
        .map_err(|e| CliError::Internal(e.to_string()))?;
    println!(
        "overall accuracy on {}: {:.4}",
        args.split, metrics.overall_accuracy
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck

#[derive(Args)]
pub struct GradcheckArgs {
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Fail above this relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 2)]
    batch: usize,
}

pub fn run_gradcheck(
    args: &GradcheckArgs,
    settings: &Settings,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let report = finite_difference_check(
        &NetworkSpec::tiny(),
        args.batch,
        0.2,
        args.epsilon,
        settings.seed,
    );
    let text = format!(
        "max_relative_error: {}\nparameters_checked: {}\nworst_parameter: {}\n",
        report.max_relative_error, report.parameters_checked, report.worst_parameter
    );
    print!("{}", text);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_file(&dir.join("gradcheck.txt"), &text)?;
    }
    if report.max_relative_error >= args.tolerance {
        return Err(CliError::Internal(format!(
            "gradient check failed: max relative error {} >= {}",
            report.max_relative_error, args.tolerance
        )));
    }
    println!("gradient check passed (tolerance {})", args.tolerance);
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

#[derive(Subcommand)]
pub enum SynthCommand {
    /// Multi-actor tracking scenario: detections, embeddings, identities.
    Scenario(ScenarioArgs),
    /// Labeled pose clips laid out as a track plus annotations.
    Actions(ActionsArgs),
}

#[derive(Args)]
pub struct ScenarioArgs {
    #[arg(long, default_value_t = 4)]
    actors: usize,
    #[arg(long, default_value_t = 900)]
    frames: u64,
    #[arg(long = "target-actor", default_value_t = 0)]
    target_actor: usize,
    #[arg(long = "sigma-box", default_value_t = 1.0)]
    sigma_box: f64,
    #[arg(long = "sigma-kp", default_value_t = 2.0)]
    sigma_kp: f64,
    #[arg(long = "sigma-emb", default_value_t = 0.05)]
    sigma_emb: f64,
    /// Drop the default occlusion and scene-change events.
    #[arg(long = "no-events")]
    no_events: bool,
}

#[derive(Args)]
pub struct ActionsArgs {
    #[arg(long = "clips-per-class", default_value_t = 20)]
    clips_per_class: usize,
    #[arg(long, default_value_t = 3.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    distractors: usize,
    #[arg(long, default_value_t = 24)]
    min_frames: usize,
    #[arg(long, default_value_t = 96)]
    max_frames: usize,
}

pub fn run_synth(kind: &SynthCommand, settings: &Settings, out: &Path) -> Result<(), CliError> {
    match kind {
        SynthCommand::Scenario(args) => {
            if args.target_actor >= args.actors {
                return Err(CliError::Config(format!(
                    "target actor {} out of range for {} actors",
                    args.target_actor, args.actors
                )));
            }
            let defaults = ScenarioConfig::default();
            let cfg = ScenarioConfig {
                actors: args.actors,
                frames: args.frames,
                target_actor: args.target_actor,
                occlusions: if args.no_events {
                    Vec::new()
                } else {
                    defaults
                        .occlusions
                        .iter()
                        .filter(|e| e.actor < args.actors && e.start < args.frames)
                        .cloned()
                        .collect::<Vec<OcclusionEvent>>()
                },
                scene_changes: if args.no_events {
                    Vec::new()
                } else {
                    defaults
                        .scene_changes
                        .iter()
                        .copied()
                        .filter(|f| *f < args.frames)
                        .collect()
                },
                sigma_box: args.sigma_box,
                sigma_kp: args.sigma_kp,
                sigma_emb: args.sigma_emb,
                seed: settings.seed,
                ..defaults
            };
            let scenario = generate_scenario(&cfg);
            write_file(
                &out.join("detections.jsonl"),
                &write_detections(&scenario.frames),
            )?;
            write_file(
                &out.join("embeddings.jsonl"),
                &write_embeddings(&scenario.embeddings),
            )?;
            write_file(
                &out.join("manifest.toml"),
                &write_manifest(&scenario.manifest),
            )?;
            let mut identities = String::from("detection_id,actor,is_target\n");
            for (id, actor) in &scenario.identities {
                identities.push_str(&format!(
                    "{},{},{}\n",
                    id,
                    actor,
                    if *actor == scenario.target_actor {
                        1
                    } else {
                        0
                    }
                ));
            }
            write_file(&out.join("identities.csv"), &identities)?;
            println!(
                "scenario: {} actors, {} frames, {} detections",
                cfg.actors,
                cfg.frames,
                scenario.identities.len()
            );
        }
        SynthCommand::Actions(args) => {
            let cfg = ActionDatasetConfig {
                clips_per_class: args.clips_per_class,
                min_frames: args.min_frames,
                max_frames: args.max_frames,
                jitter: args.jitter,
                distractors: args.distractors,
                seed: settings.seed,
                ..ActionDatasetConfig::default()
            };
            let labeled = generate_action_dataset(&cfg);
            let (track, spans) =
                lay_out_clips(&labeled.iter().map(|l| l.clip.clone()).collect::<Vec<_>>());
            let manifest = RunManifest {
                fps: cfg.fps,
                frame_width: cfg.frame_width,
                frame_height: cfg.frame_height,
                subject_id: "synthetic".into(),
                reference_tracklet_id: None,
                reference_detection_id: None,
            };
            write_file(&out.join("track.json"), &write_track(&track))?;
            write_file(&out.join("annotations.csv"), &write_annotations(&spans))?;
            write_file(&out.join("manifest.toml"), &write_manifest(&manifest))?;
            println!(
                "actions: {} labeled clips laid out on one track",
                labeled.len()
            );
        }
    }
    Ok(())
}

/// Place independent clips on one disjoint global timeline: each clip
/// becomes a tracklet, each clip range an annotation span.
fn lay_out_clips(clips: &[ActionClip]) -> (Track, Vec<ingest::AnnotationSpan>) {
    let mut offset: u64 = 0;
    let mut tracklets = Vec::with_capacity(clips.len());
    let mut spans = Vec::with_capacity(clips.len());
    for (index, clip) in clips.iter().enumerate() {
        let frames = clip.frame_count();
        let detections = clip
            .detections
            .iter()
            .enumerate()
            .filter_map(|(i, slot)| {
                slot.as_ref().map(|det| {
                    let mut det = det.clone();
                    det.frame_index = offset + i as u64;
                    det
                })
            })
            .collect();
        tracklets.push(Tracklet {
            tracklet_id: index as u64,
            detections,
        });
        spans.push(ingest::AnnotationSpan {
            start_frame: offset,
            end_frame: offset + frames - 1,
            label: clip.label,
            subject_id: clip.subject_id.clone(),
        });
        offset += frames + 10;
    }
    (Track { tracklets }, spans)
}

// ---------------------------------------------------------------------------
// sweep-channels

#[derive(Args)]
pub struct SweepArgs {
    /// Channel counts to compare.
    #[arg(long = "channels-list", value_delimiter = ',', default_values_t = vec![2usize, 3, 4, 5])]
    channels_list: Vec<usize>,
    #[arg(long = "clips-per-class", default_value_t = 30)]
    clips_per_class: usize,
    #[arg(long, default_value_t = 6)]
    epochs: usize,
}

pub fn run_sweep(
    args: &SweepArgs,
    settings: &Settings,
    scale_flag: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    // the sweep runs at reduced resolution unless --scale is given
    let scale = scale_flag.unwrap_or(1.0 / 32.0);
    let dataset_cfg = ActionDatasetConfig {
        clips_per_class: args.clips_per_class,
        seed: settings.seed,
        ..ActionDatasetConfig::default()
    };
    let labeled = generate_action_dataset(&dataset_cfg);

    let mut csv = String::from("channels,val_accuracy\n");
    for &channels in &args.channels_list {
        if channels < 2 {
            return Err(CliError::Config(format!(
                "channel count {} must be >= 2",
                channels
            )));
        }
        let encoding = poseact_core::pose_evolution::EncodingConfig {
            channels,
            sigma: settings.sigma_heat,
            scale,
            confidence_floor: settings.confidence_floor,
        };
        let maps: Vec<_> = labeled
            .par_iter()
            .map(|l| {
                pose_evolution_map(
                    &l.clip,
                    &encoding,
                    dataset_cfg.frame_width,
                    dataset_cfg.frame_height,
                )
                .map(|m| (m.values, l.clip.label.index()))
            })
            .collect();
        let mut train_set = Dataset::default();
        let mut val_set = Dataset::default();
        for (i, entry) in maps.into_iter().enumerate() {
            let (values, label) = entry.map_err(|e| CliError::Internal(e.to_string()))?;
            if i % 5 == 4 {
                val_set.push(values, label);
            } else {
                train_set.push(values, label);
            }
        }
        let spec = spec_from_dataset(&train_set)?;
        let mut cfg = settings.train_config();
        cfg.epochs = args.epochs;
        cfg.batch_size = settings.batch_size.min(train_set.len());
        let (_, history) = train(&train_set, &val_set, &spec, &cfg)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let best = history
            .iter()
            .map(|h| h.val_accuracy)
            .fold(0.0f64, f64::max);
        println!("channels {}: validation accuracy {:.4}", channels, best);
        csv.push_str(&format!("{},{}\n", channels, best));
    }
    write_file(&out.join("sweep.csv"), &csv)?;
    Ok(())
}
