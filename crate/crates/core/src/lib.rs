//! Target-specific action classification pipeline.
//!
//! The stages, in the order a run chains them:
//!
//! 1. [`ingest`] parses per-frame person detections, appearance embeddings,
//!    and action annotations from files.
//! 2. [`short_term`] links detections of consecutive frames into tracklets
//!    by IoU, solving each frame transition with the exact assignment solver
//!    in [`assignment`].
//! 3. [`fusion`] prunes tracklets, measures appearance affinity to a
//!    reference tracklet, and fuses the target's tracklets into one track.
//! 4. [`clipper`] cuts the fused track into labeled action clips.
//! 5. [`pose_evolution`] turns each clip into a time-colorized joint heatmap
//!    stack, the classifier input.
//! 6. [`classifier`] trains and evaluates a small convolutional network over
//!    those maps with hand-written forward/backward passes.
//!
//! [`synthetic`] generates fully scripted multi-actor scenarios and labeled
//! pose clips with known ground truth, so every stage can be verified without
//! any recorded video.

pub mod assignment;
pub mod classifier;
pub mod clipper;
pub mod fusion;
pub mod ingest;
pub mod pose_evolution;
pub mod rng;
pub mod short_term;
pub mod synthetic;
pub mod types;
