//! Multi-person 3-D pose decoding from dense prediction maps.
//!
//! The crate covers the full pipeline: tensor maps and their disk format
//! ([`tensor`], [`gmap`]), the skeleton model ([`skeleton`]), peak detection
//! and center-based grouping ([`detect`]), three per-person decoders — a
//! dense reasoning graph ([`graph`]) plus star and tree baselines
//! ([`baselines`]) — a residual refinement stage ([`sdar`]), training-style
//! losses ([`loss`]), evaluation metrics ([`metrics`]), and a synthetic
//! scene harness ([`synth`]) that generates, renders, and corrupts scenes
//! deterministically.

pub mod assignment;
pub mod baselines;
pub mod detect;
pub mod gmap;
pub mod graph;
pub mod loss;
pub mod maps;
pub mod metrics;
pub mod pipeline;
pub mod pose;
pub mod procrustes;
pub mod sdar;
pub mod skeleton;
pub mod synth;
pub mod tensor;

pub use assignment::{min_cost_assignment, AssignmentError};
pub use baselines::{decode_star, decode_tree, BaselineError};
pub use detect::{
    assign_keypoints, detect_persons, extract_peaks, DepthEncoding, DetectError, DetectParams,
    GroupedPerson, Grouping, Peak, PersonDetection,
};
pub use gmap::{
    read_gmap, read_gmap_file, read_named_maps, write_gmap, write_gmap_file, write_named_maps,
    GmapError,
};
pub use graph::{build_graph, DecodingGraph, GraphError, WEIGHT_EPSILON};
pub use loss::{total_loss, LossBreakdown, LossTargets, LossWeights};
pub use maps::DataMapSet;
pub use metrics::{evaluate, MatchedPair, MetricReport, DEFAULT_PCK_THRESHOLD};
pub use pipeline::{
    decode_scene_maps, DecodeFailure, DecodeOutcome, DecodeParams, GraphMode,
};
pub use pose::{load_poses, save_poses, Pose3D, PoseIoError};
pub use procrustes::{similarity_align, ProcrustesError, SimilarityTransform};
pub use sdar::{load_weights, refine, save_weights, GateSource, SdarError, SdarWeights};
pub use skeleton::{SkeletonConfig, SkeletonError};
pub use synth::{
    corrupt_maps, generate_scene, load_scene, loss_targets, render_maps, save_scene,
    scene_from_text, scene_to_text, CorruptParams, CorruptionLog, RenderParams, Scene,
    SceneParams, ScenePerson, SynthError,
};
pub use tensor::{delta_inverse, delta_transform, Conv1x1, MapError, TensorMap};
