//! End-to-end decoding: detection on a map stack followed by per-person
//! 3-D reconstruction with a selectable decoder.

use crate::baselines::{decode_star, decode_tree, BaselineError};
use crate::detect::{detect_persons, DepthEncoding, DetectError, DetectParams, PersonDetection};
use crate::graph::{build_graph, DecodingGraph, GraphError};
use crate::maps::DataMapSet;
use crate::pose::Pose3D;
use crate::skeleton::SkeletonConfig;
use std::fmt;
use std::str::FromStr;

/// Which per-person decoder turns detections into 3-D joints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMode {
    /// Every joint read from the center pixel in one hop.
    Star,
    /// Joints chained along the kinematic tree.
    Tree,
    /// Dense pairwise graph with confidence-weighted voting.
    Dgr,
}

impl fmt::Display for GraphMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GraphMode::Star => "star",
            GraphMode::Tree => "tree",
            GraphMode::Dgr => "dgr",
        };
        write!(f, "{name}")
    }
}

impl FromStr for GraphMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "star" => Ok(GraphMode::Star),
            "tree" => Ok(GraphMode::Tree),
            "dgr" => Ok(GraphMode::Dgr),
            other => Err(format!("unknown graph mode {other:?}, expected star|tree|dgr")),
        }
    }
}

/// Why one person could not be decoded. Other persons are unaffected.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodeFailure {
    Baseline(BaselineError),
    Graph(GraphError),
}

impl fmt::Display for DecodeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeFailure::Baseline(e) => write!(f, "{e}"),
            DecodeFailure::Graph(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for DecodeFailure {}

/// Decoding configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub detect: DetectParams,
    pub encoding: DepthEncoding,
    pub mode: GraphMode,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            detect: DetectParams::default(),
            encoding: DepthEncoding::DeltaInverse,
            mode: GraphMode::Dgr,
        }
    }
}

/// Everything a decode pass produced. `poses[i]` and `graphs[i]` line up
/// with `detections[i]`; graphs are only present in [`GraphMode::Dgr`].
#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    pub detections: Vec<PersonDetection>,
    pub poses: Vec<Result<Pose3D, DecodeFailure>>,
    pub graphs: Vec<Option<DecodingGraph>>,
}

impl DecodeOutcome {
    /// The successfully decoded poses, in detection order.
    pub fn valid_poses(&self) -> Vec<Pose3D> {
        self.poses.iter().filter_map(|p| p.as_ref().ok().cloned()).collect()
    }

    pub fn decoded_count(&self) -> usize {
        self.poses.iter().filter(|p| p.is_ok()).count()
    }
}

/// Runs detection on the maps and decodes every detected person with the
/// requested mode. Per-person decode failures are recorded, not fatal.
pub fn decode_scene_maps(
    maps: &DataMapSet,
    skeleton: &SkeletonConfig,
    params: &DecodeParams,
) -> Result<DecodeOutcome, DetectError> {
    let detections = detect_persons(maps, skeleton, &params.detect, params.encoding)?;
    let mut poses = Vec::with_capacity(detections.len());
    let mut graphs = Vec::with_capacity(detections.len());
    for (index, person) in detections.iter().enumerate() {
        match params.mode {
            GraphMode::Star => {
                poses.push(
                    decode_star(maps, skeleton, person, index).map_err(DecodeFailure::Baseline),
                );
                graphs.push(None);
            }
            GraphMode::Tree => {
                poses.push(
                    decode_tree(maps, skeleton, person, index).map_err(DecodeFailure::Baseline),
                );
                graphs.push(None);
            }
            GraphMode::Dgr => match build_graph(maps, skeleton, person, index) {
                Ok(graph) => {
                    poses.push(graph.decode().map_err(DecodeFailure::Graph));
                    graphs.push(Some(graph));
                }
                Err(e) => {
                    poses.push(Err(DecodeFailure::Graph(e)));
                    graphs.push(None);
                }
            },
        }
    }
    Ok(DecodeOutcome { detections, poses, graphs })
}
