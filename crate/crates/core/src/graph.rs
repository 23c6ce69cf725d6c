//! Graph decoding: every detected joint of a person proposes a position for
//! every joint, and proposals are fused by confidence-weighted averaging.
//!
//! For person `P` with detected joints `i` at pixels `p_i`, the graph holds
//! one row per detected joint. Row `i` reads the 3-D offset block of every
//! target joint `j` at pixel `p_i`, giving a candidate `c_ij = p3d_i + e_ij`.
//! The edge weight combines three factors:
//!
//! * source heat `h_i` (the peak confidence),
//! * bone confidence `exp(-(|e_ij| / n + gamma_ij))`, where `n` is an
//!   instance-scale normalizer (the norm of the offset from the head-top
//!   pixel to the mid-hip joint, with the skeleton's prior head-to-hip
//!   distance as fallback) and `gamma_ij` is the prior bone length ratio,
//! * target heat `h_j`, read at the detected peak of `j` or, when `j` was
//!   not detected, at a provisional pixel voted by the rows (per-coordinate
//!   median of the rows' 2-D candidates).
//!
//! The decoded joint is the weight-normalized convex combination of the
//! candidates; a zero-weight column leaves the joint invalid.

use crate::detect::PersonDetection;
use crate::maps::DataMapSet;
use crate::pose::Pose3D;
use crate::skeleton::SkeletonConfig;
use crate::tensor::MapError;
use std::fmt;

/// Weights and norms below this count as zero.
pub const WEIGHT_EPSILON: f64 = 1e-6;

/// Errors from graph construction and decoding.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphError {
    Map(MapError),
    JointCountMismatch { skeleton: usize, maps: usize },
    /// Every column had zero total weight; no joint could be decoded.
    EmptyPose { person_index: usize },
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::Map(e) => write!(f, "graph map access: {e}"),
            GraphError::JointCountMismatch { skeleton, maps } => {
                write!(f, "skeleton has {skeleton} joints but maps carry {maps}")
            }
            GraphError::EmptyPose { person_index } => {
                write!(f, "person {person_index}: no joint received any decoding weight")
            }
        }
    }
}

impl std::error::Error for GraphError {}

impl From<MapError> for GraphError {
    fn from(e: MapError) -> Self {
        GraphError::Map(e)
    }
}

/// Bone confidence of one edge: `exp(-(offset_norm / normalizer + gamma))`.
pub fn bone_confidence(offset_norm: f64, normalizer: f64, gamma: f64) -> f64 {
    (-(offset_norm / normalizer + gamma)).exp()
}

/// Normalizes a non-negative weight column into convex-combination
/// coefficients. Returns `None` when the total weight is (numerically) zero.
pub fn normalize_column(weights: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    if total <= WEIGHT_EPSILON {
        return None;
    }
    Some(weights.iter().map(|w| w.max(0.0) / total).collect())
}

/// Convex combination of candidate positions.
pub fn combine_candidates(candidates: &[[f64; 3]], lambdas: &[f64]) -> [f64; 3] {
    let mut acc = [0.0f64; 3];
    for (c, l) in candidates.iter().zip(lambdas) {
        for a in 0..3 {
            acc[a] += l * c[a];
        }
    }
    acc
}

/// The per-person decoding graph.
#[derive(Debug, Clone)]
pub struct DecodingGraph {
    pub person_index: usize,
    pub joint_count: usize,
    /// Row-major `K x K`; entry `(i, j)` is the offset block of target `j`
    /// read at source `i`'s pixel. Rows of undetected sources stay zero.
    pub offsets: Vec<[f64; 3]>,
    /// Whether source row `i` is backed by a detected peak.
    pub row_valid: Vec<bool>,
    /// Lifted 3-D position of each detected source (zeros when invalid).
    pub sources_3d: Vec<[f64; 3]>,
    /// Source heat per row.
    pub source_heat: Vec<f64>,
    /// Target heat per column (peak confidence, or the heat at the voted
    /// provisional pixel for undetected joints).
    pub target_heat: Vec<f64>,
    /// Row-major `K x K` edge weights.
    pub weights: Vec<f64>,
    /// Instance-scale normalizer used in the bone confidences.
    pub normalizer: f64,
    /// True when the head-top offset was unusable and the prior head-to-hip
    /// distance stood in for the normalizer.
    pub used_fallback_normalizer: bool,
}

/// Per-coordinate median of integer votes: the middle vote, or the rounded
/// mean of the two middle votes when the count is even.
fn median_vote(mut votes: Vec<i64>) -> i64 {
    votes.sort_unstable();
    let n = votes.len();
    if n % 2 == 1 {
        votes[n / 2]
    } else {
        ((votes[n / 2 - 1] + votes[n / 2]) as f64 / 2.0).round() as i64
    }
}

/// Builds the decoding graph for one detected person. Source depths come
/// from the detection's already-lifted keypoints.
pub fn build_graph(
    maps: &DataMapSet,
    skeleton: &SkeletonConfig,
    person: &PersonDetection,
    person_index: usize,
) -> Result<DecodingGraph, GraphError> {
    let k = skeleton.joint_count();
    if maps.joint_count() != k {
        return Err(GraphError::JointCountMismatch { skeleton: k, maps: maps.joint_count() });
    }

    let mut offsets = vec![[0.0f64; 3]; k * k];
    let mut row_valid = vec![false; k];
    let mut sources_3d = vec![[0.0f64; 3]; k];
    let mut source_heat = vec![0.0f64; k];

    for i in 0..k {
        let (peak, lifted) = match (&person.keypoints[i], &person.keypoints_3d[i]) {
            (Some(p), Some(l)) => (p, l),
            _ => continue,
        };
        row_valid[i] = true;
        sources_3d[i] = *lifted;
        source_heat[i] = peak.confidence.max(0.0) as f64;
        let block = maps.offset3d.sample_at(peak.x as i64, peak.y as i64, 0..3 * k)?;
        for j in 0..k {
            offsets[i * k + j] =
                [block[3 * j] as f64, block[3 * j + 1] as f64, block[3 * j + 2] as f64];
        }
    }

    // Instance-scale normalizer: norm of the offset from the head-top pixel
    // to the mid-hip joint, falling back to the prior distance.
    let (head, hip) = (skeleton.head_top(), skeleton.mid_hip());
    let prior_scale = skeleton.sigma(head, hip);
    let (normalizer, used_fallback_normalizer) = if row_valid[head] {
        let e = offsets[head * k + hip];
        let n = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
        if n < WEIGHT_EPSILON {
            (prior_scale, true)
        } else {
            (n, false)
        }
    } else {
        (prior_scale, true)
    };

    // Target heat per column.
    let mut target_heat = vec![0.0f64; k];
    for j in 0..k {
        if let Some(p) = &person.keypoints[j] {
            target_heat[j] = p.confidence.max(0.0) as f64;
            continue;
        }
        // Vote a provisional pixel from the rows' 2-D candidates.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..k {
            if !row_valid[i] {
                continue;
            }
            let e = offsets[i * k + j];
            xs.push((sources_3d[i][0] + e[0]).round() as i64);
            ys.push((sources_3d[i][1] + e[1]).round() as i64);
        }
        if xs.is_empty() {
            continue; // no rows at all; column stays at zero heat
        }
        let (px, py) = (median_vote(xs), median_vote(ys));
        if maps.heat.contains(px, py) {
            target_heat[j] = maps.heat.get(j, py as usize, px as usize).max(0.0) as f64;
        }
    }

    let mut weights = vec![0.0f64; k * k];
    for i in 0..k {
        if !row_valid[i] {
            continue;
        }
        for j in 0..k {
            let e = offsets[i * k + j];
            let norm = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
            weights[i * k + j] = source_heat[i]
                * bone_confidence(norm, normalizer, skeleton.gamma(i, j))
                * target_heat[j];
        }
    }

    Ok(DecodingGraph {
        person_index,
        joint_count: k,
        offsets,
        row_valid,
        sources_3d,
        source_heat,
        target_heat,
        weights,
        normalizer,
        used_fallback_normalizer,
    })
}

impl DecodingGraph {
    /// Candidate position target `j` receives from source row `i`.
    pub fn candidate(&self, i: usize, j: usize) -> [f64; 3] {
        let e = self.offsets[i * self.joint_count + j];
        [
            self.sources_3d[i][0] + e[0],
            self.sources_3d[i][1] + e[1],
            self.sources_3d[i][2] + e[2],
        ]
    }

    /// Fuses each column into a joint position. Columns with zero total
    /// weight stay invalid; if every column is empty the pose is an error.
    pub fn decode(&self) -> Result<Pose3D, GraphError> {
        let k = self.joint_count;
        let mut pose = Pose3D::invalid(k);
        let mut any = false;
        for j in 0..k {
            let mut col = Vec::with_capacity(k);
            let mut candidates = Vec::with_capacity(k);
            for i in 0..k {
                if !self.row_valid[i] {
                    continue;
                }
                col.push(self.weights[i * k + j]);
                candidates.push(self.candidate(i, j));
            }
            if let Some(lambdas) = normalize_column(&col) {
                pose.joints[j] = combine_candidates(&candidates, &lambdas);
                pose.valid[j] = true;
                any = true;
            }
        }
        if !any {
            return Err(GraphError::EmptyPose { person_index: self.person_index });
        }
        Ok(pose)
    }
}
