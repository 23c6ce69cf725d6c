//! Baseline single-anchor decoders: star (all joints from the body center)
//! and tree (a parent-to-child walk from the root joint).
//!
//! Both read the same offset blocks as the graph decoder but commit to one
//! anchor each, so a missing or corrupted anchor loses the whole pose. They
//! exist to quantify how much the graph's redundancy buys.

use crate::detect::PersonDetection;
use crate::maps::DataMapSet;
use crate::pose::Pose3D;
use crate::skeleton::SkeletonConfig;
use crate::tensor::MapError;
use std::fmt;

/// Errors from the baseline decoders.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineError {
    Map(MapError),
    JointCountMismatch { skeleton: usize, maps: usize },
    /// Star decoding needs a detected body center.
    CenterUndetected { person_index: usize },
    /// Tree decoding needs a detected root joint.
    RootUndetected { person_index: usize },
}

impl fmt::Display for BaselineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineError::Map(e) => write!(f, "baseline map access: {e}"),
            BaselineError::JointCountMismatch { skeleton, maps } => {
                write!(f, "skeleton has {skeleton} joints but maps carry {maps}")
            }
            BaselineError::CenterUndetected { person_index } => {
                write!(f, "person {person_index}: no body center detected for star decoding")
            }
            BaselineError::RootUndetected { person_index } => {
                write!(f, "person {person_index}: root joint undetected for tree decoding")
            }
        }
    }
}

impl std::error::Error for BaselineError {}

impl From<MapError> for BaselineError {
    fn from(e: MapError) -> Self {
        BaselineError::Map(e)
    }
}

/// Star decoding: every joint is the lifted center plus the joint's offset
/// block read at the center pixel. All joints come out valid; corrupted
/// offsets collapse joints onto the center rather than dropping them.
pub fn decode_star(
    maps: &DataMapSet,
    skeleton: &SkeletonConfig,
    person: &PersonDetection,
    person_index: usize,
) -> Result<Pose3D, BaselineError> {
    let k = skeleton.joint_count();
    if maps.joint_count() != k {
        return Err(BaselineError::JointCountMismatch { skeleton: k, maps: maps.joint_count() });
    }
    let center = person
        .center
        .as_ref()
        .ok_or(BaselineError::CenterUndetected { person_index })?;
    let center_3d = person
        .center_3d
        .ok_or(BaselineError::CenterUndetected { person_index })?;
    let block = maps.offset3d.sample_at(center.x as i64, center.y as i64, 0..3 * k)?;
    let mut pose = Pose3D::invalid(k);
    for j in 0..k {
        pose.joints[j] = [
            center_3d[0] + block[3 * j] as f64,
            center_3d[1] + block[3 * j + 1] as f64,
            center_3d[2] + block[3 * j + 2] as f64,
        ];
        pose.valid[j] = true;
    }
    Ok(pose)
}

/// Tree decoding: the root joint anchors the pose and each child is its
/// parent's estimate plus the child's offset block read at the parent's
/// (rounded) pixel. Children whose parent estimate leaves the grid, or whose
/// parent is itself invalid, stay invalid.
pub fn decode_tree(
    maps: &DataMapSet,
    skeleton: &SkeletonConfig,
    person: &PersonDetection,
    person_index: usize,
) -> Result<Pose3D, BaselineError> {
    let k = skeleton.joint_count();
    if maps.joint_count() != k {
        return Err(BaselineError::JointCountMismatch { skeleton: k, maps: maps.joint_count() });
    }
    let root = skeleton.tree_root();
    let root_3d = person
        .keypoints_3d[root]
        .ok_or(BaselineError::RootUndetected { person_index })?;

    let mut pose = Pose3D::invalid(k);
    pose.joints[root] = root_3d;
    pose.valid[root] = true;

    // Children in breadth-first order so parents settle before children.
    let mut order: Vec<usize> = Vec::with_capacity(k);
    let mut frontier = vec![root];
    while let Some(parent) = frontier.pop() {
        for (child, p) in skeleton.tree_parents().iter().enumerate() {
            if *p == Some(parent) {
                order.push(child);
                frontier.push(child);
            }
        }
    }
    for child in order {
        let parent = skeleton.tree_parents()[child].expect("non-root joints have parents");
        if !pose.valid[parent] {
            continue;
        }
        let est = pose.joints[parent];
        let (px, py) = (est[0].round() as i64, est[1].round() as i64);
        if !maps.offset3d.contains(px, py) {
            continue;
        }
        let block =
            maps.offset3d.sample_at(px, py, 3 * child..3 * child + 3)?;
        pose.joints[child] = [
            est[0] + block[0] as f64,
            est[1] + block[1] as f64,
            est[2] + block[2] as f64,
        ];
        pose.valid[child] = true;
    }
    Ok(pose)
}
