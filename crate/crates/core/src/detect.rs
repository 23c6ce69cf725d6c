//! Person detection: heatmap peaks, center regression, and grouping.
//!
//! Joint and center candidates are strict local maxima of their heat
//! channels. Each joint peak regresses a body-center estimate by adding the
//! scale map's 2-D offset at its pixel; per joint category, peaks are matched
//! one-to-one against detected centers by minimum total regressed-to-center
//! distance. Peaks left over (more candidates than centers, or no centers at
//! all) are *orphans*; the full pipeline clusters orphans by their regressed
//! centers so that people whose center channel never fired still surface as
//! centerless detections.

use crate::assignment::{min_cost_assignment, AssignmentError};
use crate::maps::DataMapSet;
use crate::skeleton::SkeletonConfig;
use crate::tensor::{delta_transform, MapError, TensorMap};
use std::fmt;

/// How depth channels encode metric depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthEncoding {
    /// Channels store depth directly.
    Raw,
    /// Channels store `-ln(z)`; decoding applies `exp(-value)`, the
    /// reciprocal-sigmoid-minus-one transform.
    DeltaInverse,
}

impl DepthEncoding {
    pub fn decode(self, stored: f64) -> f64 {
        match self {
            DepthEncoding::Raw => stored,
            DepthEncoding::DeltaInverse => delta_transform(stored),
        }
    }

    pub fn encode(self, z: f64) -> Result<f64, MapError> {
        match self {
            DepthEncoding::Raw => Ok(z),
            DepthEncoding::DeltaInverse => crate::tensor::delta_inverse(z),
        }
    }
}

/// A strict local maximum of one heat channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Channel the peak came from (joint index, or `K` for the center channel).
    pub channel: usize,
    pub x: usize,
    pub y: usize,
    pub confidence: f32,
}

/// One grouped person before 3-D lifting.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedPerson {
    pub center: Peak,
    /// Per joint category, the peak assigned to this person.
    pub keypoints: Vec<Option<Peak>>,
}

/// Result of center-based grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub persons: Vec<GroupedPerson>,
    /// Peaks no center claimed, in channel-then-raster order.
    pub orphans: Vec<Peak>,
}

/// A detected person with lifted root keypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonDetection {
    /// The center peak, absent for persons recovered from orphan clusters.
    pub center: Option<Peak>,
    /// Center position lifted with the mid-hip depth channel.
    pub center_3d: Option<[f64; 3]>,
    pub keypoints: Vec<Option<Peak>>,
    /// Per joint, `(x, y, z)` with `z` decoded from the joint's depth channel.
    pub keypoints_3d: Vec<Option<[f64; 3]>>,
}

impl PersonDetection {
    pub fn detected_joint_count(&self) -> usize {
        self.keypoints.iter().filter(|p| p.is_some()).count()
    }
}

/// Detection stage parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    /// Minimum heat value for a peak.
    pub threshold: f32,
    /// Orphans whose regressed centers are within this distance merge into
    /// one centerless person.
    pub merge_radius: f64,
    /// A joint peak may only be claimed by a center within this distance of
    /// the peak's regressed center; assignments farther than this fall back
    /// to the orphan pool.
    pub claim_radius: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams { threshold: 0.5, merge_radius: 4.0, claim_radius: 2.0 }
    }
}

/// Errors from the detection stage.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectError {
    Map(MapError),
    Assignment(AssignmentError),
    JointCountMismatch { skeleton: usize, maps: usize },
}

impl fmt::Display for DetectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectError::Map(e) => write!(f, "detection map access: {e}"),
            DetectError::Assignment(e) => write!(f, "center assignment: {e}"),
            DetectError::JointCountMismatch { skeleton, maps } => {
                write!(f, "skeleton has {skeleton} joints but maps carry {maps}")
            }
        }
    }
}

impl std::error::Error for DetectError {}

impl From<MapError> for DetectError {
    fn from(e: MapError) -> Self {
        DetectError::Map(e)
    }
}

impl From<AssignmentError> for DetectError {
    fn from(e: AssignmentError) -> Self {
        DetectError::Assignment(e)
    }
}

/// Finds strict 3x3 local maxima of `channel` with value at least
/// `threshold`, in raster order. On plateaus the earliest pixel in raster
/// order wins: a candidate must exceed every neighbor that precedes it and
/// be at least equal to every neighbor that follows it. Out-of-bounds
/// neighbors never block a peak.
pub fn extract_peaks(
    map: &TensorMap,
    channel: usize,
    threshold: f32,
) -> Result<Vec<Peak>, MapError> {
    if channel >= map.channels() {
        return Err(MapError::ChannelOutOfBounds {
            start: channel,
            end: channel + 1,
            channels: map.channels(),
        });
    }
    let (h, w) = (map.height(), map.width());
    let mut peaks = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = map.get(channel, y, x);
            if v < threshold {
                continue;
            }
            let mut is_peak = true;
            'scan: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if !map.contains(nx, ny) {
                        continue;
                    }
                    let n = map.get(channel, ny as usize, nx as usize);
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if (earlier && v <= n) || (!earlier && v < n) {
                        is_peak = false;
                        break 'scan;
                    }
                }
            }
            if is_peak {
                peaks.push(Peak { channel, x, y, confidence: v });
            }
        }
    }
    Ok(peaks)
}

/// Adds the scale map's 2-D offset at the peak pixel to the peak position,
/// giving the center this keypoint votes for.
pub fn regress_center(scale: &TensorMap, peak: &Peak) -> Result<[f64; 2], MapError> {
    let s = scale.sample_at(peak.x as i64, peak.y as i64, 0..2)?;
    Ok([peak.x as f64 + s[0] as f64, peak.y as f64 + s[1] as f64])
}

/// Matches joint peaks to center peaks, one joint category at a time, by
/// minimum total distance between regressed centers and center positions.
/// An assignment only sticks when the regressed center lands within
/// `claim_radius` of the center it was paired with; farther pairs are
/// returned as orphans, so a person missing a peak in some category cannot
/// capture another person's peak across the map. With no centers, every
/// peak is an orphan and no persons are produced.
pub fn assign_keypoints(
    joint_peaks: &[Vec<Peak>],
    center_peaks: &[Peak],
    scale: &TensorMap,
    claim_radius: f64,
) -> Result<Grouping, DetectError> {
    let k = joint_peaks.len();
    let mut persons: Vec<GroupedPerson> = center_peaks
        .iter()
        .map(|c| GroupedPerson { center: *c, keypoints: vec![None; k] })
        .collect();
    let mut orphans: Vec<Peak> = Vec::new();

    for (category, peaks) in joint_peaks.iter().enumerate() {
        if peaks.is_empty() {
            continue;
        }
        if center_peaks.is_empty() {
            orphans.extend(peaks.iter().copied());
            continue;
        }
        let rows = peaks.len();
        let cols = center_peaks.len();
        let mut costs = vec![0.0f64; rows * cols];
        for (r, peak) in peaks.iter().enumerate() {
            let voted = regress_center(scale, peak)?;
            for (c, center) in center_peaks.iter().enumerate() {
                let dx = voted[0] - center.x as f64;
                let dy = voted[1] - center.y as f64;
                costs[r * cols + c] = (dx * dx + dy * dy).sqrt();
            }
        }
        let (pairs, _) = min_cost_assignment(&costs, rows, cols)?;
        let mut matched = vec![false; rows];
        for (r, c) in pairs {
            if costs[r * cols + c] > claim_radius {
                continue;
            }
            matched[r] = true;
            persons[c].keypoints[category] = Some(peaks[r]);
        }
        for (r, peak) in peaks.iter().enumerate() {
            if !matched[r] {
                orphans.push(*peak);
            }
        }
    }
    Ok(Grouping { persons, orphans })
}

/// Groups orphan peaks whose regressed centers lie within `merge_radius` of
/// each other (transitively) into centerless persons. Within a cluster, at
/// most one peak per joint category survives: highest confidence first, then
/// earliest raster position. Clusters are ordered by the raster position of
/// their earliest member peak.
pub fn cluster_orphans(
    orphans: &[Peak],
    scale: &TensorMap,
    merge_radius: f64,
    joint_count: usize,
) -> Result<Vec<Vec<Option<Peak>>>, DetectError> {
    let n = orphans.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut voted = Vec::with_capacity(n);
    for peak in orphans {
        voted.push(regress_center(scale, peak)?);
    }
    // Tiny union-find over orphan indices.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = voted[i][0] - voted[j][0];
            let dy = voted[i][1] - voted[j][1];
            if (dx * dx + dy * dy).sqrt() <= merge_radius {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }
    // Collect clusters keyed by their lowest member index; orphan input order
    // is channel-then-raster, so cluster order is deterministic.
    let mut cluster_of_root: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match cluster_of_root.iter_mut().find(|(r, _)| *r == root) {
            Some((_, members)) => members.push(i),
            None => cluster_of_root.push((root, vec![i])),
        }
    }
    cluster_of_root.sort_by_key(|(root, _)| *root);

    let mut clusters = Vec::new();
    for (_, members) in cluster_of_root {
        let mut keypoints: Vec<Option<Peak>> = vec![None; joint_count];
        for idx in members {
            let peak = orphans[idx];
            let slot = &mut keypoints[peak.channel];
            let replace = match slot {
                None => true,
                Some(existing) => {
                    peak.confidence > existing.confidence
                        || (peak.confidence == existing.confidence
                            && (peak.y, peak.x) < (existing.y, existing.x))
                }
            };
            if replace {
                *slot = Some(peak);
            }
        }
        clusters.push(keypoints);
    }
    Ok(clusters)
}

fn lift_person(
    maps: &DataMapSet,
    skeleton: &SkeletonConfig,
    encoding: DepthEncoding,
    center: Option<Peak>,
    keypoints: Vec<Option<Peak>>,
) -> Result<PersonDetection, DetectError> {
    let center_3d = match &center {
        Some(c) => {
            let stored = maps.depth.sample_at(c.x as i64, c.y as i64, skeleton.mid_hip()..skeleton.mid_hip() + 1)?;
            Some([c.x as f64, c.y as f64, encoding.decode(stored[0] as f64)])
        }
        None => None,
    };
    let mut keypoints_3d = vec![None; keypoints.len()];
    for (j, slot) in keypoints.iter().enumerate() {
        if let Some(p) = slot {
            let stored = maps.depth.sample_at(p.x as i64, p.y as i64, j..j + 1)?;
            keypoints_3d[j] = Some([p.x as f64, p.y as f64, encoding.decode(stored[0] as f64)]);
        }
    }
    Ok(PersonDetection { center, center_3d, keypoints, keypoints_3d })
}

/// Full detection stage: peaks, grouping, orphan clustering, and 3-D lifting.
/// Persons with a detected center come first (in center raster order),
/// followed by centerless persons recovered from orphan clusters.
pub fn detect_persons(
    maps: &DataMapSet,
    skeleton: &SkeletonConfig,
    params: &DetectParams,
    encoding: DepthEncoding,
) -> Result<Vec<PersonDetection>, DetectError> {
    let k = skeleton.joint_count();
    if maps.joint_count() != k {
        return Err(DetectError::JointCountMismatch { skeleton: k, maps: maps.joint_count() });
    }
    let mut joint_peaks = Vec::with_capacity(k);
    for channel in 0..k {
        joint_peaks.push(extract_peaks(&maps.heat, channel, params.threshold)?);
    }
    let center_peaks = extract_peaks(&maps.heat, maps.center_channel(), params.threshold)?;
    let grouping =
        assign_keypoints(&joint_peaks, &center_peaks, &maps.scale, params.claim_radius)?;

    let mut out = Vec::with_capacity(grouping.persons.len());
    for person in grouping.persons {
        out.push(lift_person(maps, skeleton, encoding, Some(person.center), person.keypoints)?);
    }
    for keypoints in
        cluster_orphans(&grouping.orphans, &maps.scale, params.merge_radius, k)?
    {
        out.push(lift_person(maps, skeleton, encoding, None, keypoints)?);
    }
    Ok(out)
}
