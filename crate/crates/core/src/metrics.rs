//! Evaluation metrics for multi-person 3-D pose estimation.
//!
//! Ground truth and predictions are matched greedily by root distance
//! (mid-hip joint, or the centroid of valid joints when the mid-hip is
//! unavailable). Position metrics are root-relative: both poses are shifted
//! so their roots coincide before joint errors are measured. Visibility uses
//! the pose validity flags; joints of unmatched ground-truth persons count
//! as incorrect, and surplus predictions are ignored.

use crate::pose::Pose3D;
use crate::procrustes::similarity_align;

/// Correctness threshold used by the headline metric, in the same units as
/// pose coordinates.
pub const DEFAULT_PCK_THRESHOLD: f64 = 150.0;
/// The area-under-curve metric sweeps thresholds `0..=150` in steps of 5.
pub const AUC_MAX_THRESHOLD: f64 = 150.0;
pub const AUC_STEP: f64 = 5.0;
/// Crowd indices are clamped just below one.
pub const CROWD_INDEX_CEILING: f64 = 0.999999;

/// A matched ground-truth/prediction pair and its root distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub gt_index: usize,
    pub pred_index: usize,
    pub root_distance: f64,
}

/// Scene-level evaluation summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// Percentage of visible ground-truth joints predicted within the
    /// threshold after root alignment, 0-100.
    pub pck_rel: f64,
    /// Normalized area under the PCK-over-threshold curve, 0-1.
    pub auc_pck: f64,
    /// Mean root-aligned joint error over matched, jointly valid joints.
    pub mpjpe: Option<f64>,
    /// Mean joint error after per-pair similarity alignment.
    pub pa_mpjpe: Option<f64>,
    pub crowd_index: f64,
    pub matched: usize,
    pub gt_count: usize,
    pub pred_count: usize,
}

impl MetricReport {
    /// Stable text rendering used by evaluation reports.
    pub fn to_text(&self) -> String {
        let fmt_opt = |v: &Option<f64>| match v {
            Some(x) => format!("{x:.4}"),
            None => "n/a".to_string(),
        };
        format!(
            "persons_gt {}\npersons_pred {}\nmatched {}\npck_rel {:.4}\nauc_pck {:.6}\nmpjpe {}\npa_mpjpe {}\ncrowd_index {:.6}\n",
            self.gt_count,
            self.pred_count,
            self.matched,
            self.pck_rel,
            self.auc_pck,
            fmt_opt(&self.mpjpe),
            fmt_opt(&self.pa_mpjpe),
            self.crowd_index,
        )
    }
}

/// Root of a pose: the mid-hip joint when valid, otherwise the centroid of
/// the valid joints.
pub fn person_root(pose: &Pose3D, mid_hip: usize) -> Option<[f64; 3]> {
    if mid_hip < pose.joint_count() && pose.valid[mid_hip] {
        return Some(pose.joints[mid_hip]);
    }
    pose.centroid()
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Greedy one-to-one matching by increasing root distance; ties resolve by
/// lowest ground-truth then prediction index.
pub fn match_poses(gt: &[Pose3D], pred: &[Pose3D], mid_hip: usize) -> Vec<MatchedPair> {
    let mut candidates: Vec<MatchedPair> = Vec::new();
    for (g, gt_pose) in gt.iter().enumerate() {
        let Some(gt_root) = person_root(gt_pose, mid_hip) else { continue };
        for (p, pred_pose) in pred.iter().enumerate() {
            let Some(pred_root) = person_root(pred_pose, mid_hip) else { continue };
            candidates.push(MatchedPair {
                gt_index: g,
                pred_index: p,
                root_distance: dist3(gt_root, pred_root),
            });
        }
    }
    candidates.sort_by(|a, b| {
        a.root_distance
            .partial_cmp(&b.root_distance)
            .expect("root distances are finite")
            .then(a.gt_index.cmp(&b.gt_index))
            .then(a.pred_index.cmp(&b.pred_index))
    });
    let mut used_gt = vec![false; gt.len()];
    let mut used_pred = vec![false; pred.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if used_gt[c.gt_index] || used_pred[c.pred_index] {
            continue;
        }
        used_gt[c.gt_index] = true;
        used_pred[c.pred_index] = true;
        pairs.push(c);
    }
    pairs.sort_by_key(|p| p.gt_index);
    pairs
}

/// Root-relative position of joint `j`, or `None` when invalid.
fn relative_joint(pose: &Pose3D, root: [f64; 3], j: usize) -> Option<[f64; 3]> {
    if !pose.valid[j] {
        return None;
    }
    let p = pose.joints[j];
    Some([p[0] - root[0], p[1] - root[1], p[2] - root[2]])
}

/// Percentage of visible ground-truth joints whose root-relative prediction
/// lands within `threshold`. Vacuously 100 when nothing is visible.
pub fn pck_rel(
    gt: &[Pose3D],
    pred: &[Pose3D],
    pairs: &[MatchedPair],
    mid_hip: usize,
    threshold: f64,
) -> f64 {
    let mut visible = 0usize;
    let mut correct = 0usize;
    let mut matched_pred: Vec<Option<usize>> = vec![None; gt.len()];
    for pair in pairs {
        matched_pred[pair.gt_index] = Some(pair.pred_index);
    }
    for (g, gt_pose) in gt.iter().enumerate() {
        let gt_root = person_root(gt_pose, mid_hip);
        let pred_info = matched_pred[g].map(|p| (&pred[p], person_root(&pred[p], mid_hip)));
        for j in 0..gt_pose.joint_count() {
            if !gt_pose.valid[j] {
                continue;
            }
            visible += 1;
            let (Some(gt_root), Some((pred_pose, Some(pred_root)))) = (gt_root, &pred_info) else {
                continue;
            };
            let (Some(gt_rel), Some(pred_rel)) = (
                relative_joint(gt_pose, gt_root, j),
                relative_joint(pred_pose, *pred_root, j),
            ) else {
                continue;
            };
            if dist3(gt_rel, pred_rel) <= threshold {
                correct += 1;
            }
        }
    }
    if visible == 0 {
        return 100.0;
    }
    100.0 * correct as f64 / visible as f64
}

/// Normalized area under PCK(threshold) for thresholds `0..=150` step 5,
/// trapezoidal rule, scaled into `[0, 1]`.
pub fn auc_pck(gt: &[Pose3D], pred: &[Pose3D], pairs: &[MatchedPair], mid_hip: usize) -> f64 {
    let steps = (AUC_MAX_THRESHOLD / AUC_STEP).round() as usize;
    let mut area = 0.0f64;
    let mut prev = pck_rel(gt, pred, pairs, mid_hip, 0.0);
    for s in 1..=steps {
        let t = s as f64 * AUC_STEP;
        let cur = pck_rel(gt, pred, pairs, mid_hip, t);
        area += 0.5 * (prev + cur) * AUC_STEP;
        prev = cur;
    }
    area / (AUC_MAX_THRESHOLD * 100.0)
}

/// Mean root-aligned error over matched pairs, pooling all jointly valid,
/// visible joints. `None` when nothing can be measured.
pub fn mpjpe_root_aligned(
    gt: &[Pose3D],
    pred: &[Pose3D],
    pairs: &[MatchedPair],
    mid_hip: usize,
) -> Option<f64> {
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for pair in pairs {
        let gt_pose = &gt[pair.gt_index];
        let pred_pose = &pred[pair.pred_index];
        let (Some(gt_root), Some(pred_root)) =
            (person_root(gt_pose, mid_hip), person_root(pred_pose, mid_hip))
        else {
            continue;
        };
        for j in 0..gt_pose.joint_count() {
            let (Some(gt_rel), Some(pred_rel)) = (
                relative_joint(gt_pose, gt_root, j),
                relative_joint(pred_pose, pred_root, j),
            ) else {
                continue;
            };
            acc += dist3(gt_rel, pred_rel);
            count += 1;
        }
    }
    if count == 0 {
        None
    } else {
        Some(acc / count as f64)
    }
}

/// Mean joint error of one pair after the best similarity alignment of the
/// prediction onto the ground truth, over jointly valid joints. `None` when
/// fewer than three joints are shared or the configuration is degenerate.
pub fn pa_mpjpe_pair(pred: &Pose3D, gt: &Pose3D) -> Option<f64> {
    let mut source = Vec::new();
    let mut target = Vec::new();
    for j in 0..gt.joint_count().min(pred.joint_count()) {
        if gt.valid[j] && pred.valid[j] {
            source.push(pred.joints[j]);
            target.push(gt.joints[j]);
        }
    }
    let transform = similarity_align(&source, &target).ok()?;
    let mut acc = 0.0f64;
    for (s, t) in source.iter().zip(&target) {
        acc += dist3(transform.apply(*s), *t);
    }
    Some(acc / source.len() as f64)
}

/// Pooled aligned error over matched pairs; pairs that cannot be aligned are
/// skipped. `None` when no pair aligns.
pub fn pa_mpjpe(gt: &[Pose3D], pred: &[Pose3D], pairs: &[MatchedPair]) -> Option<f64> {
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for pair in pairs {
        if let Some(err) = pa_mpjpe_pair(&pred[pair.pred_index], &gt[pair.gt_index]) {
            acc += err;
            count += 1;
        }
    }
    if count == 0 {
        None
    } else {
        Some(acc / count as f64)
    }
}

/// Crowd index of one scene: per person, the fraction `K'/K` where `K'`
/// counts other persons' visible joints falling inside this person's 2-D
/// joint bounding box (inclusive), clamped just below one; averaged over
/// persons with at least one visible joint.
pub fn crowd_index(gt: &[Pose3D]) -> f64 {
    let mut total = 0.0f64;
    let mut persons = 0usize;
    for (p, pose) in gt.iter().enumerate() {
        let k = pose.joint_count();
        let mut bbox: Option<[f64; 4]> = None; // min_x, min_y, max_x, max_y
        for j in 0..k {
            if !pose.valid[j] {
                continue;
            }
            let [x, y, _] = pose.joints[j];
            bbox = Some(match bbox {
                None => [x, y, x, y],
                Some(b) => [b[0].min(x), b[1].min(y), b[2].max(x), b[3].max(y)],
            });
        }
        let Some(b) = bbox else { continue };
        persons += 1;
        let mut inside = 0usize;
        for (q, other) in gt.iter().enumerate() {
            if q == p {
                continue;
            }
            for j in 0..other.joint_count() {
                if !other.valid[j] {
                    continue;
                }
                let [x, y, _] = other.joints[j];
                if x >= b[0] && x <= b[2] && y >= b[1] && y <= b[3] {
                    inside += 1;
                }
            }
        }
        total += (inside as f64 / k as f64).min(CROWD_INDEX_CEILING);
    }
    if persons == 0 {
        return 0.0;
    }
    total / persons as f64
}

/// Pinhole back-projection of a pixel with depth into camera coordinates.
pub fn back_project(x: f64, y: f64, z: f64, fx: f64, fy: f64, cx: f64, cy: f64) -> [f64; 3] {
    [(x - cx) * z / fx, (y - cy) * z / fy, z]
}

/// Full evaluation of one scene.
pub fn evaluate(gt: &[Pose3D], pred: &[Pose3D], mid_hip: usize, threshold: f64) -> MetricReport {
    let pairs = match_poses(gt, pred, mid_hip);
    MetricReport {
        pck_rel: pck_rel(gt, pred, &pairs, mid_hip, threshold),
        auc_pck: auc_pck(gt, pred, &pairs, mid_hip),
        mpjpe: mpjpe_root_aligned(gt, pred, &pairs, mid_hip),
        pa_mpjpe: pa_mpjpe(gt, pred, &pairs),
        crowd_index: crowd_index(gt),
        matched: pairs.len(),
        gt_count: gt.len(),
        pred_count: pred.len(),
    }
}
