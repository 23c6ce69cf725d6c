//! Synthetic scene harness: pose generation, map rendering, supervision
//! targets, and the corruption model used for robustness studies.
//!
//! Scenes are laid out in pixel units with depth in the same unit (one pixel
//! corresponds to one depth unit), so decoded poses feed the metrics
//! directly. For the bundled skeleton, persons are posed from the canonical
//! template: 2-D offsets get a small jitter, bone lengths are drawn within
//! ten percent of the skeleton's priors, and the depth component of each
//! bone is solved so the sampled length is met exactly. The two hips are
//! placed antipodally around the root, which makes the hip midpoint (the
//! body center) coincide with the mid-hip joint. Other skeletons fall back
//! to a golden-angle layout walk with the same separation constraints.

use crate::detect::DepthEncoding;
use crate::loss::LossTargets;
use crate::maps::DataMapSet;
use crate::pose::Pose3D;
use crate::skeleton::{SkeletonConfig, CANONICAL_POSE};
use crate::tensor::{MapError, TensorMap};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::path::Path;

/// Joints stay this far from the image border.
pub const BORDER_MARGIN: f64 = 4.0;
/// Per-joint 2-D jitter applied to the template layout.
const TEMPLATE_JITTER: f64 = 1.2;
/// Minimum 2-D distance between two joints of the same person.
const MIN_SAME_PERSON_DIST: f64 = 5.0;
/// Minimum 2-D distance between any two joints of different persons.
const MIN_CROSS_PERSON_DIST: f64 = 2.5;
/// Minimum 2-D distance between same-category joints of different persons.
const MIN_SAME_CATEGORY_DIST: f64 = 3.0;
/// Depth of a person's root is drawn from this range.
const ROOT_DEPTH_RANGE: (f64, f64) = (1500.0, 4500.0);
/// Placement attempts per person before generation fails.
const PLACEMENT_ATTEMPTS: usize = 400;
/// Golden angle for the fallback layout walk.
const GOLDEN_ANGLE: f64 = 2.399963;

/// Errors from scene generation, rendering, and corruption.
#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    Invalid(String),
    /// No placement satisfying the separation constraints was found.
    PlacementFailed { person: usize, attempts: usize },
    Map(MapError),
    Parse { line: usize, message: String },
    Io(String),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::Invalid(msg) => write!(f, "invalid scene request: {msg}"),
            SynthError::PlacementFailed { person, attempts } => {
                write!(f, "could not place person {person} after {attempts} attempts")
            }
            SynthError::Map(e) => write!(f, "scene map: {e}"),
            SynthError::Parse { line, message } => write!(f, "scene file line {line}: {message}"),
            SynthError::Io(msg) => write!(f, "scene io: {msg}"),
        }
    }
}

impl std::error::Error for SynthError {}

impl From<MapError> for SynthError {
    fn from(e: MapError) -> Self {
        SynthError::Map(e)
    }
}

/// Ground-truth joints of one person: `[x, y, z]` per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePerson {
    pub joints: Vec<[f64; 3]>,
}

impl ScenePerson {
    /// The body center: 2-D midpoint of the two center hips.
    pub fn center_2d(&self, skeleton: &SkeletonConfig) -> [f64; 2] {
        let (l, r) = skeleton.center_hips();
        [
            0.5 * (self.joints[l][0] + self.joints[r][0]),
            0.5 * (self.joints[l][1] + self.joints[r][1]),
        ]
    }
}

/// A generated scene: image size plus per-person ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub persons: Vec<ScenePerson>,
}

impl Scene {
    /// Ground truth as poses with every joint visible.
    pub fn gt_poses(&self) -> Vec<Pose3D> {
        self.persons
            .iter()
            .map(|p| Pose3D { joints: p.joints.clone(), valid: vec![true; p.joints.len()] })
            .collect()
    }
}

/// Scene generation request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub person_count: usize,
    /// 0 places persons freely; towards 1 their roots are squeezed into a
    /// small disc around the first person.
    pub crowding: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams { width: 128, height: 128, person_count: 2, crowding: 0.0 }
    }
}

fn dist2d(a: &[f64], b: &[f64]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    (dx * dx + dy * dy).sqrt()
}

/// Parent-to-child edges in breadth-first order from the root.
fn bfs_edges(skeleton: &SkeletonConfig) -> Vec<(usize, usize)> {
    let parents = skeleton.tree_parents();
    let mut order = vec![skeleton.tree_root()];
    let mut edges = Vec::with_capacity(parents.len().saturating_sub(1));
    let mut i = 0;
    while i < order.len() {
        let p = order[i];
        i += 1;
        for (child, parent) in parents.iter().enumerate() {
            if *parent == Some(p) {
                edges.push((p, child));
                order.push(child);
            }
        }
    }
    edges
}

/// Lays out one person from the canonical template around `root`. The depth
/// of each bone is solved from a sampled length, so every tree bone lands
/// within the ten-percent jitter band of its prior exactly.
fn place_from_template(
    skeleton: &SkeletonConfig,
    root: [f64; 3],
    mirror: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<[f64; 3]> {
    let k = skeleton.joint_count();
    let root_joint = skeleton.tree_root();
    let (l_hip, r_hip) = skeleton.center_hips();
    let sign = |v: f64| if v >= 0.0 { 1.0 } else { -1.0 };
    let mx = if mirror { -1.0 } else { 1.0 };
    let mut joints = vec![[f64::NAN; 3]; k];
    joints[root_joint] = root;

    // Hips: antipodal around the root so the hip midpoint stays on it.
    let (_, lx, ly, lz) = CANONICAL_POSE[l_hip];
    let u = [
        mx * lx + rng.random_range(-TEMPLATE_JITTER..TEMPLATE_JITTER),
        ly + rng.random_range(-TEMPLATE_JITTER..TEMPLATE_JITTER),
    ];
    let hip_len = skeleton.sigma(root_joint, l_hip) * rng.random_range(0.9..1.1);
    let uz = sign(lz) * (hip_len * hip_len - u[0] * u[0] - u[1] * u[1]).max(0.0).sqrt();
    joints[l_hip] = [root[0] + u[0], root[1] + u[1], root[2] + uz];
    joints[r_hip] = [root[0] - u[0], root[1] - u[1], root[2] - uz];

    for (parent, child) in bfs_edges(skeleton) {
        if child == l_hip || child == r_hip {
            continue;
        }
        let (_, cx, cy, cz) = CANONICAL_POSE[child];
        let (_, px, py, pz) = CANONICAL_POSE[parent];
        let step = [
            mx * (cx - px) + rng.random_range(-TEMPLATE_JITTER..TEMPLATE_JITTER),
            (cy - py) + rng.random_range(-TEMPLATE_JITTER..TEMPLATE_JITTER),
        ];
        let length = skeleton.sigma(parent, child) * rng.random_range(0.9..1.1);
        let planar = step[0] * step[0] + step[1] * step[1];
        let dz = sign(cz - pz) * (length * length - planar).max(0.0).sqrt();
        let base = joints[parent];
        joints[child] = [base[0] + step[0], base[1] + step[1], base[2] + dz];
    }
    joints
}

/// Fallback layout for arbitrary trees: edges fan out at golden-angle
/// increments with varied 2-D steps, and depth again absorbs the sampled
/// bone length.
fn place_by_walk(
    skeleton: &SkeletonConfig,
    root: [f64; 3],
    rng: &mut ChaCha8Rng,
) -> Vec<[f64; 3]> {
    let k = skeleton.joint_count();
    let mut joints = vec![[f64::NAN; 3]; k];
    joints[skeleton.tree_root()] = root;
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    for (index, (parent, child)) in bfs_edges(skeleton).iter().enumerate() {
        let azimuth =
            phase + index as f64 * GOLDEN_ANGLE + rng.random_range(-0.35..0.35);
        let step = 9.0 + ((index * 3) % 6) as f64 + rng.random_range(-1.0..1.0);
        let length = skeleton.sigma(*parent, *child).max(1.0) * rng.random_range(0.9..1.1);
        let dz2 = length * length - step * step;
        let dz = if rng.random::<bool>() { 1.0 } else { -1.0 } * dz2.max(0.0).sqrt();
        let base = joints[*parent];
        joints[*child] =
            [base[0] + step * azimuth.cos(), base[1] + step * azimuth.sin(), base[2] + dz];
    }
    joints
}

/// Template extent (max |dx|, -dy, +dy) plus accumulated jitter headroom,
/// used to keep the whole template inside the border margin.
fn template_headroom(skeleton: &SkeletonConfig) -> (f64, f64, f64) {
    if skeleton.matches_canonical() {
        let drift = 4.0 * TEMPLATE_JITTER;
        let mut max_x = 0.0f64;
        let mut min_y = 0.0f64;
        let mut max_y = 0.0f64;
        for (_, x, y, _) in CANONICAL_POSE {
            max_x = max_x.max(x.abs());
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
        (max_x + drift, -min_y + drift, max_y + drift)
    } else {
        // The walk uses steps of at most ~15 px over at most K - 1 levels;
        // a loose bound keeps placement feasible on reasonable grids.
        let reach = 16.0 * (skeleton.joint_count() as f64).sqrt();
        (reach, reach, reach)
    }
}

fn person_ok(
    joints: &[[f64; 3]],
    placed: &[ScenePerson],
    width: usize,
    height: usize,
) -> bool {
    let k = joints.len();
    for j in joints {
        if j[0] < BORDER_MARGIN
            || j[1] < BORDER_MARGIN
            || j[0] > width as f64 - 1.0 - BORDER_MARGIN
            || j[1] > height as f64 - 1.0 - BORDER_MARGIN
            || j[2] <= 0.0
        {
            return false;
        }
    }
    for a in 0..k {
        for b in (a + 1)..k {
            if dist2d(&joints[a], &joints[b]) < MIN_SAME_PERSON_DIST {
                return false;
            }
        }
    }
    for other in placed {
        for a in 0..k {
            for (b, other_joint) in other.joints.iter().enumerate() {
                let d = dist2d(&joints[a], other_joint);
                let min = if a == b { MIN_SAME_CATEGORY_DIST } else { MIN_CROSS_PERSON_DIST };
                if d < min {
                    return false;
                }
            }
        }
    }
    true
}

/// Generates a scene deterministically from the seed.
pub fn generate_scene(
    skeleton: &SkeletonConfig,
    params: &SceneParams,
    seed: u64,
) -> Result<Scene, SynthError> {
    if params.person_count == 0 {
        return Err(SynthError::Invalid("person_count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&params.crowding) {
        return Err(SynthError::Invalid(format!(
            "crowding must lie in [0, 1], got {}",
            params.crowding
        )));
    }
    let (head_x, head_y_up, head_y_down) = template_headroom(skeleton);
    let x_lo = BORDER_MARGIN + head_x;
    let x_hi = params.width as f64 - 1.0 - BORDER_MARGIN - head_x;
    let y_lo = BORDER_MARGIN + head_y_up;
    let y_hi = params.height as f64 - 1.0 - BORDER_MARGIN - head_y_down;
    if x_lo >= x_hi || y_lo >= y_hi {
        return Err(SynthError::Invalid(format!(
            "grid {}x{} too small for the skeleton layout",
            params.width, params.height
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut persons: Vec<ScenePerson> = Vec::with_capacity(params.person_count);
    let mut anchor: Option<[f64; 2]> = None;
    let crowd_radius = if params.crowding > 0.0 {
        Some(60.0 - 46.0 * params.crowding)
    } else {
        None
    };

    for person_index in 0..params.person_count {
        let mut placed = false;
        for _attempt in 0..PLACEMENT_ATTEMPTS {
            let root_2d = match (anchor, crowd_radius) {
                (Some(a), Some(r)) => {
                    // Rejection-sample the legal box intersected with the
                    // crowding disc around the first person.
                    let mut found = None;
                    for _ in 0..500 {
                        let x = rng.random_range(x_lo..x_hi);
                        let y = rng.random_range(y_lo..y_hi);
                        if (x - a[0]).hypot(y - a[1]) <= r {
                            found = Some([x, y]);
                            break;
                        }
                    }
                    match found {
                        Some(p) => p,
                        None => continue,
                    }
                }
                _ => [rng.random_range(x_lo..x_hi), rng.random_range(y_lo..y_hi)],
            };
            let mirror = rng.random::<bool>();
            let z0 = rng.random_range(ROOT_DEPTH_RANGE.0..ROOT_DEPTH_RANGE.1);
            let root = [root_2d[0], root_2d[1], z0];
            let joints = if skeleton.matches_canonical() {
                place_from_template(skeleton, root, mirror, &mut rng)
            } else {
                place_by_walk(skeleton, root, &mut rng)
            };
            if person_ok(&joints, &persons, params.width, params.height) {
                if anchor.is_none() {
                    anchor = Some(root_2d);
                }
                persons.push(ScenePerson { joints });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SynthError::PlacementFailed {
                person: person_index,
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
    }
    Ok(Scene { width: params.width, height: params.height, persons })
}

/// Rendering configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    /// Gaussian width of heat blobs.
    pub sigma: f64,
    /// Heat is written only within this radius of the blob center, so far
    /// pixels are exactly zero.
    pub truncation_radius: f64,
    /// Pixels within this distance of a joint carry its regression data.
    pub offset_radius: f64,
    pub depth_encoding: DepthEncoding,
    /// Adds a noise feature map with this many channels.
    pub feature_channels: Option<usize>,
    /// Seed of the feature noise.
    pub feature_seed: u64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            sigma: 2.0,
            truncation_radius: 6.0,
            offset_radius: 3.0,
            depth_encoding: DepthEncoding::DeltaInverse,
            feature_channels: None,
            feature_seed: 0,
        }
    }
}

/// Per-pixel owner: the `(person, joint)` whose joint lies closest, among
/// those within `radius`. Ties go to the lexicographically smallest pair.
fn ownership(
    scene: &Scene,
    radius: f64,
) -> Vec<Option<(usize, usize)>> {
    let (w, h) = (scene.width, scene.height);
    let mut owner: Vec<Option<(usize, usize)>> = vec![None; w * h];
    let mut best = vec![f64::INFINITY; w * h];
    for (p, person) in scene.persons.iter().enumerate() {
        for (j, joint) in person.joints.iter().enumerate() {
            let x_min = ((joint[0] - radius).floor() as i64).max(0);
            let x_max = ((joint[0] + radius).ceil() as i64).min(w as i64 - 1);
            let y_min = ((joint[1] - radius).floor() as i64).max(0);
            let y_max = ((joint[1] + radius).ceil() as i64).min(h as i64 - 1);
            for y in y_min..=y_max {
                for x in x_min..=x_max {
                    let d = (x as f64 - joint[0]).hypot(y as f64 - joint[1]);
                    if d > radius {
                        continue;
                    }
                    let idx = y as usize * w + x as usize;
                    // Strictly closer wins; scan order settles exact ties.
                    if d < best[idx] {
                        best[idx] = d;
                        owner[idx] = Some((p, j));
                    }
                }
            }
        }
    }
    owner
}

/// Stamps a truncated unit-peak Gaussian centered on the rounded pixel of
/// `pos`, max-combining with existing values.
fn stamp_gaussian(map: &mut TensorMap, channel: usize, pos: [f64; 2], params: &RenderParams) {
    let (cx, cy) = (pos[0].round() as i64, pos[1].round() as i64);
    let r = params.truncation_radius.ceil() as i64;
    let r2 = params.truncation_radius * params.truncation_radius;
    let denom = 2.0 * params.sigma * params.sigma;
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            if d2 > r2 {
                continue;
            }
            let (x, y) = (cx + dx, cy + dy);
            if !map.contains(x, y) {
                continue;
            }
            let v = (-d2 / denom).exp() as f32;
            let (xu, yu) = (x as usize, y as usize);
            if v > map.get(channel, yu, xu) {
                map.set(channel, yu, xu, v);
            }
        }
    }
}

/// Renders the full map stack of a scene.
pub fn render_maps(
    scene: &Scene,
    skeleton: &SkeletonConfig,
    params: &RenderParams,
) -> Result<DataMapSet, SynthError> {
    let k = skeleton.joint_count();
    for person in &scene.persons {
        if person.joints.len() != k {
            return Err(SynthError::Invalid(format!(
                "scene person has {} joints, skeleton expects {k}",
                person.joints.len()
            )));
        }
    }
    let (w, h) = (scene.width, scene.height);
    let mut maps = DataMapSet::zeros(k, h, w, None);

    for person in &scene.persons {
        for (j, joint) in person.joints.iter().enumerate() {
            stamp_gaussian(&mut maps.heat, j, [joint[0], joint[1]], params);
        }
        stamp_gaussian(&mut maps.heat, k, person.center_2d(skeleton), params);
    }

    let owner = ownership(scene, params.offset_radius);
    for y in 0..h {
        for x in 0..w {
            let Some((p, i)) = owner[y * w + x] else { continue };
            let person = &scene.persons[p];
            let center = person.center_2d(skeleton);
            let z_owner = person.joints[i][2];
            maps.scale.set(0, y, x, (center[0] - x as f64) as f32);
            maps.scale.set(1, y, x, (center[1] - y as f64) as f32);
            for (j, target) in person.joints.iter().enumerate() {
                let encoded = params
                    .depth_encoding
                    .encode(target[2])
                    .map_err(SynthError::from)?;
                maps.depth.set(j, y, x, encoded as f32);
            }
            for (j, target) in person.joints.iter().enumerate() {
                maps.offset3d.set(3 * j, y, x, (target[0] - x as f64) as f32);
                maps.offset3d.set(3 * j + 1, y, x, (target[1] - y as f64) as f32);
                maps.offset3d.set(3 * j + 2, y, x, (target[2] - z_owner) as f32);
            }
        }
    }

    if let Some(c) = params.feature_channels {
        let mut rng = ChaCha8Rng::seed_from_u64(params.feature_seed);
        let values: Vec<f32> = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        maps.feature = Some(TensorMap::new(c, h, w, values)?);
    }
    Ok(maps)
}

/// Builds supervision targets for a scene: the rendered heat, scale,
/// depth, and offset stacks (depth in the encoding `params` selects, so a
/// perfect prediction scores exactly zero) plus the shared active mask
/// (exactly the owned pixels).
pub fn loss_targets(
    scene: &Scene,
    skeleton: &SkeletonConfig,
    params: &RenderParams,
) -> Result<LossTargets, SynthError> {
    let raw = RenderParams { feature_channels: None, ..*params };
    let maps = render_maps(scene, skeleton, &raw)?;
    let owner = ownership(scene, params.offset_radius);
    let active: Vec<bool> = owner.iter().map(|o| o.is_some()).collect();
    Ok(LossTargets {
        heat: maps.heat,
        scale: maps.scale,
        depth_z: maps.depth,
        offset3d: maps.offset3d,
        active,
    })
}

/// Corruption request: each joint and each body center of every person is
/// independently suppressed with probability `occlusion_prob`, and stored
/// offsets optionally lose depth accuracy with range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptParams {
    pub occlusion_prob: f64,
    /// Forces every center suppressed regardless of the probability draws.
    pub suppress_centers: bool,
    pub seed: u64,
    /// Heat in the suppressed region is multiplied by this factor.
    pub suppression_factor: f32,
    /// Regression channels are zeroed within this radius of a suppressed
    /// joint (any person's data there is lost, which couples corruption
    /// across overlapping people).
    pub zero_radius: f64,
    /// Gaussian noise on the depth component of every stored offset, with
    /// standard deviation `|offset|^2 / depth_noise_divisor`: long-range
    /// offsets lose depth accuracy superlinearly, short hops stay reliable.
    /// Infinite divisor (the default) disables the noise.
    pub depth_noise_divisor: f64,
    /// Inter-person occlusion: a joint is also suppressed when any joint of
    /// a strictly nearer person (smaller depth) lies within this 2-D
    /// distance, so overlap in image space hides the farther body part.
    /// `0.0` (the default) disables the rule.
    pub proximity_radius: f64,
}

impl Default for CorruptParams {
    fn default() -> Self {
        CorruptParams {
            occlusion_prob: 0.0,
            suppress_centers: false,
            seed: 0,
            suppression_factor: 0.3,
            zero_radius: 3.0,
            depth_noise_divisor: f64::INFINITY,
            proximity_radius: 0.0,
        }
    }
}

/// What a corruption pass suppressed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorruptionLog {
    /// `(person, joint)` pairs whose heat peak and regression data are gone.
    pub joints: Vec<(usize, usize)>,
    /// Persons whose center heat peak is gone.
    pub centers: Vec<usize>,
}

/// Applies the corruption model in place:
///
/// * suppressed joint: its heat blob is scaled below the detection
///   threshold, and scale and offset channels are zeroed within
///   `zero_radius` of the joint — whoever owned those pixels, which couples
///   corruption across overlapping people. Data about the joint stored at
///   pixels elsewhere survives,
/// * suppressed center: the center-channel blob is scaled down, nothing
///   else — regression data survives, only the center peak disappears,
/// * inter-person occlusion (when `proximity_radius > 0`): joints of the
///   farther person are suppressed wherever a nearer person overlaps them
///   in image space, so occlusion grows with how crowded the scene is,
/// * range-dependent depth noise: the depth component of every surviving
///   offset is perturbed with standard deviation `|offset|^2 / divisor`, so
///   a decoder hopping along short bones accumulates far less depth error
///   than one reading extremities from the body center in a single
///   long-range hop.
///
/// Depth channels are never touched. The draw order (per person: all joints,
/// then the center; afterwards the noise stage) is fixed, and proximity
/// suppression consumes no draws, so a given seed suppresses the same
/// random set no matter which flags are set.
pub fn corrupt_maps(
    maps: &mut DataMapSet,
    scene: &Scene,
    skeleton: &SkeletonConfig,
    render: &RenderParams,
    params: &CorruptParams,
) -> Result<CorruptionLog, SynthError> {
    let k = skeleton.joint_count();
    if maps.joint_count() != k || maps.height() != scene.height || maps.width() != scene.width {
        return Err(SynthError::Invalid(
            "corruption needs maps rendered from the same scene and skeleton".into(),
        ));
    }
    if params.depth_noise_divisor.is_finite() && params.depth_noise_divisor <= 0.0 {
        return Err(SynthError::Invalid(format!(
            "depth_noise_divisor must be positive, got {}",
            params.depth_noise_divisor
        )));
    }
    if params.proximity_radius < 0.0 {
        return Err(SynthError::Invalid(format!(
            "proximity_radius must be non-negative, got {}",
            params.proximity_radius
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut log = CorruptionLog::default();
    for (p, _person) in scene.persons.iter().enumerate() {
        for j in 0..k {
            if rng.random_range(0.0..1.0) < params.occlusion_prob {
                log.joints.push((p, j));
            }
        }
        let center_draw = rng.random_range(0.0..1.0);
        if params.suppress_centers || center_draw < params.occlusion_prob {
            log.centers.push(p);
        }
    }
    if params.proximity_radius > 0.0 {
        for (p, person) in scene.persons.iter().enumerate() {
            for (j, joint) in person.joints.iter().enumerate() {
                let behind_someone = scene.persons.iter().enumerate().any(|(q, other)| {
                    q != p
                        && other.joints.iter().any(|o| {
                            o[2] < joint[2]
                                && (o[0] - joint[0]).hypot(o[1] - joint[1])
                                    <= params.proximity_radius
                        })
                });
                if behind_someone {
                    log.joints.push((p, j));
                }
            }
        }
        log.joints.sort_unstable();
        log.joints.dedup();
    }

    let (w, h) = (scene.width, scene.height);
    let scale_region = |map: &mut TensorMap, channel: usize, pos: [f64; 2], factor: f32| {
        let (cx, cy) = (pos[0].round() as i64, pos[1].round() as i64);
        let r = render.truncation_radius.ceil() as i64;
        let r2 = render.truncation_radius * render.truncation_radius;
        for dy in -r..=r {
            for dx in -r..=r {
                if (dx * dx + dy * dy) as f64 > r2 {
                    continue;
                }
                let (x, y) = (cx + dx, cy + dy);
                if !map.contains(x, y) {
                    continue;
                }
                let v = map.get(channel, y as usize, x as usize);
                map.set(channel, y as usize, x as usize, v * factor);
            }
        }
    };

    for &(p, j) in &log.joints {
        let joint = scene.persons[p].joints[j];
        scale_region(&mut maps.heat, j, [joint[0], joint[1]], params.suppression_factor);
        // Zero every regression channel near the suppressed joint.
        let zr = params.zero_radius;
        let x_min = ((joint[0] - zr).floor() as i64).max(0);
        let x_max = ((joint[0] + zr).ceil() as i64).min(w as i64 - 1);
        let y_min = ((joint[1] - zr).floor() as i64).max(0);
        let y_max = ((joint[1] + zr).ceil() as i64).min(h as i64 - 1);
        for y in y_min..=y_max {
            for x in x_min..=x_max {
                if (x as f64 - joint[0]).hypot(y as f64 - joint[1]) > zr {
                    continue;
                }
                let (xu, yu) = (x as usize, y as usize);
                maps.scale.set(0, yu, xu, 0.0);
                maps.scale.set(1, yu, xu, 0.0);
                for c in 0..3 * k {
                    maps.offset3d.set(c, yu, xu, 0.0);
                }
            }
        }
    }
    for &p in &log.centers {
        let center = scene.persons[p].center_2d(skeleton);
        scale_region(&mut maps.heat, k, center, params.suppression_factor);
    }

    // Range-dependent depth noise on the surviving offsets.
    if params.depth_noise_divisor.is_finite() {
        for y in 0..h {
            for x in 0..w {
                for j in 0..k {
                    // Draws are consumed for every slot so the stream does
                    // not depend on which offsets happen to be zero.
                    let u1: f64 = rng.random_range(0.0..1.0);
                    let u2: f64 = rng.random_range(0.0..1.0);
                    let ox = maps.offset3d.get(3 * j, y, x) as f64;
                    let oy = maps.offset3d.get(3 * j + 1, y, x) as f64;
                    let oz = maps.offset3d.get(3 * j + 2, y, x) as f64;
                    let norm = ox.hypot(oy).hypot(oz);
                    if norm == 0.0 {
                        continue;
                    }
                    let std = norm * norm / params.depth_noise_divisor;
                    let gauss =
                        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                    maps.offset3d.set(3 * j + 2, y, x, (oz + std * gauss) as f32);
                }
            }
        }
    }
    Ok(log)
}

/// Serializes a scene; floats use `{:?}`, which round-trips `f64` exactly.
pub fn scene_to_text(scene: &Scene) -> String {
    let mut out = String::new();
    out.push_str(&format!("width {}\n", scene.width));
    out.push_str(&format!("height {}\n", scene.height));
    for (p, person) in scene.persons.iter().enumerate() {
        out.push_str(&format!("person {p}\n"));
        for (j, joint) in person.joints.iter().enumerate() {
            out.push_str(&format!("joint {j} {:?} {:?} {:?}\n", joint[0], joint[1], joint[2]));
        }
    }
    out
}

/// Parses the format written by [`scene_to_text`].
pub fn scene_from_text(text: &str) -> Result<Scene, SynthError> {
    let mut width: Option<usize> = None;
    let mut height: Option<usize> = None;
    let mut persons: Vec<ScenePerson> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().expect("non-empty line");
        let mut next = |what: &str| {
            tokens
                .next()
                .ok_or(SynthError::Parse { line: lineno, message: format!("missing {what}") })
        };
        match key {
            "width" => {
                width = Some(next("width")?.parse().map_err(|e| SynthError::Parse {
                    line: lineno,
                    message: format!("bad width: {e}"),
                })?)
            }
            "height" => {
                height = Some(next("height")?.parse().map_err(|e| SynthError::Parse {
                    line: lineno,
                    message: format!("bad height: {e}"),
                })?)
            }
            "person" => {
                let idx: usize = next("person index")?.parse().map_err(|e| SynthError::Parse {
                    line: lineno,
                    message: format!("bad person index: {e}"),
                })?;
                if idx != persons.len() {
                    return Err(SynthError::Parse {
                        line: lineno,
                        message: format!("expected person {} next, got {idx}", persons.len()),
                    });
                }
                persons.push(ScenePerson { joints: Vec::new() });
            }
            "joint" => {
                let person = persons.last_mut().ok_or(SynthError::Parse {
                    line: lineno,
                    message: "joint before any person header".into(),
                })?;
                let idx: usize = next("joint index")?.parse().map_err(|e| SynthError::Parse {
                    line: lineno,
                    message: format!("bad joint index: {e}"),
                })?;
                if idx != person.joints.len() {
                    return Err(SynthError::Parse {
                        line: lineno,
                        message: format!("expected joint {} next, got {idx}", person.joints.len()),
                    });
                }
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    *c = next("coordinate")?.parse().map_err(|e| SynthError::Parse {
                        line: lineno,
                        message: format!("bad coordinate: {e}"),
                    })?;
                }
                person.joints.push(coords);
            }
            other => {
                return Err(SynthError::Parse {
                    line: lineno,
                    message: format!("unknown record {other:?}"),
                })
            }
        }
    }
    Ok(Scene {
        width: width.ok_or(SynthError::Parse { line: 0, message: "missing width".into() })?,
        height: height.ok_or(SynthError::Parse { line: 0, message: "missing height".into() })?,
        persons,
    })
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<(), SynthError> {
    std::fs::write(path, scene_to_text(scene)).map_err(|e| SynthError::Io(format!("{path:?}: {e}")))
}

pub fn load_scene(path: &Path) -> Result<Scene, SynthError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| SynthError::Io(format!("{path:?}: {e}")))?;
    scene_from_text(&text)
}
