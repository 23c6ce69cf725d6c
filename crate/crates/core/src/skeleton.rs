//! Skeleton topology, bone-length priors, and the text config format.
//!
//! The bundled skeleton has fifteen joints. Its bone-length prior is the
//! pairwise distance matrix of a fixed canonical pose, which also serves as
//! the layout template for the synthetic scene generator. Units are desk
//! scale: one pixel corresponds to one millimetre at unit depth, so priors
//! and decoded coordinates feed the metrics directly.

use std::fmt;
use std::path::Path;

/// Joint order of the bundled skeleton: `(name, x, y, z)` of the canonical
/// pose, relative to the mid-hip joint. The canonical pose keeps joints well
/// separated in the image plane while bone lengths live mostly in depth, and
/// depth grows monotonically along every kinematic chain: extremities end up
/// much farther from the body center than any single bone is long.
pub const CANONICAL_POSE: [(&str, f64, f64, f64); 15] = [
    ("head_top", 0.0, -48.0, 330.0),
    ("neck", 6.0, -36.0, 200.0),
    ("right_shoulder", -12.0, -32.0, 280.0),
    ("right_elbow", -22.0, -18.0, 480.0),
    ("right_wrist", -30.0, -2.0, 700.0),
    ("left_shoulder", 20.0, -30.0, 285.0),
    ("left_elbow", 30.0, -16.0, 490.0),
    ("left_wrist", 36.0, 0.0, 715.0),
    ("right_hip", -8.0, 0.0, -80.0),
    ("right_knee", -14.0, 20.0, -300.0),
    ("right_ankle", -20.0, 42.0, -545.0),
    ("left_hip", 8.0, 0.0, 80.0),
    ("left_knee", 14.0, 22.0, 305.0),
    ("left_ankle", 20.0, 44.0, 555.0),
    ("mid_hip", 0.0, 0.0, 0.0),
];

/// Parent of each canonical joint; the mid-hip joint is the tree root.
pub const CANONICAL_PARENTS: [Option<usize>; 15] = [
    Some(1),  // head_top <- neck
    Some(14), // neck <- mid_hip
    Some(1),  // right_shoulder <- neck
    Some(2),  // right_elbow <- right_shoulder
    Some(3),  // right_wrist <- right_elbow
    Some(1),  // left_shoulder <- neck
    Some(5),  // left_elbow <- left_shoulder
    Some(6),  // left_wrist <- left_elbow
    Some(14), // right_hip <- mid_hip
    Some(8),  // right_knee <- right_hip
    Some(9),  // right_ankle <- right_knee
    Some(14), // left_hip <- mid_hip
    Some(11), // left_knee <- left_hip
    Some(12), // left_ankle <- left_knee
    None,     // mid_hip (root)
];

const HEAD_TOP: usize = 0;
const MID_HIP: usize = 14;
const LEFT_HIP: usize = 11;
const RIGHT_HIP: usize = 8;

/// Errors from skeleton construction or config parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum SkeletonError {
    Invalid(String),
    Parse { line: usize, message: String },
    Io(String),
}

impl fmt::Display for SkeletonError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkeletonError::Invalid(msg) => write!(f, "invalid skeleton: {msg}"),
            SkeletonError::Parse { line, message } => {
                write!(f, "skeleton config line {line}: {message}")
            }
            SkeletonError::Io(msg) => write!(f, "skeleton config io: {msg}"),
        }
    }
}

impl std::error::Error for SkeletonError {}

/// Joint list, tree topology, and bone-length prior of one skeleton family.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonConfig {
    joint_names: Vec<String>,
    head_top: usize,
    mid_hip: usize,
    /// `(left, right)` hip joints whose midpoint defines the body center.
    center_hips: (usize, usize),
    /// Parent per joint; `None` marks the tree root.
    tree_parents: Vec<Option<usize>>,
    /// `K x K` symmetric matrix of prior inter-joint distances (zero diagonal).
    bone_prior: Vec<f32>,
}

impl SkeletonConfig {
    pub fn new(
        joint_names: Vec<String>,
        head_top: usize,
        mid_hip: usize,
        center_hips: (usize, usize),
        tree_parents: Vec<Option<usize>>,
        bone_prior: Vec<f32>,
    ) -> Result<Self, SkeletonError> {
        let k = joint_names.len();
        if k < 2 {
            return Err(SkeletonError::Invalid(format!("need at least 2 joints, got {k}")));
        }
        for (label, idx) in [
            ("head_top", head_top),
            ("mid_hip", mid_hip),
            ("left center hip", center_hips.0),
            ("right center hip", center_hips.1),
        ] {
            if idx >= k {
                return Err(SkeletonError::Invalid(format!("{label} index {idx} out of range")));
            }
        }
        if center_hips.0 == center_hips.1 {
            return Err(SkeletonError::Invalid("center hips must be distinct joints".into()));
        }
        if tree_parents.len() != k {
            return Err(SkeletonError::Invalid(format!(
                "parents list has {} entries for {k} joints",
                tree_parents.len()
            )));
        }
        let roots = tree_parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(SkeletonError::Invalid(format!("need exactly one root, found {roots}")));
        }
        for (j, parent) in tree_parents.iter().enumerate() {
            if let Some(p) = parent {
                if *p >= k {
                    return Err(SkeletonError::Invalid(format!(
                        "joint {j} has out-of-range parent {p}"
                    )));
                }
            }
            // Walk to the root; more than K steps means a cycle.
            let mut cur = j;
            for step in 0..=k {
                match tree_parents[cur] {
                    None => break,
                    Some(p) => {
                        if step == k {
                            return Err(SkeletonError::Invalid(format!(
                                "parent chain of joint {j} never reaches the root"
                            )));
                        }
                        cur = p;
                    }
                }
            }
        }
        if bone_prior.len() != k * k {
            return Err(SkeletonError::Invalid(format!(
                "bone prior has {} entries for {k} joints",
                bone_prior.len()
            )));
        }
        let mut prior = bone_prior;
        for i in 0..k {
            for j in 0..k {
                let (a, b) = (prior[i * k + j], prior[j * k + i]);
                if !a.is_finite() || a < 0.0 {
                    return Err(SkeletonError::Invalid(format!(
                        "bone prior ({i}, {j}) = {a} must be finite and non-negative"
                    )));
                }
                if (a - b).abs() > 1e-3 {
                    return Err(SkeletonError::Invalid(format!(
                        "bone prior not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
            if prior[i * k + i].abs() > 1e-6 {
                return Err(SkeletonError::Invalid(format!(
                    "bone prior diagonal at {i} must be zero, got {}",
                    prior[i * k + i]
                )));
            }
            prior[i * k + i] = 0.0;
        }
        // Symmetrize exactly so sigma(i, j) == sigma(j, i) to the bit.
        for i in 0..k {
            for j in (i + 1)..k {
                let v = prior[i * k + j];
                prior[j * k + i] = v;
            }
        }
        let cfg = SkeletonConfig {
            joint_names,
            head_top,
            mid_hip,
            center_hips,
            tree_parents,
            bone_prior: prior,
        };
        if cfg.sigma(head_top, mid_hip) <= 0.0 {
            return Err(SkeletonError::Invalid(
                "head-top to mid-hip prior distance must be positive".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn head_top(&self) -> usize {
        self.head_top
    }

    pub fn mid_hip(&self) -> usize {
        self.mid_hip
    }

    pub fn center_hips(&self) -> (usize, usize) {
        self.center_hips
    }

    pub fn tree_parents(&self) -> &[Option<usize>] {
        &self.tree_parents
    }

    pub fn tree_root(&self) -> usize {
        self.tree_parents.iter().position(|p| p.is_none()).expect("validated: one root")
    }

    /// Prior distance between two joints.
    pub fn sigma(&self, i: usize, j: usize) -> f64 {
        self.bone_prior[i * self.joint_count() + j] as f64
    }

    /// Ratio `sigma(i, j) / sigma(head_top, mid_hip)` used by the bone
    /// confidence term.
    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        self.sigma(i, j) / self.sigma(self.head_top, self.mid_hip)
    }

    /// Serializes the config in the text format read by [`SkeletonConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("joints {}\n", self.joint_count()));
        out.push_str(&format!("names {}\n", self.joint_names.join(" ")));
        out.push_str(&format!("head_top {}\n", self.head_top));
        out.push_str(&format!("mid_hip {}\n", self.mid_hip));
        out.push_str(&format!("center_hips {} {}\n", self.center_hips.0, self.center_hips.1));
        let parents: Vec<String> = self
            .tree_parents
            .iter()
            .map(|p| match p {
                Some(v) => v.to_string(),
                None => "-1".to_string(),
            })
            .collect();
        out.push_str(&format!("parents {}\n", parents.join(" ")));
        out.push_str("bone_prior\n");
        let k = self.joint_count();
        for i in 0..k {
            let row: Vec<String> =
                (0..k).map(|j| format!("{}", self.bone_prior[i * k + j])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the text format produced by [`SkeletonConfig::to_text`]. Blank
    /// lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, SkeletonError> {
        let mut joints: Option<usize> = None;
        let mut names: Option<Vec<String>> = None;
        let mut head_top: Option<usize> = None;
        let mut mid_hip: Option<usize> = None;
        let mut center_hips: Option<(usize, usize)> = None;
        let mut parents: Option<Vec<Option<usize>>> = None;
        let mut prior_rows: Vec<Vec<f32>> = Vec::new();
        let mut in_prior = false;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if in_prior {
                let row: Result<Vec<f32>, _> =
                    line.split_whitespace().map(|t| t.parse::<f32>()).collect();
                let row = row.map_err(|e| SkeletonError::Parse {
                    line: lineno,
                    message: format!("bad prior value: {e}"),
                })?;
                prior_rows.push(row);
                continue;
            }
            let (key, rest) = match line.split_once(char::is_whitespace) {
                Some((k, r)) => (k, r.trim()),
                None => (line, ""),
            };
            let parse_idx = |s: &str| -> Result<usize, SkeletonError> {
                s.parse::<usize>().map_err(|e| SkeletonError::Parse {
                    line: lineno,
                    message: format!("bad index {s:?}: {e}"),
                })
            };
            match key {
                "joints" => joints = Some(parse_idx(rest)?),
                "names" => {
                    names = Some(rest.split_whitespace().map(String::from).collect());
                }
                "head_top" => head_top = Some(parse_idx(rest)?),
                "mid_hip" => mid_hip = Some(parse_idx(rest)?),
                "center_hips" => {
                    let mut it = rest.split_whitespace();
                    let l = it.next().ok_or(SkeletonError::Parse {
                        line: lineno,
                        message: "center_hips needs two indices".into(),
                    })?;
                    let r = it.next().ok_or(SkeletonError::Parse {
                        line: lineno,
                        message: "center_hips needs two indices".into(),
                    })?;
                    center_hips = Some((parse_idx(l)?, parse_idx(r)?));
                }
                "parents" => {
                    let list: Result<Vec<Option<usize>>, SkeletonError> = rest
                        .split_whitespace()
                        .map(|t| {
                            if t == "-1" {
                                Ok(None)
                            } else {
                                t.parse::<usize>().map(Some).map_err(|e| SkeletonError::Parse {
                                    line: lineno,
                                    message: format!("bad parent {t:?}: {e}"),
                                })
                            }
                        })
                        .collect();
                    parents = Some(list?);
                }
                "bone_prior" => in_prior = true,
                other => {
                    return Err(SkeletonError::Parse {
                        line: lineno,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }

        let k = joints.ok_or(SkeletonError::Parse { line: 0, message: "missing joints".into() })?;
        let names =
            names.ok_or(SkeletonError::Parse { line: 0, message: "missing names".into() })?;
        if names.len() != k {
            return Err(SkeletonError::Parse {
                line: 0,
                message: format!("joints says {k} but names lists {}", names.len()),
            });
        }
        if prior_rows.len() != k || prior_rows.iter().any(|r| r.len() != k) {
            return Err(SkeletonError::Parse {
                line: 0,
                message: format!("bone_prior must be a {k}x{k} block"),
            });
        }
        SkeletonConfig::new(
            names,
            head_top.ok_or(SkeletonError::Parse { line: 0, message: "missing head_top".into() })?,
            mid_hip.ok_or(SkeletonError::Parse { line: 0, message: "missing mid_hip".into() })?,
            center_hips
                .ok_or(SkeletonError::Parse { line: 0, message: "missing center_hips".into() })?,
            parents.ok_or(SkeletonError::Parse { line: 0, message: "missing parents".into() })?,
            prior_rows.into_iter().flatten().collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self, SkeletonError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SkeletonError::Io(format!("{path:?}: {e}")))?;
        SkeletonConfig::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), SkeletonError> {
        std::fs::write(path, self.to_text()).map_err(|e| SkeletonError::Io(format!("{path:?}: {e}")))
    }

    /// True when the topology matches the bundled fifteen-joint skeleton, in
    /// which case the canonical pose can be used as a layout template.
    pub fn matches_canonical(&self) -> bool {
        self.joint_count() == CANONICAL_POSE.len()
            && self.tree_parents == CANONICAL_PARENTS
            && self.head_top == HEAD_TOP
            && self.mid_hip == MID_HIP
            && self.center_hips == (LEFT_HIP, RIGHT_HIP)
    }
}

impl Default for SkeletonConfig {
    /// The bundled fifteen-joint skeleton with priors derived from the
    /// canonical pose.
    fn default() -> Self {
        let k = CANONICAL_POSE.len();
        let names: Vec<String> = CANONICAL_POSE.iter().map(|(n, _, _, _)| n.to_string()).collect();
        let mut prior = vec![0.0f32; k * k];
        for i in 0..k {
            for j in 0..k {
                let (_, xi, yi, zi) = CANONICAL_POSE[i];
                let (_, xj, yj, zj) = CANONICAL_POSE[j];
                let d = ((xi - xj).powi(2) + (yi - yj).powi(2) + (zi - zj).powi(2)).sqrt();
                prior[i * k + j] = d as f32;
            }
        }
        // Exact symmetry regardless of float evaluation order.
        for i in 0..k {
            for j in (i + 1)..k {
                let v = prior[i * k + j];
                prior[j * k + i] = v;
            }
        }
        SkeletonConfig::new(
            names,
            HEAD_TOP,
            MID_HIP,
            (LEFT_HIP, RIGHT_HIP),
            CANONICAL_PARENTS.to_vec(),
            prior,
        )
        .expect("bundled skeleton is valid")
    }
}
