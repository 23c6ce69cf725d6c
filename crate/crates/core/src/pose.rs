//! Decoded 3-D poses and their plain-text serialization.

use std::fmt;
use std::path::Path;

/// One person's decoded pose: a 3-D position per joint plus a validity flag.
/// Positions are in map-pixel units for `x`/`y` and depth units for `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    pub joints: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

impl Pose3D {
    pub fn invalid(joint_count: usize) -> Self {
        Pose3D { joints: vec![[0.0; 3]; joint_count], valid: vec![false; joint_count] }
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Mean of the valid joint positions, if any joint is valid.
    pub fn centroid(&self) -> Option<[f64; 3]> {
        let n = self.valid_count();
        if n == 0 {
            return None;
        }
        let mut acc = [0.0f64; 3];
        for (joint, valid) in self.joints.iter().zip(&self.valid) {
            if *valid {
                for a in 0..3 {
                    acc[a] += joint[a];
                }
            }
        }
        Some([acc[0] / n as f64, acc[1] / n as f64, acc[2] / n as f64])
    }
}

/// Errors from reading the pose text format.
#[derive(Debug, Clone, PartialEq)]
pub enum PoseIoError {
    Io(String),
    Parse { line: usize, message: String },
}

impl fmt::Display for PoseIoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoseIoError::Io(msg) => write!(f, "pose io: {msg}"),
            PoseIoError::Parse { line, message } => write!(f, "pose file line {line}: {message}"),
        }
    }
}

impl std::error::Error for PoseIoError {}

/// Serializes poses as one `pose <index>` header per person followed by one
/// `joint <j> <x> <y> <z> <valid>` line per joint. Floats use `{:?}` which
/// round-trips `f64` exactly.
pub fn poses_to_text(poses: &[Pose3D]) -> String {
    let mut out = String::new();
    for (i, pose) in poses.iter().enumerate() {
        out.push_str(&format!("pose {i}\n"));
        for (j, (joint, valid)) in pose.joints.iter().zip(&pose.valid).enumerate() {
            out.push_str(&format!(
                "joint {j} {:?} {:?} {:?} {}\n",
                joint[0],
                joint[1],
                joint[2],
                if *valid { 1 } else { 0 }
            ));
        }
    }
    out
}

/// Parses the format written by [`poses_to_text`].
pub fn poses_from_text(text: &str) -> Result<Vec<Pose3D>, PoseIoError> {
    let mut poses: Vec<Pose3D> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("pose") => {
                let idx: usize = tokens
                    .next()
                    .ok_or(PoseIoError::Parse { line: lineno, message: "missing index".into() })?
                    .parse()
                    .map_err(|e| PoseIoError::Parse {
                        line: lineno,
                        message: format!("bad index: {e}"),
                    })?;
                if idx != poses.len() {
                    return Err(PoseIoError::Parse {
                        line: lineno,
                        message: format!("expected pose {} next, got {idx}", poses.len()),
                    });
                }
                poses.push(Pose3D { joints: Vec::new(), valid: Vec::new() });
            }
            Some("joint") => {
                let pose = poses.last_mut().ok_or(PoseIoError::Parse {
                    line: lineno,
                    message: "joint before any pose header".into(),
                })?;
                let mut next = || {
                    tokens.next().ok_or(PoseIoError::Parse {
                        line: lineno,
                        message: "joint line needs: index x y z valid".into(),
                    })
                };
                let j: usize = next()?.parse().map_err(|e| PoseIoError::Parse {
                    line: lineno,
                    message: format!("bad joint index: {e}"),
                })?;
                if j != pose.joints.len() {
                    return Err(PoseIoError::Parse {
                        line: lineno,
                        message: format!("expected joint {} next, got {j}", pose.joints.len()),
                    });
                }
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    *c = next()?.parse().map_err(|e| PoseIoError::Parse {
                        line: lineno,
                        message: format!("bad coordinate: {e}"),
                    })?;
                }
                let valid = match next()? {
                    "1" => true,
                    "0" => false,
                    other => {
                        return Err(PoseIoError::Parse {
                            line: lineno,
                            message: format!("valid flag must be 0 or 1, got {other:?}"),
                        })
                    }
                };
                pose.joints.push(coords);
                pose.valid.push(valid);
            }
            Some(other) => {
                return Err(PoseIoError::Parse {
                    line: lineno,
                    message: format!("unknown record {other:?}"),
                })
            }
            None => unreachable!("blank lines are skipped"),
        }
    }
    Ok(poses)
}

pub fn save_poses(path: &Path, poses: &[Pose3D]) -> Result<(), PoseIoError> {
    std::fs::write(path, poses_to_text(poses)).map_err(|e| PoseIoError::Io(format!("{path:?}: {e}")))
}

pub fn load_poses(path: &Path) -> Result<Vec<Pose3D>, PoseIoError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| PoseIoError::Io(format!("{path:?}: {e}")))?;
    poses_from_text(&text)
}
