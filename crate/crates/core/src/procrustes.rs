//! Similarity-transform alignment of 3-D point sets (scale, proper rotation,
//! translation), used by the aligned error metric.
//!
//! The optimal rotation comes from the classic quaternion formulation: the
//! eigenvector of the largest eigenvalue of a symmetric 4x4 matrix built
//! from the centered cross-covariance. Eigenpairs are computed with cyclic
//! Jacobi rotations, which is plenty for a fixed 4x4 symmetric matrix.
//! Reflections are never produced.

use std::fmt;

/// Errors from similarity alignment.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcrustesError {
    LengthMismatch { source: usize, target: usize },
    /// At least three point pairs are required.
    TooFewPoints { got: usize },
    /// The source points (or targets) have no spatial spread to align.
    DegenerateSpread,
}

impl fmt::Display for ProcrustesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcrustesError::LengthMismatch { source, target } => {
                write!(f, "point counts differ: {source} source vs {target} target")
            }
            ProcrustesError::TooFewPoints { got } => {
                write!(f, "similarity alignment needs at least 3 points, got {got}")
            }
            ProcrustesError::DegenerateSpread => {
                write!(f, "point set has no spatial spread; alignment is ill-posed")
            }
        }
    }
}

impl std::error::Error for ProcrustesError {}

/// `p -> scale * rotation * p + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl SimilarityTransform {
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let rp = [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
        ];
        [
            self.scale * rp[0] + self.translation[0],
            self.scale * rp[1] + self.translation[1],
            self.scale * rp[2] + self.translation[2],
        ]
    }
}

/// Eigen-decomposition of a symmetric 4x4 matrix by cyclic Jacobi sweeps.
/// Returns `(eigenvalues, eigenvectors)` with eigenvector `i` in column `i`.
fn jacobi_eigen_4(mut a: [[f64; 4]; 4]) -> ([f64; 4], [[f64; 4]; 4]) {
    let mut v = [[0.0f64; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..4 {
            for q in (p + 1)..4 {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-26 {
            break;
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..4 {
                    let (aip, aiq) = (a[i][p], a[i][q]);
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for j in 0..4 {
                    let (apj, aqj) = (a[p][j], a[q][j]);
                    a[p][j] = c * apj - s * aqj;
                    a[q][j] = s * apj + c * aqj;
                }
                for i in 0..4 {
                    let (vip, viq) = (v[i][p], v[i][q]);
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2], a[3][3]], v)
}

fn quaternion_to_rotation(q: [f64; 4]) -> [[f64; 3]; 3] {
    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Finds the similarity transform minimizing
/// `sum_i |target_i - (s R source_i + t)|^2` over scale, proper rotation,
/// and translation.
pub fn similarity_align(
    source: &[[f64; 3]],
    target: &[[f64; 3]],
) -> Result<SimilarityTransform, ProcrustesError> {
    if source.len() != target.len() {
        return Err(ProcrustesError::LengthMismatch {
            source: source.len(),
            target: target.len(),
        });
    }
    let n = source.len();
    if n < 3 {
        return Err(ProcrustesError::TooFewPoints { got: n });
    }
    let nf = n as f64;
    let mut mu_s = [0.0f64; 3];
    let mut mu_t = [0.0f64; 3];
    for i in 0..n {
        for a in 0..3 {
            mu_s[a] += source[i][a] / nf;
            mu_t[a] += target[i][a] / nf;
        }
    }
    // Cross-covariance of centered points: m[a][b] = sum_i s'_ia * t'_ib.
    let mut m = [[0.0f64; 3]; 3];
    let mut var_s = 0.0f64;
    let mut var_t = 0.0f64;
    for i in 0..n {
        let s = [source[i][0] - mu_s[0], source[i][1] - mu_s[1], source[i][2] - mu_s[2]];
        let t = [target[i][0] - mu_t[0], target[i][1] - mu_t[1], target[i][2] - mu_t[2]];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += s[a] * t[b];
            }
        }
        var_s += s[0] * s[0] + s[1] * s[1] + s[2] * s[2];
        var_t += t[0] * t[0] + t[1] * t[1] + t[2] * t[2];
    }
    if var_s < 1e-12 || var_t < 1e-12 {
        return Err(ProcrustesError::DegenerateSpread);
    }

    let (sxx, sxy, sxz) = (m[0][0], m[0][1], m[0][2]);
    let (syx, syy, syz) = (m[1][0], m[1][1], m[1][2]);
    let (szx, szy, szz) = (m[2][0], m[2][1], m[2][2]);
    let nmat = [
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ];
    let (eigenvalues, eigenvectors) = jacobi_eigen_4(nmat);
    let mut best = 0usize;
    for i in 1..4 {
        if eigenvalues[i] > eigenvalues[best] {
            best = i;
        }
    }
    let q = [
        eigenvectors[0][best],
        eigenvectors[1][best],
        eigenvectors[2][best],
        eigenvectors[3][best],
    ];
    let rotation = quaternion_to_rotation(q);

    // Least-squares scale given the rotation.
    let mut dot = 0.0f64;
    for i in 0..n {
        let s = [source[i][0] - mu_s[0], source[i][1] - mu_s[1], source[i][2] - mu_s[2]];
        let rs = [
            rotation[0][0] * s[0] + rotation[0][1] * s[1] + rotation[0][2] * s[2],
            rotation[1][0] * s[0] + rotation[1][1] * s[1] + rotation[1][2] * s[2],
            rotation[2][0] * s[0] + rotation[2][1] * s[1] + rotation[2][2] * s[2],
        ];
        let t = [target[i][0] - mu_t[0], target[i][1] - mu_t[1], target[i][2] - mu_t[2]];
        dot += rs[0] * t[0] + rs[1] * t[1] + rs[2] * t[2];
    }
    let scale = dot / var_s;
    let r_mu = [
        rotation[0][0] * mu_s[0] + rotation[0][1] * mu_s[1] + rotation[0][2] * mu_s[2],
        rotation[1][0] * mu_s[0] + rotation[1][1] * mu_s[1] + rotation[1][2] * mu_s[2],
        rotation[2][0] * mu_s[0] + rotation[2][1] * mu_s[1] + rotation[2][2] * mu_s[2],
    ];
    let translation = [
        mu_t[0] - scale * r_mu[0],
        mu_t[1] - scale * r_mu[1],
        mu_t[2] - scale * r_mu[2],
    ];
    Ok(SimilarityTransform { scale, rotation, translation })
}

/// Root-mean-square distance between aligned source points and targets.
pub fn aligned_rmse(
    source: &[[f64; 3]],
    target: &[[f64; 3]],
) -> Result<f64, ProcrustesError> {
    let t = similarity_align(source, target)?;
    let mut acc = 0.0f64;
    for (s, g) in source.iter().zip(target) {
        let p = t.apply(*s);
        let d = [p[0] - g[0], p[1] - g[1], p[2] - g[2]];
        acc += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    }
    Ok((acc / source.len() as f64).sqrt())
}
