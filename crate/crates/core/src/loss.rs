//! Training loss over predicted map stacks.
//!
//! `total = heat + alpha * scale + beta * depth + offset` where:
//!
//! * `heat` is the mean squared error of both the initial and the refined
//!   heat stack against the target heat (two full-map MSE terms summed),
//! * `scale`, `depth`, and `offset` are mean absolute errors over *active*
//!   elements only — pixels near ground-truth joints, shared across the
//!   three map kinds as one spatial mask,
//! * depth is supervised in the stored encoding: the targets carry the same
//!   per-channel encoding the prediction stack uses, so a perfect
//!   prediction scores exactly zero.

use crate::maps::DataMapSet;
use crate::tensor::{MapError, TensorMap};

/// Mixing weights for the scale and depth terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub scale: f64,
    pub depth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { scale: 0.1, depth: 0.1 }
    }
}

/// Supervision targets plus the shared active-pixel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTargets {
    pub heat: TensorMap,
    pub scale: TensorMap,
    /// Per-joint depth in the same encoding the prediction stack stores.
    pub depth_z: TensorMap,
    pub offset3d: TensorMap,
    /// Row-major `H x W` mask of pixels that supervise the regression maps.
    pub active: Vec<bool>,
}

impl LossTargets {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    fn validate(&self) -> Result<(), MapError> {
        let (h, w) = (self.heat.height(), self.heat.width());
        for map in [&self.scale, &self.depth_z, &self.offset3d] {
            if map.height() != h || map.width() != w {
                return Err(MapError::GridMismatch {
                    expected: (h, w),
                    actual: (map.height(), map.width()),
                });
            }
        }
        if self.active.len() != h * w {
            return Err(MapError::LengthMismatch { expected: h * w, actual: self.active.len() });
        }
        Ok(())
    }
}

/// Individual terms (already weighted into `total`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub heat: f64,
    pub scale: f64,
    pub depth: f64,
    pub offset: f64,
    pub total: f64,
}

fn mse(pred: &TensorMap, target: &TensorMap) -> Result<f64, MapError> {
    if pred.channels() != target.channels() {
        return Err(MapError::ChannelMismatch {
            expected: target.channels(),
            actual: pred.channels(),
        });
    }
    if pred.height() != target.height() || pred.width() != target.width() {
        return Err(MapError::GridMismatch {
            expected: (target.height(), target.width()),
            actual: (pred.height(), pred.width()),
        });
    }
    let mut acc = 0.0f64;
    for (p, t) in pred.values().iter().zip(target.values()) {
        let d = *p as f64 - *t as f64;
        acc += d * d;
    }
    Ok(acc / pred.values().len() as f64)
}

/// Mean absolute error over active pixels, all channels. Zero when no pixel
/// is active.
fn masked_l1(
    pred: &TensorMap,
    target: &TensorMap,
    active: &[bool],
) -> Result<f64, MapError> {
    if pred.channels() != target.channels() {
        return Err(MapError::ChannelMismatch {
            expected: target.channels(),
            actual: pred.channels(),
        });
    }
    if pred.height() != target.height() || pred.width() != target.width() {
        return Err(MapError::GridMismatch {
            expected: (target.height(), target.width()),
            actual: (pred.height(), pred.width()),
        });
    }
    let (h, w) = (pred.height(), pred.width());
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for c in 0..pred.channels() {
        for y in 0..h {
            for x in 0..w {
                if !active[y * w + x] {
                    continue;
                }
                let p = pred.get(c, y, x) as f64;
                let t = target.get(c, y, x) as f64;
                acc += (p - t).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(acc / count as f64)
}

/// Computes the full loss of a refined map stack (plus the initial heat
/// stack, which is supervised separately) against the targets.
pub fn total_loss(
    initial_heat: &TensorMap,
    refined: &DataMapSet,
    targets: &LossTargets,
    weights: &LossWeights,
) -> Result<LossBreakdown, MapError> {
    targets.validate()?;
    let heat = mse(initial_heat, &targets.heat)? + mse(&refined.heat, &targets.heat)?;
    let scale_raw = masked_l1(&refined.scale, &targets.scale, &targets.active)?;
    let depth_raw = masked_l1(&refined.depth, &targets.depth_z, &targets.active)?;
    let offset_raw = masked_l1(&refined.offset3d, &targets.offset3d, &targets.active)?;
    let scale = weights.scale * scale_raw;
    let depth = weights.depth * depth_raw;
    let offset = offset_raw;
    Ok(LossBreakdown { heat, scale, depth, offset, total: heat + scale + depth + offset })
}
