//! The bundle of per-pixel maps a decoder consumes for one image.
//!
//! For a skeleton with `K` joints the set holds:
//! * `heat`: `K + 1` channels, joint heatmaps plus a body-center channel,
//! * `scale`: 2 channels, per-pixel 2-D offset from a joint pixel to its
//!   person's body center,
//! * `depth`: `K` channels of encoded joint depth,
//! * `offset3d`: `3 K` channels, per-joint 3-D offsets `(dx, dy, dz)` from the
//!   pixel's position to each joint of the owning person,
//! * `feature`: an optional backbone feature map with any channel count.
//!
//! All maps share one spatial grid.

use crate::tensor::{MapError, TensorMap};

/// The per-image map bundle. Channel counts and the shared grid are validated
/// at construction so downstream code can index without re-checking.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMapSet {
    joint_count: usize,
    pub heat: TensorMap,
    pub scale: TensorMap,
    pub depth: TensorMap,
    pub offset3d: TensorMap,
    pub feature: Option<TensorMap>,
}

impl DataMapSet {
    pub fn new(
        joint_count: usize,
        heat: TensorMap,
        scale: TensorMap,
        depth: TensorMap,
        offset3d: TensorMap,
        feature: Option<TensorMap>,
    ) -> Result<Self, MapError> {
        let k = joint_count;
        for (map, want) in [(&heat, k + 1), (&scale, 2), (&depth, k), (&offset3d, 3 * k)] {
            if map.channels() != want {
                return Err(MapError::ChannelMismatch { expected: want, actual: map.channels() });
            }
        }
        let (h, w) = (heat.height(), heat.width());
        let mut grids = vec![&scale, &depth, &offset3d];
        if let Some(f) = &feature {
            grids.push(f);
        }
        for map in grids {
            if map.height() != h || map.width() != w {
                return Err(MapError::GridMismatch {
                    expected: (h, w),
                    actual: (map.height(), map.width()),
                });
            }
        }
        Ok(DataMapSet { joint_count, heat, scale, depth, offset3d, feature })
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    /// Index of the body-center channel inside `heat`.
    pub fn center_channel(&self) -> usize {
        self.joint_count
    }

    pub fn height(&self) -> usize {
        self.heat.height()
    }

    pub fn width(&self) -> usize {
        self.heat.width()
    }

    /// Zero-filled set for a `K`-joint skeleton on an `H x W` grid.
    pub fn zeros(
        joint_count: usize,
        height: usize,
        width: usize,
        feature_channels: Option<usize>,
    ) -> Self {
        DataMapSet {
            joint_count,
            heat: TensorMap::zeros(joint_count + 1, height, width),
            scale: TensorMap::zeros(2, height, width),
            depth: TensorMap::zeros(joint_count, height, width),
            offset3d: TensorMap::zeros(3 * joint_count, height, width),
            feature: feature_channels.map(|c| TensorMap::zeros(c, height, width)),
        }
    }
}
