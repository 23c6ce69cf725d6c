//! Map refinement: residual 1x1 convolutions gated by scale and depth.
//!
//! The stage takes an initial map stack plus a backbone feature map `F` and
//! produces a refined stack in four steps:
//!
//! 1. scale residual: `conv_s` over `concat(heat, scale)`, added to `scale`,
//! 2. depth residual: `conv_d` over `concat(offset3d, depth)`, added to
//!    `depth`,
//! 3. feature gating: `F_sd = proj_s(S) * F + proj_d(D) * F`, where the
//!    single-channel projections broadcast over all feature channels and
//!    `S`/`D` are the refined scale/depth maps (or just their residuals,
//!    selectable),
//! 4. heat and offset residuals: `conv_f` over `F_sd`, split into `K + 1`
//!    heat channels and `3 K` offset channels, added to their stacks.
//!
//! With all-zero weights every residual is zero and the stack passes through
//! bit-for-bit unchanged.

use crate::gmap::{read_named_maps, write_named_maps, GmapError};
use crate::maps::DataMapSet;
use crate::tensor::{ewise_combine, Broadcast, Conv1x1, EwiseOp, MapError, TensorMap};
use std::fmt;
use std::path::Path;

/// Which maps drive the feature gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateSource {
    /// Gate on the refined scale and depth maps (default).
    Refined,
    /// Gate on the raw residuals before addition.
    Residual,
}

/// Errors from the refinement stage.
#[derive(Debug)]
pub enum SdarError {
    Map(MapError),
    Gmap(GmapError),
    /// Refinement needs a feature map in the input stack.
    MissingFeature,
    /// Weight shapes disagree with the map stack or with each other.
    WeightShape(String),
    /// A named weight entry is missing from the container.
    MissingWeight(String),
}

impl fmt::Display for SdarError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SdarError::Map(e) => write!(f, "refinement map access: {e}"),
            SdarError::Gmap(e) => write!(f, "refinement weight io: {e}"),
            SdarError::MissingFeature => write!(f, "refinement requires a feature map"),
            SdarError::WeightShape(msg) => write!(f, "refinement weight shape: {msg}"),
            SdarError::MissingWeight(name) => write!(f, "weight container missing entry {name:?}"),
        }
    }
}

impl std::error::Error for SdarError {}

impl From<MapError> for SdarError {
    fn from(e: MapError) -> Self {
        SdarError::Map(e)
    }
}

impl From<GmapError> for SdarError {
    fn from(e: GmapError) -> Self {
        SdarError::Gmap(e)
    }
}

/// The five 1x1 convolutions of the refinement stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SdarWeights {
    /// `(K + 1) + 2 -> 2`
    pub conv_s: Conv1x1,
    /// `3 K + K -> K`
    pub conv_d: Conv1x1,
    /// `2 -> 1`
    pub proj_s: Conv1x1,
    /// `K -> 1`
    pub proj_d: Conv1x1,
    /// `C -> (K + 1) + 3 K`
    pub conv_f: Conv1x1,
}

impl SdarWeights {
    /// All-zero weights: the identity refinement.
    pub fn zeros(joint_count: usize, feature_channels: usize) -> Self {
        let k = joint_count;
        SdarWeights {
            conv_s: Conv1x1::zeros(2, k + 3),
            conv_d: Conv1x1::zeros(k, 4 * k),
            proj_s: Conv1x1::zeros(1, 2),
            proj_d: Conv1x1::zeros(1, k),
            conv_f: Conv1x1::zeros(4 * k + 1, feature_channels),
        }
    }

    /// Checks internal consistency and agreement with a `K`-joint stack
    /// carrying `C` feature channels.
    pub fn validate(&self, joint_count: usize, feature_channels: usize) -> Result<(), SdarError> {
        let k = joint_count;
        let checks = [
            ("conv_s", &self.conv_s, 2, k + 3),
            ("conv_d", &self.conv_d, k, 4 * k),
            ("proj_s", &self.proj_s, 1, 2),
            ("proj_d", &self.proj_d, 1, k),
            ("conv_f", &self.conv_f, 4 * k + 1, feature_channels),
        ];
        for (name, conv, out_want, in_want) in checks {
            if conv.out_channels() != out_want || conv.in_channels() != in_want {
                return Err(SdarError::WeightShape(format!(
                    "{name} must map {in_want} -> {out_want} channels, got {} -> {}",
                    conv.in_channels(),
                    conv.out_channels()
                )));
            }
        }
        Ok(())
    }
}

/// Runs the refinement stage. The input stack must carry a feature map.
pub fn refine(
    maps: &DataMapSet,
    weights: &SdarWeights,
    gate: GateSource,
) -> Result<DataMapSet, SdarError> {
    let feature = maps.feature.as_ref().ok_or(SdarError::MissingFeature)?;
    let k = maps.joint_count();
    weights.validate(k, feature.channels())?;

    // Scale and depth residuals.
    let scale_residual = weights.conv_s.apply(&maps.heat.concat_channels(&maps.scale)?)?;
    let refined_scale = ewise_combine(&maps.scale, &scale_residual, EwiseOp::Add, Broadcast::None)?;
    let depth_residual = weights.conv_d.apply(&maps.offset3d.concat_channels(&maps.depth)?)?;
    let refined_depth = ewise_combine(&maps.depth, &depth_residual, EwiseOp::Add, Broadcast::None)?;

    // Feature gating by single-channel projections.
    let (gate_scale_src, gate_depth_src) = match gate {
        GateSource::Refined => (&refined_scale, &refined_depth),
        GateSource::Residual => (&scale_residual, &depth_residual),
    };
    let gate_s = weights.proj_s.apply(gate_scale_src)?;
    let gate_d = weights.proj_d.apply(gate_depth_src)?;
    let gated_s = ewise_combine(feature, &gate_s, EwiseOp::Mul, Broadcast::SingleChannel)?;
    let gated_d = ewise_combine(feature, &gate_d, EwiseOp::Mul, Broadcast::SingleChannel)?;
    let fused = ewise_combine(&gated_s, &gated_d, EwiseOp::Add, Broadcast::None)?;

    // Heat and offset residuals from the fused features.
    let residuals = weights.conv_f.apply(&fused)?;
    let (h, w) = (maps.height(), maps.width());
    let mut heat_residual = TensorMap::zeros(k + 1, h, w);
    let mut offset_residual = TensorMap::zeros(3 * k, h, w);
    for y in 0..h {
        for x in 0..w {
            for c in 0..(k + 1) {
                heat_residual.set(c, y, x, residuals.get(c, y, x));
            }
            for c in 0..(3 * k) {
                offset_residual.set(c, y, x, residuals.get(k + 1 + c, y, x));
            }
        }
    }
    let refined_heat = ewise_combine(&maps.heat, &heat_residual, EwiseOp::Add, Broadcast::None)?;
    let refined_offset =
        ewise_combine(&maps.offset3d, &offset_residual, EwiseOp::Add, Broadcast::None)?;

    Ok(DataMapSet::new(
        k,
        refined_heat,
        refined_scale,
        refined_depth,
        refined_offset,
        Some(feature.clone()),
    )?)
}

const WEIGHT_ENTRIES: [&str; 5] = ["conv_s", "conv_d", "proj_s", "proj_d", "conv_f"];

fn conv_to_maps(conv: &Conv1x1) -> (TensorMap, TensorMap) {
    let (out_c, in_c) = (conv.out_channels(), conv.in_channels());
    let w = TensorMap::new(1, out_c, in_c, conv.weights().to_vec()).expect("finite weights");
    let b = TensorMap::new(1, out_c, 1, conv.bias().to_vec()).expect("finite bias");
    (w, b)
}

fn conv_from_maps(name: &str, w: &TensorMap, b: &TensorMap) -> Result<Conv1x1, SdarError> {
    if w.channels() != 1 || b.channels() != 1 {
        return Err(SdarError::WeightShape(format!("{name}: weight maps must be single-channel")));
    }
    if b.height() != w.height() || b.width() != 1 {
        return Err(SdarError::WeightShape(format!(
            "{name}: bias must be {} x 1, got {} x {}",
            w.height(),
            b.height(),
            b.width()
        )));
    }
    Conv1x1::new(w.height(), w.width(), w.values().to_vec(), b.values().to_vec())
        .map_err(SdarError::from)
}

/// Writes the weight set as a named map container: entries `<name>.w` with
/// shape `(1, out, in)` and `<name>.b` with shape `(1, out, 1)`.
pub fn save_weights(path: &Path, weights: &SdarWeights) -> Result<(), SdarError> {
    let convs =
        [&weights.conv_s, &weights.conv_d, &weights.proj_s, &weights.proj_d, &weights.conv_f];
    let mut maps = Vec::new();
    for (name, conv) in WEIGHT_ENTRIES.iter().zip(convs) {
        let (w, b) = conv_to_maps(conv);
        maps.push((format!("{name}.w"), w));
        maps.push((format!("{name}.b"), b));
    }
    let borrowed: Vec<(&str, &TensorMap)> =
        maps.iter().map(|(n, m)| (n.as_str(), m)).collect();
    write_named_maps(path, &borrowed)?;
    Ok(())
}

/// Reads a weight container written by [`save_weights`].
pub fn load_weights(path: &Path) -> Result<SdarWeights, SdarError> {
    let entries = read_named_maps(path)?;
    let lookup = |name: &str| -> Result<&TensorMap, SdarError> {
        entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| SdarError::MissingWeight(name.to_string()))
    };
    let mut convs = Vec::with_capacity(5);
    for name in WEIGHT_ENTRIES {
        let w = lookup(&format!("{name}.w"))?;
        let b = lookup(&format!("{name}.b"))?;
        convs.push(conv_from_maps(name, w, b)?);
    }
    let conv_f = convs.pop().expect("five entries");
    let proj_d = convs.pop().expect("five entries");
    let proj_s = convs.pop().expect("five entries");
    let conv_d = convs.pop().expect("five entries");
    let conv_s = convs.pop().expect("five entries");
    Ok(SdarWeights { conv_s, conv_d, proj_s, proj_d, conv_f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_stack(seed: u64, k: usize, c: usize, h: usize, w: usize) -> DataMapSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |channels: usize| {
            let values: Vec<f32> =
                (0..channels * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
            TensorMap::new(channels, h, w, values).unwrap()
        };
        DataMapSet::new(k, fill(k + 1), fill(2), fill(k), fill(3 * k), Some(fill(c))).unwrap()
    }

    #[test]
    fn zero_weights_pass_the_stack_through_bit_for_bit() {
        let maps = random_stack(42, 4, 3, 6, 5);
        let weights = SdarWeights::zeros(4, 3);
        let refined = refine(&maps, &weights, GateSource::Refined).unwrap();
        let pairs = [
            (maps.heat.values(), refined.heat.values()),
            (maps.scale.values(), refined.scale.values()),
            (maps.depth.values(), refined.depth.values()),
            (maps.offset3d.values(), refined.offset3d.values()),
        ];
        for (a, b) in pairs {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits(), "values must be identical to the bit");
            }
        }
    }

    /// Full hand-computed check on a one-joint, one-pixel stack.
    #[test]
    fn scalar_pipeline_matches_hand_arithmetic() {
        let k = 1usize;
        let (h, w) = (1usize, 1usize);
        // heat = [h0, hc] = [0.5, 0.25], scale = [1.0, -2.0], depth = [0.75],
        // offset = [3.0, -1.0, 2.0], feature = [2.0].
        let heat = TensorMap::new(2, h, w, vec![0.5, 0.25]).unwrap();
        let scale = TensorMap::new(2, h, w, vec![1.0, -2.0]).unwrap();
        let depth = TensorMap::new(1, h, w, vec![0.75]).unwrap();
        let offset = TensorMap::new(3, h, w, vec![3.0, -1.0, 2.0]).unwrap();
        let feature = TensorMap::new(1, h, w, vec![2.0]).unwrap();
        let maps = DataMapSet::new(k, heat, scale, depth, offset, Some(feature)).unwrap();

        // conv_s input is [heat..., scale...] = [0.5, 0.25, 1.0, -2.0].
        // Row 0 weights [1, 0, 0, 0], bias 0.1 -> residual 0.6.
        // Row 1 weights [0, 2, 0, 1], bias 0.0 -> residual -1.5.
        let conv_s = Conv1x1::new(
            2,
            4,
            vec![
                1.0, 0.0, 0.0, 0.0, //
                0.0, 2.0, 0.0, 1.0,
            ],
            vec![0.1, 0.0],
        )
        .unwrap();
        // conv_d input is [offset..., depth...] = [3, -1, 2, 0.75].
        // Weights [0.5, 0.5, 0.5, 2], bias -1 -> residual 0.5*4 - 1 + ... =
        // 0.5*(3 - 1 + 2) + 2*0.75 - 1 = 2 + 1.5 - 1 = 2.5.
        let conv_d = Conv1x1::new(1, 4, vec![0.5, 0.5, 0.5, 2.0], vec![-1.0]).unwrap();
        // Refined scale = [1.6, -3.5]; proj_s weights [1, 1], bias 0 -> -1.9.
        let proj_s = Conv1x1::new(1, 2, vec![1.0, 1.0], vec![0.0]).unwrap();
        // Refined depth = [3.25]; proj_d weight [2], bias 0.5 -> 7.0.
        let proj_d = Conv1x1::new(1, 1, vec![2.0], vec![0.5]).unwrap();
        // Gates: F_sd = -1.9 * 2 + 7 * 2 = 10.2.
        // conv_f: C=1 -> 5 channels (2 heat + 3 offset); weights pick out
        // scaled copies: [0.1, 0, 1, 0, -0.5], all biases 0 ->
        // residuals [1.02, 0, 10.2, 0, -5.1].
        let conv_f = Conv1x1::new(5, 1, vec![0.1, 0.0, 1.0, 0.0, -0.5], vec![0.0; 5]).unwrap();
        let weights = SdarWeights { conv_s, conv_d, proj_s, proj_d, conv_f };
        let refined = refine(&maps, &weights, GateSource::Refined).unwrap();

        let close = |a: f32, b: f64| (a as f64 - b).abs() < 1e-5;
        assert!(close(refined.scale.get(0, 0, 0), 1.6));
        assert!(close(refined.scale.get(1, 0, 0), -3.5));
        assert!(close(refined.depth.get(0, 0, 0), 3.25));
        assert!(close(refined.heat.get(0, 0, 0), 0.5 + 1.02));
        assert!(close(refined.heat.get(1, 0, 0), 0.25));
        assert!(close(refined.offset3d.get(0, 0, 0), 3.0 + 10.2));
        assert!(close(refined.offset3d.get(1, 0, 0), -1.0));
        assert!(close(refined.offset3d.get(2, 0, 0), 2.0 - 5.1));

        // Residual gating reads the residuals [0.6, -1.5] and [2.5] instead:
        // proj_s -> -0.9, proj_d -> 5.5, F_sd = (-0.9 + 5.5) * 2 = 9.2.
        let refined = refine(&maps, &weights, GateSource::Residual).unwrap();
        assert!(close(refined.offset3d.get(0, 0, 0), 3.0 + 9.2));
    }

    #[test]
    fn missing_feature_and_bad_shapes_error() {
        let mut maps = random_stack(1, 2, 3, 4, 4);
        maps.feature = None;
        let weights = SdarWeights::zeros(2, 3);
        assert!(matches!(
            refine(&maps, &weights, GateSource::Refined),
            Err(SdarError::MissingFeature)
        ));

        let maps = random_stack(1, 2, 3, 4, 4);
        let wrong = SdarWeights::zeros(2, 5); // feature channel mismatch
        assert!(matches!(
            refine(&maps, &wrong, GateSource::Refined),
            Err(SdarError::WeightShape(_))
        ));
    }

    #[test]
    fn weight_container_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (k, c) = (3usize, 4usize);
        let mut weights = SdarWeights::zeros(k, c);
        for conv in [
            &mut weights.conv_s,
            &mut weights.conv_d,
            &mut weights.proj_s,
            &mut weights.proj_d,
            &mut weights.conv_f,
        ] {
            let (out_c, in_c) = (conv.out_channels(), conv.in_channels());
            let w: Vec<f32> = (0..out_c * in_c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..out_c).map(|_| rng.random_range(-1.0..1.0)).collect();
            *conv = Conv1x1::new(out_c, in_c, w, b).unwrap();
        }
        let dir = std::env::temp_dir().join("sdar_weights_round_trip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("weights.gmap");
        save_weights(&path, &weights).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(weights, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn missing_container_entries_are_reported_by_name() {
        let dir = std::env::temp_dir().join("sdar_weights_missing_entry");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("weights.gmap");
        let weights = SdarWeights::zeros(2, 2);
        // Write only a subset of the entries.
        let (w, b) = conv_to_maps(&weights.conv_s);
        write_named_maps(&path, &[("conv_s.w", &w), ("conv_s.b", &b)]).unwrap();
        let err = load_weights(&path).unwrap_err();
        assert!(
            matches!(&err, SdarError::MissingWeight(name) if name == "conv_d.w"),
            "got {err:?}"
        );
        std::fs::remove_dir_all(&dir).ok();
    }
}
