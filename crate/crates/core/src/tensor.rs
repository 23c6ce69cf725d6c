//! Dense channel-major float maps and the small pointwise operations the
//! decoding pipeline is built from.
//!
//! A [`TensorMap`] stores `channels * height * width` finite `f32` values in
//! channel-major, row-major order. Values are kept in 32-bit form (matching
//! the on-disk format) while every reduction accumulates in 64-bit.

use std::fmt;
use std::ops::Range;

/// Errors produced by map construction and the pointwise operations.
#[derive(Debug, Clone, PartialEq)]
pub enum MapError {
    /// Element buffer length does not match the declared shape.
    LengthMismatch { expected: usize, actual: usize },
    /// A value was NaN or infinite.
    NonFinite { channel: usize, y: usize, x: usize },
    /// A sample point lies outside the pixel grid.
    PointOutOfBounds { x: i64, y: i64, width: usize, height: usize },
    /// A channel range does not fit the map.
    ChannelOutOfBounds { start: usize, end: usize, channels: usize },
    /// Two maps (or a map and a weight matrix) disagree on channel count.
    ChannelMismatch { expected: usize, actual: usize },
    /// Two maps disagree on spatial size.
    GridMismatch { expected: (usize, usize), actual: (usize, usize) },
    /// Inverse depth transformation evaluated outside its domain (d <= 0).
    DepthDomain { value: f64 },
}

impl fmt::Display for MapError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapError::LengthMismatch { expected, actual } => {
                write!(f, "value buffer holds {actual} elements, shape needs {expected}")
            }
            MapError::NonFinite { channel, y, x } => {
                write!(f, "non-finite value at channel {channel}, pixel ({x}, {y})")
            }
            MapError::PointOutOfBounds { x, y, width, height } => {
                write!(f, "point ({x}, {y}) outside {width}x{height} grid")
            }
            MapError::ChannelOutOfBounds { start, end, channels } => {
                write!(f, "channel range {start}..{end} outside 0..{channels}")
            }
            MapError::ChannelMismatch { expected, actual } => {
                write!(f, "expected {expected} channels, got {actual}")
            }
            MapError::GridMismatch { expected, actual } => write!(
                f,
                "expected {}x{} grid, got {}x{}",
                expected.0, expected.1, actual.0, actual.1
            ),
            MapError::DepthDomain { value } => {
                write!(f, "inverse depth transform needs a positive input, got {value}")
            }
        }
    }
}

impl std::error::Error for MapError {}

/// Dense `channels x height x width` map of finite `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorMap {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl TensorMap {
    /// Builds a map from a channel-major, row-major value buffer.
    ///
    /// Rejects buffers whose length does not equal `channels * height * width`
    /// and buffers containing NaN or infinite entries.
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<f32>,
    ) -> Result<Self, MapError> {
        let expected = channels * height * width;
        if values.len() != expected {
            return Err(MapError::LengthMismatch { expected, actual: values.len() });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let per_channel = height * width;
            let channel = pos / per_channel;
            let rem = pos % per_channel;
            return Err(MapError::NonFinite { channel, y: rem / width, x: rem % width });
        }
        Ok(TensorMap { channels, height, width, values })
    }

    /// All-zero map of the given shape.
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        TensorMap { channels, height, width, values: vec![0.0; channels * height * width] }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Raw value buffer in storage order.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    /// Single-element read; panics if the coordinates are out of range.
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        assert!(
            c < self.channels && y < self.height && x < self.width,
            "index ({c}, {y}, {x}) outside {}x{}x{} map",
            self.channels,
            self.height,
            self.width
        );
        self.values[self.index(c, y, x)]
    }

    /// Single-element write; panics if the coordinates are out of range.
    /// Callers are expected to keep values finite.
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f32) {
        assert!(
            c < self.channels && y < self.height && x < self.width,
            "index ({c}, {y}, {x}) outside {}x{}x{} map",
            self.channels,
            self.height,
            self.width
        );
        let idx = self.index(c, y, x);
        self.values[idx] = value;
    }

    /// True when `(x, y)` addresses a pixel of the grid.
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Reads the values of `channels` at the integer pixel `(x, y)`.
    ///
    /// Sampling is exact pixel lookup: no interpolation is applied anywhere in
    /// the pipeline. Out-of-range points or channel ranges are errors.
    pub fn sample_at(&self, x: i64, y: i64, channels: Range<usize>) -> Result<Vec<f32>, MapError> {
        if !self.contains(x, y) {
            return Err(MapError::PointOutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        if channels.start > channels.end || channels.end > self.channels {
            return Err(MapError::ChannelOutOfBounds {
                start: channels.start,
                end: channels.end,
                channels: self.channels,
            });
        }
        let (xu, yu) = (x as usize, y as usize);
        Ok(channels.map(|c| self.values[self.index(c, yu, xu)]).collect())
    }

    /// Stacks the channels of `self` and `other` (same spatial size).
    pub fn concat_channels(&self, other: &TensorMap) -> Result<TensorMap, MapError> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(MapError::GridMismatch {
                expected: (self.height, self.width),
                actual: (other.height, other.width),
            });
        }
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        values.extend_from_slice(&self.values);
        values.extend_from_slice(&other.values);
        Ok(TensorMap {
            channels: self.channels + other.channels,
            height: self.height,
            width: self.width,
            values,
        })
    }
}

/// Elementwise combination mode for [`ewise_combine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EwiseOp {
    Mul,
    Add,
}

/// Broadcast rule for the second operand of [`ewise_combine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Broadcast {
    /// Shapes must match exactly.
    None,
    /// `b` has one channel that is applied to every channel of `a`.
    SingleChannel,
}

/// Elementwise multiply/add of two maps, optionally broadcasting a
/// single-channel `b` across all channels of `a`.
pub fn ewise_combine(
    a: &TensorMap,
    b: &TensorMap,
    op: EwiseOp,
    broadcast: Broadcast,
) -> Result<TensorMap, MapError> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(MapError::GridMismatch {
            expected: (a.height, a.width),
            actual: (b.height, b.width),
        });
    }
    match broadcast {
        Broadcast::None if a.channels != b.channels => {
            return Err(MapError::ChannelMismatch { expected: a.channels, actual: b.channels });
        }
        Broadcast::SingleChannel if b.channels != 1 => {
            return Err(MapError::ChannelMismatch { expected: 1, actual: b.channels });
        }
        _ => {}
    }
    let plane = a.height * a.width;
    let mut values = Vec::with_capacity(a.values.len());
    for c in 0..a.channels {
        let b_plane = match broadcast {
            Broadcast::None => &b.values[c * plane..(c + 1) * plane],
            Broadcast::SingleChannel => &b.values[..plane],
        };
        let a_plane = &a.values[c * plane..(c + 1) * plane];
        match op {
            EwiseOp::Mul => values.extend(a_plane.iter().zip(b_plane).map(|(x, y)| x * y)),
            EwiseOp::Add => values.extend(a_plane.iter().zip(b_plane).map(|(x, y)| x + y)),
        }
    }
    TensorMap::new(a.channels, a.height, a.width, values)
}

/// Weights of a pointwise (1x1) convolution: a dense `out x in` matrix plus a
/// per-output bias. Application accumulates in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1x1 {
    out_channels: usize,
    in_channels: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl Conv1x1 {
    /// Builds a 1x1 convolution from an `out x in` row-major weight matrix and
    /// an `out`-element bias vector.
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self, MapError> {
        if weights.len() != out_channels * in_channels {
            return Err(MapError::LengthMismatch {
                expected: out_channels * in_channels,
                actual: weights.len(),
            });
        }
        if bias.len() != out_channels {
            return Err(MapError::LengthMismatch { expected: out_channels, actual: bias.len() });
        }
        if let Some(_) = weights.iter().chain(bias.iter()).find(|v| !v.is_finite()) {
            return Err(MapError::NonFinite { channel: 0, y: 0, x: 0 });
        }
        Ok(Conv1x1 { out_channels, in_channels, weights, bias })
    }

    /// All-zero weights and bias (the identity element of the residual
    /// refinement: a zero convolution contributes nothing).
    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        Conv1x1 {
            out_channels,
            in_channels,
            weights: vec![0.0; out_channels * in_channels],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// Applies the convolution per pixel: `out[o] = bias[o] + sum_i w[o][i] * in[i]`.
    pub fn apply(&self, input: &TensorMap) -> Result<TensorMap, MapError> {
        if input.channels != self.in_channels {
            return Err(MapError::ChannelMismatch {
                expected: self.in_channels,
                actual: input.channels,
            });
        }
        let plane = input.height * input.width;
        let mut values = vec![0.0f32; self.out_channels * plane];
        for o in 0..self.out_channels {
            let row = &self.weights[o * self.in_channels..(o + 1) * self.in_channels];
            let out_plane = &mut values[o * plane..(o + 1) * plane];
            for (p, out) in out_plane.iter_mut().enumerate() {
                let mut acc = self.bias[o] as f64;
                for (i, w) in row.iter().enumerate() {
                    acc += *w as f64 * input.values[i * plane + p] as f64;
                }
                *out = acc as f32;
            }
        }
        TensorMap::new(self.out_channels, input.height, input.width, values)
    }
}

/// Depth output transformation `delta(x) = 1/sigmoid(x) - 1`, which reduces to
/// `exp(-x)`. Maps raw regression outputs onto positive depths; strictly
/// decreasing with `delta(0) = 1`.
pub fn delta_transform(x: f64) -> f64 {
    (-x).exp()
}

/// Inverse of [`delta_transform`]: `-ln(d)`. Defined for positive `d` only.
pub fn delta_inverse(d: f64) -> Result<f64, MapError> {
    if d <= 0.0 || !d.is_finite() {
        return Err(MapError::DepthDomain { value: d });
    }
    Ok(-d.ln())
}
