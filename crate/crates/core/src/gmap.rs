//! GMAP: the on-disk format for dense float maps, and a small named-entry
//! container built on top of it (used for weight files and diagnostics).
//!
//! A GMAP blob is:
//!
//! ```text
//! offset 0   magic   4 bytes  "GMAP"
//! offset 4   version u16 LE   currently 1
//! offset 6   C       u32 LE   channel count
//! offset 10  H       u32 LE   height
//! offset 14  W       u32 LE   width
//! offset 18  payload C*H*W little-endian IEEE-754 f32, row-major within a
//!            channel, channels in order
//! ```
//!
//! A container file is a plain sequence of `u32 LE name length | UTF-8 name |
//! GMAP blob` entries until end of file.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::tensor::TensorMap;

pub const GMAP_MAGIC: [u8; 4] = *b"GMAP";
pub const GMAP_VERSION: u16 = 1;

const HEADER_LEN: u64 = 18;

/// Errors while reading or writing GMAP data.
#[derive(Debug)]
pub enum GmapError {
    Io(io::Error),
    /// Structurally invalid data; `offset` is the byte position (within the
    /// blob or file) where the problem was detected.
    Format { offset: u64, message: String },
}

impl std::fmt::Display for GmapError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GmapError::Io(err) => write!(f, "io error: {err}"),
            GmapError::Format { offset, message } => {
                write!(f, "format error at byte {offset}: {message}")
            }
        }
    }
}

impl std::error::Error for GmapError {}

impl From<io::Error> for GmapError {
    fn from(err: io::Error) -> Self {
        GmapError::Io(err)
    }
}

fn format_err(offset: u64, message: impl Into<String>) -> GmapError {
    GmapError::Format { offset, message: message.into() }
}

/// Reads exactly `buf.len()` bytes, reporting `offset` on a short read.
fn read_exact_at<R: Read>(reader: &mut R, buf: &mut [u8], offset: u64) -> Result<(), GmapError> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..])? {
            0 => {
                return Err(format_err(
                    offset + filled as u64,
                    format!("unexpected end of data, needed {} more bytes", buf.len() - filled),
                ))
            }
            n => filled += n,
        }
    }
    Ok(())
}

/// Serializes a map as one GMAP blob. NaN payloads are rejected (infinities
/// cannot occur in a validated [`TensorMap`], but the check covers mutated
/// maps as well).
pub fn write_gmap<W: Write>(writer: &mut W, map: &TensorMap) -> Result<(), GmapError> {
    if let Some(pos) = map.values().iter().position(|v| v.is_nan() || v.is_infinite()) {
        return Err(format_err(
            HEADER_LEN + 4 * pos as u64,
            format!("refusing to write non-finite value at element {pos}"),
        ));
    }
    writer.write_all(&GMAP_MAGIC)?;
    writer.write_all(&GMAP_VERSION.to_le_bytes())?;
    for dim in [map.channels(), map.height(), map.width()] {
        let dim = u32::try_from(dim)
            .map_err(|_| format_err(6, format!("dimension {dim} exceeds u32")))?;
        writer.write_all(&dim.to_le_bytes())?;
    }
    for v in map.values() {
        writer.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Parses one GMAP blob from the reader, consuming exactly the blob's bytes.
/// `base` is the byte offset of the blob within the enclosing file; error
/// offsets are reported relative to the file.
fn read_gmap_at<R: Read>(reader: &mut R, base: u64) -> Result<TensorMap, GmapError> {
    let mut magic = [0u8; 4];
    read_exact_at(reader, &mut magic, base)?;
    if magic != GMAP_MAGIC {
        return Err(format_err(base, format!("bad magic {magic:02x?}, expected \"GMAP\"")));
    }
    let mut version = [0u8; 2];
    read_exact_at(reader, &mut version, base + 4)?;
    let version = u16::from_le_bytes(version);
    if version != GMAP_VERSION {
        return Err(format_err(base + 4, format!("unsupported version {version}, expected 1")));
    }
    let mut dims = [0usize; 3];
    for (i, dim) in dims.iter_mut().enumerate() {
        let mut raw = [0u8; 4];
        read_exact_at(reader, &mut raw, base + 6 + 4 * i as u64)?;
        *dim = u32::from_le_bytes(raw) as usize;
    }
    let [channels, height, width] = dims;
    let count = channels
        .checked_mul(height)
        .and_then(|n| n.checked_mul(width))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| {
            format_err(base + 6, format!("dimensions {channels}x{height}x{width} overflow"))
        })?
        / 4;
    let mut values = vec![0.0f32; count];
    let mut raw = vec![0u8; count * 4];
    read_exact_at(reader, &mut raw, base + HEADER_LEN)?;
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        values[i] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
    }
    TensorMap::new(channels, height, width, values).map_err(|err| {
        let offset = match err {
            crate::tensor::MapError::NonFinite { channel, y, x } => {
                base + HEADER_LEN + 4 * ((channel * height + y) * width + x) as u64
            }
            _ => base + 6,
        };
        format_err(offset, format!("invalid payload: {err}"))
    })
}

/// Parses one GMAP blob from the reader.
pub fn read_gmap<R: Read>(reader: &mut R) -> Result<TensorMap, GmapError> {
    read_gmap_at(reader, 0)
}

/// Number of bytes a map occupies as a GMAP blob.
fn blob_len(map: &TensorMap) -> u64 {
    HEADER_LEN + 4 * (map.channels() * map.height() * map.width()) as u64
}

/// Writes a single map to `path`.
pub fn write_gmap_file(path: &Path, map: &TensorMap) -> Result<(), GmapError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_gmap(&mut writer, map)?;
    writer.flush()?;
    Ok(())
}

/// Reads a single map from `path`, rejecting trailing bytes.
pub fn read_gmap_file(path: &Path) -> Result<TensorMap, GmapError> {
    let mut reader = BufReader::new(File::open(path)?);
    let map = read_gmap_at(&mut reader, 0)?;
    let mut probe = [0u8; 1];
    if reader.read(&mut probe)? != 0 {
        return Err(format_err(blob_len(&map), "trailing bytes after payload"));
    }
    Ok(map)
}

/// Writes `(name, map)` entries as a container file.
pub fn write_named_maps(path: &Path, entries: &[(&str, &TensorMap)]) -> Result<(), GmapError> {
    let mut writer = BufWriter::new(File::create(path)?);
    for (name, map) in entries {
        let len = u32::try_from(name.len())
            .map_err(|_| format_err(0, format!("entry name {name:?} too long")))?;
        writer.write_all(&len.to_le_bytes())?;
        writer.write_all(name.as_bytes())?;
        write_gmap(&mut writer, map)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads every `(name, map)` entry of a container file, in file order.
pub fn read_named_maps(path: &Path) -> Result<Vec<(String, TensorMap)>, GmapError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    let mut offset = 0u64;
    loop {
        let mut len_raw = [0u8; 4];
        let first = reader.read(&mut len_raw[..1])?;
        if first == 0 {
            return Ok(entries);
        }
        read_exact_at(&mut reader, &mut len_raw[1..], offset + 1)?;
        let name_len = u32::from_le_bytes(len_raw) as usize;
        let mut name = vec![0u8; name_len];
        read_exact_at(&mut reader, &mut name, offset + 4)?;
        let name = String::from_utf8(name)
            .map_err(|_| format_err(offset + 4, "entry name is not valid UTF-8"))?;
        offset += 4 + name_len as u64;
        let map = read_gmap_at(&mut reader, offset)?;
        offset += blob_len(&map);
        entries.push((name, map));
    }
}
