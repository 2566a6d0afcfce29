//! File codecs: PGM (P2/P5) images and label maps, and the `EDR1` vector
//! field format.
//!
//! `EDR1` layout: 4-byte magic `EDR1`, little-endian `u32` width, height and
//! channel count (always 2), then `width * height * 2` little-endian `f32`
//! values, row-major with `dx, dy` interleaved.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Image2D, LabelMap2D, VectorField2D};

pub const EDR1_MAGIC: &[u8; 4] = b"EDR1";

/// Quantization depth of a PGM payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmDepth {
    Byte,
    Word,
}

impl PgmDepth {
    pub fn maxval(self) -> u32 {
        match self {
            PgmDepth::Byte => 255,
            PgmDepth::Word => 65535,
        }
    }

    pub fn from_maxval(maxval: u32) -> Result<Self> {
        match maxval {
            255 => Ok(PgmDepth::Byte),
            65535 => Ok(PgmDepth::Word),
            other => Err(Error::invalid(format!(
                "unsupported maxval {other} (expected 255 or 65535)"
            ))),
        }
    }
}

/// Raw decoded PGM: integer samples plus header.
struct RawPgm {
    width: usize,
    height: usize,
    maxval: u32,
    samples: Vec<u32>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start, format!("{what} does not fit in 32 bits")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<RawPgm> {
    if bytes.len() < 2 {
        return Err(Error::format(0, "truncated header"));
    }
    let binary = match &bytes[..2] {
        b"P2" => false,
        b"P5" => true,
        _ => return Err(Error::format(0, "unsupported magic")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(2, "zero image dimension"));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::format(maxval_at, format!("unsupported maxval {maxval}")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(2, "image dimensions overflow"))?;

    let mut samples = Vec::with_capacity(n.min(1 << 24));
    if binary {
        // exactly one whitespace byte separates the header from the payload
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(Error::format(cur.pos, "missing whitespace after maxval")),
        }
        let bps = if maxval > 255 { 2 } else { 1 };
        let need = n
            .checked_mul(bps)
            .ok_or_else(|| Error::format(2, "image dimensions overflow"))?;
        let payload = &bytes[cur.pos..];
        if payload.len() < need {
            return Err(Error::format(
                cur.pos + payload.len(),
                format!("truncated payload: {} of {} bytes", payload.len(), need),
            ));
        }
        for (i, chunk) in payload[..need].chunks_exact(bps).enumerate() {
            let v = if bps == 2 {
                u32::from(u16::from_be_bytes([chunk[0], chunk[1]]))
            } else {
                u32::from(chunk[0])
            };
            if v > maxval {
                return Err(Error::format(cur.pos + i * bps, "sample exceeds maxval"));
            }
            samples.push(v);
        }
    } else {
        for _ in 0..n {
            let at = cur.pos;
            cur.skip_space_and_comments();
            if cur.pos >= bytes.len() {
                return Err(Error::format(at, "truncated payload"));
            }
            let start = cur.pos;
            let v = cur.number("sample")?;
            if v > maxval {
                return Err(Error::format(start, "sample exceeds maxval"));
            }
            samples.push(v);
        }
    }
    Ok(RawPgm {
        width,
        height,
        maxval,
        samples,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes PGM bytes to intensities in `[0, 1]` (sample / maxval).
pub fn decode_pgm_image(bytes: &[u8]) -> Result<Image2D> {
    let raw = decode_pgm(bytes)?;
    let maxval = raw.maxval as f64;
    let data = raw.samples.iter().map(|&s| s as f64 / maxval).collect();
    Image2D::new(raw.width, raw.height, data)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image2D> {
    decode_pgm_image(&read_file(path.as_ref())?)
}

/// Encodes intensities in `[0, 1]` as binary P5, `round(v * maxval)`.
pub fn encode_pgm_image(img: &Image2D, depth: PgmDepth) -> Result<Vec<u8>> {
    if let Some((index, &value)) = img
        .as_slice()
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::IntensityOutOfRange { value, index });
    }
    let maxval = depth.maxval();
    let samples: Vec<u32> = img
        .as_slice()
        .iter()
        .map(|&v| (v * maxval as f64).round() as u32)
        .collect();
    Ok(encode_p5(img.width(), img.height(), maxval, &samples))
}

pub fn save_pgm(img: &Image2D, path: impl AsRef<Path>, depth: PgmDepth) -> Result<()> {
    write_file(path.as_ref(), &encode_pgm_image(img, depth)?)
}

fn encode_p5(width: usize, height: usize, maxval: u32, samples: &[u32]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        for &s in samples {
            out.extend_from_slice(&(s as u16).to_be_bytes());
        }
    } else {
        out.extend(samples.iter().map(|&s| s as u8));
    }
    out
}

/// Reads a label map stored as raw gray values (no rescaling).
pub fn load_label_pgm(path: impl AsRef<Path>) -> Result<LabelMap2D> {
    let raw = decode_pgm(&read_file(path.as_ref())?)?;
    LabelMap2D::new(raw.width, raw.height, raw.samples)
}

/// Writes labels as raw gray values; maxval 255 unless a label needs 16 bits.
pub fn save_label_pgm(labels: &LabelMap2D, path: impl AsRef<Path>) -> Result<()> {
    let top = labels.as_slice().iter().copied().max().unwrap_or(0);
    if top > 65535 {
        return Err(Error::invalid(format!("label {top} does not fit in a PGM")));
    }
    let maxval = if top > 255 { 65535 } else { 255 };
    write_file(
        path.as_ref(),
        &encode_p5(labels.width(), labels.height(), maxval, labels.as_slice()),
    )
}

pub fn encode_field(field: &VectorField2D) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * field.as_slice().len());
    out.extend_from_slice(EDR1_MAGIC);
    out.extend_from_slice(&(field.width() as u32).to_le_bytes());
    out.extend_from_slice(&(field.height() as u32).to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    for &c in field.as_slice() {
        out.extend_from_slice(&(c as f32).to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<VectorField2D> {
    if bytes.len() < 4 || &bytes[..4] != EDR1_MAGIC {
        return Err(Error::format(0, "bad magic"));
    }
    if bytes.len() < 16 {
        return Err(Error::format(bytes.len(), "truncated header"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (width, height, channels) = (word(4), word(8), word(12));
    if channels != 2 {
        return Err(Error::format(12, format!("expected 2 channels, got {channels}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(4, "zero field dimension"));
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(4, "field dimensions overflow"))?;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::format(bytes.len(), "truncated field"));
    }
    if payload.len() > need {
        return Err(Error::format(16 + need, "trailing bytes after field payload"));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    VectorField2D::new(width, height, data)
}

pub fn write_field(field: &VectorField2D, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_field(field))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<VectorField2D> {
    decode_field(&read_file(path.as_ref())?)
}
