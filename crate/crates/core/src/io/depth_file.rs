//! 16-bit depth grid: one ASCII header line followed by the little-endian
//! payload.
//!
//! ```text
//! DEPTH16 1 <width> <height> <scale> <min> <max> <checksum>\n
//! <width * height little-endian u16>
//! ```
//!
//! A stored value `raw` means `raw / scale` meters; `0` marks an invalid
//! pixel. `min` and `max` are the extreme raw values over valid pixels (both
//! `0` when there are none) and `checksum` is the first 16 hex digits of the
//! SHA-256 of the payload.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{DepthMap, ImageSize};

pub const MAGIC: &str = "DEPTH16";
pub const VERSION: u32 = 1;
/// Raw units per meter unless configured otherwise: one unit is 1 mm.
pub const DEFAULT_SCALE: f64 = 1000.0;

fn checksum(payload: &[u8]) -> String {
    hex::encode(&Sha256::digest(payload)[..8])
}

pub fn encode_depth(dm: &DepthMap, scale: f64) -> Result<Vec<u8>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidConfig(format!("depth scale {scale} must be positive")));
    }
    let mut payload = Vec::with_capacity(dm.depths.len() * 2);
    let (mut lo, mut hi) = (u16::MAX, 0u16);
    for (i, (d, valid)) in dm.depths.iter().zip(&dm.valid).enumerate() {
        let raw = if *valid {
            let q = (d * scale).round();
            if !(1.0..=f64::from(u16::MAX)).contains(&q) {
                return Err(Error::InvalidDepth(format!(
                    "pixel {i}: depth {d} m is not representable at scale {scale}"
                )));
            }
            let q = q as u16;
            lo = lo.min(q);
            hi = hi.max(q);
            q
        } else {
            0
        };
        payload.extend_from_slice(&raw.to_le_bytes());
    }
    if hi == 0 {
        lo = 0;
    }
    let header = format!(
        "{MAGIC} {VERSION} {} {} {scale} {lo} {hi} {}\n",
        dm.size.width,
        dm.size.height,
        checksum(&payload)
    );
    let mut out = header.into_bytes();
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_depth(bytes: &[u8], path: &str) -> Result<DepthMap> {
    let bad = |message: String| Error::Parse {
        path: path.to_string(),
        line: 1,
        message,
    };
    let newline = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| bad("header is not ASCII".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 8 {
        return Err(bad(format!("header has {} fields, expected 8", fields.len())));
    }
    if fields[0] != MAGIC {
        return Err(bad(format!("bad magic '{}'", fields[0])));
    }
    let parse_u32 = |name: &str, s: &str| s.parse::<u32>().map_err(|_| bad(format!("bad {name} '{s}'")));
    let version = parse_u32("version", fields[1])?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let size = ImageSize::new(parse_u32("width", fields[2])?, parse_u32("height", fields[3])?)
        .map_err(|e| bad(e.to_string()))?;
    let scale: f64 = fields[4].parse().map_err(|_| bad(format!("bad scale '{}'", fields[4])))?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(bad(format!("scale {scale} must be positive")));
    }
    let lo = parse_u32("min", fields[5])?;
    let hi = parse_u32("max", fields[6])?;

    let payload = &bytes[newline + 1..];
    let expected = size.pixel_count() * 2;
    if payload.len() != expected {
        return Err(bad(format!("payload has {} bytes, expected {expected}", payload.len())));
    }
    if checksum(payload) != fields[7] {
        return Err(bad("checksum mismatch".into()));
    }
    let mut depths = Vec::with_capacity(size.pixel_count());
    let mut valid = Vec::with_capacity(size.pixel_count());
    let (mut seen_lo, mut seen_hi) = (u32::MAX, 0u32);
    for chunk in payload.chunks_exact(2) {
        let raw = u16::from_le_bytes([chunk[0], chunk[1]]);
        valid.push(raw != 0);
        depths.push(f64::from(raw) / scale);
        if raw != 0 {
            seen_lo = seen_lo.min(u32::from(raw));
            seen_hi = seen_hi.max(u32::from(raw));
        }
    }
    if seen_hi == 0 {
        seen_lo = 0;
    }
    if (seen_lo, seen_hi) != (lo, hi) {
        return Err(bad(format!(
            "header range [{lo}, {hi}] disagrees with payload [{seen_lo}, {seen_hi}]"
        )));
    }
    DepthMap::new(size, depths, valid)
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_depth(&bytes, &path.display().to_string())
}
