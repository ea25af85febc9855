//! Binary gray maps (`P5`, 8-bit).

use std::fs;
use std::path::Path;

use amc_core::render::GrayImage;

use crate::error::{HarnessError, IoContext, Result};

pub fn encode(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Parses a `P5` image with maxval 255. `#` comments in the header are
/// accepted.
pub fn decode(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let shown = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(HarnessError::PgmMagic(format!("expected `P5`, found `{shown}`")));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(HarnessError::PgmMalformed("truncated header".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| HarnessError::PgmMalformed(format!("header value `{text}` out of range")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(HarnessError::PgmMalformed(format!("maxval {maxval}, only 255 is supported")));
    }
    if width == 0 || height == 0 {
        return Err(HarnessError::PgmMalformed("zero-sized image".into()));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(HarnessError::PgmMalformed("missing separator before raster".into()));
    }
    let raster = &bytes[pos + 1..];
    if raster.len() != width * height {
        return Err(HarnessError::PgmMalformed(format!(
            "raster has {} bytes, header says {width}x{height}",
            raster.len()
        )));
    }
    Ok(GrayImage::new(width, height, raster.to_vec())?)
}

pub fn read(path: &Path) -> Result<GrayImage> {
    decode(&fs::read(path).at(path)?)
}

pub fn write(path: &Path, img: &GrayImage) -> Result<()> {
    fs::write(path, encode(img)).at(path)
}
