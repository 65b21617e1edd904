//! Binary PPM (P6, maxval 255) codec. Other formats go through the `image`
//! crate and are not held to bit-exactness.

use std::path::Path;

use super::RgbImage;
use crate::error::{Error, Result};

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedFile(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedFile(format!("{what} out of range")))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::MalformedFile("missing P6 magic".into()));
    }
    let mut r = HeaderReader { bytes, pos: 2 };
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedFile(format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::MalformedFile(format!("maxval {maxval} (only 255 supported)")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(r.pos) {
        Some(b) if b.is_ascii_whitespace() => r.pos += 1,
        _ => return Err(Error::MalformedFile("missing raster separator".into())),
    }
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::MalformedFile("dimensions overflow".into()))?;
    let raster = bytes
        .get(r.pos..r.pos + len)
        .ok_or_else(|| Error::MalformedFile(format!("raster truncated: need {len} bytes")))?;
    let pixels = raster.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    RgbImage::new(width, height, pixels)
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixels().len() * 3);
    out.extend_from_slice(header.as_bytes());
    for p in img.pixels() {
        out.extend_from_slice(p);
    }
    out
}

/// Decodes PPM directly and anything else through the `image` crate.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    if bytes.starts_with(b"P6") {
        return decode_ppm(bytes);
    }
    let decoded = image::load_from_memory(bytes)
        .map_err(|e| Error::MalformedFile(e.to_string()))?
        .to_rgb8();
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let pixels = decoded.pixels().map(|p| p.0).collect();
    RgbImage::new(w, h, pixels)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let bytes = std::fs::read(path.as_ref())?;
    decode_image(&bytes)
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    std::fs::write(path, encode_ppm(img))?;
    Ok(())
}
