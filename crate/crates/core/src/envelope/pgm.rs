//! Binary PGM (P5) codec, 8-bit only.

use super::{EnvelopeError, GrayImage};

fn is_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if is_space(b) {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &'static str) -> Result<usize, EnvelopeError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(EnvelopeError::BadHeader(format!("missing {field}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| EnvelopeError::BadHeader(format!("{field} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, EnvelopeError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(EnvelopeError::BadMagic);
    }
    let mut cur = Cursor { bytes, pos: 2 };
    if !cur.bytes.get(2).copied().is_some_and(|b| is_space(b) || b == b'#') {
        return Err(EnvelopeError::BadMagic);
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(EnvelopeError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    match cur.bytes.get(cur.pos) {
        Some(&b) if is_space(b) => cur.pos += 1,
        _ => return Err(EnvelopeError::BadHeader("missing raster separator".into())),
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| EnvelopeError::BadHeader("dimensions overflow".into()))?;
    let raster = &bytes[cur.pos..];
    if raster.len() != expected {
        return Err(EnvelopeError::SizeMismatch {
            expected,
            got: raster.len(),
        });
    }
    GrayImage::new(width, height, raster.to_vec())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}
