//! Binary PPM (P6, maxval 255) reading and writing.
//!
//! Writing is bit-exact: the header is always `P6\n<w> <h>\n255\n` and each
//! intensity is quantized as `round(v * 255)` (ties away from zero, i.e.
//! round-half-up for the non-negative range) after clamping to `[0, 1]`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub fn load_ppm(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

pub fn save_ppm(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_ppm(img)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Quantizes one intensity to a byte.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(img: &ImageBuffer) -> Result<Vec<u8>> {
    if img.channels() != 3 {
        return Err(Error::Shape(format!(
            "PPM needs 3 channels, image has {}",
            img.channels()
        )));
    }
    if !img.all_finite() {
        return Err(Error::NonFinite("image written to PPM"));
    }
    let header = format!("P6\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

struct Header {
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::PpmHeader("missing P6 magic".into()));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each token
        let mut saw_space = false;
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => {
                    saw_space = true;
                    pos += 1;
                }
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                    saw_space = true;
                }
                _ => break,
            }
        }
        if !saw_space {
            return Err(Error::PpmHeader(format!("no separator before token {i}")));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::PpmHeader(format!("expected a number for token {i}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::PpmHeader(format!("number out of range: {text}")))?;
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::PpmHeader("missing whitespace after maxval".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::PpmMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(Error::PpmHeader(format!("empty image {width}x{height}")));
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        payload_start: pos,
    })
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImageBuffer> {
    let header = parse_header(bytes)?;
    let expected = header.width * header.height * 3;
    let payload = &bytes[header.payload_start..];
    if payload.len() < expected {
        return Err(Error::PpmTruncated {
            expected,
            found: payload.len(),
        });
    }
    let data = payload[..expected]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    ImageBuffer::from_vec(header.height, header.width, 3, data)
}
