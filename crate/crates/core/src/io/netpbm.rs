//! Netpbm images: binary PPM (P6) and PGM (P5) output; P2, P3, P5 and P6
//! input with 8-bit samples.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

fn format_error(offset: usize, msg: impl Into<String>) -> Error {
    Error::ImageFormat { offset, msg: msg.into() }
}

fn header(magic: &str, img: &Image) -> Vec<u8> {
    format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes()
}

/// Binary encoding: P6 for 3-channel images, P5 for 1-channel images.
pub fn encode(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels {
        3 => "P6",
        1 => "P5",
        c => return Err(Error::Contract(format!("netpbm needs 1 or 3 channels, got {c}"))),
    };
    let mut out = header(magic, img);
    out.extend_from_slice(&img.pixels);
    Ok(out)
}

/// Plain-text encoding: P3 for 3-channel images, P2 for 1-channel images.
pub fn encode_ascii(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels {
        3 => "P3",
        1 => "P2",
        c => return Err(Error::Contract(format!("netpbm needs 1 or 3 channels, got {c}"))),
    };
    let mut out = header(magic, img);
    for row in img.pixels.chunks(img.width * img.channels) {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        out.extend_from_slice(line.join(" ").as_bytes());
        out.push(b'\n');
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    /// Skips whitespace and `#` comments.
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
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

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.bytes.get(start) {
                None => format_error(start, format!("unexpected end of data reading {what}")),
                Some(&b) => format_error(start, format!("expected {what}, found byte {b:#04x}")),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| format_error(start, format!("{what} out of range")))
    }
}

/// Decodes a P2, P3, P5 or P6 image. Samples with a maxval below 255 are
/// rescaled to the full byte range.
pub fn decode(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(format_error(0, "missing netpbm magic"));
    }
    let (channels, binary) = match bytes[1] {
        b'2' => (1, false),
        b'3' => (3, false),
        b'5' => (1, true),
        b'6' => (3, true),
        other => return Err(format_error(1, format!("unsupported netpbm type P{}", other as char))),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    cur.skip_space();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format_error(2, format!("empty image {width}x{height}")));
    }
    if !(1..=255).contains(&maxval) {
        return Err(format_error(maxval_at, format!("maxval {maxval} is not an 8-bit depth")));
    }
    let count = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(channels))
        .ok_or_else(|| format_error(2, "image dimensions overflow"))?;
    let mut samples = Vec::with_capacity(count.min(bytes.len()));
    if binary {
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(format_error(cur.pos, "expected one whitespace byte after maxval")),
        }
        let data = &bytes[cur.pos..];
        if data.len() < count {
            return Err(format_error(
                bytes.len(),
                format!("pixel data too short: need {count} bytes, found {}", data.len()),
            ));
        }
        samples.extend_from_slice(&data[..count]);
    } else {
        for _ in 0..count {
            let at = cur.pos;
            let v = cur.number("sample")?;
            if v > 255 {
                return Err(format_error(at, format!("sample {v} exceeds 255")));
            }
            samples.push(v as u8);
        }
    }
    if let Some((i, &v)) = samples.iter().enumerate().find(|(_, &v)| v as usize > maxval) {
        return Err(format_error(cur.pos, format!("sample {i} = {v} exceeds maxval {maxval}")));
    }
    if maxval != 255 {
        for s in &mut samples {
            *s = ((*s as f64) * 255.0 / maxval as f64).round() as u8;
        }
    }
    Image::new(height, width, channels, samples)
}

pub fn read_image(path: &Path) -> Result<Image> {
    decode(&super::read_bytes(path)?)
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    super::write_atomic(path, &encode(img)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_pixel_bytes() {
        let img = Image::filled(1, 1, 3, 255);
        assert_eq!(encode(&img).unwrap(), b"P6\n1 1\n255\n\xff\xff\xff");
    }

    #[test]
    fn round_trips() {
        let img = Image::new(2, 3, 3, (0..18).map(|v| v * 14).collect()).unwrap();
        assert_eq!(decode(&encode(&img).unwrap()).unwrap(), img);
        assert_eq!(decode(&encode_ascii(&img).unwrap()).unwrap(), img);
        let gray = Image::new(2, 2, 1, vec![0, 9, 200, 255]).unwrap();
        assert_eq!(decode(&encode(&gray).unwrap()).unwrap(), gray);
    }

    #[test]
    fn comments_and_low_maxval() {
        let img = decode(b"P2\n# made by hand\n2 1 # size\n15\n0 15\n").unwrap();
        assert_eq!(img.pixels, [0, 255]);
    }

    #[test]
    fn errors_carry_offsets() {
        let short = decode(b"P6\n2 2\n255\n\x00\x01").unwrap_err();
        assert!(matches!(short, Error::ImageFormat { offset: 13, .. }), "{short}");
        let bad = decode(b"P6\nx 2\n255\n").unwrap_err();
        assert!(matches!(bad, Error::ImageFormat { offset: 3, .. }), "{bad}");
        assert!(matches!(decode(b"P7\n").unwrap_err(), Error::ImageFormat { offset: 1, .. }));
        assert!(matches!(decode(b"P6\n1 1\n65535\n").unwrap_err(), Error::ImageFormat { offset: 7, .. }));
        assert!(decode(b"").is_err());
    }
}
