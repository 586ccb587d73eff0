//! Binary PGM (`P5`) and PPM (`P6`) rasters, 8- or 16-bit.
//!
//! Samples wider than a byte (maxval > 255) are stored big-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    /// 1 for PGM, 3 for PPM.
    pub channels: usize,
    pub maxval: u16,
    /// Row-major, channels interleaved.
    pub samples: Vec<u16>,
}

impl PnmImage {
    pub fn new(width: usize, height: usize, channels: usize, maxval: u16) -> Self {
        PnmImage {
            width,
            height,
            channels,
            maxval,
            samples: vec![0; width * height * channels],
        }
    }

    /// Quantizes values in `[0, 1]` to `maxval` levels, rounding to nearest.
    pub fn from_unit(
        width: usize,
        height: usize,
        channels: usize,
        maxval: u16,
        values: &[f32],
    ) -> Self {
        let m = maxval as f32;
        PnmImage {
            width,
            height,
            channels,
            maxval,
            samples: values
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * m).round() as u16)
                .collect(),
        }
    }

    pub fn to_unit(&self) -> Vec<f32> {
        let m = self.maxval as f32;
        self.samples.iter().map(|&s| s as f32 / m).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval)
            .into_bytes();
        if self.maxval > 255 {
            for &s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        } else {
            out.extend(self.samples.iter().map(|&s| s as u8));
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |msg: &str| Error::Image {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        };
        let channels = match bytes.get(..2) {
            Some(b"P5") => 1,
            Some(b"P6") => 3,
            _ => return Err(err("unsupported image magic (expected P5 or P6)")),
        };
        let mut pos = 2;
        let mut fields = [0usize; 3];
        for field in fields.iter_mut() {
            // whitespace and `#` comments between header tokens
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(_) => break,
                    None => return Err(err("truncated header")),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err("malformed header number"))?;
        }
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(err("missing whitespace after header"));
        }
        pos += 1;
        let [width, height, maxval] = fields;
        if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
            return Err(err("header values out of range"));
        }
        let n = width * height * channels;
        let wide = maxval > 255;
        let body = &bytes[pos..];
        let need = if wide { 2 * n } else { n };
        if body.len() < need {
            return Err(err("truncated pixel data"));
        }
        let samples: Vec<u16> = if wide {
            body[..need]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        } else {
            body[..n].iter().map(|&b| b as u16).collect()
        };
        if samples.iter().any(|&s| s as usize > maxval) {
            return Err(err("sample exceeds maxval"));
        }
        Ok(PnmImage {
            width,
            height,
            channels,
            maxval: maxval as u16,
            samples,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes =
            fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::decode(&bytes, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}
