//! Minimal RGB raster images with binary PPM (P6) serialization.

use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// `width * height * 3` bytes, rows top to bottom.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut img = RgbImage::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fill an axis-aligned rectangle, clipped to the image bounds.
    pub fn fill_rect(&mut self, x: f64, y: f64, w: f64, h: f64, rgb: [u8; 3]) {
        let x0 = x.round().max(0.0) as usize;
        let y0 = y.round().max(0.0) as usize;
        let x1 = ((x + w).round().max(0.0) as usize).min(self.width);
        let y1 = ((y + h).round().max(0.0) as usize).min(self.height);
        for yy in y0..y1 {
            for xx in x0..x1 {
                self.put(xx, yy, rgb);
            }
        }
    }

    /// Serialize as binary PPM (P6, maxval 255).
    pub fn write_ppm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_ppm(&mut buf).map_err(|e| Error::io(path, e))
    }

    /// Parse a binary PPM (P6) stream; `#` comments in the header are honored.
    pub fn read_ppm<R: Read>(r: R) -> std::io::Result<Self> {
        let mut reader = BufReader::new(r);
        let mut header_tokens = Vec::new();
        // The header is 4 whitespace-separated tokens (magic, width, height,
        // maxval) followed by exactly one whitespace byte, then raw pixels.
        let mut token = Vec::new();
        while header_tokens.len() < 4 {
            let mut byte = [0u8; 1];
            reader.read_exact(&mut byte)?;
            match byte[0] {
                b'#' => {
                    let mut comment = Vec::new();
                    reader.read_until(b'\n', &mut comment)?;
                }
                b if b.is_ascii_whitespace() => {
                    if !token.is_empty() {
                        header_tokens.push(std::mem::take(&mut token));
                    }
                }
                b => token.push(b),
            }
        }
        let parse = |t: &[u8]| -> std::io::Result<usize> {
            std::str::from_utf8(t)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "bad header"))
        };
        if header_tokens[0] != b"P6" {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "not a binary PPM (P6) stream",
            ));
        }
        let width = parse(&header_tokens[1])?;
        let height = parse(&header_tokens[2])?;
        let maxval = parse(&header_tokens[3])?;
        if maxval != 255 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("unsupported maxval {maxval}"),
            ));
        }
        let mut data = vec![0u8; width * height * 3];
        reader.read_exact(&mut data)?;
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn load_ppm(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_ppm(file).map_err(|e| Error::io(path, e))
    }
}

/// Convert HSV (h in degrees, s and v in [0, 1]) to 8-bit RGB.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0);
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h {
        h if h < 60.0 => (c, x, 0.0),
        h if h < 120.0 => (x, c, 0.0),
        h if h < 180.0 => (0.0, c, x),
        h if h < 240.0 => (0.0, x, c),
        h if h < 300.0 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let q = |t: f64| ((t + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}
