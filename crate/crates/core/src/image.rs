//! RGB image buffer used as network input.

use std::io::{Read, Write};

use thiserror::Error;

const IMAGE_MAGIC: &[u8; 6] = b"SCIMG1";

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("bad image file: {0}")]
    BadFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Interleaved RGB, values nominally in [0, 1]: `data[(y * width + x) * 3 + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Bilinear sample at a continuous pixel position where pixel (x, y) has
    /// its centre at (x + 0.5, y + 0.5). `None` outside the image.
    pub fn sample_bilinear(&self, px: f64, py: f64) -> Option<[f64; 3]> {
        let fx = px - 0.5;
        let fy = py - 0.5;
        if !(fx >= -0.5
            && fy >= -0.5
            && fx <= self.width as f64 - 0.5
            && fy <= self.height as f64 - 0.5)
        {
            return None;
        }
        let fx = fx.clamp(0.0, (self.width - 1) as f64);
        let fy = fy.clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
        let (p00, p10, p01, p11) = (
            self.pixel(x0, y0),
            self.pixel(x1, y0),
            self.pixel(x0, y1),
            self.pixel(x1, y1),
        );
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = p00[c] * (1.0 - ax) + p10[c] * ax;
            let bottom = p01[c] * (1.0 - ax) + p11[c] * ax;
            out[c] = top * (1.0 - ay) + bottom * ay;
        }
        Some(out)
    }

    /// Little-endian: magic, u32 width, u32 height, u32 channels, then
    /// planar f32 data (all R, then all G, then all B).
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<(), ImageError> {
        out.write_all(IMAGE_MAGIC)?;
        for v in [self.width as u32, self.height as u32, 3u32] {
            out.write_all(&v.to_le_bytes())?;
        }
        let n = self.width * self.height;
        let mut buf = Vec::with_capacity(n * 12);
        for c in 0..3 {
            for i in 0..n {
                buf.extend_from_slice(&(self.data[i * 3 + c] as f32).to_le_bytes());
            }
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self, ImageError> {
        let mut magic = [0u8; 6];
        input.read_exact(&mut magic)?;
        if &magic != IMAGE_MAGIC {
            return Err(ImageError::BadFormat("missing SCIMG1 magic".into()));
        }
        let mut hdr = [0u8; 12];
        input.read_exact(&mut hdr)?;
        let word =
            |i: usize| u32::from_le_bytes(hdr[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
        let (width, height, channels) = (word(0), word(1), word(2));
        if channels != 3 {
            return Err(ImageError::BadFormat(format!(
                "expected 3 channels, got {channels}"
            )));
        }
        let n = width * height;
        let mut buf = vec![0u8; n * 12];
        input.read_exact(&mut buf)?;
        let mut data = vec![0.0; n * 3];
        for c in 0..3 {
            for i in 0..n {
                let o = (c * n + i) * 4;
                data[i * 3 + c] = f32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as f64;
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }
}
