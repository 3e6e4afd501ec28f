//! 8-bit image container and the pixel-level transforms used by cleaning and
//! augmentation.
//!
//! All pixel-producing arithmetic rounds half-up to the nearest integer and
//! clamps to `[0, 255]`, so every transform is bit-reproducible.

mod pnm;

pub use pnm::{decode_pnm, encode_pnm, read_image, read_pnm, write_pnm};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid raster dimensions {width}x{height}x{channels}")]
    Dimensions { width: usize, height: usize, channels: usize },
    #[error("data length {actual} does not match {width}x{height}x{channels}")]
    DataLength { width: usize, height: usize, channels: usize, actual: usize },
    #[error("expected {expected} channel(s), got {actual}")]
    Channels { expected: usize, actual: usize },
    #[error("brightness factor must be finite and positive, got {0}")]
    Factor(f64),
    #[error("malformed PNM data: {0}")]
    Pnm(String),
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RasterError>;

/// Row-major image with one (gray) or three (RGB) 8-bit channels per pixel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

/// Per-channel value written into pixels that rotate in from outside the frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FillValue(pub Vec<u8>);

impl FillValue {
    pub fn gray(value: u8) -> Self {
        FillValue(vec![value])
    }
}

/// Rounds half-up, then clamps to the 8-bit range.
#[inline]
pub(crate) fn quantize(value: f64) -> u8 {
    let rounded = (value + 0.5).floor();
    rounded.clamp(0.0, 255.0) as u8
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(RasterError::Dimensions { width, height, channels });
        }
        if data.len() != width * height * channels {
            return Err(RasterError::DataLength { width, height, channels, actual: data.len() });
        }
        Ok(Raster { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Raster::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds a grayscale raster by evaluating `f(x, y)` at every pixel.
    pub fn from_fn_gray(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: u8) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    pub fn is_gray(&self) -> bool {
        self.channels == 1
    }

    /// BT.601 luma of an RGB raster.
    pub fn to_grayscale(&self) -> Result<Raster> {
        if self.channels != 3 {
            return Err(RasterError::Channels { expected: 3, actual: self.channels });
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| quantize(0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64))
            .collect();
        Raster::new(self.width, self.height, 1, data)
    }

    /// Grayscale view regardless of the source channel count.
    pub fn ensure_gray(&self) -> Raster {
        if self.channels == 1 {
            self.clone()
        } else {
            self.to_grayscale().expect("3-channel raster")
        }
    }

    /// Bilinear sample of channel `c` at a real-valued position; the caller
    /// guarantees the position lies inside `[0, W-1] x [0, H-1]`.
    #[inline]
    fn sample_inside(&self, x: f64, y: f64, c: usize) -> f64 {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p00 = self.get(x0, y0, c) as f64;
        let p10 = self.get(x1, y0, c) as f64;
        let p01 = self.get(x0, y1, c) as f64;
        let p11 = self.get(x1, y1, c) as f64;
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        top + (bottom - top) * fy
    }

    /// Bilinear resampling with pixel-center alignment and edge clamping.
    pub fn resize_bilinear(&self, out_w: usize, out_h: usize) -> Result<Raster> {
        if out_w == 0 || out_h == 0 {
            return Err(RasterError::Dimensions { width: out_w, height: out_h, channels: self.channels });
        }
        let sx = self.width as f64 / out_w as f64;
        let sy = self.height as f64 / out_h as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let mut data = Vec::with_capacity(out_w * out_h * self.channels);
        for oy in 0..out_h {
            let y = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            for ox in 0..out_w {
                let x = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                for c in 0..self.channels {
                    data.push(quantize(self.sample_inside(x, y, c)));
                }
            }
        }
        Raster::new(out_w, out_h, self.channels, data)
    }

    /// Per-channel half-up rounded mean of the four corner pixels.
    pub fn corner_fill_value(&self) -> FillValue {
        let (w, h) = (self.width - 1, self.height - 1);
        let values = (0..self.channels)
            .map(|c| {
                let sum: u32 = [(0, 0), (w, 0), (0, h), (w, h)].iter().map(|&(x, y)| self.get(x, y, c) as u32).sum();
                ((sum + 2) / 4) as u8
            })
            .collect();
        FillValue(values)
    }

    /// Rotates counter-clockwise by `degrees` about the frame center, keeping
    /// the frame size. Pixels whose source falls outside the frame take `fill`.
    ///
    /// # Panics
    ///
    /// If `fill` does not carry one value per channel.
    pub fn rotate(&self, degrees: f64, fill: &FillValue) -> Raster {
        assert_eq!(fill.0.len(), self.channels, "fill value channel count");
        let (sin, cos) = exact_sin_cos(degrees);
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let mut out = Vec::with_capacity(self.data.len());
        for oy in 0..self.height {
            // y axis points down, so a visually counter-clockwise turn is
            // clockwise in raw (x, y) coordinates; invert it to find the source.
            let dy = oy as f64 - cy;
            for ox in 0..self.width {
                let dx = ox as f64 - cx;
                let x = snap(cx + dx * cos - dy * sin);
                let y = snap(cy + dx * sin + dy * cos);
                if x < 0.0 || y < 0.0 || x > max_x || y > max_y {
                    out.extend_from_slice(&fill.0);
                } else {
                    for c in 0..self.channels {
                        out.push(quantize(self.sample_inside(x, y, c)));
                    }
                }
            }
        }
        Raster::new(self.width, self.height, self.channels, out).expect("same dimensions")
    }

    /// Scales every sample by `factor`, rounding half-up and clamping.
    pub fn adjust_brightness(&self, factor: f64) -> Result<Raster> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(RasterError::Factor(factor));
        }
        let data = self.data.iter().map(|&p| quantize(p as f64 * factor)).collect();
        Raster::new(self.width, self.height, self.channels, data)
    }

    /// Copies the `side`×`side` window whose top-left corner is at
    /// (`left`, `top`), which may extend beyond the frame; outside pixels take `fill`.
    pub fn crop_padded(&self, left: i64, top: i64, side: usize, fill: &FillValue) -> Result<Raster> {
        assert_eq!(fill.0.len(), self.channels, "fill value channel count");
        let mut data = Vec::with_capacity(side * side * self.channels);
        for y in 0..side as i64 {
            let sy = top + y;
            for x in 0..side as i64 {
                let sx = left + x;
                if sx < 0 || sy < 0 || sx >= self.width as i64 || sy >= self.height as i64 {
                    data.extend_from_slice(&fill.0);
                } else {
                    let at = (sy as usize * self.width + sx as usize) * self.channels;
                    data.extend_from_slice(&self.data[at..at + self.channels]);
                }
            }
        }
        Raster::new(side, side, self.channels, data)
    }
}

/// Sine and cosine with exact values at quarter turns, so 90° multiples are
/// pure index permutations.
fn exact_sin_cos(degrees: f64) -> (f64, f64) {
    let reduced = degrees.rem_euclid(360.0);
    if reduced == 0.0 {
        (0.0, 1.0)
    } else if reduced == 90.0 {
        (1.0, 0.0)
    } else if reduced == 180.0 {
        (0.0, -1.0)
    } else if reduced == 270.0 {
        (-1.0, 0.0)
    } else {
        reduced.to_radians().sin_cos()
    }
}

/// Removes floating-point dust around integer coordinates.
#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}
