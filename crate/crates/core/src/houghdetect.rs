//! Coin localization with a circle Hough transform, and the cleaning step
//! that turns a raw photograph into a centered 150×150 grayscale crop.
//!
//! Detection runs a box blur, 3×3 Sobel gradients, thresholding relative to
//! the strongest gradient, and thinning along the gradient direction. Every
//! surviving edge pixel then votes for all centers lying on a one-pixel-wide
//! ring of each candidate radius.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Raster, RasterError};

/// Side of the cleaned square image.
pub const CLEAN_SIZE: usize = 150;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("no coin found (best accumulator score {best_score}, threshold {threshold})")]
    NoCoinFound { best_score: u32, threshold: u32 },
    #[error("invalid detection parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircleHit {
    pub cx: usize,
    pub cy: usize,
    pub radius: usize,
    pub score: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectParams {
    pub blur_radius: usize,
    pub edge_threshold_rel: f64,
    pub r_min_frac: f64,
    pub r_max_frac: f64,
    pub radius_step: usize,
    /// `None` derives the threshold from the smallest radius swept:
    /// half the perimeter of that circle.
    pub vote_threshold: Option<u32>,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            blur_radius: 2,
            edge_threshold_rel: 0.25,
            r_min_frac: 0.20,
            r_max_frac: 0.48,
            radius_step: 1,
            vote_threshold: None,
        }
    }
}

impl DetectParams {
    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |msg: &str| Err(DetectError::InvalidParams(msg.to_owned()));
        if !(self.r_min_frac > 0.0 && self.r_min_frac < self.r_max_frac && self.r_max_frac <= 0.5) {
            return bad("require 0 < r_min_frac < r_max_frac <= 0.5");
        }
        if !(self.edge_threshold_rel > 0.0 && self.edge_threshold_rel < 1.0) {
            return bad("edge_threshold_rel must lie in (0, 1)");
        }
        if self.radius_step == 0 {
            return bad("radius_step must be at least 1");
        }
        Ok(())
    }

    /// Inclusive radius sweep for a frame of the given size.
    pub fn radius_range(&self, width: usize, height: usize) -> (usize, usize) {
        let short = width.min(height) as f64;
        let lo = (self.r_min_frac * short).ceil().max(1.0) as usize;
        let hi = (self.r_max_frac * short).floor() as usize;
        (lo, hi)
    }

    pub fn effective_vote_threshold(&self, width: usize, height: usize) -> u32 {
        self.vote_threshold.unwrap_or_else(|| {
            let (r_min, _) = self.radius_range(width, height);
            (0.5 * std::f64::consts::TAU * r_min as f64).ceil() as u32
        })
    }
}

/// Real-valued per-pixel field, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Field {
    fn from_gray(img: &Raster) -> Field {
        Field { width: img.width(), height: img.height(), data: img.data().iter().map(|&v| v as f64).collect() }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    fn clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.at(x, y)
    }
}

/// Separable box blur with window `2r + 1` and clamped borders.
fn box_blur(field: &Field, radius: usize) -> Field {
    if radius == 0 {
        return field.clone();
    }
    let (w, h) = (field.width, field.height);
    let norm = 1.0 / (2 * radius + 1) as f64;
    let r = radius as isize;
    let mut horizontal = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let s: f64 = (-r..=r).map(|d| field.clamped(x as isize + d, y as isize)).sum();
            horizontal[y * w + x] = s * norm;
        }
    }
    let horizontal = Field { width: w, height: h, data: horizontal };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let s: f64 = (-r..=r).map(|d| horizontal.clamped(x as isize, y as isize + d)).sum();
            out[y * w + x] = s * norm;
        }
    }
    Field { width: w, height: h, data: out }
}

/// Horizontal and vertical 3×3 Sobel responses with clamped borders.
fn sobel(field: &Field) -> (Field, Field) {
    let (w, h) = (field.width, field.height);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| field.clamped(x + dx, y + dy);
            let i = y as usize * w + x as usize;
            gx[i] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            gy[i] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        }
    }
    (Field { width: w, height: h, data: gx }, Field { width: w, height: h, data: gy })
}

/// Gradient magnitude `sqrt(gx² + gy²)` of a grayscale raster.
pub fn sobel_magnitude(img: &Raster) -> Result<Field, DetectError> {
    if !img.is_gray() {
        return Err(RasterError::Channels { expected: 1, actual: img.channels() }.into());
    }
    let (gx, gy) = sobel(&Field::from_gray(img));
    Ok(magnitude(&gx, &gy))
}

fn magnitude(gx: &Field, gy: &Field) -> Field {
    Field { width: gx.width, height: gx.height, data: gx.data.iter().zip(&gy.data).map(|(a, b)| a.hypot(*b)).collect() }
}

/// Thresholded edge pixels, thinned to gradient-direction maxima.
fn edge_pixels(gray: &Raster, params: &DetectParams) -> Vec<(usize, usize)> {
    let blurred = box_blur(&Field::from_gray(gray), params.blur_radius);
    let (gx, gy) = sobel(&blurred);
    let mag = magnitude(&gx, &gy);
    let max = mag.data.iter().copied().fold(0.0, f64::max);
    // Below this the image is flat up to floating-point noise.
    if max < 1e-6 {
        return Vec::new();
    }
    let threshold = params.edge_threshold_rel * max;
    let mut edges = Vec::new();
    for y in 0..mag.height {
        for x in 0..mag.width {
            let m = mag.at(x, y);
            if m <= threshold {
                continue;
            }
            // quantize the gradient direction to one of four neighbor axes
            let angle = gy.at(x, y).atan2(gx.at(x, y)).to_degrees().rem_euclid(180.0);
            let (dx, dy): (isize, isize) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as isize, y as isize);
            let before = mag.clamped(xi - dx, yi - dy);
            let after = mag.clamped(xi + dx, yi + dy);
            if m > before && m >= after {
                edges.push((x, y));
            }
        }
    }
    edges
}

/// Integer offsets whose distance from the origin rounds to `radius`.
fn ring_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as f64;
    let (lo, hi) = ((r - 0.5).powi(2), (r + 0.5).powi(2));
    let reach = radius as isize + 1;
    let mut ring = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let d2 = (dx * dx + dy * dy) as f64;
            if d2 >= lo && d2 < hi {
                ring.push((dx, dy));
            }
        }
    }
    ring
}

struct Accumulator {
    width: usize,
    height: usize,
    radii: Vec<usize>,
    votes: Vec<u32>,
}

impl Accumulator {
    fn vote(gray: &Raster, params: &DetectParams) -> Accumulator {
        let (width, height) = (gray.width(), gray.height());
        let (r_min, r_max) = params.radius_range(width, height);
        let radii: Vec<usize> = (r_min..=r_max).step_by(params.radius_step).collect();
        let plane = width * height;
        let mut votes = vec![0u32; radii.len() * plane];
        let edges = if radii.is_empty() { Vec::new() } else { edge_pixels(gray, params) };
        for (ri, &r) in radii.iter().enumerate() {
            let ring = ring_offsets(r);
            let layer = &mut votes[ri * plane..(ri + 1) * plane];
            for &(ex, ey) in &edges {
                for &(dx, dy) in &ring {
                    let cx = ex as isize + dx;
                    let cy = ey as isize + dy;
                    if cx >= 0 && cy >= 0 && (cx as usize) < width && (cy as usize) < height {
                        layer[cy as usize * width + cx as usize] += 1;
                    }
                }
            }
        }
        Accumulator { width, height, radii, votes }
    }

    fn best_score(&self) -> u32 {
        self.votes.iter().copied().max().unwrap_or(0)
    }

    /// Local maxima at or above `threshold`. Within the suppression window
    /// (±1 radius step, ±2 px in each center axis) a cell must beat every
    /// neighbor, ties going to the cell earliest in (radius, row, column) order.
    fn peaks(&self, threshold: u32) -> Vec<CircleHit> {
        let (w, h) = (self.width, self.height);
        let plane = w * h;
        let mut hits = Vec::new();
        for (idx, &score) in self.votes.iter().enumerate() {
            if score < threshold || score == 0 {
                continue;
            }
            let ri = idx / plane;
            let cy = (idx % plane) / w;
            let cx = idx % w;
            let mut is_peak = true;
            'window: for nr in ri.saturating_sub(1)..=(ri + 1).min(self.radii.len() - 1) {
                for ny in cy.saturating_sub(2)..=(cy + 2).min(h - 1) {
                    for nx in cx.saturating_sub(2)..=(cx + 2).min(w - 1) {
                        let nidx = nr * plane + ny * w + nx;
                        let other = self.votes[nidx];
                        if other > score || (other == score && nidx < idx) {
                            is_peak = false;
                            break 'window;
                        }
                    }
                }
            }
            if is_peak {
                hits.push(CircleHit { cx, cy, radius: self.radii[ri], score });
            }
        }
        // already in (radius, row, column) order, so a stable sort keeps the tie rule
        hits.sort_by_key(|h| std::cmp::Reverse(h.score));
        hits
    }
}

/// Circles whose accumulator peak reaches the vote threshold, highest score first.
pub fn hough_circles(img: &Raster, params: &DetectParams) -> Result<Vec<CircleHit>, DetectError> {
    params.validate()?;
    if !img.is_gray() {
        return Err(RasterError::Channels { expected: 1, actual: img.channels() }.into());
    }
    let acc = Accumulator::vote(img, params);
    Ok(acc.peaks(params.effective_vote_threshold(img.width(), img.height()).max(1)))
}

/// The single strongest circle in an image of any channel count.
pub fn detect_coin(img: &Raster, params: &DetectParams) -> Result<CircleHit, DetectError> {
    params.validate()?;
    let gray = img.ensure_gray();
    let threshold = params.effective_vote_threshold(gray.width(), gray.height()).max(1);
    let acc = Accumulator::vote(&gray, params);
    acc.peaks(threshold).into_iter().next().ok_or(DetectError::NoCoinFound { best_score: acc.best_score(), threshold })
}

/// Square crop of side `2·radius·margin` around a detected circle. The crop
/// is taken from the original channels; regions past the frame take the
/// source's corner fill value.
pub fn crop_around(img: &Raster, hit: &CircleHit, margin: f64) -> Result<Raster, DetectError> {
    let side = ((2.0 * hit.radius as f64 * margin).round() as usize).max(1);
    let half = (side as f64 - 1.0) / 2.0;
    let left = (hit.cx as f64 - half + 0.5).floor() as i64;
    let top = (hit.cy as f64 - half + 0.5).floor() as i64;
    Ok(img.crop_padded(left, top, side, &img.corner_fill_value())?)
}

/// Detect, crop, resize to 150×150, then grayscale.
pub fn clean_image(img: &Raster, params: &DetectParams, margin: f64) -> Result<Raster, DetectError> {
    if !(margin.is_finite() && margin > 0.0) {
        return Err(DetectError::InvalidParams(format!("crop margin must be positive, got {margin}")));
    }
    let hit = detect_coin(img, params)?;
    let crop = crop_around(img, &hit, margin)?;
    let resized = crop.resize_bilinear(CLEAN_SIZE, CLEAN_SIZE)?;
    Ok(if resized.is_gray() { resized } else { resized.to_grayscale()? })
}
