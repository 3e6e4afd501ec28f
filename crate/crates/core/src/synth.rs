//! Synthetic fixtures: anti-aliased discs for detector sweeps and coin-like
//! photographs for end-to-end runs.
//!
//! Coin renderings carry a denomination mark (1, 2 or 3 concentric grooves for
//! ₹1, ₹2, ₹5) and a side mark in the middle (a bar for reverse, a round boss
//! for obverse). The style shifts groove widths slightly.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{CoinLabel, Denomination, Side};
use crate::raster::{quantize, Raster, RasterError};

/// Supersampling factor per axis used for anti-aliasing.
const SUPERSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscSpec {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub fg: u8,
    pub bg: u8,
}

/// Grayscale filled disc with area-weighted edges plus optional Gaussian noise.
pub fn render_disc(
    width: usize,
    height: usize,
    disc: &DiscSpec,
    noise_sigma: f64,
    seed: u64,
) -> Result<Raster, RasterError> {
    let coverage = |x: usize, y: usize| -> f64 {
        let mut inside = 0;
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let px = x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                let py = y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                if (px - disc.cx).hypot(py - disc.cy) <= disc.radius {
                    inside += 1;
                }
            }
        }
        inside as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let a = coverage(x, y);
            let mut v = disc.bg as f64 + a * (disc.fg as f64 - disc.bg as f64);
            if noise_sigma > 0.0 {
                v += noise.sample(&mut rng);
            }
            data.push(quantize(v));
        }
    }
    Raster::new(width, height, 1, data)
}

/// Pseudo-random 8-bit grayscale image of the given size.
pub fn random_gray(width: usize, height: usize, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * height).map(|_| rng.random()).collect();
    Raster::new(width, height, 1, data).expect("nonzero size")
}

/// Randomized acquisition conditions for one synthetic coin photograph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shot {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    /// Rotation of the coin face, radians.
    pub angle: f64,
    pub face: f64,
    pub background: f64,
    pub noise_sigma: f64,
}

impl Shot {
    pub fn random(width: usize, height: usize, rng: &mut impl Rng) -> Shot {
        let short = width.min(height) as f64;
        let radius = rng.random_range(0.28 * short..0.40 * short);
        let margin = radius + 3.0;
        Shot {
            cx: rng.random_range(margin..width as f64 - margin),
            cy: rng.random_range(margin..height as f64 - margin),
            radius,
            angle: rng.random_range(0.0..TAU),
            face: rng.random_range(160.0..215.0),
            background: rng.random_range(15.0..45.0),
            noise_sigma: 3.0,
        }
    }
}

/// Intensity of the coin face at normalized polar position (`rho` in [0,1]),
/// with (`u`, `v`) in the coin's own rotated frame, both scaled by the radius.
fn face_intensity(label: &CoinLabel, face: f64, rho: f64, u: f64, v: f64) -> f64 {
    let groove = face * 0.45;
    let width = 0.045 + 0.006 * (label.style as f64 - 1.0);
    if rho > 0.9 {
        return face * 0.8; // rim
    }
    let rings: &[f64] = match label.denomination {
        Denomination::One => &[0.66],
        Denomination::Two => &[0.56, 0.76],
        Denomination::Five => &[0.50, 0.64, 0.78],
    };
    if rings.iter().any(|&r| (rho - r).abs() < width) {
        return groove;
    }
    match label.side {
        Side::Reverse if u.abs() < 0.09 && v.abs() < 0.34 => groove,
        Side::Obverse if rho < 0.22 => groove,
        _ => face,
    }
}

/// RGB photograph of one synthetic coin on a dark, slightly tinted background.
pub fn render_coin(width: usize, height: usize, label: &CoinLabel, shot: &Shot, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, shot.noise_sigma).expect("finite sigma");
    let (sin, cos) = shot.angle.sin_cos();
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for sy in 0..2 {
                for sx in 0..2 {
                    let px = x as f64 + sx as f64 * 0.5 - 0.25 - shot.cx;
                    let py = y as f64 + sy as f64 * 0.5 - 0.25 - shot.cy;
                    let rho = px.hypot(py) / shot.radius;
                    acc += if rho > 1.0 {
                        shot.background
                    } else {
                        let u = (px * cos + py * sin) / shot.radius;
                        let v = (-px * sin + py * cos) / shot.radius;
                        face_intensity(label, shot.face, rho, u, v)
                    };
                }
            }
            let v = acc / 4.0 + noise.sample(&mut rng);
            // warm tint: luma of (1.04, 1.0, 0.85)·v is ~v
            data.push(quantize(v * 1.04));
            data.push(quantize(v));
            data.push(quantize(v * 0.85));
        }
    }
    Raster::new(width, height, 3, data).expect("nonzero size")
}

/// Raw frame size used for synthetic photographs.
pub const RAW_WIDTH: usize = 192;
pub const RAW_HEIGHT: usize = 160;

/// One raw synthetic photograph with its ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticPhoto {
    pub label: CoinLabel,
    pub coin: usize,
    pub shot_index: usize,
    pub shot: Shot,
    pub image: Raster,
}

impl SyntheticPhoto {
    /// `<coin>-<shot>` stem used on disk.
    pub fn stem(&self) -> String {
        format!("c{:03}-{:02}", self.coin, self.shot_index)
    }
}

/// `per_class` photographs for each of the six classes, spread over
/// `coins_per_class` physical coins. Output order is class-major.
pub fn coin_photos(per_class: usize, coins_per_class: usize, seed: u64) -> Vec<SyntheticPhoto> {
    let coins_per_class = coins_per_class.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut photos = Vec::with_capacity(per_class * 6);
    for class in 0..6 {
        let mut label = CoinLabel::from_class6(class).expect("class index in range");
        for i in 0..per_class {
            let coin = i % coins_per_class;
            label.style = (coin % label.denomination.style_count() as usize) as u8 + 1;
            let shot = Shot::random(RAW_WIDTH, RAW_HEIGHT, &mut rng);
            let image = render_coin(RAW_WIDTH, RAW_HEIGHT, &label, &shot, rng.random());
            photos.push(SyntheticPhoto { label, coin, shot_index: i / coins_per_class, shot, image });
        }
    }
    photos
}

/// Writes photographs as `root/<denomination>/<side>/<style>/<stem>.ppm`.
pub fn write_photo_tree(root: &Path, photos: &[SyntheticPhoto]) -> std::io::Result<()> {
    for photo in photos {
        let dir = root.join(photo.label.relative_dir());
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{}.ppm", photo.stem()));
        fs::write(path, crate::raster::encode_pnm(&photo.image))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_has_requested_contrast() {
        let img = render_disc(40, 40, &DiscSpec { cx: 20.0, cy: 20.0, radius: 10.0, fg: 200, bg: 10 }, 0.0, 0).unwrap();
        assert_eq!(img.get(20, 20, 0), 200);
        assert_eq!(img.get(0, 0, 0), 10);
        let edge = img.get(30, 20, 0);
        assert!(edge > 10 && edge < 200);
    }

    #[test]
    fn photos_are_deterministic_and_labelled() {
        let a = coin_photos(2, 2, 7);
        let b = coin_photos(2, 2, 7);
        assert_eq!(a.len(), 12);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.image, q.image);
        }
        let classes: Vec<usize> = a.iter().map(|p| p.label.class6()).collect();
        assert_eq!(classes, vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]);
        assert_eq!(a[0].image.channels(), 3);
    }
}
