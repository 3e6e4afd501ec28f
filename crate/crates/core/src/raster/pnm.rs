//! Binary Netpbm interchange: P5 (gray) and P6 (RGB), maxval 255.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Raster, RasterError, Result};

/// Serializes to P5 when gray, P6 when RGB. The header is always
/// `P5\n<w> <h>\n255\n`, so equal rasters encode to equal bytes.
pub fn encode_pnm(img: &Raster) -> Vec<u8> {
    let magic = if img.is_gray() { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Raster> {
    let mut cursor = Header { bytes, pos: 0 };
    let channels = match cursor.token()? {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(RasterError::Pnm(format!("unsupported magic {:?}", String::from_utf8_lossy(other)))),
    };
    let width = cursor.number()?;
    let height = cursor.number()?;
    let maxval = cursor.number()?;
    if maxval != 255 {
        return Err(RasterError::Pnm(format!("maxval {maxval} unsupported")));
    }
    // exactly one whitespace byte separates the header from the samples
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(RasterError::Pnm("missing whitespace after maxval".into())),
    }
    let expected = width * height * channels;
    let body = &bytes[cursor.pos..];
    if body.len() < expected {
        return Err(RasterError::Pnm(format!("truncated pixel data: {} of {expected} bytes", body.len())));
    }
    Raster::new(width, height, channels, body[..expected].to_vec())
}

pub fn write_pnm(img: &Raster, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_pnm(img))?;
    Ok(())
}

pub fn read_pnm(path: &Path) -> Result<Raster> {
    decode_pnm(&fs::read(path)?)
}

/// Reads PGM/PPM natively and PNG/JPEG through the `image` crate.
pub fn read_image(path: &Path) -> Result<Raster> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).unwrap_or_default();
    match ext.as_str() {
        "pgm" | "ppm" | "pnm" => read_pnm(path),
        _ => {
            let decoded = image::open(path).map_err(|e| RasterError::Decode(e.to_string()))?;
            let rgb = decoded.to_rgb8();
            let (w, h) = rgb.dimensions();
            Raster::new(w as usize, h as usize, 3, rgb.into_raw())
        }
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
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

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(RasterError::Pnm("unexpected end of header".into()));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::Pnm(format!("bad number {:?}", String::from_utf8_lossy(tok))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn p5_header_is_canonical() {
        let img = Raster::new(3, 2, 1, vec![0, 1, 2, 3, 4, 255]).unwrap();
        let bytes = encode_pnm(&img);
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 1, 2, 3, 4, 255]);
    }

    #[test]
    fn decodes_comments_and_p6() {
        let mut bytes = b"P6 # rgb\n# another\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (2, 1, 3));
        assert_eq!(img.data(), &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode_pnm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pnm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pnm(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(decode_pnm(b"P5\n1").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        let img = Raster::new(2, 2, 3, (0..12).collect()).unwrap();
        write_pnm(&img, &path).unwrap();
        assert_eq!(read_pnm(&path).unwrap(), img);
        assert_eq!(read_image(&path).unwrap(), img);
    }

    proptest! {
        #[test]
        fn encode_decode_identity(w in 1usize..16, h in 1usize..16, color in any::<bool>(), seed in any::<u64>()) {
            let c = if color { 3 } else { 1 };
            let data = (0..w * h * c).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8).collect();
            let img = Raster::new(w, h, c, data).unwrap();
            prop_assert_eq!(decode_pnm(&encode_pnm(&img)).unwrap(), img);
        }
    }
}
