//! Binary PGM (P5, maxval 255) and PPM (P6) interchange.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{GrayImage, Mask};

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.as_slice().iter().map(|&v| quantize(v)));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::MalformedPgm(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_number(next_token(bytes, &mut pos)?)?;
    let height = parse_number(next_token(bytes, &mut pos)?)?;
    let maxval = parse_number(next_token(bytes, &mut pos)?)?;
    if maxval != 255 {
        return Err(Error::MalformedPgm(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedPgm("missing raster".into()));
    }
    pos += 1;
    let n = width * height;
    let body = &bytes[pos..];
    if body.len() < n {
        return Err(Error::MalformedPgm(format!(
            "truncated raster: {} of {n} bytes",
            body.len()
        )));
    }
    let data = body[..n].iter().map(|&b| f64::from(b) / 255.0).collect();
    GrayImage::from_vec(height, width, data)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedPgm("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_number(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedPgm(format!("bad number {:?}", String::from_utf8_lossy(tok))))
}

pub fn save_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(image))?;
    Ok(())
}

pub fn save_mask_pgm(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    save_pgm(&mask.to_image(), path)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_pgm(&fs::read(path)?)
}

/// Loads a PGM and checks its dimensions.
pub fn load_pgm_sized(path: impl AsRef<Path>, height: usize, width: usize) -> Result<GrayImage> {
    let img = load_pgm(path)?;
    if img.shape() != (height, width) {
        return Err(Error::ShapeMismatch {
            expected: vec![height, width],
            actual: vec![img.height(), img.width()],
        });
    }
    Ok(img)
}

/// RGB raster, `rgb.len() == 3 * height * width`.
pub fn encode_ppm(height: usize, width: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_body_is_sixteen_zero_bytes() {
        let bytes = encode_pgm(&GrayImage::new(4, 4));
        let header = b"P5\n4 4\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0u8; 16]);
    }

    #[test]
    fn truncated_file_is_malformed() {
        let mut bytes = encode_pgm(&GrayImage::filled(4, 4, 0.5));
        bytes.truncate(bytes.len() - 3);
        let err = decode_pgm(&bytes).unwrap_err();
        assert!(err.to_string().contains("malformed PGM"), "{err}");
        assert!(decode_pgm(b"P5\n4").unwrap_err().to_string().contains("malformed PGM"));
    }

    #[test]
    fn header_comments_are_skipped() {
        let img = decode_pgm(b"P5\n# made by hand\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(img.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        save_pgm(&GrayImage::new(3, 5), &p).unwrap();
        assert!(matches!(load_pgm_sized(&p, 5, 3), Err(Error::ShapeMismatch { .. })));
        assert!(load_pgm_sized(&p, 3, 5).is_ok());
    }

    proptest! {
        #[test]
        fn round_trip_within_quantization(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            use rand::Rng as _;
            let mut rng = crate::rng::rng_from_seed(seed);
            let img = GrayImage::from_fn(h, w, |_, _| rng.random::<f64>());
            let back = decode_pgm(&encode_pgm(&img)).unwrap();
            prop_assert_eq!(back.shape(), img.shape());
            for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
                prop_assert!((a - b).abs() <= 1.0 / 255.0);
            }
            // quantized values are a fixed point
            prop_assert_eq!(decode_pgm(&encode_pgm(&back)).unwrap(), back);
        }
    }
}
