//! Raster I/O (binary PPM/PGM) and the pixel-value mappings used by the
//! engine: 8-bit values to reals, reals to the [-1, 1] training range, and
//! the larger-side resize rule for dataset preparation.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::resample::bilinear_resize;
use crate::scalar::Real;
use crate::volume::Volume;

/// Load a binary PPM (P6) or PGM (P5) file with maxval 255 into a 3-channel
/// volume of reals in [0, 255]. Grayscale inputs are replicated across the
/// three channels.
pub fn load_image<F: Real>(path: impl AsRef<Path>) -> Result<Volume<F>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_netpbm(path, &bytes)
}

fn parse_netpbm<F: Real>(path: &Path, bytes: &[u8]) -> Result<Volume<F>> {
    let mut pos = 0usize;

    let magic = next_token(bytes, &mut pos)
        .ok_or_else(|| Error::format(path, "missing magic number"))?;
    let samples_per_pixel = match magic.as_str() {
        "P6" => 3usize,
        "P5" => 1usize,
        other => {
            return Err(Error::format(
                path,
                format!("unsupported raster format {other:?} (expected binary PPM or PGM)"),
            ))
        }
    };

    let mut dims = [0usize; 3];
    for d in &mut dims {
        let tok = next_token(bytes, &mut pos)
            .ok_or_else(|| Error::format(path, "truncated header"))?;
        *d = tok
            .parse()
            .map_err(|_| Error::format(path, format!("bad header field {tok:?}")))?;
    }
    let [width, height, maxval] = dims;
    if width == 0 || height == 0 {
        return Err(Error::format(path, "zero-size image"));
    }
    if maxval != 255 {
        return Err(Error::format(path, format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the pixel data
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format(path, "missing pixel-data separator"));
    }
    pos += 1;

    let expected = width * height * samples_per_pixel;
    let pixels = &bytes[pos..];
    if pixels.len() < expected {
        return Err(Error::format(
            path,
            format!("truncated pixel data: {} of {} bytes", pixels.len(), expected),
        ));
    }

    let mut volume = Volume::zeros(3, width, height);
    for y in 0..height {
        for x in 0..width {
            let base = (y * width + x) * samples_per_pixel;
            for c in 0..3 {
                let sample = pixels[base + c.min(samples_per_pixel - 1)];
                *volume.at_mut(c, x, y) = F::from_f64(sample as f64);
            }
        }
    }
    Ok(volume)
}

/// A whitespace-delimited header token; `#` starts a comment to end of line.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
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
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Some(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Write a 3-channel volume of reals in [0, 255] as binary PPM, clamping and
/// rounding to 8 bits (the inverse of [`load_image`]'s mapping).
pub fn save_image<F: Real>(volume: &Volume<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if volume.channels() != 3 {
        return Err(Error::config(format!(
            "PPM output needs 3 channels, volume has {}",
            volume.channels()
        )));
    }
    let (w, h) = volume.spatial();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.push(to_byte(volume.at(c, x, y)));
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write an 8-bit grayscale raster as binary PGM.
pub fn save_gray_image(data: &[u8], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if data.len() != width * height {
        return Err(Error::config(format!(
            "raster length {} does not match {}x{}",
            data.len(),
            width,
            height
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[inline]
fn to_byte<F: Real>(v: F) -> u8 {
    let x = v.into_f64().clamp(0.0, 255.0);
    x.round() as u8
}

/// Map 8-bit pixel values to the training range: p/127.5 - 1, so 0 -> -1 and
/// 255 -> 1.
pub fn scale_to_unit<F: Real>(v: &Volume<F>) -> Volume<F> {
    let half = F::from_f64(127.5);
    let one = F::one();
    v.map(|p| p / half - one)
}

/// Inverse of [`scale_to_unit`]: clamp to [-1, 1], map back to [0, 255] and
/// round half away from zero to the 8-bit lattice.
pub fn unscale<F: Real>(v: &Volume<F>) -> Volume<F> {
    let half = F::from_f64(127.5);
    let one = F::one();
    v.map(|p| {
        let clamped = if p < -one {
            -one
        } else if p > one {
            one
        } else {
            p
        };
        ((clamped + one) * half).round()
    })
}

/// Resize so the larger spatial side equals `target`; the other side follows
/// the aspect ratio, rounded, with a minimum of 1.
pub fn resize_larger_side<F: Real>(v: &Volume<F>, target: usize) -> Volume<F> {
    assert!(target >= 1);
    let (w, h) = v.spatial();
    let (tw, th) = if w >= h {
        let th = ((target as f64 * h as f64 / w as f64).round() as usize).max(1);
        (target, th)
    } else {
        let tw = ((target as f64 * w as f64 / h as f64).round() as usize).max(1);
        (tw, target)
    };
    bilinear_resize(v, tw, th)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn ppm_round_trip_preserves_every_byte() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.ppm");
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut v = Volume::<f32>::zeros(3, 7, 5);
        for x in v.data_mut() {
            *x = rng.random_range(0..=255u8) as f32;
        }
        save_image(&v, &path).unwrap();
        let loaded: Volume<f32> = load_image(&path).unwrap();
        assert_eq!(loaded.data(), v.data());
    }

    #[test]
    fn grayscale_is_replicated_to_three_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.pgm");
        let data: Vec<u8> = (0..12).map(|i| (i * 20) as u8).collect();
        save_gray_image(&data, 4, 3, &path).unwrap();
        let v: Volume<f64> = load_image(&path).unwrap();
        assert_eq!(v.shape(), (3, 4, 3));
        for y in 0..3 {
            for x in 0..4 {
                let g = v.at(0, x, y);
                assert_eq!(v.at(1, x, y), g);
                assert_eq!(v.at(2, x, y), g);
                assert_eq!(g, data[y * 4 + x] as f64);
            }
        }
    }

    #[test]
    fn full_white_single_pixel_scales_to_one() {
        let v = Volume::from_vec(3, 1, 1, vec![255.0f64; 3]).unwrap();
        let scaled = scale_to_unit(&v);
        assert!(scaled.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn scaling_endpoints() {
        let v = Volume::from_vec(1, 3, 1, vec![0.0f64, 127.5, 255.0]).unwrap();
        let s = scale_to_unit(&v);
        assert_eq!(s.data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn unscale_inverts_scale_on_the_8_bit_lattice() {
        let values: Vec<f32> = (0..=255).map(|p| p as f32).collect();
        let v = Volume::from_vec(1, 256, 1, values.clone()).unwrap();
        let back = unscale(&scale_to_unit(&v));
        assert_eq!(back.data(), &values[..]);
    }

    #[test]
    fn unscale_clamps_out_of_range_values() {
        let v = Volume::from_vec(1, 2, 1, vec![1.7f64, -2.3]).unwrap();
        let u = unscale(&v);
        assert_eq!(u.data(), &[255.0, 0.0]);
    }

    #[test]
    fn larger_side_rule() {
        let v = Volume::<f32>::zeros(3, 600, 400);
        assert_eq!(resize_larger_side(&v, 300).spatial(), (300, 200));

        let already = Volume::<f32>::zeros(3, 300, 225);
        let r = resize_larger_side(&already, 300);
        assert_eq!(r.spatial(), (300, 225));
        assert_eq!(r.data(), already.data()); // fixed point, untouched

        let small = Volume::<f32>::zeros(3, 100, 50);
        assert_eq!(resize_larger_side(&small, 300).spatial(), (300, 150));

        let tall = Volume::<f32>::zeros(3, 50, 100);
        assert_eq!(resize_larger_side(&tall, 300).spatial(), (150, 300));
    }

    #[test]
    fn comments_in_headers_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("comment.ppm");
        let mut bytes = b"P6\n# a comment\n2 1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20, 30, 40, 50, 60]);
        std::fs::write(&path, bytes).unwrap();
        let v: Volume<f64> = load_image(&path).unwrap();
        assert_eq!(v.shape(), (3, 2, 1));
        assert_eq!(v.at(0, 0, 0), 10.0);
        assert_eq!(v.at(2, 1, 0), 60.0);
    }

    #[test]
    fn malformed_files_are_reported_with_the_path() {
        let dir = tempfile::tempdir().unwrap();

        let missing = dir.path().join("nope.ppm");
        assert!(matches!(
            load_image::<f32>(&missing),
            Err(Error::Io { .. })
        ));

        let bad_magic = dir.path().join("bad.ppm");
        std::fs::write(&bad_magic, b"P3\n1 1\n255\n1 2 3\n").unwrap();
        assert!(matches!(
            load_image::<f32>(&bad_magic),
            Err(Error::Format { .. })
        ));

        let truncated = dir.path().join("short.ppm");
        std::fs::write(&truncated, b"P6\n4 4\n255\nxx").unwrap();
        assert!(matches!(
            load_image::<f32>(&truncated),
            Err(Error::Format { .. })
        ));

        let zero = dir.path().join("zero.ppm");
        std::fs::write(&zero, b"P6\n0 4\n255\n").unwrap();
        assert!(matches!(load_image::<f32>(&zero), Err(Error::Format { .. })));
    }
}
