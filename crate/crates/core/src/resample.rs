//! Bilinear resampling with half-pixel-center alignment, and its adjoint.
//!
//! This is the single resampling definition in the codebase: the decoder's
//! fractional stride and the dataset resize both go through [`bilinear_resize`].

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::Volume;

/// One output coordinate's two source taps and the weight of the second tap.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

/// Half-pixel-center mapping: source coordinate (x' + 0.5) * src/dst - 0.5,
/// clamped to the valid range so border samples repeat the edge.
fn taps(src_len: usize, dst_len: usize) -> Vec<Tap> {
    (0..dst_len)
        .map(|i| {
            let s = (i as f64 + 0.5) * (src_len as f64) / (dst_len as f64) - 0.5;
            let s = s.clamp(0.0, (src_len - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            Tap {
                lo,
                hi,
                frac: s - lo as f64,
            }
        })
        .collect()
}

/// Resample to an arbitrary target size (enlarging or shrinking).
pub fn bilinear_resize<F: Real>(v: &Volume<F>, target_w: usize, target_h: usize) -> Volume<F> {
    assert!(target_w > 0 && target_h > 0, "empty resize target");
    let (w, h) = v.spatial();
    if (w, h) == (target_w, target_h) {
        return v.clone();
    }
    let tx = taps(w, target_w);
    let ty = taps(h, target_h);
    let mut out = Volume::zeros(v.channels(), target_w, target_h);
    for c in 0..v.channels() {
        let src = v.channel(c);
        let dst = out.channel_mut(c);
        for (yi, ty) in ty.iter().enumerate() {
            let row_lo = &src[ty.lo * w..ty.lo * w + w];
            let row_hi = &src[ty.hi * w..ty.hi * w + w];
            let wy = F::from_f64(ty.frac);
            let one = F::one();
            for (xi, tx) in tx.iter().enumerate() {
                let wx = F::from_f64(tx.frac);
                let top = row_lo[tx.lo] * (one - wx) + row_lo[tx.hi] * wx;
                let bot = row_hi[tx.lo] * (one - wx) + row_hi[tx.hi] * wx;
                dst[yi * target_w + xi] = top * (one - wy) + bot * wy;
            }
        }
    }
    out
}

/// Upsample to a target at least as large as the source.
pub fn bilinear_upsample<F: Real>(
    v: &Volume<F>,
    target_w: usize,
    target_h: usize,
) -> Result<Volume<F>> {
    let (w, h) = v.spatial();
    if target_w < w || target_h < h {
        return Err(Error::config(format!(
            "upsample target {}x{} smaller than source {}x{}",
            target_w, target_h, w, h
        )));
    }
    Ok(bilinear_resize(v, target_w, target_h))
}

/// Transpose of [`bilinear_upsample`]: scatters each output-side gradient to
/// its four source taps with the interpolation weights, so that
/// `<upsample(x), y> == <x, adjoint(y)>` for all x, y.
pub fn bilinear_upsample_adjoint<F: Real>(
    grad: &Volume<F>,
    source_w: usize,
    source_h: usize,
) -> Result<Volume<F>> {
    let (gw, gh) = grad.spatial();
    if gw < source_w || gh < source_h {
        return Err(Error::config(format!(
            "adjoint source {}x{} larger than gradient {}x{}",
            source_w, source_h, gw, gh
        )));
    }
    if (gw, gh) == (source_w, source_h) {
        return Ok(grad.clone());
    }
    let tx = taps(source_w, gw);
    let ty = taps(source_h, gh);
    let mut out = Volume::zeros(grad.channels(), source_w, source_h);
    for c in 0..grad.channels() {
        let g = grad.channel(c);
        let dst = out.channel_mut(c);
        let one = F::one();
        for (yi, ty) in ty.iter().enumerate() {
            let wy = F::from_f64(ty.frac);
            for (xi, tx) in tx.iter().enumerate() {
                let wx = F::from_f64(tx.frac);
                let gv = g[yi * gw + xi];
                dst[ty.lo * source_w + tx.lo] += gv * (one - wx) * (one - wy);
                dst[ty.lo * source_w + tx.hi] += gv * wx * (one - wy);
                dst[ty.hi * source_w + tx.lo] += gv * (one - wx) * wy;
                dst[ty.hi * source_w + tx.hi] += gv * wx * wy;
            }
        }
    }
    Ok(out)
}
