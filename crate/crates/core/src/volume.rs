//! The volume container: a C x W x H stack of 2-D feature maps.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A channel-major stack of feature maps.
///
/// The value at `(c, x, y)` — channel `c`, column `x`, row `y` — lives at
/// `c*W*H + y*W + x`, so rows are contiguous within a channel. Layer 1 holds
/// image pixels scaled to `[-1, 1]`; deeper layers hold feature activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<F> {
    channels: usize,
    width: usize,
    height: usize,
    data: Vec<F>,
}

impl<F: Real> Volume<F> {
    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        assert!(channels > 0 && width > 0 && height > 0, "empty volume");
        Volume {
            channels,
            width,
            height,
            data: vec![F::zero(); channels * width * height],
        }
    }

    pub fn filled(channels: usize, width: usize, height: usize, value: F) -> Self {
        let mut v = Self::zeros(channels, width, height);
        v.data.fill(value);
        v
    }

    pub fn from_vec(channels: usize, width: usize, height: usize, data: Vec<F>) -> Result<Self> {
        if channels == 0 || width == 0 || height == 0 {
            return Err(Error::config("volume dimensions must be positive"));
        }
        if data.len() != channels * width * height {
            return Err(Error::config(format!(
                "volume data length {} does not match {}x{}x{}",
                data.len(),
                channels,
                width,
                height
            )));
        }
        Ok(Volume {
            channels,
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// (channels, width, height)
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.width, self.height)
    }

    /// (width, height)
    #[inline]
    pub fn spatial(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    #[inline]
    pub fn index(&self, c: usize, x: usize, y: usize) -> usize {
        debug_assert!(c < self.channels && x < self.width && y < self.height);
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn at(&self, c: usize, x: usize, y: usize) -> F {
        self.data[self.index(c, x, y)]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, x: usize, y: usize) -> &mut F {
        let i = self.index(c, x, y);
        &mut self.data[i]
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// The contiguous W*H slice of one channel.
    #[inline]
    pub fn channel(&self, c: usize) -> &[F] {
        let wh = self.width * self.height;
        &self.data[c * wh..(c + 1) * wh]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [F] {
        let wh = self.width * self.height;
        &mut self.data[c * wh..(c + 1) * wh]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Volume<F> {
        Volume {
            channels: self.channels,
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Change scalar precision, rounding through f64.
    pub fn convert<G: Real>(&self) -> Volume<G> {
        Volume {
            channels: self.channels,
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| G::from_f64(v.into_f64())).collect(),
        }
    }

    /// Inner product, accumulated in f64; used by the adjointness checks.
    pub fn dot(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other), "dot on mismatched shapes");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| a.into_f64() * b.into_f64())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_bijective() {
        let mut v = Volume::<f32>::zeros(2, 3, 4);
        let mut counter = 0.0f32;
        for c in 0..2 {
            for x in 0..3 {
                for y in 0..4 {
                    *v.at_mut(c, x, y) = counter;
                    counter += 1.0;
                }
            }
        }
        // every slot written exactly once, so all 24 values are distinct
        let mut seen: Vec<f32> = v.data().to_vec();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        assert_eq!(seen.len(), 24);
        assert_eq!(v.at(1, 2, 3), 23.0);
    }

    #[test]
    fn rows_are_contiguous_within_a_channel() {
        let mut v = Volume::<f32>::zeros(1, 4, 2);
        *v.at_mut(0, 0, 1) = 7.0;
        *v.at_mut(0, 3, 1) = 9.0;
        assert_eq!(v.data()[4], 7.0); // (x=0, y=1) starts the second row
        assert_eq!(v.data()[7], 9.0);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Volume::<f32>::from_vec(1, 2, 2, vec![0.0; 3]).is_err());
        assert!(Volume::<f32>::from_vec(1, 2, 2, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn finiteness_check() {
        let mut v = Volume::<f64>::zeros(1, 2, 2);
        assert!(v.is_finite());
        *v.at_mut(0, 1, 1) = f64::NAN;
        assert!(!v.is_finite());
    }
}
