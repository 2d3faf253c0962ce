//! The fixed Laplacian-of-Gaussian filter bank: kernel synthesis, the
//! non-trainable bank layer appended after the decoder, and frequency-response
//! analysis of the synthesized kernels.
//!
//! Each scale sigma contributes one band-pass subband; the passband center
//! falls at radial frequency sqrt(2)/sigma, so smaller scales pass higher
//! spatial frequencies.

use crate::activation::Activation;
use crate::conv::{ConvLayer, Padding, Stride};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::Volume;

/// Kernel side for a scale: ceil(8*sigma), bumped to the next odd number.
pub fn kernel_size(sigma: f64) -> Result<usize> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("scale must be positive, got {sigma}")));
    }
    let k = (8.0 * sigma).ceil() as usize;
    Ok(if k % 2 == 0 { k + 1 } else { k })
}

/// The normalized Laplacian of Gaussian sigma^2 * laplacian(g) at (x, y):
/// -(2 - (x^2+y^2)/sigma^2) * g(x, y) with g the Gaussian of scale sigma.
pub fn normalized_log(sigma: f64, x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    let s2 = sigma * sigma;
    let g = (-r2 / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2);
    -(2.0 - r2 / s2) * g
}

/// A sampled, DC-corrected LoG kernel. Coefficients are kept in f64 so the
/// zero-sum property holds to full double precision; they are narrowed to the
/// working scalar only when embedded in a convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LogKernel {
    side: usize,
    coeffs: Vec<f64>,
}

impl LogKernel {
    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn half_size(&self) -> usize {
        self.side / 2
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient at integer offsets (alpha, beta) from the center.
    #[inline]
    pub fn at(&self, alpha: isize, beta: isize) -> f64 {
        let s = self.half_size() as isize;
        debug_assert!(alpha.abs() <= s && beta.abs() <= s);
        self.coeffs[((beta + s) as usize) * self.side + (alpha + s) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.coeffs.iter().sum()
    }
}

/// Sample the normalized LoG on an odd grid and subtract the mean so the
/// discrete kernel rejects constants exactly (the analytic function
/// integrates to zero but its truncated samples do not).
pub fn make_log_kernel(sigma: f64) -> Result<LogKernel> {
    let side = kernel_size(sigma)?;
    let s = (side / 2) as isize;
    let mut coeffs = Vec::with_capacity(side * side);
    for beta in -s..=s {
        for alpha in -s..=s {
            coeffs.push(normalized_log(sigma, alpha as f64, beta as f64));
        }
    }
    let mean = coeffs.iter().sum::<f64>() / coeffs.len() as f64;
    for c in &mut coeffs {
        *c -= mean;
    }
    Ok(LogKernel { side, coeffs })
}

/// The fixed filter-bank layer: one output channel per scale, the same 2-D
/// kernel replicated across every image channel, all kernels zero-padded to
/// the largest side so one convolution pass evaluates the whole bank.
#[derive(Debug, Clone)]
pub struct LoGBank<F> {
    scales: Vec<f64>,
    kernels: Vec<LogKernel>,
    subband_weights: Vec<F>,
    layer: ConvLayer<F>,
}

impl<F: Real> LoGBank<F> {
    pub fn new(scales: &[f64], subband_weights: &[F], image_channels: usize) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::config("filter bank needs at least one scale"));
        }
        if scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("scales must be strictly increasing"));
        }
        if subband_weights.len() != scales.len() {
            return Err(Error::config(format!(
                "{} subband weights for {} scales",
                subband_weights.len(),
                scales.len()
            )));
        }
        if subband_weights.iter().any(|w| !(*w > F::zero())) {
            return Err(Error::config("subband weights must be strictly positive"));
        }
        if image_channels == 0 {
            return Err(Error::config("image channel count must be positive"));
        }

        let kernels: Vec<LogKernel> = scales
            .iter()
            .map(|&s| make_log_kernel(s))
            .collect::<Result<_>>()?;
        let max_side = kernels.iter().map(LogKernel::side).max().unwrap();
        let half = max_side / 2;

        // edge-replicate padding keeps the zero-sum kernels exactly
        // constant-rejecting out to the image border
        let mut layer = ConvLayer::new(
            image_channels,
            scales.len(),
            half,
            Stride::One,
            Activation::Identity,
            false,
        )
        .with_padding(Padding::Clamp);
        for (band, kernel) in kernels.iter().enumerate() {
            let ks = kernel.half_size() as isize;
            for ci in 0..image_channels {
                for beta in -ks..=ks {
                    for alpha in -ks..=ks {
                        let idx = layer.weight_index(band, ci, alpha, beta);
                        layer.weights_mut()[idx] = F::from_f64(kernel.at(alpha, beta));
                    }
                }
            }
        }

        Ok(LoGBank {
            scales: scales.to_vec(),
            kernels,
            subband_weights: subband_weights.to_vec(),
            layer,
        })
    }

    #[inline]
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    #[inline]
    pub fn bands(&self) -> usize {
        self.scales.len()
    }

    #[inline]
    pub fn kernels(&self) -> &[LogKernel] {
        &self.kernels
    }

    #[inline]
    pub fn subband_weights(&self) -> &[F] {
        &self.subband_weights
    }

    #[inline]
    pub fn layer(&self) -> &ConvLayer<F> {
        &self.layer
    }

    /// Apply the bank: one output channel per subband, same spatial size as
    /// the image (identity activation and zero bias, so pre equals out).
    pub fn forward(&self, image: &Volume<F>) -> Result<Volume<F>> {
        let (_, out) = self.layer.forward(image)?;
        Ok(out)
    }

    /// Magnitude of the 2-D DFT of one scale's kernel on an fft_size grid,
    /// DC at the raster center.
    pub fn frequency_response(
        &self,
        scale_index: usize,
        fft_size: usize,
    ) -> Result<FrequencyResponse> {
        let kernel = self
            .kernels
            .get(scale_index)
            .ok_or_else(|| Error::config(format!("no scale at index {scale_index}")))?;
        if fft_size < kernel.side() {
            return Err(Error::config(format!(
                "fft size {} smaller than kernel side {}",
                fft_size,
                kernel.side()
            )));
        }
        Ok(FrequencyResponse::of_kernel(kernel, fft_size))
    }
}

/// A centered 2-D DFT magnitude raster.
#[derive(Debug, Clone)]
pub struct FrequencyResponse {
    size: usize,
    mag: Vec<f64>,
}

impl FrequencyResponse {
    /// Direct DFT over the kernel's small support, evaluated separably.
    /// Magnitudes are phase-free, so the kernel's placement in the padded
    /// frame is irrelevant.
    fn of_kernel(kernel: &LogKernel, n: usize) -> Self {
        let s = kernel.half_size() as isize;
        let side = kernel.side();
        let ni = n as isize;
        let half = ni / 2;
        let step = -2.0 * std::f64::consts::PI / n as f64;

        // partial(alpha, v) = sum_beta k(alpha, beta) * e^{i*step*v*beta}
        let mut partial = vec![(0.0f64, 0.0f64); side * n];
        for (ai, alpha) in (-s..=s).enumerate() {
            for iv in 0..n {
                let v = (iv as isize - half) as f64;
                let (mut re, mut im) = (0.0, 0.0);
                for beta in -s..=s {
                    let k = kernel.at(alpha, beta);
                    let phase = step * v * beta as f64;
                    re += k * phase.cos();
                    im += k * phase.sin();
                }
                partial[ai * n + iv] = (re, im);
            }
        }

        let mut mag = vec![0.0f64; n * n];
        for iv in 0..n {
            for iu in 0..n {
                let u = (iu as isize - half) as f64;
                let (mut re, mut im) = (0.0, 0.0);
                for (ai, alpha) in (-s..=s).enumerate() {
                    let (pre, pim) = partial[ai * n + iv];
                    let phase = step * u * alpha as f64;
                    let (c, sn) = (phase.cos(), phase.sin());
                    re += pre * c - pim * sn;
                    im += pre * sn + pim * c;
                }
                mag[iv * n + iu] = (re * re + im * im).sqrt();
            }
        }
        FrequencyResponse { size: n, mag }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn magnitudes(&self) -> &[f64] {
        &self.mag
    }

    /// Magnitude at signed frequencies (u, v), each in [-n/2, n/2).
    #[inline]
    pub fn at(&self, u: isize, v: isize) -> f64 {
        let half = (self.size / 2) as isize;
        debug_assert!(u >= -half && u < half && v >= -half && v < half);
        self.mag[((v + half) as usize) * self.size + (u + half) as usize]
    }

    /// Magnitude of the DC bin.
    pub fn dc(&self) -> f64 {
        self.at(0, 0)
    }

    /// Radial distance (in bins) of the maximum-magnitude bin from DC.
    pub fn peak_radial_frequency(&self) -> f64 {
        let half = (self.size / 2) as isize;
        let mut best = (0.0f64, 0.0f64);
        for v in -half..half {
            for u in -half..half {
                let m = self.at(u, v);
                if m > best.0 {
                    best = (m, ((u * u + v * v) as f64).sqrt());
                }
            }
        }
        best.1
    }

    /// 8-bit raster of the power spectrum, normalized to [0, 255].
    pub fn to_power_raster(&self) -> Vec<u8> {
        let max = self.mag.iter().fold(0.0f64, |a, &m| a.max(m * m));
        if max == 0.0 {
            return vec![0; self.mag.len()];
        }
        self.mag
            .iter()
            .map(|&m| ((m * m) / max * 255.0).round() as u8)
            .collect()
    }
}

/// Square the values and quantize to `levels` uniform gray levels in [0, 255]
/// (the filter-bank output visualization). A response whose squared maximum
/// falls below 1e-10 is rendered all-dark: constant-rejection leaves only
/// rounding noise there, and normalizing would amplify it to full scale.
pub fn square_and_quantize<F: Real>(values: &[F], levels: usize) -> Vec<u8> {
    assert!(levels >= 2);
    let squared: Vec<f64> = values.iter().map(|v| v.into_f64() * v.into_f64()).collect();
    let max = squared.iter().fold(0.0f64, |a, &s| a.max(s));
    if max <= 1e-10 {
        return vec![0; squared.len()];
    }
    let top = (levels - 1) as f64;
    squared
        .iter()
        .map(|&s| {
            let level = (s / max * top).round();
            (level * 255.0 / top).round() as u8
        })
        .collect()
}
