//! Convolution layers: forward pass, and the hand-derived backward pass that
//! produces input, weight and bias gradients.
//!
//! All spatial work is done with zero padding so a stride-1 layer preserves
//! the input size ("same" convolution). Stride 2 keeps every other sample,
//! centered on even 0-based input coordinates, giving a ceil(W/2) x ceil(H/2)
//! output. Stride "half" upsamples bilinearly first and then convolves at
//! stride 1, which is how the decoder doubles resolution.

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::resample::{bilinear_resize, bilinear_upsample_adjoint};
use crate::scalar::Real;
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stride {
    One,
    Two,
    Half,
}

/// Border handling for stride-1 convolutions.
///
/// Trainable layers use zero padding. The fixed filter bank replicates edge
/// pixels instead, so its zero-sum kernels reject constant inputs exactly up
/// to the border; with zero padding a constant image would leak a nonzero
/// response wherever the kernel hangs off the edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero,
    Clamp,
}

/// A square-kernel convolution layer.
///
/// Weights are indexed `(c_out, c_in, alpha, beta)` with `beta` fastest;
/// `alpha` is the horizontal and `beta` the vertical offset from the kernel
/// center, both in `[-s, s]` for kernel side `2s+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<F> {
    in_channels: usize,
    out_channels: usize,
    half_size: usize,
    weights: Vec<F>,
    biases: Vec<F>,
    stride: Stride,
    activation: Activation,
    trainable: bool,
    padding: Padding,
}

/// Gradients returned by [`ConvLayer::backward`].
#[derive(Debug, Clone)]
pub struct ConvBackward<F> {
    pub grad_input: Volume<F>,
    pub grad_weights: Vec<F>,
    pub grad_biases: Vec<F>,
}

#[inline]
fn ceil_div(a: isize, b: isize) -> isize {
    (a + b - 1).div_euclid(b)
}

impl<F: Real> ConvLayer<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        half_size: usize,
        stride: Stride,
        activation: Activation,
        trainable: bool,
    ) -> Self {
        let k = 2 * half_size + 1;
        ConvLayer {
            in_channels,
            out_channels,
            half_size,
            weights: vec![F::zero(); out_channels * in_channels * k * k],
            biases: vec![F::zero(); out_channels],
            stride,
            activation,
            trainable,
            padding: Padding::Zero,
        }
    }

    /// Switch to edge-replicate padding. Only meaningful at stride 1.
    pub fn with_padding(mut self, padding: Padding) -> Self {
        assert!(
            padding == Padding::Zero || self.stride == Stride::One,
            "clamp padding is only supported at stride 1"
        );
        self.padding = padding;
        self
    }

    pub fn from_parts(
        in_channels: usize,
        out_channels: usize,
        half_size: usize,
        stride: Stride,
        activation: Activation,
        trainable: bool,
        weights: Vec<F>,
        biases: Vec<F>,
    ) -> Result<Self> {
        let k = 2 * half_size + 1;
        if weights.len() != out_channels * in_channels * k * k {
            return Err(Error::config(format!(
                "weight array length {} does not match {}x{}x{}x{}",
                weights.len(),
                out_channels,
                in_channels,
                k,
                k
            )));
        }
        if biases.len() != out_channels {
            return Err(Error::config(format!(
                "bias array length {} does not match {} output channels",
                biases.len(),
                out_channels
            )));
        }
        Ok(ConvLayer {
            in_channels,
            out_channels,
            half_size,
            weights,
            biases,
            stride,
            activation,
            trainable,
            padding: Padding::Zero,
        })
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    #[inline]
    pub fn half_size(&self) -> usize {
        self.half_size
    }

    /// Kernel side length 2s+1 (always odd).
    #[inline]
    pub fn kernel_side(&self) -> usize {
        2 * self.half_size + 1
    }

    #[inline]
    pub fn stride(&self) -> Stride {
        self.stride
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    pub fn trainable(&self) -> bool {
        self.trainable
    }

    #[inline]
    pub fn padding(&self) -> Padding {
        self.padding
    }

    #[inline]
    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [F] {
        &mut self.weights
    }

    #[inline]
    pub fn biases(&self) -> &[F] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [F] {
        &mut self.biases
    }

    /// Flat index of weight (c_out, c_in, alpha, beta).
    #[inline]
    pub fn weight_index(&self, c_out: usize, c_in: usize, alpha: isize, beta: isize) -> usize {
        let s = self.half_size as isize;
        debug_assert!(alpha.abs() <= s && beta.abs() <= s);
        let k = self.kernel_side();
        ((c_out * self.in_channels + c_in) * k + (alpha + s) as usize) * k + (beta + s) as usize
    }

    /// Output spatial size for a given input size (strides 1 and 2 only).
    pub fn output_spatial(&self, w: usize, h: usize) -> (usize, usize) {
        match self.stride {
            Stride::One => (w, h),
            Stride::Two => (w.div_ceil(2), h.div_ceil(2)),
            Stride::Half => (2 * w, 2 * h),
        }
    }

    /// Forward pass. Returns `(pre, out)` where `pre` holds the raw
    /// convolution sums and `out = activation(pre + bias)`.
    pub fn forward(&self, input: &Volume<F>) -> Result<(Volume<F>, Volume<F>)> {
        self.forward_to(input, None)
    }

    /// Forward pass with an explicit upsample target for stride-half layers
    /// (the decoder restores the exact size recorded by the encoder).
    pub fn forward_to(
        &self,
        input: &Volume<F>,
        upsample_target: Option<(usize, usize)>,
    ) -> Result<(Volume<F>, Volume<F>)> {
        if input.channels() != self.in_channels {
            return Err(Error::config(format!(
                "channel mismatch: layer expects {} input channels, got {}",
                self.in_channels,
                input.channels()
            )));
        }
        if !input.is_finite() {
            return Err(Error::numerical("non-finite values in convolution input"));
        }
        if upsample_target.is_some() && self.stride != Stride::Half {
            return Err(Error::config(
                "upsample target is only meaningful for stride-half layers",
            ));
        }

        let pre = match self.stride {
            Stride::One => match self.padding {
                Padding::Zero => self.convolve_stride1(input),
                Padding::Clamp => self.convolve_clamped(input),
            },
            Stride::Two => self.convolve_stride2(input),
            Stride::Half => {
                let (w, h) = input.spatial();
                let (tw, th) = upsample_target.unwrap_or((2 * w, 2 * h));
                if tw < w || th < h {
                    return Err(Error::config(format!(
                        "stride-half target {}x{} smaller than input {}x{}",
                        tw, th, w, h
                    )));
                }
                let up = bilinear_resize(input, tw, th);
                self.convolve_stride1(&up)
            }
        };
        let out = self.bias_and_activate(&pre);
        Ok((pre, out))
    }

    fn bias_and_activate(&self, pre: &Volume<F>) -> Volume<F> {
        let mut out = pre.clone();
        for c in 0..self.out_channels {
            let b = self.biases[c];
            for v in out.channel_mut(c) {
                *v = self.activation.apply(*v + b);
            }
        }
        out
    }

    fn convolve_stride1(&self, input: &Volume<F>) -> Volume<F> {
        let (w, h) = input.spatial();
        let (wi, hi) = (w as isize, h as isize);
        let s = self.half_size as isize;
        let mut pre = Volume::zeros(self.out_channels, w, h);
        for co in 0..self.out_channels {
            let dst = pre.channel_mut(co);
            for ci in 0..self.in_channels {
                let src = input.channel(ci);
                for beta in -s..=s {
                    let y0 = (-beta).max(0);
                    let y1 = (hi - beta).min(hi);
                    for alpha in -s..=s {
                        let wgt = self.weights[self.weight_index(co, ci, alpha, beta)];
                        if wgt.is_zero() {
                            continue;
                        }
                        let x0 = (-alpha).max(0);
                        let x1 = (wi - alpha).min(wi);
                        if x0 >= x1 {
                            continue;
                        }
                        for y in y0..y1 {
                            let drow = (y * wi + x0) as usize;
                            let srow = ((y + beta) * wi + x0 + alpha) as usize;
                            let n = (x1 - x0) as usize;
                            let d = &mut dst[drow..drow + n];
                            let sr = &src[srow..srow + n];
                            for i in 0..n {
                                d[i] += wgt * sr[i];
                            }
                        }
                    }
                }
            }
        }
        pre
    }

    fn convolve_stride2(&self, input: &Volume<F>) -> Volume<F> {
        let (w, h) = input.spatial();
        let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
        let (wi, hi) = (w as isize, h as isize);
        let (owi, ohi) = (ow as isize, oh as isize);
        let s = self.half_size as isize;
        let mut pre = Volume::zeros(self.out_channels, ow, oh);
        for co in 0..self.out_channels {
            let dst = pre.channel_mut(co);
            for ci in 0..self.in_channels {
                let src = input.channel(ci);
                for beta in -s..=s {
                    let oy0 = ceil_div(-beta, 2).max(0);
                    let oy1 = ((hi - 1 - beta).div_euclid(2) + 1).min(ohi);
                    for alpha in -s..=s {
                        let wgt = self.weights[self.weight_index(co, ci, alpha, beta)];
                        if wgt.is_zero() {
                            continue;
                        }
                        let ox0 = ceil_div(-alpha, 2).max(0);
                        let ox1 = ((wi - 1 - alpha).div_euclid(2) + 1).min(owi);
                        for oy in oy0..oy1 {
                            let y = 2 * oy + beta;
                            for ox in ox0..ox1 {
                                let x = 2 * ox + alpha;
                                dst[(oy * owi + ox) as usize] +=
                                    wgt * src[(y * wi + x) as usize];
                            }
                        }
                    }
                }
            }
        }
        pre
    }

    /// Gradient of the loss with respect to the layer input only (the
    /// transposed convolution). Used where weight gradients are not needed,
    /// e.g. backpropagating through the fixed filter bank.
    pub fn backward_input(
        &self,
        grad_pre: &Volume<F>,
        input_w: usize,
        input_h: usize,
    ) -> Result<Volume<F>> {
        self.check_grad_shape(grad_pre, input_w, input_h)?;
        match self.stride {
            Stride::One => match self.padding {
                Padding::Zero => Ok(self.grad_input_stride1(grad_pre, input_w, input_h)),
                Padding::Clamp => Ok(self.grad_input_clamped(grad_pre, input_w, input_h)),
            },
            Stride::Two => Ok(self.grad_input_stride2(grad_pre, input_w, input_h)),
            Stride::Half => {
                let (gw, gh) = grad_pre.spatial();
                let up_grad = self.grad_input_stride1(grad_pre, gw, gh);
                bilinear_upsample_adjoint(&up_grad, input_w, input_h)
            }
        }
    }

    /// Full backward pass. `grad_pre` must be the loss gradient with respect
    /// to this layer's pre-activation output (the activation derivative is
    /// applied by the caller).
    pub fn backward(&self, input: &Volume<F>, grad_pre: &Volume<F>) -> Result<ConvBackward<F>> {
        if input.channels() != self.in_channels {
            return Err(Error::config(format!(
                "channel mismatch: layer expects {} input channels, got {}",
                self.in_channels,
                input.channels()
            )));
        }
        let (w, h) = input.spatial();
        self.check_grad_shape(grad_pre, w, h)?;

        match self.stride {
            Stride::One if self.padding == Padding::Clamp => {
                let padded = self.replicate_pad(input);
                let grad_input = self.grad_input_clamped(grad_pre, w, h);
                let (grad_weights, grad_biases) = self.grad_params_valid(&padded, grad_pre);
                Ok(ConvBackward {
                    grad_input,
                    grad_weights,
                    grad_biases,
                })
            }
            Stride::One | Stride::Two => {
                let grad_input = match self.stride {
                    Stride::One => self.grad_input_stride1(grad_pre, w, h),
                    _ => self.grad_input_stride2(grad_pre, w, h),
                };
                let (grad_weights, grad_biases) = self.grad_params(input, grad_pre);
                Ok(ConvBackward {
                    grad_input,
                    grad_weights,
                    grad_biases,
                })
            }
            Stride::Half => {
                // Forward was upsample-then-convolve; the adjoint runs in
                // reverse. The upsampled input is recomputed here.
                let (tw, th) = grad_pre.spatial();
                let up = bilinear_resize(input, tw, th);
                let grad_up = self.grad_input_stride1(grad_pre, tw, th);
                let (grad_weights, grad_biases) = self.grad_params(&up, grad_pre);
                let grad_input = bilinear_upsample_adjoint(&grad_up, w, h)?;
                Ok(ConvBackward {
                    grad_input,
                    grad_weights,
                    grad_biases,
                })
            }
        }
    }

    fn check_grad_shape(&self, grad_pre: &Volume<F>, input_w: usize, input_h: usize) -> Result<()> {
        if grad_pre.channels() != self.out_channels {
            return Err(Error::config(format!(
                "gradient has {} channels, layer produces {}",
                grad_pre.channels(),
                self.out_channels
            )));
        }
        let ok = match self.stride {
            Stride::One => grad_pre.spatial() == (input_w, input_h),
            Stride::Two => grad_pre.spatial() == (input_w.div_ceil(2), input_h.div_ceil(2)),
            // any upsample target at least the input size is legal
            Stride::Half => {
                let (gw, gh) = grad_pre.spatial();
                gw >= input_w && gh >= input_h
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "gradient spatial size {:?} does not match layer output for {}x{} input",
                grad_pre.spatial(),
                input_w,
                input_h
            )))
        }
    }

    fn grad_input_stride1(&self, grad_pre: &Volume<F>, w: usize, h: usize) -> Volume<F> {
        let (wi, hi) = (w as isize, h as isize);
        let s = self.half_size as isize;
        let mut grad_in = Volume::zeros(self.in_channels, w, h);
        for co in 0..self.out_channels {
            let g = grad_pre.channel(co);
            for ci in 0..self.in_channels {
                let dst = grad_in.channel_mut(ci);
                for beta in -s..=s {
                    let y0 = (-beta).max(0);
                    let y1 = (hi - beta).min(hi);
                    for alpha in -s..=s {
                        let wgt = self.weights[self.weight_index(co, ci, alpha, beta)];
                        if wgt.is_zero() {
                            continue;
                        }
                        let x0 = (-alpha).max(0);
                        let x1 = (wi - alpha).min(wi);
                        if x0 >= x1 {
                            continue;
                        }
                        for y in y0..y1 {
                            let grow = (y * wi + x0) as usize;
                            let drow = ((y + beta) * wi + x0 + alpha) as usize;
                            let n = (x1 - x0) as usize;
                            let d = &mut dst[drow..drow + n];
                            let gr = &g[grow..grow + n];
                            for i in 0..n {
                                d[i] += wgt * gr[i];
                            }
                        }
                    }
                }
            }
        }
        grad_in
    }

    fn grad_input_stride2(&self, grad_pre: &Volume<F>, w: usize, h: usize) -> Volume<F> {
        let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
        let (wi, hi) = (w as isize, h as isize);
        let (owi, ohi) = (ow as isize, oh as isize);
        let s = self.half_size as isize;
        let mut grad_in = Volume::zeros(self.in_channels, w, h);
        for co in 0..self.out_channels {
            let g = grad_pre.channel(co);
            for ci in 0..self.in_channels {
                let dst = grad_in.channel_mut(ci);
                for beta in -s..=s {
                    let oy0 = ceil_div(-beta, 2).max(0);
                    let oy1 = ((hi - 1 - beta).div_euclid(2) + 1).min(ohi);
                    for alpha in -s..=s {
                        let wgt = self.weights[self.weight_index(co, ci, alpha, beta)];
                        if wgt.is_zero() {
                            continue;
                        }
                        let ox0 = ceil_div(-alpha, 2).max(0);
                        let ox1 = ((wi - 1 - alpha).div_euclid(2) + 1).min(owi);
                        for oy in oy0..oy1 {
                            let y = 2 * oy + beta;
                            for ox in ox0..ox1 {
                                let x = 2 * ox + alpha;
                                dst[(y * wi + x) as usize] +=
                                    wgt * g[(oy * owi + ox) as usize];
                            }
                        }
                    }
                }
            }
        }
        grad_in
    }

    /// Copy the input with `s` rows/columns of edge replication on each side.
    fn replicate_pad(&self, input: &Volume<F>) -> Volume<F> {
        let s = self.half_size;
        let (w, h) = input.spatial();
        let (pw, ph) = (w + 2 * s, h + 2 * s);
        let mut padded = Volume::zeros(input.channels(), pw, ph);
        for c in 0..input.channels() {
            let src = input.channel(c);
            let dst = padded.channel_mut(c);
            for py in 0..ph {
                let sy = py.saturating_sub(s).min(h - 1);
                let srow = &src[sy * w..sy * w + w];
                let drow = &mut dst[py * pw..(py + 1) * pw];
                drow[..s].fill(srow[0]);
                drow[s..s + w].copy_from_slice(srow);
                drow[s + w..].fill(srow[w - 1]);
            }
        }
        padded
    }

    /// Stride-1 convolution with edge-replicate borders: pad, then run a
    /// valid convolution back to the original size.
    fn convolve_clamped(&self, input: &Volume<F>) -> Volume<F> {
        let s = self.half_size as isize;
        let (w, h) = input.spatial();
        let padded = self.replicate_pad(input);
        let pw = w + 2 * self.half_size;
        let mut pre = Volume::zeros(self.out_channels, w, h);
        for co in 0..self.out_channels {
            let dst = pre.channel_mut(co);
            for ci in 0..self.in_channels {
                let src = padded.channel(ci);
                for beta in -s..=s {
                    for alpha in -s..=s {
                        let wgt = self.weights[self.weight_index(co, ci, alpha, beta)];
                        if wgt.is_zero() {
                            continue;
                        }
                        let dy = (beta + s) as usize;
                        let dx = (alpha + s) as usize;
                        for y in 0..h {
                            let drow = y * w;
                            let srow = (y + dy) * pw + dx;
                            let d = &mut dst[drow..drow + w];
                            let sr = &src[srow..srow + w];
                            for i in 0..w {
                                d[i] += wgt * sr[i];
                            }
                        }
                    }
                }
            }
        }
        pre
    }

    /// Input gradient under edge-replicate padding: scatter into padded
    /// coordinates, then fold each padded cell back onto the edge pixel it
    /// replicated (the exact adjoint of `replicate_pad`).
    fn grad_input_clamped(&self, grad_pre: &Volume<F>, w: usize, h: usize) -> Volume<F> {
        let s = self.half_size;
        let si = s as isize;
        let (pw, ph) = (w + 2 * s, h + 2 * s);
        let mut padded_grad = Volume::zeros(self.in_channels, pw, ph);
        for co in 0..self.out_channels {
            let g = grad_pre.channel(co);
            for ci in 0..self.in_channels {
                let dst = padded_grad.channel_mut(ci);
                for beta in -si..=si {
                    for alpha in -si..=si {
                        let wgt = self.weights[self.weight_index(co, ci, alpha, beta)];
                        if wgt.is_zero() {
                            continue;
                        }
                        let dy = (beta + si) as usize;
                        let dx = (alpha + si) as usize;
                        for y in 0..h {
                            let grow = y * w;
                            let drow = (y + dy) * pw + dx;
                            let d = &mut dst[drow..drow + w];
                            let gr = &g[grow..grow + w];
                            for i in 0..w {
                                d[i] += wgt * gr[i];
                            }
                        }
                    }
                }
            }
        }
        let mut grad_in = Volume::zeros(self.in_channels, w, h);
        for ci in 0..self.in_channels {
            let pg = padded_grad.channel(ci);
            let dst = grad_in.channel_mut(ci);
            for py in 0..ph {
                let sy = py.saturating_sub(s).min(h - 1);
                for px in 0..pw {
                    let sx = px.saturating_sub(s).min(w - 1);
                    dst[sy * w + sx] += pg[py * pw + px];
                }
            }
        }
        grad_in
    }

    /// Weight/bias gradients of the valid convolution over a padded input.
    fn grad_params_valid(&self, padded: &Volume<F>, grad_pre: &Volume<F>) -> (Vec<F>, Vec<F>) {
        let s = self.half_size as isize;
        let (w, h) = grad_pre.spatial();
        let pw = w + 2 * self.half_size;
        let mut grad_weights = vec![F::zero(); self.weights.len()];
        let mut grad_biases = vec![F::zero(); self.out_channels];
        for co in 0..self.out_channels {
            let g = grad_pre.channel(co);
            grad_biases[co] = g.iter().copied().sum();
            for ci in 0..self.in_channels {
                let src = padded.channel(ci);
                for beta in -s..=s {
                    for alpha in -s..=s {
                        let dy = (beta + s) as usize;
                        let dx = (alpha + s) as usize;
                        let mut acc = F::zero();
                        for y in 0..h {
                            let grow = y * w;
                            let srow = (y + dy) * pw + dx;
                            let gr = &g[grow..grow + w];
                            let sr = &src[srow..srow + w];
                            for i in 0..w {
                                acc += gr[i] * sr[i];
                            }
                        }
                        grad_weights[self.weight_index(co, ci, alpha, beta)] = acc;
                    }
                }
            }
        }
        (grad_weights, grad_biases)
    }

    /// Weight and bias gradients for strides 1 and 2 (for stride-half the
    /// caller passes the upsampled input). grad_weights(c,c',a,b) sums
    /// input(c', x+a, y+b) * grad_pre(c,x,y) over all output positions.
    fn grad_params(&self, input: &Volume<F>, grad_pre: &Volume<F>) -> (Vec<F>, Vec<F>) {
        let (w, h) = input.spatial();
        let (wi, hi) = (w as isize, h as isize);
        let s = self.half_size as isize;
        let step = match self.stride {
            Stride::Two => 2,
            _ => 1,
        };
        let (ow, oh) = grad_pre.spatial();
        let (owi, ohi) = (ow as isize, oh as isize);

        let mut grad_weights = vec![F::zero(); self.weights.len()];
        let mut grad_biases = vec![F::zero(); self.out_channels];

        for co in 0..self.out_channels {
            let g = grad_pre.channel(co);
            grad_biases[co] = g.iter().copied().sum();
            for ci in 0..self.in_channels {
                let src = input.channel(ci);
                for beta in -s..=s {
                    let oy0 = ceil_div(-beta, step).max(0);
                    let oy1 = ((hi - 1 - beta).div_euclid(step) + 1).min(ohi);
                    for alpha in -s..=s {
                        let ox0 = ceil_div(-alpha, step).max(0);
                        let ox1 = ((wi - 1 - alpha).div_euclid(step) + 1).min(owi);
                        if ox0 >= ox1 || oy0 >= oy1 {
                            continue;
                        }
                        let mut acc = F::zero();
                        if step == 1 {
                            for oy in oy0..oy1 {
                                let grow = (oy * owi + ox0) as usize;
                                let srow = ((oy + beta) * wi + ox0 + alpha) as usize;
                                let n = (ox1 - ox0) as usize;
                                let gr = &g[grow..grow + n];
                                let sr = &src[srow..srow + n];
                                for i in 0..n {
                                    acc += gr[i] * sr[i];
                                }
                            }
                        } else {
                            for oy in oy0..oy1 {
                                let y = step * oy + beta;
                                for ox in ox0..ox1 {
                                    let x = step * ox + alpha;
                                    acc += g[(oy * owi + ox) as usize]
                                        * src[(y * wi + x) as usize];
                                }
                            }
                        }
                        grad_weights[self.weight_index(co, ci, alpha, beta)] = acc;
                    }
                }
            }
        }
        (grad_weights, grad_biases)
    }
}
