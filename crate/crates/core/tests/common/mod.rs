#![allow(dead_code)]

//! Shared test oracles: a six-nested-loop reference convolution, a central
//! finite-difference gradient checker for whole models, and a deterministic
//! synthetic-photograph generator. Everything here is independent of the
//! engine's convolution/backward code paths it is used to check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use sfl_core::model::{CaeModel, TrainConfig};
use sfl_core::train::image_loss_report;
use sfl_core::volume::Volume;

/// Zero-padded reference convolution, plain loops over every output cell and
/// every tap. `weights` is a flat (c_out, c_in, alpha, beta) array with beta
/// fastest, the layout convolution layers document. `stride` is 1 or 2;
/// stride 2 centers output (x', y') on input (2x', 2y').
pub fn reference_conv(
    input: &Volume<f64>,
    weights: &[f64],
    in_ch: usize,
    out_ch: usize,
    half_size: usize,
    stride: usize,
) -> Volume<f64> {
    let (w, h) = input.spatial();
    let (ow, oh) = match stride {
        1 => (w, h),
        2 => (w.div_ceil(2), h.div_ceil(2)),
        _ => panic!("reference supports strides 1 and 2"),
    };
    let s = half_size as isize;
    let k = 2 * half_size + 1;
    let mut out = Volume::zeros(out_ch, ow, oh);
    for co in 0..out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f64;
                for ci in 0..in_ch {
                    for beta in -s..=s {
                        for alpha in -s..=s {
                            let x = (stride * ox) as isize + alpha;
                            let y = (stride * oy) as isize + beta;
                            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                                continue; // zero padding
                            }
                            let widx = ((co * in_ch + ci) * k + (alpha + s) as usize) * k
                                + (beta + s) as usize;
                            acc += input.at(ci, x as usize, y as usize) * weights[widx];
                        }
                    }
                }
                *out.at_mut(co, ox, oy) = acc;
            }
        }
    }
    out
}

/// The scalar objective the gradient checker differentiates: the combined
/// per-image loss (or the pixel loss alone when SFL is disabled).
pub fn total_loss(model: &CaeModel<f64>, image: &Volume<f64>, config: &TrainConfig<f64>) -> f64 {
    let cache = model.forward(image).expect("forward");
    let report = image_loss_report(&cache, config).expect("loss");
    if config.sfl_enabled {
        report.e_total
    } else {
        report.e_pl
    }
}

/// Worst observed agreement between analytic and finite-difference gradients.
pub struct GradientCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// Central finite differences (step h) of `total_loss` against the analytic
/// backward pass, over every weight and bias of every trainable layer.
/// Relative error uses max(|analytic|, |fd|) as the denominator; parameters
/// where both sides vanish below f64 noise are compared absolutely.
pub fn check_model_gradients(
    model: &mut CaeModel<f64>,
    image: &Volume<f64>,
    config: &TrainConfig<f64>,
    h: f64,
) -> GradientCheck {
    let cache = model.forward(image).expect("forward");
    let analytic = model.backward(&cache, config).expect("backward");

    let mut checked = 0usize;
    let mut max_rel = 0.0f64;
    let mut worst = String::new();

    let n_layers = model.layers().len();
    for li in 0..n_layers {
        for (kind, count) in [
            ("weight", model.layers()[li].weights().len()),
            ("bias", model.layers()[li].biases().len()),
        ] {
            for pi in 0..count {
                let read = |m: &CaeModel<f64>| match kind {
                    "weight" => m.layers()[li].weights()[pi],
                    _ => m.layers()[li].biases()[pi],
                };
                let write = |m: &mut CaeModel<f64>, v: f64| match kind {
                    "weight" => m.layers_mut()[li].weights_mut()[pi] = v,
                    _ => m.layers_mut()[li].biases_mut()[pi] = v,
                };
                let orig = read(model);
                write(model, orig + h);
                let plus = total_loss(model, image, config);
                write(model, orig - h);
                let minus = total_loss(model, image, config);
                write(model, orig);
                let fd = (plus - minus) / (2.0 * h);
                let ana = match kind {
                    "weight" => analytic.layers[li].weights[pi],
                    _ => analytic.layers[li].biases[pi],
                };
                let denom = ana.abs().max(fd.abs());
                let diff = (ana - fd).abs();
                let rel = if diff < 1e-9 { 0.0 } else { diff / denom };
                checked += 1;
                if rel > max_rel {
                    max_rel = rel;
                    worst = format!("layer {li} {kind} {pi}: analytic {ana} vs fd {fd}");
                }
            }
        }
    }
    GradientCheck {
        checked,
        max_rel_err: max_rel,
        worst,
    }
}

/// Smallest |pre-activation| feeding a ReLU anywhere in the network. Central
/// differences are unreliable within ~10h of the kink, so gradient-check
/// seeds are chosen to keep this margin comfortable.
pub fn min_relu_margin(model: &CaeModel<f64>, image: &Volume<f64>) -> f64 {
    use sfl_core::Activation;
    let cache = model.forward(image).expect("forward");
    let mut margin = f64::INFINITY;
    for (li, layer) in model.layers().iter().enumerate() {
        if layer.activation() != Activation::Relu {
            continue;
        }
        let pre = &cache.pre_activations()[li];
        for c in 0..pre.channels() {
            let b = layer.biases()[c];
            for &p in pre.channel(c) {
                margin = margin.min((p + b).abs());
            }
        }
    }
    margin
}

pub fn random_image(seed: u64, channels: usize, w: usize, h: usize) -> Volume<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let data = (0..channels * w * h)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Volume::from_vec(channels, w, h, data).unwrap()
}

/// A deterministic photograph-like test image in [0, 255]: smooth background
/// gradient, hard-edged rectangles and disks, oriented sinusoidal texture
/// patches, light noise. Enough high-frequency content for the subband
/// losses to be meaningful.
pub fn synth_photo(seed: u64, w: usize, h: usize) -> Volume<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut img = Volume::zeros(3, w, h);

    let base: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(60.0..180.0),
                rng.random_range(-60.0..60.0),
                rng.random_range(-60.0..60.0),
            )
        })
        .collect();
    for c in 0..3 {
        let (a, bx, by) = base[c];
        for y in 0..h {
            for x in 0..w {
                *img.at_mut(c, x, y) = a + bx * x as f64 / w as f64 + by * y as f64 / h as f64;
            }
        }
    }

    for _ in 0..6 {
        let color: Vec<f64> = (0..3).map(|_| rng.random_range(10.0..245.0)).collect();
        let cx = rng.random_range(0..w);
        let cy = rng.random_range(0..h);
        let rw = rng.random_range(w / 10..w / 3).max(2);
        let rh = rng.random_range(h / 10..h / 3).max(2);
        let disk = rng.random_bool(0.5);
        for y in 0..h {
            for x in 0..w {
                let inside = if disk {
                    let dx = (x as f64 - cx as f64) / rw as f64;
                    let dy = (y as f64 - cy as f64) / rh as f64;
                    dx * dx + dy * dy <= 1.0
                } else {
                    x.abs_diff(cx) <= rw / 2 && y.abs_diff(cy) <= rh / 2
                };
                if inside {
                    for c in 0..3 {
                        *img.at_mut(c, x, y) = color[c];
                    }
                }
            }
        }
    }

    for _ in 0..3 {
        let freq = rng.random_range(0.6..2.0); // radians per pixel
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let amp = rng.random_range(15.0..40.0);
        let x0 = rng.random_range(0..w / 2);
        let y0 = rng.random_range(0..h / 2);
        let x1 = (x0 + rng.random_range(w / 4..w / 2)).min(w);
        let y1 = (y0 + rng.random_range(h / 4..h / 2)).min(h);
        let (ct, st) = (theta.cos(), theta.sin());
        for y in y0..y1 {
            for x in x0..x1 {
                let phase = freq * (x as f64 * ct + y as f64 * st);
                for c in 0..3 {
                    *img.at_mut(c, x, y) += amp * phase.sin();
                }
            }
        }
    }

    for v in img.data_mut() {
        *v = (*v + rng.random_range(-4.0..4.0)).clamp(0.0, 255.0);
    }
    img
}
