//! Pixel loss, spatial frequency loss, and their output-layer gradients.
//!
//! Per-image losses are spatially normalized (the 1/(W*H) factor), so images
//! of different resolutions contribute comparably; dataset-level values are
//! means over images. Loss values are reported in f64 regardless of the
//! working scalar; gradients stay in the working scalar.

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::logbank::LoGBank;
use crate::scalar::Real;
use crate::volume::Volume;

/// Per-channel pixel-loss weights and per-subband SFL weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights<F> {
    pub pixel: Vec<F>,
    pub subband: Vec<F>,
}

impl<F: Real> LossWeights<F> {
    /// Unit pixel weights and the (100, 10, 10) subband emphasis.
    pub fn standard(image_channels: usize) -> Self {
        LossWeights {
            pixel: vec![F::one(); image_channels],
            subband: vec![F::from_f64(100.0), F::from_f64(10.0), F::from_f64(10.0)],
        }
    }

    pub fn validate(&self, image_channels: usize, bands: usize) -> Result<()> {
        if self.pixel.len() != image_channels {
            return Err(Error::config(format!(
                "{} pixel-loss weights for {} image channels",
                self.pixel.len(),
                image_channels
            )));
        }
        if self.subband.len() != bands {
            return Err(Error::config(format!(
                "{} subband weights for {} bands",
                self.subband.len(),
                bands
            )));
        }
        if self
            .pixel
            .iter()
            .chain(self.subband.iter())
            .any(|w| !(*w >= F::zero()))
        {
            return Err(Error::config("loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// One evaluation of the combined loss. Per-band values are unweighted
/// (the plotting convention); `e_total = e_pl + e_sfl_weighted`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub e_pl: f64,
    pub e_sfl_per_band: Vec<f64>,
    pub e_sfl_weighted: f64,
    pub e_total: f64,
}

impl LossReport {
    pub fn new<F: Real>(e_pl: f64, per_band: Vec<f64>, subband_weights: &[F]) -> Self {
        let weighted: f64 = per_band
            .iter()
            .zip(subband_weights)
            .map(|(&b, w)| w.into_f64() * b)
            .sum();
        LossReport {
            e_pl,
            e_sfl_per_band: per_band,
            e_sfl_weighted: weighted,
            e_total: e_pl + weighted,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.e_total.is_finite() && self.e_sfl_per_band.iter().all(|b| b.is_finite())
    }

    /// Field-wise mean of several reports (the dataset-level loss).
    pub fn mean(reports: &[LossReport]) -> LossReport {
        assert!(!reports.is_empty());
        let n = reports.len() as f64;
        let bands = reports[0].e_sfl_per_band.len();
        let mut per_band = vec![0.0; bands];
        let (mut e_pl, mut weighted) = (0.0, 0.0);
        for r in reports {
            e_pl += r.e_pl;
            weighted += r.e_sfl_weighted;
            for (acc, b) in per_band.iter_mut().zip(&r.e_sfl_per_band) {
                *acc += b;
            }
        }
        for b in &mut per_band {
            *b /= n;
        }
        LossReport {
            e_pl: e_pl / n,
            e_sfl_per_band: per_band,
            e_sfl_weighted: weighted / n,
            e_total: (e_pl + weighted) / n,
        }
    }
}

fn check_same_shape<F: Real>(a: &Volume<F>, b: &Volume<F>) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )))
    }
}

/// Per-image pixel loss: sum over channels of
/// w_pl(c) * (1/2) * (1/(W*H)) * sum of squared differences.
pub fn pixel_loss<F: Real>(recon: &Volume<F>, original: &Volume<F>, w_pl: &[F]) -> Result<f64> {
    check_same_shape(recon, original)?;
    if w_pl.len() != recon.channels() {
        return Err(Error::config(format!(
            "{} pixel weights for {} channels",
            w_pl.len(),
            recon.channels()
        )));
    }
    let norm = 0.5 / (recon.width() * recon.height()) as f64;
    let mut total = 0.0;
    for c in 0..recon.channels() {
        let mut acc = 0.0f64;
        for (&r, &o) in recon.channel(c).iter().zip(original.channel(c)) {
            let d = r.into_f64() - o.into_f64();
            acc += d * d;
        }
        total += w_pl[c].into_f64() * norm * acc;
    }
    Ok(total)
}

/// Unweighted per-band mean squared error between two filter-bank outputs.
pub fn band_losses<F: Real>(bank_recon: &Volume<F>, bank_orig: &Volume<F>) -> Result<Vec<f64>> {
    check_same_shape(bank_recon, bank_orig)?;
    let norm = 0.5 / (bank_recon.width() * bank_recon.height()) as f64;
    Ok((0..bank_recon.channels())
        .map(|c| {
            let mut acc = 0.0f64;
            for (&r, &o) in bank_recon.channel(c).iter().zip(bank_orig.channel(c)) {
                let d = r.into_f64() - o.into_f64();
                acc += d * d;
            }
            norm * acc
        })
        .collect())
}

/// Per-image spatial frequency loss: applies the bank to both images and
/// returns (unweighted per-band values, weighted sum).
pub fn sfl_loss<F: Real>(
    bank: &LoGBank<F>,
    recon: &Volume<F>,
    original: &Volume<F>,
    w_sfl: &[F],
) -> Result<(Vec<f64>, f64)> {
    check_same_shape(recon, original)?;
    if w_sfl.len() != bank.bands() {
        return Err(Error::config(format!(
            "{} subband weights for {} bands",
            w_sfl.len(),
            bank.bands()
        )));
    }
    let br = bank.forward(recon)?;
    let bo = bank.forward(original)?;
    let per_band = band_losses(&br, &bo)?;
    let weighted = per_band
        .iter()
        .zip(w_sfl)
        .map(|(&b, w)| w.into_f64() * b)
        .sum();
    Ok((per_band, weighted))
}

/// Gradient of the spatial frequency loss with respect to the bank layer's
/// outputs: w_sfl(c) * (bank_recon - bank_orig) / (N_m * W * H). The bank has
/// identity activation and zero bias, so this is also the gradient with
/// respect to its pre-activation.
pub fn sfl_output_gradient<F: Real>(
    bank_recon: &Volume<F>,
    bank_orig: &Volume<F>,
    w_sfl: &[F],
    batch_size: usize,
) -> Result<Volume<F>> {
    check_same_shape(bank_recon, bank_orig)?;
    if batch_size < 1 {
        return Err(Error::config("batch size must be at least 1"));
    }
    if w_sfl.len() != bank_recon.channels() {
        return Err(Error::config(format!(
            "{} subband weights for {} bands",
            w_sfl.len(),
            bank_recon.channels()
        )));
    }
    let norm = F::from_f64(
        1.0 / (batch_size as f64 * (bank_recon.width() * bank_recon.height()) as f64),
    );
    let mut grad = Volume::zeros(
        bank_recon.channels(),
        bank_recon.width(),
        bank_recon.height(),
    );
    for c in 0..bank_recon.channels() {
        let scale = w_sfl[c] * norm;
        let g = grad.channel_mut(c);
        for (gv, (&r, &o)) in g
            .iter_mut()
            .zip(bank_recon.channel(c).iter().zip(bank_orig.channel(c)))
        {
            *gv = scale * (r - o);
        }
    }
    Ok(grad)
}

/// The pixel-loss gradient before the activation derivative:
/// w_pl(c) * (recon - original) / (N_m * W * H).
pub fn pl_pre_activation_term<F: Real>(
    recon: &Volume<F>,
    original: &Volume<F>,
    w_pl: &[F],
    batch_size: usize,
) -> Result<Volume<F>> {
    check_same_shape(recon, original)?;
    if batch_size < 1 {
        return Err(Error::config("batch size must be at least 1"));
    }
    if w_pl.len() != recon.channels() {
        return Err(Error::config(format!(
            "{} pixel weights for {} channels",
            w_pl.len(),
            recon.channels()
        )));
    }
    let norm =
        F::from_f64(1.0 / (batch_size as f64 * (recon.width() * recon.height()) as f64));
    let mut grad = Volume::zeros(recon.channels(), recon.width(), recon.height());
    for c in 0..recon.channels() {
        let scale = w_pl[c] * norm;
        let g = grad.channel_mut(c);
        for (gv, (&r, &o)) in g
            .iter_mut()
            .zip(recon.channel(c).iter().zip(original.channel(c)))
        {
            *gv = scale * (r - o);
        }
    }
    Ok(grad)
}

/// Gradient of the pixel loss with respect to the output layer's
/// pre-activation: the pre-activation term times a'(pre). `pre` must be the
/// value the activation was actually applied to (bias included).
pub fn pl_output_gradient<F: Real>(
    recon: &Volume<F>,
    original: &Volume<F>,
    pre: &Volume<F>,
    activation: Activation,
    w_pl: &[F],
    batch_size: usize,
) -> Result<Volume<F>> {
    check_same_shape(recon, pre)?;
    let mut grad = pl_pre_activation_term(recon, original, w_pl, batch_size)?;
    for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
        *g *= activation.derivative(p);
    }
    Ok(grad)
}

/// Combine the SFL gradient backpropagated through the bank with the
/// pixel-loss term at the output layer: both paths pass through the output
/// activation, so the sum is scaled by a'(pre) element-wise.
pub fn fuse_output_gradients<F: Real>(
    sfl_back: &Volume<F>,
    pl_term: &Volume<F>,
    pre: &Volume<F>,
    activation: Activation,
) -> Result<Volume<F>> {
    check_same_shape(sfl_back, pl_term)?;
    check_same_shape(sfl_back, pre)?;
    let mut grad = Volume::zeros(pre.channels(), pre.width(), pre.height());
    for ((g, (&s, &p)), &z) in grad
        .data_mut()
        .iter_mut()
        .zip(sfl_back.data().iter().zip(pl_term.data()))
        .zip(pre.data())
    {
        *g = (s + p) * activation.derivative(z);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_volume(seed: u64, c: usize, w: usize, h: usize) -> Volume<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data = (0..c * w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        Volume::from_vec(c, w, h, data).unwrap()
    }

    fn small_bank() -> LoGBank<f64> {
        LoGBank::new(&[0.8, 1.6, 3.2], &[100.0, 10.0, 10.0], 3).unwrap()
    }

    // two-sided tolerance: relative where the gradient has magnitude,
    // absolute where finite differences are pure rounding noise
    fn close(analytic: f64, fd: f64) -> bool {
        let diff = (analytic - fd).abs();
        diff <= 1e-4 * analytic.abs().max(fd.abs()) || diff < 1e-9
    }

    #[test]
    fn pixel_loss_of_identical_volumes_is_zero() {
        let v = random_volume(1, 3, 4, 4);
        assert_eq!(pixel_loss(&v, &v, &[1.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn pixel_loss_single_element() {
        let r = Volume::from_vec(1, 1, 1, vec![1.0f64]).unwrap();
        let o = Volume::from_vec(1, 1, 1, vec![0.0f64]).unwrap();
        assert!((pixel_loss(&r, &o, &[1.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pixel_loss_matches_a_scalar_reimplementation() {
        let r = random_volume(2, 3, 4, 4);
        let o = random_volume(3, 3, 4, 4);
        let w = [0.5f64, 1.0, 2.0];
        // hand-ordered loops, no shared code with the implementation
        let mut expected = 0.0;
        for c in 0..3 {
            let mut acc = 0.0;
            for y in 0..4 {
                for x in 0..4 {
                    let d = r.at(c, x, y) - o.at(c, x, y);
                    acc += d * d;
                }
            }
            expected += w[c] * 0.5 * acc / 16.0;
        }
        let got = pixel_loss(&r, &o, &w).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn pixel_loss_rejects_shape_mismatch() {
        let a = random_volume(4, 3, 4, 4);
        let b = random_volume(5, 3, 4, 5);
        assert!(pixel_loss(&a, &b, &[1.0; 3]).is_err());
    }

    #[test]
    fn sfl_of_identical_images_is_zero() {
        let bank = small_bank();
        let v = random_volume(6, 3, 9, 9);
        let (per_band, weighted) = sfl_loss(&bank, &v, &v, &[100.0, 10.0, 10.0]).unwrap();
        assert!(per_band.iter().all(|&b| b == 0.0));
        assert_eq!(weighted, 0.0);
    }

    #[test]
    fn sfl_ignores_uniform_brightness_shifts() {
        let bank = small_bank();
        let v = random_volume(7, 3, 9, 9);
        let shifted = v.map(|x| x + 0.3);
        let (per_band, _) = sfl_loss(&bank, &shifted, &v, &[100.0, 10.0, 10.0]).unwrap();
        for b in per_band {
            assert!(b < 1e-9, "band loss {b} for a constant offset");
        }
    }

    #[test]
    fn per_band_values_compose_from_pixel_loss_on_bank_outputs() {
        let bank = small_bank();
        let r = random_volume(8, 3, 9, 9);
        let o = random_volume(9, 3, 9, 9);
        let (per_band, _) = sfl_loss(&bank, &r, &o, &[100.0, 10.0, 10.0]).unwrap();
        let br = bank.forward(&r).unwrap();
        let bo = bank.forward(&o).unwrap();
        for c in 0..3 {
            let rc = Volume::from_vec(1, 9, 9, br.channel(c).to_vec()).unwrap();
            let oc = Volume::from_vec(1, 9, 9, bo.channel(c).to_vec()).unwrap();
            let expected = pixel_loss(&rc, &oc, &[1.0]).unwrap();
            assert!((per_band[c] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn sfl_gradient_of_identical_outputs_is_zero() {
        let v = random_volume(10, 3, 5, 5);
        let g = sfl_output_gradient(&v, &v, &[100.0, 10.0, 10.0], 1).unwrap();
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sfl_gradient_single_element() {
        let r = Volume::from_vec(1, 1, 1, vec![2.5f64]).unwrap();
        let o = Volume::from_vec(1, 1, 1, vec![0.5f64]).unwrap();
        let g = sfl_output_gradient(&r, &o, &[10.0], 1).unwrap();
        assert!((g.at(0, 0, 0) - 20.0).abs() < 1e-12);
        assert!(sfl_output_gradient(&r, &o, &[10.0], 0).is_err());
    }

    #[test]
    fn sfl_gradient_matches_finite_differences() {
        let bo = random_volume(11, 3, 4, 4);
        let mut br = random_volume(12, 3, 4, 4);
        let w = [100.0f64, 10.0, 10.0];
        let n_m = 2;
        let loss = |b: &Volume<f64>| -> f64 {
            band_losses(b, &bo)
                .unwrap()
                .iter()
                .zip(&w)
                .map(|(l, wc)| wc * l)
                .sum::<f64>()
                / n_m as f64
        };
        let grad = sfl_output_gradient(&br, &bo, &w, n_m).unwrap();
        let h = 1e-4;
        for i in 0..br.data().len() {
            let orig = br.data()[i];
            br.data_mut()[i] = orig + h;
            let plus = loss(&br);
            br.data_mut()[i] = orig - h;
            let minus = loss(&br);
            br.data_mut()[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            assert!(close(grad.data()[i], fd), "{} vs {}", grad.data()[i], fd);
        }
    }

    #[test]
    fn pl_gradient_trivial_cases() {
        let v = random_volume(13, 3, 4, 4);
        let pre = random_volume(14, 3, 4, 4);
        let g = pl_output_gradient(&v, &v, &pre, Activation::Tanh, &[1.0; 3], 1).unwrap();
        assert!(g.data().iter().all(|&x| x == 0.0));

        let r = Volume::from_vec(1, 1, 1, vec![1.0f64]).unwrap();
        let o = Volume::from_vec(1, 1, 1, vec![0.0f64]).unwrap();
        let pre = Volume::from_vec(1, 1, 1, vec![1.0f64]).unwrap();
        let g = pl_output_gradient(&r, &o, &pre, Activation::Identity, &[1.0], 1).unwrap();
        assert!((g.at(0, 0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pl_gradient_matches_finite_differences_through_tanh() {
        let original = random_volume(15, 2, 4, 4);
        let mut pre = random_volume(16, 2, 4, 4);
        let w = [1.0f64, 0.7];
        let n_m = 3;
        let loss = |p: &Volume<f64>| -> f64 {
            let recon = p.map(|x| x.tanh());
            pixel_loss(&recon, &original, &w).unwrap() / n_m as f64
        };
        let recon = pre.map(|x| x.tanh());
        let grad = pl_output_gradient(&recon, &original, &pre, Activation::Tanh, &w, n_m).unwrap();
        let h = 1e-4;
        for i in 0..pre.data().len() {
            let orig = pre.data()[i];
            pre.data_mut()[i] = orig + h;
            let plus = loss(&pre);
            pre.data_mut()[i] = orig - h;
            let minus = loss(&pre);
            pre.data_mut()[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            assert!(close(grad.data()[i], fd), "{} vs {}", grad.data()[i], fd);
        }
    }

    #[test]
    fn fused_gradient_reduces_to_each_term() {
        let r = random_volume(17, 3, 4, 4);
        let o = random_volume(18, 3, 4, 4);
        let pre = random_volume(19, 3, 4, 4);
        let zeros = Volume::zeros(3, 4, 4);
        let pl_term = pl_pre_activation_term(&r, &o, &[1.0; 3], 1).unwrap();

        let fused = fuse_output_gradients(&zeros, &pl_term, &pre, Activation::Tanh).unwrap();
        let direct = pl_output_gradient(&r, &o, &pre, Activation::Tanh, &[1.0; 3], 1).unwrap();
        for (&a, &b) in fused.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-15);
        }

        let sfl_back = random_volume(20, 3, 4, 4);
        let fused = fuse_output_gradients(&sfl_back, &zeros, &pre, Activation::Tanh).unwrap();
        for ((&f, &s), &p) in fused.data().iter().zip(sfl_back.data()).zip(pre.data()) {
            assert!((f - s * Activation::Tanh.derivative(p)).abs() < 1e-15);
        }
    }

    #[test]
    fn fused_gradient_matches_finite_differences_of_the_total_loss() {
        // E(pre) = PL(tanh(pre), orig) + weighted SFL(bank(tanh(pre)), bank(orig))
        let bank = LoGBank::new(&[1.0], &[5.0], 2).unwrap();
        let original = random_volume(21, 2, 5, 5);
        let mut pre = random_volume(22, 2, 5, 5);
        let w_pl = [1.0f64, 1.0];
        let w_sfl = [5.0f64];
        let bank_orig = bank.forward(&original).unwrap();
        let total = |p: &Volume<f64>| -> f64 {
            let recon = p.map(|x| x.tanh());
            let e_pl = pixel_loss(&recon, &original, &w_pl).unwrap();
            let (_, weighted) = sfl_loss(&bank, &recon, &original, &w_sfl).unwrap();
            e_pl + weighted
        };

        let recon = pre.map(|x| x.tanh());
        let bank_recon = bank.forward(&recon).unwrap();
        let g_bank = sfl_output_gradient(&bank_recon, &bank_orig, &w_sfl, 1).unwrap();
        let sfl_back = bank.layer().backward_input(&g_bank, 5, 5).unwrap();
        let pl_term = pl_pre_activation_term(&recon, &original, &w_pl, 1).unwrap();
        let fused = fuse_output_gradients(&sfl_back, &pl_term, &pre, Activation::Tanh).unwrap();

        let h = 1e-4;
        for i in 0..pre.data().len() {
            let orig = pre.data()[i];
            pre.data_mut()[i] = orig + h;
            let plus = total(&pre);
            pre.data_mut()[i] = orig - h;
            let minus = total(&pre);
            pre.data_mut()[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            assert!(close(fused.data()[i], fd), "{} vs {}", fused.data()[i], fd);
        }
    }

    #[test]
    fn report_total_is_the_sum_of_parts() {
        let per_band = vec![0.011, 0.007, 0.003];
        let report = LossReport::new(0.25, per_band.clone(), &[100.0f64, 10.0, 10.0]);
        let weighted: f64 = 100.0 * per_band[0] + 10.0 * per_band[1] + 10.0 * per_band[2];
        assert!((report.e_total - (report.e_pl + weighted)).abs() < 1e-9);
        assert!(report.e_pl >= 0.0 && report.e_sfl_weighted >= 0.0);
    }

    #[test]
    fn doubling_a_subband_weight_doubles_its_contribution() {
        let bank = small_bank();
        let r = random_volume(23, 3, 9, 9);
        let o = random_volume(24, 3, 9, 9);
        let w1 = [100.0f64, 10.0, 10.0];
        let w2 = [200.0f64, 10.0, 10.0];
        let (per1, total1) = sfl_loss(&bank, &r, &o, &w1).unwrap();
        let (per2, total2) = sfl_loss(&bank, &r, &o, &w2).unwrap();
        assert_eq!(per1, per2); // unweighted values unchanged
        let diff = total2 - total1;
        assert!((diff - 100.0 * per1[0]).abs() < 1e-9);

        let br = bank.forward(&r).unwrap();
        let bo = bank.forward(&o).unwrap();
        let g1 = sfl_output_gradient(&br, &bo, &w1, 1).unwrap();
        let g2 = sfl_output_gradient(&br, &bo, &w2, 1).unwrap();
        for (&a, &b) in g1.channel(0).iter().zip(g2.channel(0)) {
            assert!((b - 2.0 * a).abs() < 1e-12);
        }
        assert_eq!(g1.channel(1), g2.channel(1));
    }

    #[test]
    fn mean_report_averages_fields() {
        let a = LossReport::new(1.0, vec![0.1, 0.2], &[10.0f64, 1.0]);
        let b = LossReport::new(3.0, vec![0.3, 0.4], &[10.0f64, 1.0]);
        let m = LossReport::mean(&[a, b]);
        assert!((m.e_pl - 2.0).abs() < 1e-12);
        assert!((m.e_sfl_per_band[0] - 0.2).abs() < 1e-12);
        assert!((m.e_total - (m.e_pl + m.e_sfl_weighted)).abs() < 1e-9);
    }
}
