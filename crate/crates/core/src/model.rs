//! The convolutional autoencoder: construction, forward/backward passes and
//! the momentum SGD update.
//!
//! The default topology is the 3 -> 32 -> 16 -> 32 -> 3 stack (stride 1, 2,
//! half, 1) with the fixed LoG filter bank appended as a non-trainable layer.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::activation::Activation;
use crate::conv::{ConvLayer, Stride};
use crate::error::{Error, Result};
use crate::logbank::LoGBank;
use crate::loss::{
    fuse_output_gradients, pl_pre_activation_term, sfl_output_gradient, LossWeights,
};
use crate::scalar::Real;
use crate::volume::Volume;

/// How gradients are batched within an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchPolicy {
    /// One update per epoch from the gradient averaged over the whole dataset.
    Full,
    /// Consecutive mini-batches of the given size, in dataset order.
    MiniBatch(usize),
}

#[derive(Debug, Clone)]
pub struct TrainConfig<F> {
    pub learning_rate: F,
    pub momentum: F,
    pub init_std: F,
    pub max_epochs: usize,
    pub batch: BatchPolicy,
    pub seed: u64,
    pub weights: LossWeights<F>,
    pub scales: Vec<f64>,
    pub sfl_enabled: bool,
}

impl<F: Real> Default for TrainConfig<F> {
    fn default() -> Self {
        TrainConfig {
            learning_rate: F::from_f64(0.02),
            momentum: F::from_f64(0.5),
            init_std: F::from_f64(0.02),
            max_epochs: 2000,
            batch: BatchPolicy::Full,
            seed: 0,
            weights: LossWeights::standard(3),
            scales: vec![0.8, 1.6, 3.2],
            sfl_enabled: true,
        }
    }
}

impl<F: Real> TrainConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > F::zero()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(self.momentum >= F::zero() && self.momentum < F::one()) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if !(self.init_std > F::zero()) {
            return Err(Error::config("init std must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("epoch count must be positive"));
        }
        if let BatchPolicy::MiniBatch(0) = self.batch {
            return Err(Error::config("mini-batch size must be positive"));
        }
        if self.scales.is_empty() {
            return Err(Error::config("at least one filter-bank scale required"));
        }
        self.weights.validate(self.weights.pixel.len(), self.scales.len())
    }
}

/// Channel widths of the three hidden layers; the output layer always maps
/// back to the image channel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaeTopology {
    pub hidden: [usize; 3],
    pub image_channels: usize,
}

impl Default for CaeTopology {
    fn default() -> Self {
        CaeTopology {
            hidden: [32, 16, 32],
            image_channels: 3,
        }
    }
}

/// One parameter array pair (weights, biases); used for gradients and for
/// optimizer velocity buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<F> {
    pub weights: Vec<F>,
    pub biases: Vec<F>,
}

impl<F: Real> ParamSet<F> {
    fn zeros_like(layer: &ConvLayer<F>) -> Self {
        ParamSet {
            weights: vec![F::zero(); layer.weights().len()],
            biases: vec![F::zero(); layer.biases().len()],
        }
    }

    pub fn add_assign(&mut self, other: &ParamSet<F>) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += *b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, factor: F) {
        for w in &mut self.weights {
            *w *= factor;
        }
        for b in &mut self.biases {
            *b *= factor;
        }
    }
}

/// Gradients for every trainable layer, encoder to decoder order.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub layers: Vec<ParamSet<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn add_assign(&mut self, other: &Gradients<F>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: F) {
        for l in &mut self.layers {
            l.scale(factor);
        }
    }
}

/// Momentum velocity buffers, one per trainable layer. The bank layer has no
/// buffer: it is never updated.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F> {
    pub velocities: Vec<ParamSet<F>>,
}

/// Everything the backward pass needs from a forward pass: the input, each
/// layer's pre-activations and activations, the recorded downsampling sizes,
/// and the bank outputs for both the reconstruction and the original.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    input: Volume<F>,
    pre: Vec<Volume<F>>,
    act: Vec<Volume<F>>,
    skip_sizes: Vec<(usize, usize)>,
    bank_recon: Volume<F>,
    bank_orig: Volume<F>,
}

impl<F: Real> ForwardCache<F> {
    #[inline]
    pub fn input(&self) -> &Volume<F> {
        &self.input
    }

    #[inline]
    pub fn pre_activations(&self) -> &[Volume<F>] {
        &self.pre
    }

    #[inline]
    pub fn activations(&self) -> &[Volume<F>] {
        &self.act
    }

    #[inline]
    pub fn skip_sizes(&self) -> &[(usize, usize)] {
        &self.skip_sizes
    }

    /// The output layer's activation, i.e. the reconstructed image.
    #[inline]
    pub fn reconstruction(&self) -> &Volume<F> {
        self.act.last().expect("cache holds at least one layer")
    }

    #[inline]
    pub fn bank_recon(&self) -> &Volume<F> {
        &self.bank_recon
    }

    #[inline]
    pub fn bank_orig(&self) -> &Volume<F> {
        &self.bank_orig
    }
}

#[derive(Debug, Clone)]
pub struct CaeModel<F> {
    layers: Vec<ConvLayer<F>>,
    bank: LoGBank<F>,
}

impl<F: Real> CaeModel<F> {
    /// Build the default topology with N(0, init_std) weights and zero biases
    /// from a seeded deterministic generator.
    pub fn build(seed: u64, config: &TrainConfig<F>) -> Result<(Self, OptimizerState<F>)> {
        Self::build_with_topology(seed, config, &CaeTopology::default())
    }

    pub fn build_with_topology(
        seed: u64,
        config: &TrainConfig<F>,
        topology: &CaeTopology,
    ) -> Result<(Self, OptimizerState<F>)> {
        let img = topology.image_channels;
        let [h1, h2, h3] = topology.hidden;
        let mut layers = vec![
            ConvLayer::new(img, h1, 1, Stride::One, Activation::Relu, true),
            ConvLayer::new(h1, h2, 1, Stride::Two, Activation::Relu, true),
            ConvLayer::new(h2, h3, 1, Stride::Half, Activation::Relu, true),
            ConvLayer::new(h3, img, 1, Stride::One, Activation::Tanh, true),
        ];

        // weights are sampled layer by layer in storage order; biases stay 0
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, config.init_std.into_f64())
            .map_err(|e| Error::config(format!("bad init std: {e}")))?;
        for layer in &mut layers {
            for w in layer.weights_mut() {
                *w = F::from_f64(normal.sample(&mut rng));
            }
        }

        let bank = LoGBank::new(&config.scales, &config.weights.subband, img)?;
        let state = OptimizerState {
            velocities: layers.iter().map(ParamSet::zeros_like).collect(),
        };
        Ok((CaeModel { layers, bank }, state))
    }

    /// Reassemble a model from deserialized parts.
    pub fn from_parts(layers: Vec<ConvLayer<F>>, bank: LoGBank<F>) -> Self {
        CaeModel { layers, bank }
    }

    #[inline]
    pub fn layers(&self) -> &[ConvLayer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<F>] {
        &mut self.layers
    }

    #[inline]
    pub fn bank(&self) -> &LoGBank<F> {
        &self.bank
    }

    #[inline]
    pub fn image_channels(&self) -> usize {
        self.layers[0].in_channels()
    }

    /// Forward pass over all layers plus the bank, caching everything the
    /// backward pass needs. Bank outputs are computed for both the
    /// reconstruction and the input image.
    pub fn forward(&self, image: &Volume<F>) -> Result<ForwardCache<F>> {
        self.forward_with_bank_orig(image, None)
    }

    /// Forward pass reusing a precomputed bank response of the input image
    /// (the input never changes across epochs, so the training loop computes
    /// it once per image).
    pub fn forward_with_bank_orig(
        &self,
        image: &Volume<F>,
        bank_orig: Option<Volume<F>>,
    ) -> Result<ForwardCache<F>> {
        if image.channels() != self.image_channels() {
            return Err(Error::config(format!(
                "model expects {} image channels, got {}",
                self.image_channels(),
                image.channels()
            )));
        }

        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act: Vec<Volume<F>> = Vec::with_capacity(self.layers.len());
        let mut skip_stack: Vec<(usize, usize)> = Vec::new();
        let mut skip_sizes: Vec<(usize, usize)> = Vec::new();

        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { image } else { &act[i - 1] };
            let (p, o) = match layer.stride() {
                Stride::Two => {
                    skip_stack.push(input.spatial());
                    skip_sizes.push(input.spatial());
                    layer.forward(input)?
                }
                Stride::Half => layer.forward_to(input, skip_stack.pop())?,
                Stride::One => layer.forward(input)?,
            };
            pre.push(p);
            act.push(o);
        }

        let recon = act.last().expect("at least one layer");
        if recon.spatial() != image.spatial() {
            return Err(Error::internal(format!(
                "reconstruction size {:?} differs from input {:?}",
                recon.spatial(),
                image.spatial()
            )));
        }
        let bank_recon = self.bank.forward(recon)?;
        let bank_orig = match bank_orig {
            Some(b) => {
                if !b.same_shape(&bank_recon) {
                    return Err(Error::internal(
                        "precomputed bank response has a stale shape".to_string(),
                    ));
                }
                b
            }
            None => self.bank.forward(image)?,
        };

        Ok(ForwardCache {
            input: image.clone(),
            pre,
            act,
            skip_sizes,
            bank_recon,
            bank_orig,
        })
    }

    /// Backward pass for a single image (mini-batch averaging is the
    /// training loop's job). Returns gradients of the combined loss when
    /// `sfl_enabled`, of the pixel loss alone otherwise; the bank layer is
    /// excluded.
    pub fn backward(&self, cache: &ForwardCache<F>, config: &TrainConfig<F>) -> Result<Gradients<F>> {
        let n = self.layers.len();
        if cache.pre.len() != n || cache.act.len() != n {
            return Err(Error::internal("forward cache does not match the model"));
        }
        let recon = cache.reconstruction();
        let (rw, rh) = recon.spatial();

        // gradient with respect to the output layer's pre-activation
        let pl_term = pl_pre_activation_term(recon, &cache.input, &config.weights.pixel, 1)?;
        let sfl_back = if config.sfl_enabled {
            let g_bank = sfl_output_gradient(
                &cache.bank_recon,
                &cache.bank_orig,
                &config.weights.subband,
                1,
            )?;
            self.bank.layer().backward_input(&g_bank, rw, rh)?
        } else {
            Volume::zeros(recon.channels(), rw, rh)
        };
        let out_layer = &self.layers[n - 1];
        let z_out = add_bias(&cache.pre[n - 1], out_layer.biases());
        let mut grad_pre = fuse_output_gradients(&sfl_back, &pl_term, &z_out, out_layer.activation())?;

        let mut grads = vec![
            ParamSet {
                weights: Vec::new(),
                biases: Vec::new()
            };
            n
        ];
        for i in (0..n).rev() {
            let input = if i == 0 { &cache.input } else { &cache.act[i - 1] };
            let bw = self.layers[i].backward(input, &grad_pre)?;
            grads[i] = ParamSet {
                weights: bw.grad_weights,
                biases: bw.grad_biases,
            };
            if i > 0 {
                let prev = &self.layers[i - 1];
                let z = add_bias(&cache.pre[i - 1], prev.biases());
                let mut g = bw.grad_input;
                for (gv, &zv) in g.data_mut().iter_mut().zip(z.data()) {
                    *gv *= prev.activation().derivative(zv);
                }
                grad_pre = g;
            }
        }
        Ok(Gradients { layers: grads })
    }
}

/// pre + per-channel bias: the exact values the activation was applied to.
fn add_bias<F: Real>(pre: &Volume<F>, biases: &[F]) -> Volume<F> {
    let mut z = pre.clone();
    for c in 0..z.channels() {
        let b = biases[c];
        for v in z.channel_mut(c) {
            *v += b;
        }
    }
    z
}

/// Velocity-style momentum update: v <- momentum*v - lr*g; theta <- theta + v.
/// Applies to every trainable layer; the bank is not touched.
pub fn sgd_momentum_step<F: Real>(
    model: &mut CaeModel<F>,
    state: &mut OptimizerState<F>,
    grads: &Gradients<F>,
    config: &TrainConfig<F>,
) -> Result<()> {
    if grads.layers.len() != model.layers.len() || state.velocities.len() != model.layers.len() {
        return Err(Error::internal("gradient/velocity count mismatch"));
    }
    let lr = config.learning_rate;
    let m = config.momentum;
    for ((layer, vel), grad) in model
        .layers
        .iter_mut()
        .zip(&mut state.velocities)
        .zip(&grads.layers)
    {
        if !layer.trainable() {
            continue;
        }
        if grad.weights.len() != layer.weights().len()
            || grad.biases.len() != layer.biases().len()
        {
            return Err(Error::internal("gradient shape drift"));
        }
        for ((w, v), &g) in layer
            .weights_mut()
            .iter_mut()
            .zip(&mut vel.weights)
            .zip(&grad.weights)
        {
            *v = m * *v - lr * g;
            *w += *v;
        }
        for ((b, v), &g) in layer
            .biases_mut()
            .iter_mut()
            .zip(&mut vel.biases)
            .zip(&grad.biases)
        {
            *v = m * *v - lr * g;
            *b += *v;
        }
    }
    Ok(())
}
