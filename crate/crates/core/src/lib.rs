//! A from-scratch convolutional-autoencoder training engine whose loss
//! combines the usual pixel-wise mean squared error with a spatial frequency
//! loss (SFL): per-subband errors measured through a fixed
//! Laplacian-of-Gaussian filter bank appended as an extra, non-trainable
//! convolution layer. Training on the pixel loss alone leaves high-frequency
//! subbands poorly reconstructed (blur); weighting them explicitly removes
//! much of it.
//!
//! Everything numeric is generic over the scalar type ([`Real`]): the
//! training pipeline instantiates f32, while gradient verification runs the
//! same code in f64. Concrete aliases for both live at the crate root.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod dataset;
pub mod error;
pub mod image;
pub mod logbank;
pub mod loss;
pub mod losslog;
pub mod model;
pub mod resample;
pub mod scalar;
pub mod train;
pub mod volume;

pub use activation::Activation;
pub use conv::{ConvLayer, Stride};
pub use dataset::{Dataset, DatasetItem};
pub use error::{Error, Result};
pub use logbank::LoGBank;
pub use loss::{LossReport, LossWeights};
pub use model::{BatchPolicy, CaeModel, CaeTopology, ForwardCache, OptimizerState, TrainConfig};
pub use scalar::Real;
pub use train::Trainer;
pub use volume::Volume;

/// Training-precision aliases (the CLI and checkpoints use these).
pub type Volume32 = Volume<f32>;
pub type CaeModel32 = CaeModel<f32>;
pub type TrainConfig32 = TrainConfig<f32>;
pub type LoGBank32 = LoGBank<f32>;

/// Verification-precision aliases (gradient checks run in f64).
pub type Volume64 = Volume<f64>;
pub type CaeModel64 = CaeModel<f64>;
pub type TrainConfig64 = TrainConfig<f64>;
pub type LoGBank64 = LoGBank<f64>;
