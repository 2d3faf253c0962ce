//! The batch training loop: per-image forward/backward passes, fixed-order
//! gradient accumulation, and one momentum step per batch.
//!
//! Per-image work may run on multiple threads, but each image's computation
//! is sequential and the reduction always walks images in dataset order, so
//! results are bit-identical regardless of scheduling.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::{band_losses, pixel_loss, LossReport};
use crate::model::{sgd_momentum_step, BatchPolicy, CaeModel, Gradients, OptimizerState, TrainConfig};
use crate::scalar::Real;
use crate::volume::Volume;

/// Loss report for one image given its forward cache.
pub fn image_loss_report<F: Real>(
    cache: &crate::model::ForwardCache<F>,
    config: &TrainConfig<F>,
) -> Result<LossReport> {
    let e_pl = pixel_loss(cache.reconstruction(), cache.input(), &config.weights.pixel)?;
    let per_band = band_losses(cache.bank_recon(), cache.bank_orig())?;
    Ok(LossReport::new(e_pl, per_band, &config.weights.subband))
}

/// Owns a training run: model, optimizer state and the dataset, plus the
/// per-image bank responses of the originals, which never change across
/// epochs and are computed once.
pub struct Trainer<F> {
    model: CaeModel<F>,
    state: OptimizerState<F>,
    config: TrainConfig<F>,
    dataset: Dataset<F>,
    bank_orig: Vec<Volume<F>>,
}

impl<F: Real> Trainer<F> {
    pub fn new(
        model: CaeModel<F>,
        state: OptimizerState<F>,
        config: TrainConfig<F>,
        dataset: Dataset<F>,
    ) -> Result<Self> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::config("dataset is empty"));
        }
        let bank_orig = dataset
            .items()
            .par_iter()
            .map(|item| model.bank().forward(&item.image))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trainer {
            model,
            state,
            config,
            dataset,
            bank_orig,
        })
    }

    #[inline]
    pub fn model(&self) -> &CaeModel<F> {
        &self.model
    }

    #[inline]
    pub fn state(&self) -> &OptimizerState<F> {
        &self.state
    }

    #[inline]
    pub fn config(&self) -> &TrainConfig<F> {
        &self.config
    }

    #[inline]
    pub fn dataset(&self) -> &Dataset<F> {
        &self.dataset
    }

    /// Run one epoch: accumulate per-image gradients over each batch in
    /// dataset order, divide by the batch size, take one momentum step per
    /// batch. Returns the dataset-mean losses, evaluated before the updates.
    pub fn epoch(&mut self) -> Result<LossReport> {
        let batch_size = match self.config.batch {
            BatchPolicy::Full => self.dataset.len(),
            BatchPolicy::MiniBatch(n) => n.min(self.dataset.len()),
        };
        let mut reports = Vec::with_capacity(self.dataset.len());

        let indices: Vec<usize> = (0..self.dataset.len()).collect();
        for batch in indices.chunks(batch_size) {
            // per-image gradients of the per-image loss; averaging happens below
            let results: Vec<(Gradients<F>, LossReport)> = batch
                .par_iter()
                .map(|&i| {
                    let item = &self.dataset.items()[i];
                    let cache = self
                        .model
                        .forward_with_bank_orig(&item.image, Some(self.bank_orig[i].clone()))?;
                    let report = image_loss_report(&cache, &self.config)?;
                    let grads = self.model.backward(&cache, &self.config)?;
                    Ok((grads, report))
                })
                .collect::<Result<Vec<_>>>()?;

            let mut iter = results.into_iter();
            let (mut total, first_report) = iter.next().expect("batch is non-empty");
            reports.push(first_report);
            for (g, r) in iter {
                total.add_assign(&g);
                reports.push(r);
            }
            total.scale(F::from_f64(1.0 / batch.len() as f64));

            sgd_momentum_step(&mut self.model, &mut self.state, &total, &self.config)?;
        }

        let mean = LossReport::mean(&reports);
        if !mean.is_finite() {
            return Err(Error::numerical("loss diverged to a non-finite value"));
        }
        Ok(mean)
    }

    pub fn into_parts(self) -> (CaeModel<F>, OptimizerState<F>) {
        (self.model, self.state)
    }
}

/// One-shot epoch on borrowed state; repeated calls are equivalent to a
/// [`Trainer`] loop, just without the cached original-image bank responses.
pub fn train_epoch<F: Real>(
    model: &mut CaeModel<F>,
    state: &mut OptimizerState<F>,
    dataset: &Dataset<F>,
    config: &TrainConfig<F>,
) -> Result<LossReport> {
    let mut trainer = Trainer::new(
        model.clone(),
        state.clone(),
        config.clone(),
        dataset.clone(),
    )?;
    let report = trainer.epoch()?;
    let (m, s) = trainer.into_parts();
    *model = m;
    *state = s;
    Ok(report)
}
