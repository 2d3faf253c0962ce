//! The four subcommands: train, reconstruct, subbands, dump-bank.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use sfl_core::checkpoint::{load_checkpoint, save_checkpoint};
use sfl_core::image::{load_image, save_gray_image, save_image, scale_to_unit, unscale};
use sfl_core::logbank::square_and_quantize;
use sfl_core::loss::band_losses;
use sfl_core::losslog::LossLog;
use sfl_core::{CaeModel32, Dataset, Error, LoGBank, Result, Trainer, Volume32, Volume64};

use crate::config::RunConfig;

pub fn cmd_train(config: &RunConfig) -> Result<()> {
    let train_config = config.train_config()?;
    let data_dir = config
        .data_dir
        .as_ref()
        .ok_or_else(|| Error::Config("data_dir is required for training".into()))?;

    let resize = if config.resize_target == 0 {
        None
    } else {
        Some(config.resize_target)
    };
    let dataset: Dataset<f32> = Dataset::load_dir(data_dir, resize)?;
    if dataset.is_empty() {
        return Err(Error::Config(format!(
            "{} contains no readable .ppm/.pgm images",
            data_dir.display()
        )));
    }
    eprintln!(
        "training on {} images from {} for {} epochs (sfl_enabled={})",
        dataset.len(),
        data_dir.display(),
        config.epochs,
        config.sfl_enabled
    );

    let out_dir = &config.out_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ckpt_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;

    let (model, state) = CaeModel32::build(train_config.seed, &train_config)?;
    let mut trainer = Trainer::new(model, state, train_config.clone(), dataset)?;

    let csv_path = out_dir.join("loss.csv");
    let csv = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut log = LossLog::new(BufWriter::new(csv), &train_config.scales)?;

    for epoch in 1..=config.epochs {
        let report = trainer.epoch()?;
        log.record(epoch, &report)?;
        eprintln!(
            "epoch {epoch}/{}: e_pl={:.6} e_sfl={:?} e_total={:.6}",
            config.epochs,
            report.e_pl,
            report
                .e_sfl_per_band
                .iter()
                .map(|b| (b * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            report.e_total
        );

        if config.snapshot_epochs.contains(&epoch) {
            let snap_dir = out_dir.join("snapshots").join(format!("epoch_{epoch:04}"));
            std::fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
            write_snapshots(trainer.model(), trainer.dataset(), &snap_dir)?;
        }
        let last = epoch == config.epochs;
        if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) || last {
            let path = ckpt_dir.join(format!("epoch_{epoch:04}.sflc"));
            save_checkpoint(
                trainer.model(),
                trainer.state(),
                &train_config,
                epoch as u32,
                &path,
            )?;
        }
    }
    Ok(())
}

fn write_snapshots(model: &CaeModel32, dataset: &Dataset<f32>, dir: &Path) -> Result<()> {
    for item in dataset.items() {
        let cache = model.forward(&item.image)?;
        let out = unscale(cache.reconstruction());
        save_image(&out, dir.join(format!("{}.ppm", item.name)))?;
    }
    Ok(())
}

pub fn cmd_reconstruct(checkpoint: &Path, image_path: &Path, out_path: &Path) -> Result<()> {
    let (model, _, _) = load_checkpoint(checkpoint)?;
    let raw: Volume32 = load_image(image_path)?;
    let cache = model.forward(&scale_to_unit(&raw))?;
    save_image(&unscale(cache.reconstruction()), out_path)
}

pub fn cmd_subbands(
    image_a: &Path,
    image_b: &Path,
    out_csv: &Path,
    scales: &[f64],
) -> Result<()> {
    let a: Volume64 = load_image(image_a)?;
    let b: Volume64 = load_image(image_b)?;
    if a.spatial() != b.spatial() {
        return Err(Error::Config(format!(
            "image sizes differ: {:?} vs {:?}",
            a.spatial(),
            b.spatial()
        )));
    }
    // unweighted per-band values; the bank's own weights play no role here
    let bank: LoGBank<f64> = LoGBank::new(scales, &vec![1.0; scales.len()], 3)?;
    let ba = bank.forward(&scale_to_unit(&a))?;
    let bb = bank.forward(&scale_to_unit(&b))?;
    let bands = band_losses(&ba, &bb)?;

    let mut text = String::from("sigma,sfl\n");
    for (sigma, value) in scales.iter().zip(&bands) {
        text.push_str(&format!("{sigma},{value:.8e}\n"));
    }
    std::fs::write(out_csv, text).map_err(|e| Error::io(out_csv, e))
}

pub fn cmd_dump_bank(
    out_dir: &Path,
    image: Option<&Path>,
    scales: &[f64],
    fft_size: usize,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let bank: LoGBank<f64> = LoGBank::new(scales, &vec![1.0; scales.len()], 3)?;

    match image {
        None => {
            for (i, sigma) in scales.iter().enumerate() {
                let fr = bank.frequency_response(i, fft_size)?;
                let raster = fr.to_power_raster();
                let path = out_dir.join(format!("freq_response_sigma_{sigma}.pgm"));
                save_gray_image(&raster, fr.size(), fr.size(), path)?;
            }
        }
        Some(image_path) => {
            let raw: Volume64 = load_image(image_path)?;
            let response = bank.forward(&scale_to_unit(&raw))?;
            let (w, h) = response.spatial();
            for (band, sigma) in scales.iter().enumerate() {
                let raster = square_and_quantize(response.channel(band), 10);
                let path = out_dir.join(format!("subband_sigma_{sigma}.pgm"));
                save_gray_image(&raster, w, h, path)?;
            }
        }
    }
    Ok(())
}
