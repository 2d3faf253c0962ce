//! Run configuration: defaults, the line-oriented key=value file, and CLI
//! flag overrides. Unknown keys are fatal; every numeric field is validated
//! before any work starts.

use std::path::{Path, PathBuf};

use sfl_core::model::BatchPolicy;
use sfl_core::{Error, LossWeights, Result, TrainConfig32};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Larger-side resize target; 0 disables resizing.
    pub resize_target: usize,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    pub sfl_enabled: bool,
    pub scales: Vec<f64>,
    pub w_sfl: Vec<f64>,
    pub w_pl: Vec<f64>,
    pub checkpoint_every: usize,
    pub snapshot_epochs: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            out_dir: PathBuf::from("out"),
            resize_target: 300,
            lr: 0.02,
            momentum: 0.5,
            epochs: 2000,
            seed: 0,
            sfl_enabled: true,
            scales: vec![0.8, 1.6, 3.2],
            w_sfl: vec![100.0, 10.0, 10.0],
            w_pl: vec![1.0],
            checkpoint_every: 500,
            snapshot_epochs: vec![100, 500, 1000, 1500, 2000],
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("bad value {tok:?} for key {key}")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("bad value {value:?} for key {key}")))
}

impl RunConfig {
    /// Apply one key=value pair (from the config file or a flag override).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "resize_target" => self.resize_target = parse_one(key, value)?,
            "lr" => self.lr = parse_one(key, value)?,
            "momentum" => self.momentum = parse_one(key, value)?,
            "epochs" => self.epochs = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "sfl_enabled" => self.sfl_enabled = parse_one(key, value)?,
            "scales" => self.scales = parse_list(key, value)?,
            "w_sfl" => self.w_sfl = parse_list(key, value)?,
            "w_pl" => self.w_pl = parse_list(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_one(key, value)?,
            "snapshot_epochs" => self.snapshot_epochs = parse_list(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Parse a line-oriented key=value file; `#` starts a comment.
    pub fn load_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Per-channel pixel weights: a single value broadcasts to all three
    /// channels.
    pub fn pixel_weights(&self) -> Result<Vec<f64>> {
        match self.w_pl.len() {
            1 => Ok(vec![self.w_pl[0]; 3]),
            3 => Ok(self.w_pl.clone()),
            n => Err(Error::Config(format!(
                "w_pl takes 1 or 3 values, got {n}"
            ))),
        }
    }

    /// Build and validate the engine configuration.
    pub fn train_config(&self) -> Result<TrainConfig32> {
        let config = TrainConfig32 {
            learning_rate: self.lr as f32,
            momentum: self.momentum as f32,
            init_std: 0.02,
            max_epochs: self.epochs,
            batch: BatchPolicy::Full,
            seed: self.seed,
            weights: LossWeights {
                pixel: self.pixel_weights()?.iter().map(|&w| w as f32).collect(),
                subband: self.w_sfl.iter().map(|&w| w as f32).collect(),
            },
            scales: self.scales.clone(),
            sfl_enabled: self.sfl_enabled,
        };
        config.validate()?;
        if self.scales.len() != self.w_sfl.len() {
            return Err(Error::Config(format!(
                "{} scales but {} w_sfl values",
                self.scales.len(),
                self.w_sfl.len()
            )));
        }
        Ok(config)
    }
}
