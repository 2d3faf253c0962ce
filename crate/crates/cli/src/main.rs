//! Command-line surface for the training engine.
//!
//! Exit codes: 0 on success, 1 for I/O or runtime failures, 2 for invalid
//! configuration or usage.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use sfl_core::Error;

#[derive(Parser)]
#[command(
    name = "sflcae",
    version,
    about = "Train convolutional autoencoders with a spatial frequency loss"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a directory of images, writing a loss CSV, checkpoints and
    /// reconstruction snapshots
    Train(TrainArgs),
    /// Reconstruct one image through a trained checkpoint
    Reconstruct {
        checkpoint: PathBuf,
        image: PathBuf,
        output: PathBuf,
    },
    /// Per-subband spatial-frequency losses between two same-size images
    Subbands {
        image_a: PathBuf,
        image_b: PathBuf,
        out_csv: PathBuf,
        /// Filter-bank scales
        #[arg(long, value_delimiter = ',', default_values_t = [0.8, 1.6, 3.2])]
        scales: Vec<f64>,
    },
    /// Dump filter-bank frequency responses, or (with --image) squared and
    /// 10-level-quantized subband outputs
    #[command(name = "dump-bank")]
    DumpBank {
        out_dir: PathBuf,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.8, 1.6, 3.2])]
        scales: Vec<f64>,
        #[arg(long = "fft_size", default_value_t = 128)]
        fft_size: usize,
    },
}

/// Flag overrides mirror the config-file keys exactly.
#[derive(Args)]
struct TrainArgs {
    /// Line-oriented key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "data_dir")]
    data_dir: Option<PathBuf>,
    #[arg(long = "out_dir")]
    out_dir: Option<PathBuf>,
    /// Larger-side resize target (0 disables resizing)
    #[arg(long = "resize_target")]
    resize_target: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// false trains on the pixel loss alone (band losses are still logged)
    #[arg(long = "sfl_enabled")]
    sfl_enabled: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[arg(long = "w_sfl", value_delimiter = ',')]
    w_sfl: Option<Vec<f64>>,
    #[arg(long = "w_pl", value_delimiter = ',')]
    w_pl: Option<Vec<f64>>,
    #[arg(long = "checkpoint_every")]
    checkpoint_every: Option<usize>,
    #[arg(long = "snapshot_epochs", value_delimiter = ',')]
    snapshot_epochs: Option<Vec<usize>>,
}

impl TrainArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut rc = RunConfig::default();
        if let Some(path) = &self.config {
            rc.load_file(path)?;
        }
        if let Some(v) = &self.data_dir {
            rc.data_dir = Some(v.clone());
        }
        if let Some(v) = &self.out_dir {
            rc.out_dir = v.clone();
        }
        if let Some(v) = self.resize_target {
            rc.resize_target = v;
        }
        if let Some(v) = self.lr {
            rc.lr = v;
        }
        if let Some(v) = self.momentum {
            rc.momentum = v;
        }
        if let Some(v) = self.epochs {
            rc.epochs = v;
        }
        if let Some(v) = self.seed {
            rc.seed = v;
        }
        if let Some(v) = self.sfl_enabled {
            rc.sfl_enabled = v;
        }
        if let Some(v) = &self.scales {
            rc.scales = v.clone();
        }
        if let Some(v) = &self.w_sfl {
            rc.w_sfl = v.clone();
        }
        if let Some(v) = &self.w_pl {
            rc.w_pl = v.clone();
        }
        if let Some(v) = self.checkpoint_every {
            rc.checkpoint_every = v;
        }
        if let Some(v) = &self.snapshot_epochs {
            rc.snapshot_epochs = v.clone();
        }
        Ok(rc)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Train(args) => commands::cmd_train(&args.resolve()?),
        Command::Reconstruct {
            checkpoint,
            image,
            output,
        } => commands::cmd_reconstruct(checkpoint, image, output),
        Command::Subbands {
            image_a,
            image_b,
            out_csv,
            scales,
        } => commands::cmd_subbands(image_a, image_b, out_csv, scales),
        Command::DumpBank {
            out_dir,
            image,
            scales,
            fft_size,
        } => commands::cmd_dump_bank(out_dir, image.as_deref(), scales, *fft_size),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Domain(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
