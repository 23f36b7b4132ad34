//! `pseudo-stereo`: virtual right views from a single left view, plus
//! self-verification and timing.

mod bench;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "pseudo-stereo",
    version,
    about = "Pseudo-stereo view synthesis and stereo volume tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StorageType {
    F32,
    F64,
}

impl From<StorageType> for pseudo_stereo::io::Dtype {
    fn from(t: StorageType) -> Self {
        match t {
            StorageType::F32 => Self::F32,
            StorageType::F64 => Self::F64,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward-warp a left image into a virtual right image.
    Warp {
        #[arg(long, required_unless_present = "synthetic")]
        left: Option<PathBuf>,
        #[arg(long, required_unless_present = "synthetic")]
        depth: Option<PathBuf>,
        #[arg(long, required_unless_present = "synthetic")]
        calib: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        holes: Option<PathBuf>,
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        sharpen: bool,
        #[arg(long, default_value_t = 3.0)]
        threshold: f64,
        /// Clear the hole mask after warping (holes still hold 0).
        #[arg(long)]
        zero_fill: bool,
        /// Generate a two-plane scene instead of reading inputs.
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convert left features into virtual right features by
    /// disparity-wise dynamic convolution.
    Ddc {
        #[arg(long, required_unless_present = "synthetic")]
        features: Option<PathBuf>,
        #[arg(long, required_unless_present = "synthetic")]
        disparity: Option<PathBuf>,
        #[arg(long, required_unless_present = "synthetic")]
        calib: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, value_enum, default_value_t = StorageType::F64)]
        dtype: StorageType,
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Feature shape for `--synthetic`, as WxHxC.
        #[arg(long, default_value = "16x8x4")]
        size: String,
    },
    /// Build the plane-sweep stereo volume and print per-half statistics.
    Volume {
        #[arg(long, required_unless_present = "synthetic")]
        left: Option<PathBuf>,
        /// Right features; omit together with `--clone` to use a copy of the left.
        #[arg(long, required_unless_present_any = ["synthetic", "clone"])]
        right: Option<PathBuf>,
        #[arg(long, required_unless_present = "synthetic")]
        calib: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Right features are an exact copy of the left features.
        #[arg(long)]
        clone: bool,
        /// Use offset 0 at every level instead of the calibrated offsets.
        #[arg(long)]
        zero_offset: bool,
        #[arg(long, value_enum, default_value_t = StorageType::F64)]
        dtype: StorageType,
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "16x8x4")]
        size: String,
    },
    /// Run the invariant suite on seeded random data.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time naive and grid-shift DDC and the image warp.
    Bench {
        /// Comma-separated WxHxC list.
        #[arg(long)]
        sizes: String,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 3)]
        warmups: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
