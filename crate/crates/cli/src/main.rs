use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hspr_core::pipeline::{self, PipelineConfig, Preset, RenderOptions, RenderQuantity};

#[derive(Parser)]
#[command(name = "hspr", version, about = "Hyperspectral phase imaging pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config, or a manifest.json from an earlier run
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overlay a named parameter set
    #[arg(long, value_parser = ["paper-sim", "paper-exp"])]
    preset: Option<String>,
    /// Override the random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Phantom, interferograms and noise
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Spectral amplitudes from an interferogram stack
    Spectra {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Iterative phase retrieval from a spectral cube
    Retrieve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Truth cube for per-iteration RRMSE tables
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// PGM images and CSV cross-sections of cube slices
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_parser = ["amplitude", "phase", "depth"])]
        quantity: Option<String>,
        /// Slice index; repeat for several (default: all)
        #[arg(long = "slice")]
        slices: Vec<usize>,
        #[arg(long)]
        row: Option<usize>,
        #[arg(long)]
        col: Option<usize>,
        /// Complex cube used to remove the global phase offset
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Per-wavelength phase RRMSE against a truth cube
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = &common.preset {
        p.parse::<Preset>()?.apply(&mut cfg);
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Resolves input paths from arguments or the config, then validates
/// everything before any computation.
fn prepare(common: &Common, input: Option<&PathBuf>, truth: Option<&PathBuf>) -> Result<PipelineConfig> {
    let mut cfg = load_config(common)?;
    if let Some(p) = input {
        cfg.io.input = Some(p.clone());
    }
    if let Some(p) = truth {
        cfg.io.truth = Some(p.clone());
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    match path {
        Some(p) => Ok(p),
        None => bail!("no {what} given (use --{what} or the config's io section)"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = prepare(&common, None, None)?;
            let files = pipeline::run_simulate(&cfg, &common.out)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Spectra { common, input } => {
            let cfg = prepare(&common, input.as_ref(), None)?;
            let path = pipeline::run_spectra(required(&cfg.io.input, "input")?, &cfg, &common.out)?;
            println!("{}", path.display());
        }
        Command::Retrieve { common, input, truth } => {
            let cfg = prepare(&common, input.as_ref(), truth.as_ref())?;
            let path = pipeline::run_retrieve(
                required(&cfg.io.input, "input")?,
                cfg.io.truth.as_deref(),
                &cfg,
                &common.out,
            )?;
            println!("{}", path.display());
        }
        Command::Render {
            common,
            input,
            quantity,
            slices,
            row,
            col,
            reference,
        } => {
            let cfg = prepare(&common, input.as_ref(), None)?;
            let mut options = match &common.config {
                Some(p) => PipelineConfig::load_render_options(p)?.unwrap_or_default(),
                None => RenderOptions::default(),
            };
            if let Some(q) = quantity {
                options.quantity = q.parse::<RenderQuantity>()?;
            }
            if !slices.is_empty() {
                options.slices = Some(slices);
            }
            options.row = row.or(options.row);
            options.col = col.or(options.col);
            if reference.is_some() {
                options.phase_reference = reference;
            }
            let files = pipeline::run_render(required(&cfg.io.input, "input")?, &options, &cfg, &common.out)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Evaluate { common, input, truth } => {
            let cfg = prepare(&common, input.as_ref(), truth.as_ref())?;
            let table = pipeline::run_evaluate(
                required(&cfg.io.input, "input")?,
                required(&cfg.io.truth, "truth")?,
                &cfg,
                &common.out,
            )?;
            print!("{}", table.to_csv_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
