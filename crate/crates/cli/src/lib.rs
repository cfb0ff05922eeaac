//! The `polarsep` command-line tool: synthetic dataset generation, canonical
//! projection, layer separation, histogram matching and evaluation.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 I/O, 4 numeric failure
//! (ill-conditioned angle of incidence).

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod separate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use polarsep_core::synth::Stages;

use config::RunConfig;
use dataset::SynthJob;
use error::{CliError, Result};
use eval::EvalJob;
use separate::{AoiSource, Method, SeparateInput, SeparateJob, StackSource};

#[derive(Debug, Parser)]
#[command(name = "polarsep", version, about = "Polarization-based reflection synthesis and separation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from a directory of ordinary images.
    Synth(SynthArgs),
    /// Project three polarizer observations onto the canonical directions.
    Project(ProjectArgs),
    /// Separate reflection and transmission layers.
    Separate(SeparateArgs),
    /// Score predicted layers against a generated dataset.
    Eval(EvalArgs),
    /// Match the per-channel histogram of one image to another.
    Histmatch(HistmatchArgs),
}

fn parse_stages(s: &str) -> std::result::Result<Stages, String> {
    s.parse().map_err(|e: polarsep_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory of source images (PNG, JPEG or PFM).
    #[arg(long)]
    pub sources: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Comma separated subset of dr,nrd,lcg, or "none". Overrides the config.
    #[arg(long, value_parser = parse_stages)]
    pub stages: Option<Stages>,
}

/// Three observations, given as a sample directory or as three files.
#[derive(Debug, Args)]
pub struct StackArgs {
    /// Generated sample directory (obs_*.png plus meta.json).
    #[arg(long, conflicts_with = "inputs")]
    pub sample: Option<PathBuf>,
    /// Observations at phi0, phi0 + pi/4 and phi0 + pi/2.
    #[arg(num_args = 3, value_name = "OBS")]
    pub inputs: Vec<PathBuf>,
    /// Nominal polarizer angle of the first observation, radians.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi0: f64,
    /// Realized polarizer angles in radians, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub angles: Option<Vec<f64>>,
}

impl StackArgs {
    fn is_empty(&self) -> bool {
        self.sample.is_none() && self.inputs.is_empty()
    }

    fn source(&self) -> Result<StackSource> {
        if let Some(dir) = &self.sample {
            return Ok(StackSource::Sample(dir.clone()));
        }
        let paths: [PathBuf; 3] = self
            .inputs
            .clone()
            .try_into()
            .map_err(|_| CliError::Usage("expected --sample <dir> or three observation files".into()))?;
        let angles = match &self.angles {
            None => None,
            Some(a) => Some(<[f64; 3]>::try_from(a.as_slice()).map_err(|_| {
                CliError::Usage(format!("--angles needs exactly 3 values, got {}", a.len()))
            })?),
        };
        Ok(StackSource::Files { paths, phi0: self.phi0, angles })
    }
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub stack: StackArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    #[arg(long, value_enum, default_value_t = Method::FresnelInverse)]
    pub method: Method,
    #[command(flatten)]
    pub stack: StackArgs,
    /// Directory with i_perp.pfm, i_par.pfm and phi_perp.pfm instead of observations.
    #[arg(long, conflicts_with_all = ["sample", "inputs"])]
    pub canonical: Option<PathBuf>,
    /// meta.json (or sample directory) supplying the angle of incidence.
    #[arg(long, conflicts_with = "theta")]
    pub meta: Option<PathBuf>,
    /// Uniform angle of incidence in radians.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Directory with r_tilde, t_tilde, xi_perp and xi_par images.
    #[arg(long)]
    pub residual: Option<PathBuf>,
    /// Zero ill-conditioned columns instead of failing.
    #[arg(long)]
    pub allow_singular: bool,
    /// Match output histograms to the first observation.
    #[arg(long)]
    pub histmatch: bool,
    /// JSON run configuration; only the optics section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction root with <index>/R_hat.pfm and T_hat.pfm (or .png).
    #[arg(long)]
    pub pred: PathBuf,
    /// Dataset root written by `synth`.
    #[arg(long)]
    pub gt: PathBuf,
    /// Directory for report.json and report.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct HistmatchArgs {
    pub src: PathBuf,
    pub reference: PathBuf,
    /// Output file; `.pfm` writes floats, anything else an 8-bit PNG.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let config = RunConfig::load(args.config.as_deref())?.with_stages(args.stages);
            let job = SynthJob {
                sources: args.sources,
                out: args.out,
                count: args.count,
                seed: args.seed,
                workers: args.workers,
                config,
            };
            let manifest = dataset::run_synth(&job)?;
            println!(
                "wrote {} samples to {} (config {})",
                manifest.count,
                job.out.display(),
                &manifest.config_hash[..12]
            );
        }
        Command::Project(args) => {
            let canon = separate::run_project(&args.stack.source()?, &args.out)?;
            println!(
                "wrote canonical projections ({}x{}) to {}",
                canon.i_perp.width(),
                canon.i_perp.height(),
                args.out.display()
            );
        }
        Command::Separate(args) => {
            let optics = RunConfig::load(args.config.as_deref())?.synth.optics;
            let input = match &args.canonical {
                Some(dir) => SeparateInput::Canonical(dir.clone()),
                None if args.stack.is_empty() => {
                    return Err(CliError::Usage(
                        "separate needs --sample, --canonical or three observation files".into(),
                    ))
                }
                None => SeparateInput::Stack(args.stack.source()?),
            };
            let aoi = match (args.meta, args.theta) {
                (Some(p), _) => Some(AoiSource::Meta(p)),
                (None, Some(t)) => Some(AoiSource::Uniform(t)),
                (None, None) => None,
            };
            let job = SeparateJob {
                input,
                method: args.method,
                aoi,
                residual: args.residual,
                allow_singular: args.allow_singular,
                histmatch: args.histmatch,
                optics,
                out: args.out,
            };
            separate::run_separate(&job)?;
            println!("wrote R_hat and T_hat to {}", job.out.display());
        }
        Command::Eval(args) => {
            let job = EvalJob { predictions: args.pred, ground_truth: args.gt, out: args.out, workers: args.workers };
            let report = eval::run_eval(&job)?;
            print!("{}", eval::render_table(&report));
        }
        Command::Histmatch(args) => {
            separate::run_histmatch(&args.src, &args.reference, &args.out)?;
            println!("wrote {}", args.out.display());
        }
    }
    Ok(())
}
