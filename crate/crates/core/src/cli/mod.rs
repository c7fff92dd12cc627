//! Command-line entry point, experiment configuration and persistence.

pub mod commands;
pub mod config;
pub mod formats;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::Context;
pub use config::ExperimentConfig;

use crate::models::{EncoderMode, ModelVariant};
use crate::Result;

#[derive(Debug, Parser)]
#[command(name = "thermonet", version, about = "Thermal-voxel quality prediction experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Experiment directory shared by all stages.
    #[arg(long, global = true, default_value = "runs/default")]
    pub out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Restrict train/eval to this variant; repeatable.
    #[arg(long, global = true, value_parser = parse_variant)]
    pub variant: Vec<ModelVariant>,
    /// Overrides the latent size.
    #[arg(long, global = true)]
    pub latent: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub encoder_mode: Option<ModeArg>,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Frozen,
    Finetune,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum Command {
    /// Simulate print builds: frames, telemetry and planted truths.
    Synth,
    /// Undistort, crop and encode parts; split by build.
    Preprocess,
    /// Train the reconstruction models.
    Pretrain,
    /// Train the quality predictors.
    Train,
    /// Evaluate predictors on the test split and write the report.
    Eval,
    /// Latent-size sweep of the latent-thermal predictor.
    Sweep,
    /// Render figures from existing results.
    Plot,
    /// Synth through plot.
    All,
}

fn parse_variant(s: &str) -> std::result::Result<ModelVariant, String> {
    ModelVariant::parse(s).ok_or_else(|| {
        let names: Vec<&str> = ModelVariant::ALL.iter().map(|v| v.as_str()).collect();
        format!("unknown variant `{s}`; accepted values: {}", names.join(", "))
    })
}

impl Cli {
    pub fn context(&self) -> Result<Context> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = self.latent {
            cfg.recon.latent = d;
        }
        if let Some(m) = self.encoder_mode {
            cfg.predictor.encoder_mode = match m {
                ModeArg::Frozen => EncoderMode::Frozen,
                ModeArg::Finetune => EncoderMode::Finetune,
            };
        }
        cfg.validate()?;
        let mut ctx = Context::new(&self.out, cfg);
        ctx.variants = self.variant.clone();
        ctx.quiet = self.quiet;
        Ok(ctx)
    }

    pub fn run(&self) -> Result<()> {
        let ctx = self.context()?;
        match self.command {
            Command::Synth => {
                let s = commands::cmd_synth(&ctx)?;
                println!("{} builds, {} parts, {} printers", s.builds, s.parts, s.printers);
            }
            Command::Preprocess => {
                let s = commands::cmd_preprocess(&ctx)?;
                println!("{} parts: {} train, {} val, {} test", s.parts, s.train, s.val, s.test);
            }
            Command::Pretrain => {
                for r in commands::cmd_pretrain(&ctx)? {
                    println!(
                        "{} {} d={}: test ADP {:.4}, mean-image baseline {:.4}",
                        r.input,
                        r.kind.as_str(),
                        r.latent,
                        r.test_adp,
                        r.baseline_test_adp
                    );
                }
            }
            Command::Train => {
                for r in commands::cmd_train(&ctx)? {
                    println!("{}: {}", r.variant.as_str(), r.path.display());
                }
            }
            Command::Eval => {
                for r in commands::cmd_eval(&ctx)? {
                    println!("{}: mean dimensional % error {:.4}", r.variant, r.mean_dimensional_error());
                }
            }
            Command::Sweep => {
                for r in commands::cmd_sweep(&ctx)? {
                    println!("d={}: mean dimensional % error {:.4}", r.latent, r.summary.mean_dimensional_error());
                }
            }
            Command::Plot => {
                for p in commands::cmd_plot(&ctx)? {
                    println!("{}", p.display());
                }
            }
            Command::All => commands::cmd_all(&ctx)?,
        }
        Ok(())
    }
}
