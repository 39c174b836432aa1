//! `stepfg` -- stepwise Fine-Gray competing-risks modeling from the command
//! line: simulate a known-truth cohort, train two-phase models per event,
//! evaluate discrimination, and export per-subject risk trajectories.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use stepfg_cli::commands::{
    cmd_evaluate, cmd_export_trajectory, cmd_predict, cmd_simulate, cmd_train, ExportFormat,
    SplitChoice,
};
use stepfg_cli::config::{parse_year_range, RunConfig};

#[derive(Parser)]
#[command(
    name = "stepfg",
    version,
    about = "Stepwise Fine-Gray competing-risks modeling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run-configuration file (key = value lines); defaults apply when
    /// omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exclude subjects whose `year` column falls in this inclusive range,
    /// e.g. 2020..2021.
    #[arg(long, value_parser = parse_year_range)]
    filter_years: Option<(i64, i64)>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(range) = self.filter_years {
            cfg.filter_years = Some(range);
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with known ground truth.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit stepwise models per event across the repeat seeds.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Train only this event code.
        #[arg(long)]
        event: Option<u32>,
        /// Train a single repeat with exactly this seed.
        #[arg(long)]
        single_seed: Option<u64>,
    },
    /// Evaluate trained models: landmark concordance and subgroup tables.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory of `seed<N>/event<K>.json` model files; defaults to
        /// the configured model directory.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Data split to evaluate on.
        #[arg(long, default_value = "test")]
        split: SplitChoice,
    },
    /// Predict one subject's thresholded CIF at a prediction time and
    /// horizon.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        horizon: f64,
    },
    /// Export a subject's feature and risk trajectory.
    ExportTrajectory {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        subject: String,
        #[arg(long, default_value_t = 240.0)]
        horizon: f64,
        #[arg(long, default_value = "csv")]
        format: ExportFormat,
    },
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { common } => cmd_simulate(&common.load()?),
        Command::Train {
            common,
            event,
            single_seed,
        } => {
            let mut cfg = common.load()?;
            if let Some(k) = event {
                cfg.events = vec![k];
            }
            cmd_train(&cfg, single_seed)
        }
        Command::Evaluate {
            common,
            models,
            split,
        } => {
            let cfg = common.load()?;
            let root = models.unwrap_or_else(|| cfg.model_dir());
            cmd_evaluate(&cfg, &root, split)
        }
        Command::Predict {
            common,
            model,
            subject,
            t,
            horizon,
        } => {
            let cfg = common.load()?;
            let json = cmd_predict(&cfg, &model, &subject, t, horizon)?;
            stepfg_cli::emitln!("{json}");
            Ok(())
        }
        Command::ExportTrajectory {
            common,
            model,
            subject,
            horizon,
            format,
        } => {
            let cfg = common.load()?;
            cmd_export_trajectory(&cfg, &model, &subject, horizon, format)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
