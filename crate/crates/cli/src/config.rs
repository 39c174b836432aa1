//! Flat key-value run configuration.
//!
//! A run is described by a text file of `key = value` lines (`#` starts a
//! comment). Unknown keys are errors. Command-line flags override file
//! values, which override the built-in defaults; every key has a default,
//! so an empty file is a valid configuration.
//!
//! See the repository README for the full key listing.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use stepfg_core::finegray::FitConfig;
use stepfg_core::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subjects: PathBuf,
    pub timeseries: PathBuf,
    pub out_dir: PathBuf,
    /// Explicit model directory; defaults to `<out_dir>/models`.
    pub model_dir: Option<PathBuf>,

    pub seed: u64,
    pub repeats: usize,
    pub events: Vec<u32>,
    pub split: (f64, f64, f64),

    pub t_min: f64,
    pub snapshot_step: f64,
    pub max_t: f64,
    pub gap_limit: f64,

    pub learning_rates: Vec<f64>,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// `usize::MAX` means full-batch.
    pub batch_size: usize,
    pub hidden_dims: Vec<usize>,
    pub dropout: f64,
    pub censored_in_risk_set: bool,
    pub one_snapshot_per_subject: bool,

    pub eval_times: Vec<f64>,
    pub horizons: Vec<f64>,
    pub threshold_grid: usize,
    pub subgroup_horizon: f64,
    pub subgroup_t_max: f64,

    pub synth_n: usize,
    pub synth_beta_static: Vec<f64>,
    pub synth_beta_dynamic: Vec<f64>,
    pub synth_cause1_mass: f64,
    pub synth_censor_rate: f64,
    pub synth_static_dim: usize,
    pub synth_dynamic_dim: usize,
    pub synth_dynamic_signal: bool,
    pub synth_time_scale: f64,
    pub synth_cause2_rate: f64,

    pub filter_years: Option<(i64, i64)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            subjects: "subjects.csv".into(),
            timeseries: "timeseries.csv".into(),
            out_dir: "out".into(),
            model_dir: None,
            seed: 0,
            repeats: 5,
            events: vec![1, 2, 3],
            split: (0.64, 0.16, 0.20),
            t_min: 6.0,
            snapshot_step: 5.0,
            max_t: 240.0,
            gap_limit: 5.0,
            learning_rates: vec![5e-4, 1e-4, 5e-5],
            weight_decay: 1e-3,
            max_epochs: 1000,
            patience: 20,
            batch_size: 128,
            hidden_dims: vec![64, 32],
            dropout: 0.2,
            censored_in_risk_set: false,
            one_snapshot_per_subject: false,
            eval_times: vec![6.0, 12.0, 24.0, 48.0],
            horizons: stepfg_core::stepwise::DEFAULT_HORIZONS.to_vec(),
            threshold_grid: stepfg_core::stepwise::DEFAULT_THRESHOLD_GRID,
            subgroup_horizon: 240.0,
            subgroup_t_max: 72.0,
            synth_n: 1000,
            synth_beta_static: vec![0.5, -0.5, 0.3, 0.2],
            synth_beta_dynamic: vec![0.8],
            synth_cause1_mass: 0.6,
            synth_censor_rate: 0.0,
            synth_static_dim: 4,
            synth_dynamic_dim: 1,
            synth_dynamic_signal: false,
            synth_time_scale: 48.0,
            synth_cause2_rate: 1.0,
            filter_years: None,
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<T>()
                .map_err(|_| anyhow::anyhow!("config key {key}: cannot parse {part:?}"))
        })
        .collect()
}

fn parse_bool(value: &str, key: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => bail!("config key {key}: expected a boolean, got {other:?}"),
    }
}

/// Parses `A..B` (inclusive on both ends).
pub fn parse_year_range(value: &str) -> Result<(i64, i64)> {
    let (a, b) = value
        .split_once("..")
        .ok_or_else(|| anyhow::anyhow!("year range must look like 2020..2021, got {value:?}"))?;
    let from: i64 = a.trim().parse().context("year range start")?;
    let to: i64 = b.trim().parse().context("year range end")?;
    if from > to {
        bail!("year range start {from} is after end {to}");
    }
    Ok((from, to))
}

impl RunConfig {
    /// Reads a config file over the defaults. Paths in the file are taken
    /// relative to the process working directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = RunConfig::default();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow::anyhow!("{}:{}: expected 'key = value'", path.display(), line_no + 1)
            })?;
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), line_no + 1))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "subjects" => self.subjects = value.into(),
            "timeseries" => self.timeseries = value.into(),
            "out_dir" => self.out_dir = value.into(),
            "model_dir" => self.model_dir = Some(value.into()),
            "seed" => self.seed = value.parse().context("seed")?,
            "repeats" => self.repeats = value.parse().context("repeats")?,
            "events" => self.events = parse_list(value, key)?,
            "split" => {
                let parts: Vec<f64> = parse_list(value, key)?;
                if parts.len() != 3 {
                    bail!("split needs exactly three fractions");
                }
                self.split = (parts[0], parts[1], parts[2]);
            }
            "t_min" => self.t_min = value.parse().context("t_min")?,
            "snapshot_step" => self.snapshot_step = value.parse().context("snapshot_step")?,
            "max_t" => self.max_t = value.parse().context("max_t")?,
            "gap_limit" => self.gap_limit = value.parse().context("gap_limit")?,
            "learning_rates" => self.learning_rates = parse_list(value, key)?,
            "weight_decay" => self.weight_decay = value.parse().context("weight_decay")?,
            "max_epochs" => self.max_epochs = value.parse().context("max_epochs")?,
            "patience" => self.patience = value.parse().context("patience")?,
            "batch_size" => {
                self.batch_size = if value == "full" {
                    usize::MAX
                } else {
                    let n: usize = value.parse().context("batch_size")?;
                    if n == 0 {
                        bail!("batch_size must be positive (or 'full')");
                    }
                    n
                }
            }
            "hidden_dims" => {
                self.hidden_dims = if value.is_empty() {
                    Vec::new()
                } else {
                    parse_list(value, key)?
                }
            }
            "dropout" => self.dropout = value.parse().context("dropout")?,
            "censored_in_risk_set" => self.censored_in_risk_set = parse_bool(value, key)?,
            "one_snapshot_per_subject" => self.one_snapshot_per_subject = parse_bool(value, key)?,
            "eval_times" => self.eval_times = parse_list(value, key)?,
            "horizons" => self.horizons = parse_list(value, key)?,
            "threshold_grid" => self.threshold_grid = value.parse().context("threshold_grid")?,
            "subgroup_horizon" => {
                self.subgroup_horizon = value.parse().context("subgroup_horizon")?
            }
            "subgroup_t_max" => self.subgroup_t_max = value.parse().context("subgroup_t_max")?,
            "synth_n" => self.synth_n = value.parse().context("synth_n")?,
            "synth_beta_static" => self.synth_beta_static = parse_list(value, key)?,
            "synth_beta_dynamic" => self.synth_beta_dynamic = parse_list(value, key)?,
            "synth_cause1_mass" => {
                self.synth_cause1_mass = value.parse().context("synth_cause1_mass")?
            }
            "synth_censor_rate" => {
                self.synth_censor_rate = value.parse().context("synth_censor_rate")?
            }
            "synth_static_dim" => {
                self.synth_static_dim = value.parse().context("synth_static_dim")?
            }
            "synth_dynamic_dim" => {
                self.synth_dynamic_dim = value.parse().context("synth_dynamic_dim")?
            }
            "synth_dynamic_signal" => self.synth_dynamic_signal = parse_bool(value, key)?,
            "synth_time_scale" => {
                self.synth_time_scale = value.parse().context("synth_time_scale")?
            }
            "synth_cause2_rate" => {
                self.synth_cause2_rate = value.parse().context("synth_cause2_rate")?
            }
            "filter_years" => self.filter_years = Some(parse_year_range(value)?),
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    pub fn model_dir(&self) -> PathBuf {
        self.model_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("models"))
    }

    /// Fit schedule for one experiment repeat.
    pub fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            learning_rates: self.learning_rates.clone(),
            weight_decay: self.weight_decay,
            max_epochs: self.max_epochs,
            early_stop_patience: self.patience,
            batch_size: self.batch_size,
            eval_times: self.eval_times.clone(),
            hidden_dims: self.hidden_dims.clone(),
            dropout_rate: self.dropout,
            censored_in_risk_set: self.censored_in_risk_set,
            one_snapshot_per_subject: self.one_snapshot_per_subject,
            select_checkpoint_by_loss: false,
            seed,
        }
    }

    /// Generator settings under a given seed.
    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            n_subjects: self.synth_n,
            beta_static: self.synth_beta_static.clone(),
            beta_dynamic: self.synth_beta_dynamic.clone(),
            cause1_mass: self.synth_cause1_mass,
            censor_rate: self.synth_censor_rate,
            static_dim: self.synth_static_dim,
            dynamic_dim: self.synth_dynamic_dim,
            dynamic_signal: self.synth_dynamic_signal,
            time_scale_hours: self.synth_time_scale,
            cause2_rate: self.synth_cause2_rate,
            seed,
        }
    }

    /// Seeds of the experiment repeats.
    pub fn repeat_seeds(&self) -> Vec<u64> {
        (0..self.repeats.max(1) as u64)
            .map(|r| self.seed + r)
            .collect()
    }
}
