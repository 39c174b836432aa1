//! Subcommand implementations: simulate, train, evaluate, predict, and
//! trajectory export. All outputs are deterministic under fixed seeds and
//! machine-parseable; per-seed artifacts are namespaced so repeats never
//! contend for the same file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use stepfg_core::data::{
    build_snapshots, build_snapshots_at, split_stratified, Dataset, EventCode, SnapshotSet,
};
use stepfg_core::eval::{landmark_evaluate, subgroup_summary, LandmarkEval};
use stepfg_core::finegray::predict_cif;
use stepfg_core::stepwise::{fit_stepwise, incremental_contribution, predict, StepwiseModel};
use stepfg_core::synth;

use crate::config::RunConfig;
use crate::csv_io::{
    event_model_paths, filter_years, format_cell, load_dataset, seed_dirs, write_dataset,
    write_text,
};
use crate::model_io::{load_stepwise_model, save_stepwise_model};

/// Which split evaluate/predict commands read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitChoice {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitChoice {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitChoice::Train),
            "val" => Ok(SplitChoice::Val),
            "test" => Ok(SplitChoice::Test),
            other => bail!("unknown split {other:?} (expected train, val, or test)"),
        }
    }
}

fn load_cohort(cfg: &RunConfig) -> Result<Dataset> {
    let ds = load_dataset(&cfg.subjects, &cfg.timeseries, None)?;
    match cfg.filter_years {
        Some((from, to)) => filter_years(&ds, from, to),
        None => Ok(ds),
    }
}

fn split_for_seed(
    cfg: &RunConfig,
    dataset: &Dataset,
    seed: u64,
) -> Result<stepfg_core::data::Split> {
    let split = split_stratified(dataset, cfg.split, seed)?;
    for warning in &split.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(split)
}

fn pick_split(split: stepfg_core::data::Split, which: SplitChoice) -> Dataset {
    match which {
        SplitChoice::Train => split.train,
        SplitChoice::Val => split.val,
        SplitChoice::Test => split.test,
    }
}

/// Generates a synthetic cohort: schema-conformant CSVs plus a truth sidecar
/// with the generator parameters for test harnesses.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let synth_cfg = cfg.synth_config(cfg.seed);
    let dataset = synth::generate(&synth_cfg)?;
    write_dataset(&dataset, &cfg.subjects, &cfg.timeseries)?;

    #[derive(Serialize)]
    struct Truth<'a> {
        n_subjects: usize,
        beta_static: &'a [f64],
        beta_dynamic: &'a [f64],
        cause1_mass: f64,
        censor_rate: f64,
        static_dim: usize,
        dynamic_dim: usize,
        dynamic_signal: bool,
        time_scale_hours: f64,
        cause2_rate: f64,
        seed: u64,
    }
    let truth = Truth {
        n_subjects: synth_cfg.n_subjects,
        beta_static: &synth_cfg.beta_static,
        beta_dynamic: &synth_cfg.beta_dynamic,
        cause1_mass: synth_cfg.cause1_mass,
        censor_rate: synth_cfg.censor_rate,
        static_dim: synth_cfg.static_dim,
        dynamic_dim: synth_cfg.dynamic_dim,
        dynamic_signal: synth_cfg.dynamic_signal,
        time_scale_hours: synth_cfg.time_scale_hours,
        cause2_rate: synth_cfg.cause2_rate,
        seed: synth_cfg.seed,
    };
    let mut text = serde_json::to_string_pretty(&truth)?;
    text.push('\n');
    write_text(&cfg.out_dir.join("truth.json"), &text)?;
    crate::emitln!(
        "simulated {} subjects -> {}, {}",
        dataset.subjects.len(),
        cfg.subjects.display(),
        cfg.timeseries.display()
    );
    Ok(())
}

fn event_guard(set: &SnapshotSet, k: EventCode, what: &str) -> Result<()> {
    if !set.snapshots.iter().any(|s| s.event == k) {
        bail!("event {k}: no occurrences in the {what} split");
    }
    Ok(())
}

/// Trains one stepwise model per event per repeat seed, writing model JSON,
/// per-epoch training logs, and a validation metrics report.
pub fn cmd_train(cfg: &RunConfig, only_seed: Option<u64>) -> Result<()> {
    let dataset = load_cohort(cfg)?;
    let seeds = match only_seed {
        Some(s) => vec![s],
        None => cfg.repeat_seeds(),
    };
    for seed in seeds {
        let split = split_for_seed(cfg, &dataset, seed)?;
        let train_set = build_snapshots(
            &split.train,
            cfg.t_min,
            cfg.snapshot_step,
            cfg.max_t,
            cfg.gap_limit,
        )?;
        let val_set = build_snapshots_at(&split.val, &cfg.eval_times, cfg.gap_limit)?;
        if train_set.is_empty() {
            bail!("seed {seed}: no training snapshots (check t_min/step/gap settings)");
        }

        let fit_cfg = cfg.fit_config(seed);
        let mut models: BTreeMap<u32, StepwiseModel> = BTreeMap::new();
        for &event in &cfg.events {
            let k = EventCode::new(event);
            event_guard(&train_set, k, "training")?;
            event_guard(&val_set, k, "validation")?;
            let (model, log) = fit_stepwise(
                &train_set,
                &val_set,
                k,
                &fit_cfg,
                &cfg.horizons,
                cfg.threshold_grid,
            )
            .with_context(|| format!("fitting event {event} (seed {seed})"))?;

            let model_path = cfg
                .model_dir()
                .join(format!("seed{seed}"))
                .join(format!("event{event}.json"));
            save_stepwise_model(&model_path, &model)?;
            write_training_log(
                &cfg.out_dir
                    .join(format!("train_log_seed{seed}_event{event}.csv")),
                &log,
            )?;
            crate::emitln!(
                "seed {seed} event {event}: phase1 lr {} (epoch {}), phase2 lr {} (epoch {}) -> {}",
                log.phase1.selected_lr,
                selected_epoch(&log.phase1),
                log.phase2.selected_lr,
                selected_epoch(&log.phase2),
                model_path.display()
            );
            models.insert(event, model);
        }

        // Validation metrics report for this seed.
        let mut report = String::from("event,t,horizon,variant,cindex,n_at_risk\n");
        for (&event, model) in &models {
            let rows = landmark_evaluate(model, &val_set, &cfg.eval_times, &cfg.horizons)?;
            append_landmark_rows(&mut report, event, &rows, None)?;
        }
        write_text(
            &cfg.out_dir.join(format!("val_metrics_seed{seed}.csv")),
            &report,
        )?;
    }
    Ok(())
}

fn selected_epoch(log: &stepfg_core::finegray::FitLog) -> usize {
    log.runs
        .iter()
        .find(|r| r.learning_rate == log.selected_lr)
        .map(|r| r.selected_epoch)
        .unwrap_or(0)
}

fn write_training_log(path: &Path, log: &stepfg_core::stepwise::StepwiseLog) -> Result<()> {
    let mut text =
        String::from("phase,learning_rate,epoch,train_loss,val_loss,val_cindex,selected\n");
    for (phase, fit) in [(1, &log.phase1), (2, &log.phase2)] {
        for run in &fit.runs {
            let chosen_run = run.learning_rate == fit.selected_lr;
            for e in &run.epochs {
                let selected = chosen_run && e.epoch == run.selected_epoch;
                writeln!(
                    text,
                    "{phase},{},{},{},{},{},{}",
                    run.learning_rate,
                    e.epoch,
                    e.train_loss,
                    e.val_loss,
                    e.val_cindex,
                    u8::from(selected)
                )?;
            }
        }
    }
    write_text(path, &text)
}

fn append_landmark_rows(
    out: &mut String,
    event: u32,
    rows: &[LandmarkEval],
    seed: Option<u64>,
) -> Result<()> {
    let mut prefix = String::new();
    if let Some(s) = seed {
        write!(prefix, "{s},")?;
    }
    for row in rows {
        for cell in &row.thresholded {
            writeln!(
                out,
                "{prefix}{event},{},{},phase1,{},{}",
                row.t,
                cell.horizon,
                format_cell(row.phase1_cindex),
                row.n_at_risk
            )?;
            writeln!(
                out,
                "{prefix}{event},{},{},phase2,{},{}",
                row.t,
                cell.horizon,
                format_cell(row.phase2_cindex),
                row.n_at_risk
            )?;
            writeln!(
                out,
                "{prefix}{event},{},{},thresholded,{},{}",
                row.t,
                cell.horizon,
                format_cell(cell.cindex),
                row.n_at_risk
            )?;
        }
        writeln!(
            out,
            "{prefix}{event},{},mean,phase1,{},{}",
            row.t,
            format_cell(row.phase1_cindex),
            row.n_at_risk
        )?;
        writeln!(
            out,
            "{prefix}{event},{},mean,phase2,{},{}",
            row.t,
            format_cell(row.phase2_cindex),
            row.n_at_risk
        )?;
        writeln!(
            out,
            "{prefix}{event},{},mean,thresholded,{},{}",
            row.t,
            format_cell(row.thresholded_mean),
            row.n_at_risk
        )?;
    }
    Ok(())
}

/// Evaluates every trained model set found under the model directory on the
/// chosen split: per-seed landmark concordance, its mean/sd aggregate
/// across seeds, and the subgroup summary table.
pub fn cmd_evaluate(cfg: &RunConfig, model_root: &Path, which: SplitChoice) -> Result<()> {
    let dataset = load_cohort(cfg)?;
    let seed_sets = seed_dirs(model_root)?;
    if seed_sets.is_empty() {
        bail!("no seed directories under {}", model_root.display());
    }
    // Threshold tables are tuned per horizon; an unknown horizon cannot be
    // evaluated.
    let first_models = event_model_paths(&seed_sets[0].1)?;
    for path in first_models.values() {
        let model = load_stepwise_model(path)?;
        for &h in &cfg.horizons {
            if !model
                .thresholds
                .horizons()
                .iter()
                .any(|&x| (x - h).abs() < 1e-9)
            {
                bail!(
                    "horizon {h} absent from threshold table in {}",
                    path.display()
                );
            }
        }
    }

    let mut by_seed = String::from("seed,event,t,horizon,variant,cindex,n_at_risk\n");
    let mut subgroup_csv = String::from("seed,event,stratum,t,n,mean_cif,mean_contribution\n");
    // (event, t, horizon-label, variant) -> values across seeds
    let mut cells: BTreeMap<(u32, String, String, &'static str), Vec<f64>> = BTreeMap::new();
    let mut at_risk: BTreeMap<(u32, String), Vec<f64>> = BTreeMap::new();

    for (seed, dir) in &seed_sets {
        let split = pick_split(split_for_seed(cfg, &dataset, *seed)?, which);
        let landmark_set = build_snapshots_at(&split, &cfg.eval_times, cfg.gap_limit)?;
        let subgroup_set = build_snapshots(
            &split,
            cfg.t_min,
            cfg.snapshot_step,
            cfg.max_t,
            cfg.gap_limit,
        )?;
        for (event, path) in event_model_paths(dir)? {
            let model = load_stepwise_model(&path)?;
            let rows = landmark_evaluate(&model, &landmark_set, &cfg.eval_times, &cfg.horizons)?;
            append_landmark_rows(&mut by_seed, event, &rows, Some(*seed))?;
            for row in &rows {
                let t_key = row.t.to_string();
                at_risk
                    .entry((event, t_key.clone()))
                    .or_default()
                    .push(row.n_at_risk as f64);
                let mut push = |horizon: String, variant: &'static str, v: Option<f64>| {
                    if let Some(x) = v {
                        cells
                            .entry((event, t_key.clone(), horizon, variant))
                            .or_default()
                            .push(x);
                    }
                };
                for cell in &row.thresholded {
                    let h_key = cell.horizon.to_string();
                    push(h_key.clone(), "phase1", row.phase1_cindex);
                    push(h_key.clone(), "phase2", row.phase2_cindex);
                    push(h_key, "thresholded", cell.cindex);
                }
                push("mean".to_string(), "phase1", row.phase1_cindex);
                push("mean".to_string(), "phase2", row.phase2_cindex);
                push("mean".to_string(), "thresholded", row.thresholded_mean);
            }

            let subgroups = subgroup_summary(
                &model,
                &subgroup_set,
                cfg.subgroup_horizon,
                cfg.subgroup_t_max,
            )?;
            for cell in subgroups {
                writeln!(
                    subgroup_csv,
                    "{seed},{event},{},{},{},{},{}",
                    cell.stratum, cell.t, cell.n, cell.mean_cif, cell.mean_contribution
                )?;
            }
        }
    }

    let mut aggregate = String::from("event,t,horizon,variant,mean,sd,n_seeds,mean_n_at_risk\n");
    for ((event, t, horizon, variant), values) in &cells {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            var.sqrt()
        } else {
            0.0
        };
        let risk = &at_risk[&(*event, t.clone())];
        let mean_risk = risk.iter().sum::<f64>() / risk.len() as f64;
        writeln!(
            aggregate,
            "{event},{t},{horizon},{variant},{mean},{sd},{},{mean_risk}",
            values.len()
        )?;
    }

    write_text(&cfg.out_dir.join("cindex_by_seed.csv"), &by_seed)?;
    write_text(&cfg.out_dir.join("cindex.csv"), &aggregate)?;
    write_text(&cfg.out_dir.join("subgroup.csv"), &subgroup_csv)?;
    print_summary_table(&cells, seed_sets.len());
    crate::emitln!(
        "evaluated {} seed set(s) -> {}",
        seed_sets.len(),
        cfg.out_dir.join("cindex.csv").display()
    );
    Ok(())
}

/// Prints the horizon-averaged CR c-index per event and prediction time,
/// one column per model variant, as mean +/- sd across seeds.
fn print_summary_table(
    cells: &BTreeMap<(u32, String, String, &'static str), Vec<f64>>,
    n_seeds: usize,
) {
    let mut events: Vec<u32> = cells.keys().map(|k| k.0).collect();
    events.sort_unstable();
    events.dedup();
    let fmt = |values: Option<&Vec<f64>>| -> String {
        match values {
            Some(v) if !v.is_empty() => {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let sd = if v.len() > 1 {
                    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                format!("{mean:.4} +/- {sd:.4}")
            }
            _ => "NA".to_string(),
        }
    };
    for event in events {
        crate::emitln!("event {event}: CR c-index across horizons ({n_seeds} seed(s))");
        crate::emitln!(
            "  {:>6}  {:>18}  {:>18}  {:>18}",
            "t",
            "phase1",
            "phase2",
            "thresholded"
        );
        let mut times: Vec<(f64, String)> = cells
            .keys()
            .filter(|k| k.0 == event && k.2 == "mean")
            .map(|k| (k.1.parse::<f64>().unwrap_or(f64::MAX), k.1.clone()))
            .collect();
        times.sort_by(|a, b| a.0.total_cmp(&b.0));
        times.dedup_by(|a, b| a.1 == b.1);
        for (_, t) in times {
            let cell = |variant: &'static str| {
                fmt(cells.get(&(event, t.clone(), "mean".to_string(), variant)))
            };
            crate::emitln!(
                "  {:>6}  {:>18}  {:>18}  {:>18}",
                t,
                cell("phase1"),
                cell("phase2"),
                cell("thresholded")
            );
        }
    }
}

#[derive(Serialize)]
struct PredictionRow {
    subject_id: String,
    t: f64,
    horizon: f64,
    event: u32,
    cif: f64,
    used_phase: u8,
    contribution: f64,
    phase1_cif: f64,
    phase2_cif: f64,
}

/// One-subject view of the cohort; errors on unknown ids.
fn narrow_to_subject(dataset: &Dataset, subject_id: &str) -> Result<Dataset> {
    if !dataset.subjects.iter().any(|s| s.id == subject_id) {
        bail!("unknown subject id {subject_id:?}");
    }
    Ok(Dataset::new(
        dataset
            .subjects
            .iter()
            .filter(|s| s.id == subject_id)
            .cloned()
            .collect(),
        dataset.registry.clone(),
        dataset.m,
    )?)
}

fn subject_snapshots(cfg: &RunConfig, dataset: &Dataset, subject_id: &str) -> Result<SnapshotSet> {
    let narrowed = narrow_to_subject(dataset, subject_id)?;
    let set = build_snapshots(
        &narrowed,
        cfg.t_min,
        cfg.snapshot_step,
        cfg.max_t,
        cfg.gap_limit,
    )?;
    if set.is_empty() {
        bail!("subject {subject_id:?} has no usable snapshots");
    }
    Ok(set)
}

/// Prints the thresholded prediction for one subject at one prediction time
/// and horizon as a JSON object.
pub fn cmd_predict(
    cfg: &RunConfig,
    model_path: &Path,
    subject_id: &str,
    t: f64,
    horizon: f64,
) -> Result<String> {
    let model = load_stepwise_model(model_path)?;
    let dataset = load_cohort(cfg)?;
    let narrowed = narrow_to_subject(&dataset, subject_id)?;
    let set = build_snapshots_at(&narrowed, &[t], cfg.gap_limit)?;
    let snap = set
        .snapshots
        .first()
        .ok_or_else(|| anyhow!("subject {subject_id:?} has no usable snapshot at t = {t}"))?;
    let p = predict(&model, snap, horizon)?;
    let row = PredictionRow {
        subject_id: subject_id.to_string(),
        t,
        horizon,
        event: model.event.code(),
        cif: p.cif,
        used_phase: p.used_phase.as_number(),
        contribution: p.contribution,
        phase1_cif: predict_cif(&model.phase1, snap, horizon)?,
        phase2_cif: predict_cif(&model.phase2, snap, horizon)?,
    };
    Ok(serde_json::to_string_pretty(&row)?)
}

/// Export format for trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => bail!("unknown format {other:?} (expected csv or json)"),
        }
    }
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: f64,
    mean_bp: f64,
    bp_ref_lower: f64,
    bp_ref_upper: f64,
    dop_dose: f64,
    epi_dose: f64,
    nor_dose: f64,
    vas_dose: f64,
    phe_dose: f64,
    phase1_cif: f64,
    phase2_cif: f64,
    thresholded_cif: f64,
    contribution: f64,
    used_phase: u8,
}

/// Writes one subject's feature trajectory with per-time CIFs from both
/// phases, the thresholded CIF, the incremental contribution, and which
/// phase was used -- enough to redraw the patient-level panels externally.
/// The 65 and 100 mmHg reference bounds are echoed as columns.
pub fn cmd_export_trajectory(
    cfg: &RunConfig,
    model_path: &Path,
    subject_id: &str,
    horizon: f64,
    format: ExportFormat,
) -> Result<PathBuf> {
    let model = load_stepwise_model(model_path)?;
    let dataset = load_cohort(cfg)?;
    let set = subject_snapshots(cfg, &dataset, subject_id)?;

    let mut rows = Vec::with_capacity(set.len());
    for snap in &set.snapshots {
        let p = predict(&model, snap, horizon)?;
        rows.push(TrajectoryRow {
            t: snap.t,
            mean_bp: snap.phase2[0],
            bp_ref_lower: 65.0,
            bp_ref_upper: 100.0,
            dop_dose: snap.phase2[4],
            epi_dose: snap.phase2[5],
            nor_dose: snap.phase2[6],
            vas_dose: snap.phase2[7],
            phe_dose: snap.phase2[8],
            phase1_cif: predict_cif(&model.phase1, snap, horizon)?,
            phase2_cif: predict_cif(&model.phase2, snap, horizon)?,
            thresholded_cif: p.cif,
            contribution: incremental_contribution(&model, snap, horizon)?,
            used_phase: p.used_phase.as_number(),
        });
    }

    let (path, text) = match format {
        ExportFormat::Json => {
            let path = cfg.out_dir.join(format!("trajectory_{subject_id}.json"));
            let mut text = serde_json::to_string_pretty(&rows)?;
            text.push('\n');
            (path, text)
        }
        ExportFormat::Csv => {
            let path = cfg.out_dir.join(format!("trajectory_{subject_id}.csv"));
            let mut text = String::from(
                "t,mean_bp,bp_ref_lower,bp_ref_upper,dop_dose,epi_dose,nor_dose,vas_dose,phe_dose,phase1_cif,phase2_cif,thresholded_cif,contribution,used_phase\n",
            );
            for r in &rows {
                writeln!(
                    text,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.t,
                    r.mean_bp,
                    r.bp_ref_lower,
                    r.bp_ref_upper,
                    r.dop_dose,
                    r.epi_dose,
                    r.nor_dose,
                    r.vas_dose,
                    r.phe_dose,
                    r.phase1_cif,
                    r.phase2_cif,
                    r.thresholded_cif,
                    r.contribution,
                    r.used_phase
                )?;
            }
            (path, text)
        }
    };
    write_text(&path, &text)?;
    crate::emitln!("wrote {} rows -> {}", rows.len(), path.display());
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_choice_parses() {
        assert_eq!("val".parse::<SplitChoice>().unwrap(), SplitChoice::Val);
        assert!("other".parse::<SplitChoice>().is_err());
    }

    #[test]
    fn export_format_parses() {
        assert_eq!("json".parse::<ExportFormat>().unwrap(), ExportFormat::Json);
        assert!("yaml".parse::<ExportFormat>().is_err());
    }
}
