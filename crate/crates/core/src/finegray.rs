//! Single-phase Fine-Gray model for one competing event.
//!
//! The model couples a risk network with an IPCW-weighted partial
//! likelihood over residual observed times. Subjects with the event of
//! interest contribute one likelihood term each; their risk set keeps
//! subjects observed later plus subjects who experienced a *different*
//! event earlier, down-weighted by the censoring survival ratio. After the
//! network is trained, a weighted Breslow estimator produces the baseline
//! cumulative subhazard, and the cumulative incidence at horizon `h` is
//! `1 - exp(-exp(score) * baseline(h))`.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::censoring::{censoring_survival, Ipcw};
use crate::data::{EventCode, Snapshot, SnapshotSet};
use crate::eval::mean_cindex_over_groups;
use crate::num;
use crate::risk_net::{
    adam_step, backward, forward, infer, init, standardization_stats, AdamState, Gradients,
    MlpConfig, MlpParams,
};
use crate::rng::Rng;
use crate::stepfn::StepFunction;
use crate::{Error, Result};

/// Residual observed time and event code of one training instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgLabel {
    pub time: f64,
    pub event: EventCode,
}

/// Which snapshot coordinates a phase model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSlice {
    /// Static features plus prediction time.
    Phase1,
    /// Phase-1 coordinates followed by the time-varying block.
    Phase1And2,
}

impl FeatureSlice {
    pub fn extract(&self, snapshot: &Snapshot) -> Vec<f64> {
        match self {
            FeatureSlice::Phase1 => snapshot.phase1.clone(),
            FeatureSlice::Phase1And2 => {
                let mut v = Vec::with_capacity(snapshot.phase1.len() + snapshot.phase2.len());
                v.extend_from_slice(&snapshot.phase1);
                v.extend_from_slice(&snapshot.phase2);
                v
            }
        }
    }

    pub fn names(&self, set: &SnapshotSet) -> Vec<String> {
        match self {
            FeatureSlice::Phase1 => set.phase1_names.clone(),
            FeatureSlice::Phase1And2 => {
                let mut v = set.phase1_names.clone();
                v.extend(set.phase2_names.iter().cloned());
                v
            }
        }
    }

    pub fn dim(&self, set: &SnapshotSet) -> usize {
        self.names(set).len()
    }
}

/// A fitted single-phase model: network, baseline cumulative subhazard, the
/// feature slice it reads, and an optional frozen offset model whose score
/// is added to the network output.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseModel {
    pub event: EventCode,
    pub net: MlpParams,
    pub baseline_cum: StepFunction,
    pub feature_slice: FeatureSlice,
    pub offset: Option<Box<PhaseModel>>,
}

impl PhaseModel {
    /// Score of this model's own network, excluding any offset.
    pub fn own_score(&self, snapshot: &Snapshot) -> Result<f64> {
        infer(&self.net, &self.feature_slice.extract(snapshot))
    }

    /// Full risk score: own network output plus the frozen offset chain.
    pub fn score(&self, snapshot: &Snapshot) -> Result<f64> {
        let mut s = self.own_score(snapshot)?;
        if let Some(offset) = &self.offset {
            s += offset.score(snapshot)?;
        }
        Ok(s)
    }

    /// Cumulative incidence `1 - exp(-exp(score) * baseline(h))` from an
    /// already-computed score.
    pub fn cif_from_score(&self, score: f64, h: f64) -> f64 {
        1.0 - num::exp(-num::exp(score) * self.baseline_cum.value_at(h))
    }
}

/// Predicted cumulative incidence of the model's event by horizon `h`
/// (measured from the snapshot's prediction time). Dropout is off.
pub fn predict_cif(model: &PhaseModel, snapshot: &Snapshot, h: f64) -> Result<f64> {
    let score = model.score(snapshot)?;
    Ok(model.cif_from_score(score, h))
}

/// IPCW-weighted negative log partial likelihood and its exact gradient
/// with respect to `scores`.
///
/// With `s = scores + offsets` and `n_k` subjects carrying event `k`, the
/// loss is `-(1/n_k) * sum_i [ s_i - ln sum_{j in R_i} w_j(y_i) exp(s_j) ]`
/// over event-`k` subjects `i`. The inner log-sum is computed with max
/// subtraction. Errors when the batch has no event-`k` subject.
pub fn neg_log_partial_likelihood(
    scores: &[f64],
    offsets: &[f64],
    labels: &[FgLabel],
    k: EventCode,
    ipcw: &Ipcw<'_>,
) -> Result<(f64, Vec<f64>)> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyInput("partial-likelihood batch"));
    }
    if scores.len() != n || offsets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: scores.len().min(offsets.len()),
        });
    }
    let s: Vec<f64> = scores.iter().zip(offsets).map(|(a, b)| a + b).collect();

    let event_idx: Vec<usize> = (0..n).filter(|&i| labels[i].event == k).collect();
    if event_idx.is_empty() {
        return Err(Error::NoEvents { event: k.code() });
    }
    let n_k = event_idx.len() as f64;

    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for &i in &event_idx {
        let y_i = labels[i].time;
        let mut m = f64::NEG_INFINITY;
        for j in 0..n {
            let w = ipcw.weight(y_i, labels[j].time, labels[j].event, k);
            weights[j] = w;
            if w > 0.0 && s[j] > m {
                m = s[j];
            }
        }
        let mut denom = 0.0;
        for j in 0..n {
            if weights[j] > 0.0 {
                denom += weights[j] * num::exp(s[j] - m);
            }
        }
        if denom <= 0.0 {
            return Err(Error::ZeroRiskSet { time: y_i });
        }
        loss -= s[i] - (m + num::ln(denom));
        for j in 0..n {
            if weights[j] > 0.0 {
                grad[j] += weights[j] * num::exp(s[j] - m) / denom;
            }
        }
        grad[i] -= 1.0;
    }
    loss /= n_k;
    for g in &mut grad {
        *g /= n_k;
    }
    Ok((loss, grad))
}

/// IPCW-weighted Breslow estimate of the baseline cumulative subhazard.
///
/// At each distinct event-`k` time `h`, the discrete hazard is the event
/// count over the weighted risk-set sum `sum_j w_j(h) exp(s_j)`; the
/// returned step function accumulates those masses and stays flat past the
/// last event time.
pub fn breslow_baseline(
    scores: &[f64],
    offsets: &[f64],
    labels: &[FgLabel],
    k: EventCode,
    ipcw: &Ipcw<'_>,
) -> Result<StepFunction> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyInput("Breslow batch"));
    }
    if scores.len() != n || offsets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: scores.len().min(offsets.len()),
        });
    }
    let s: Vec<f64> = scores.iter().zip(offsets).map(|(a, b)| a + b).collect();

    let mut event_times: Vec<f64> = (0..n)
        .filter(|&i| labels[i].event == k)
        .map(|i| labels[i].time)
        .collect();
    if event_times.is_empty() {
        return Err(Error::NoEvents { event: k.code() });
    }
    event_times.sort_by(f64::total_cmp);

    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut cum = 0.0;
    let mut i = 0;
    while i < event_times.len() {
        let h = event_times[i];
        let mut d = 0usize;
        while i < event_times.len() && event_times[i] == h {
            d += 1;
            i += 1;
        }
        let mut m = f64::NEG_INFINITY;
        for j in 0..n {
            if ipcw.weight(h, labels[j].time, labels[j].event, k) > 0.0 && s[j] > m {
                m = s[j];
            }
        }
        let mut denom = 0.0;
        for j in 0..n {
            let w = ipcw.weight(h, labels[j].time, labels[j].event, k);
            if w > 0.0 {
                denom += w * num::exp(s[j] - m);
            }
        }
        if denom <= 0.0 {
            return Err(Error::ZeroRiskSet { time: h });
        }
        // hazard = d / (e^m * denom), in log space for tail safety
        let hazard = num::exp(num::ln(d as f64) - m - num::ln(denom));
        if !hazard.is_finite() {
            // The event sits where the model puts essentially zero risk
            // mass; the maximum-likelihood increment exceeds f64 range.
            return Err(Error::NonFinite(alloc::format!(
                "Breslow hazard at time {h}"
            )));
        }
        cum += hazard;
        knots.push(h);
        values.push(cum);
    }
    StepFunction::new(0.0, knots, values)
}

/// Training schedule for one phase fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Learning-rate candidates, searched sequentially; the rate with the
    /// best mean validation concordance wins.
    pub learning_rates: Vec<f64>,
    pub weight_decay: f64,
    /// Epoch cap per learning rate.
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub early_stop_patience: usize,
    /// Mini-batch size; `usize::MAX` trains full-batch.
    pub batch_size: usize,
    /// Prediction times at which validation concordance is averaged.
    pub eval_times: Vec<f64>,
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    /// Keep censored-earlier subjects in risk sets (literal reading) instead
    /// of dropping them (standard estimator).
    pub censored_in_risk_set: bool,
    /// Sample at most one snapshot per subject per epoch.
    pub one_snapshot_per_subject: bool,
    /// Select the returned checkpoint (and learning rate) by validation
    /// loss instead of validation concordance. Concordance is blind to the
    /// score scale, so loss selection is the right instrument when
    /// coefficient magnitudes matter (e.g. parameter-recovery studies).
    pub select_checkpoint_by_loss: bool,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rates: vec![5e-4, 1e-4, 5e-5],
            weight_decay: 1e-3,
            max_epochs: 1000,
            early_stop_patience: 20,
            batch_size: 128,
            eval_times: vec![6.0, 12.0, 24.0, 48.0],
            hidden_dims: vec![64, 32],
            dropout_rate: 0.2,
            censored_in_risk_set: false,
            one_snapshot_per_subject: false,
            select_checkpoint_by_loss: false,
            seed: 0,
        }
    }
}

/// Per-epoch training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_cindex: f64,
}

/// Trace of one learning-rate candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct LrRun {
    pub learning_rate: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub selected_epoch: usize,
    pub best_val_cindex: f64,
    pub best_val_loss: f64,
}

/// Full fitting trace across the learning-rate grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitLog {
    pub runs: Vec<LrRun>,
    pub selected_lr: f64,
}

pub struct FitOutcome {
    pub model: PhaseModel,
    pub log: FitLog,
}

/// Fits one phase: Adam over shuffled mini-batches of the partial-likelihood
/// loss (risk sets formed within each batch, censoring survival estimated
/// once from all training labels), early stopping on validation loss, and
/// checkpoint selection by mean validation concordance over
/// `cfg.eval_times`. The Breslow baseline is then fit on the full training
/// set with the selected network.
pub fn fit_phase(
    train: &SnapshotSet,
    val: &SnapshotSet,
    k: EventCode,
    slice: FeatureSlice,
    offset_model: Option<&PhaseModel>,
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training snapshots"));
    }
    if val.is_empty() {
        return Err(Error::EmptyInput("validation snapshots"));
    }
    if cfg.learning_rates.is_empty() {
        return Err(Error::EmptyInput("learning-rate candidates"));
    }
    let train_labels = train.labels();
    let val_labels = val.labels();
    if !train_labels.iter().any(|l| l.event == k) {
        return Err(Error::NoEvents { event: k.code() });
    }
    if !val_labels.iter().any(|l| l.event == k) {
        return Err(Error::NoEvents { event: k.code() });
    }

    let features: Vec<Vec<f64>> = train.snapshots.iter().map(|s| slice.extract(s)).collect();
    let val_features: Vec<Vec<f64>> = val.snapshots.iter().map(|s| slice.extract(s)).collect();
    let offsets: Vec<f64> = match offset_model {
        Some(m) => train
            .snapshots
            .iter()
            .map(|s| m.score(s))
            .collect::<Result<_>>()?,
        None => vec![0.0; train.len()],
    };
    let val_offsets: Vec<f64> = match offset_model {
        Some(m) => val
            .snapshots
            .iter()
            .map(|s| m.score(s))
            .collect::<Result<_>>()?,
        None => vec![0.0; val.len()],
    };

    let g_curve = censoring_survival(
        &train_labels
            .iter()
            .map(|l| (l.time, l.event))
            .collect::<Vec<_>>(),
    )?;
    let ipcw = Ipcw {
        g: &g_curve,
        censored_in_risk_set: cfg.censored_in_risk_set,
        ..Ipcw::new(&g_curve)
    };

    let (mean, std) = standardization_stats(&features)?;
    let input_dim = features[0].len();

    // Validation snapshots grouped by prediction time, for the concordance
    // criterion.
    let val_groups: Vec<Vec<usize>> = cfg.eval_times.iter().map(|&t| val.at_time(t)).collect();

    // Per-subject index groups for the one-snapshot-per-subject mode.
    let subject_groups: Vec<Vec<usize>> = if cfg.one_snapshot_per_subject {
        let mut map: alloc::collections::BTreeMap<&str, Vec<usize>> = Default::default();
        for (i, s) in train.snapshots.iter().enumerate() {
            map.entry(s.subject_id.as_str()).or_default().push(i);
        }
        map.into_values().collect()
    } else {
        Vec::new()
    };

    let mut log = FitLog::default();
    let mut best: Option<(f64, MlpParams, f64)> = None; // (cindex, params, lr)

    for (lr_index, &lr) in cfg.learning_rates.iter().enumerate() {
        let net_cfg = MlpConfig {
            input_dim,
            hidden_dims: cfg.hidden_dims.clone(),
            dropout_rate: cfg.dropout_rate,
            seed: cfg.seed ^ (lr_index as u64).wrapping_mul(0x9e3779b97f4a7c15),
        };
        let mut params = init(&net_cfg)?;
        params.set_standardization(mean.clone(), std.clone())?;
        let mut adam = AdamState::new(&params, lr, cfg.weight_decay);
        let mut rng = Rng::derive(cfg.seed, 0x666974 ^ lr_index as u64); // "fit"

        let mut run = LrRun {
            learning_rate: lr,
            epochs: Vec::new(),
            selected_epoch: 0,
            best_val_cindex: f64::NEG_INFINITY,
            best_val_loss: f64::INFINITY,
        };
        let mut best_params = params.clone();
        let mut stale_epochs = 0usize;

        for epoch in 0..cfg.max_epochs {
            let mut order: Vec<usize> = if cfg.one_snapshot_per_subject {
                subject_groups
                    .iter()
                    .map(|g| g[rng.below(g.len())])
                    .collect()
            } else {
                (0..train.len()).collect()
            };
            rng.shuffle(&mut order);

            let batch_size = cfg.batch_size.max(1).min(order.len());
            let mut epoch_loss = 0.0;
            let mut contributing = 0usize;
            for batch in order.chunks(batch_size) {
                let mut caches = Vec::with_capacity(batch.len());
                let mut scores = Vec::with_capacity(batch.len());
                for &i in batch {
                    let (score, cache) = forward(&params, &features[i], Some(&mut rng))?;
                    scores.push(score);
                    caches.push(cache);
                }
                let batch_offsets: Vec<f64> = batch.iter().map(|&i| offsets[i]).collect();
                let batch_labels: Vec<FgLabel> = batch.iter().map(|&i| train_labels[i]).collect();
                let (loss, dscores) = match neg_log_partial_likelihood(
                    &scores,
                    &batch_offsets,
                    &batch_labels,
                    k,
                    &ipcw,
                ) {
                    Ok(pair) => pair,
                    Err(Error::NoEvents { .. }) => continue, // batch carries no signal
                    Err(e) => return Err(e),
                };
                if !loss.is_finite() {
                    return Err(Error::NonFinite(alloc::format!(
                        "training loss at lr {lr}, epoch {epoch}"
                    )));
                }
                epoch_loss += loss;
                contributing += 1;

                let mut grads = Gradients::zeros_like(&params);
                for (pos, &_i) in batch.iter().enumerate() {
                    if dscores[pos] != 0.0 {
                        grads.accumulate(&backward(&params, &caches[pos], dscores[pos]));
                    }
                }
                adam_step(&mut params, &grads, &mut adam);
            }
            let train_loss = if contributing > 0 {
                epoch_loss / contributing as f64
            } else {
                f64::NAN
            };

            let val_scores: Vec<f64> = val_features
                .iter()
                .map(|x| infer(&params, x))
                .collect::<Result<_>>()?;
            let (val_loss, _) =
                neg_log_partial_likelihood(&val_scores, &val_offsets, &val_labels, k, &ipcw)?;
            if !val_loss.is_finite() {
                return Err(Error::NonFinite(alloc::format!(
                    "validation loss at lr {lr}, epoch {epoch}"
                )));
            }
            let combined: Vec<f64> = val_scores
                .iter()
                .zip(&val_offsets)
                .map(|(a, b)| a + b)
                .collect();
            let val_cindex = mean_cindex_over_groups(&combined, &val_labels, &val_groups, k);

            run.epochs.push(EpochRecord {
                epoch,
                train_loss,
                val_loss,
                val_cindex,
            });

            if val_cindex > run.best_val_cindex {
                run.best_val_cindex = val_cindex;
                if !cfg.select_checkpoint_by_loss {
                    run.selected_epoch = epoch;
                    best_params = params.clone();
                }
            }
            if val_loss < run.best_val_loss {
                run.best_val_loss = val_loss;
                if cfg.select_checkpoint_by_loss {
                    run.selected_epoch = epoch;
                    best_params = params.clone();
                }
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= cfg.early_stop_patience {
                    break;
                }
            }
        }

        // Higher is better for both selection criteria.
        let run_metric = if cfg.select_checkpoint_by_loss {
            -run.best_val_loss
        } else {
            run.best_val_cindex
        };
        let replace = match &best {
            None => true,
            Some((m, _, _)) => run_metric > *m,
        };
        if replace {
            best = Some((run_metric, best_params, lr));
        }
        log.runs.push(run);
    }

    let (_, net, selected_lr) = best.expect("at least one learning rate");
    log.selected_lr = selected_lr;

    let train_scores: Vec<f64> = features
        .iter()
        .map(|x| infer(&net, x))
        .collect::<Result<_>>()?;
    let baseline = breslow_baseline(&train_scores, &offsets, &train_labels, k, &ipcw)?;

    Ok(FitOutcome {
        model: PhaseModel {
            event: k,
            net,
            baseline_cum: baseline,
            feature_slice: slice,
            offset: offset_model.cloned().map(Box::new),
        },
        log,
    })
}
