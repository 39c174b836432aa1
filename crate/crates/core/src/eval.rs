//! Discrimination metrics and landmark/subgroup analytics.
//!
//! The competing-risks concordance counts ordered pairs `(i, j)` where `i`
//! experienced the event of interest and either preceded `j` or `j`
//! experienced a different event; the classic Harrell index recodes
//! competing events as censoring and only compares within strictly ordered
//! observed times. Score ties count one half; time ties are not comparable.

use alloc::vec::Vec;

use crate::data::SnapshotSet;
use crate::finegray::{predict_cif, FgLabel};
use crate::stepwise::{log_baseline_hazard_ratio, predict, StepwiseModel};
use crate::{Error, Result};

/// Competing-risks concordance for event `k` (no truncation).
pub fn cr_cindex(scores: &[f64], labels: &[FgLabel], k: crate::data::EventCode) -> Result<f64> {
    cr_cindex_truncated(scores, labels, k, None)
}

/// Competing-risks concordance with optional truncation: pairs whose
/// reference time exceeds `tau` are not compared.
pub fn cr_cindex_truncated(
    scores: &[f64],
    labels: &[FgLabel],
    k: crate::data::EventCode,
    tau: Option<f64>,
) -> Result<f64> {
    check_inputs(scores, labels)?;
    let n = labels.len();
    let mut concordant = 0.0_f64;
    let mut comparable = 0usize;
    for i in 0..n {
        if labels[i].event != k {
            continue;
        }
        if let Some(t) = tau {
            if labels[i].time > t {
                continue;
            }
        }
        for j in 0..n {
            if j == i {
                continue;
            }
            let ordered = labels[i].time < labels[j].time;
            let different = labels[j].event != k;
            if !(ordered || different) {
                continue;
            }
            comparable += 1;
            if scores[i] > scores[j] {
                concordant += 1.0;
            } else if scores[i] == scores[j] {
                concordant += 0.5;
            }
        }
    }
    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(concordant / comparable as f64)
}

/// Harrell concordance for event `k`, treating competing events as censored.
pub fn harrell_cindex(
    scores: &[f64],
    labels: &[FgLabel],
    k: crate::data::EventCode,
) -> Result<f64> {
    check_inputs(scores, labels)?;
    let n = labels.len();
    let mut concordant = 0.0_f64;
    let mut comparable = 0usize;
    for i in 0..n {
        if labels[i].event != k {
            continue;
        }
        for j in 0..n {
            if j == i || !(labels[i].time < labels[j].time) {
                continue;
            }
            comparable += 1;
            if scores[i] > scores[j] {
                concordant += 1.0;
            } else if scores[i] == scores[j] {
                concordant += 0.5;
            }
        }
    }
    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(concordant / comparable as f64)
}

fn check_inputs(scores: &[f64], labels: &[FgLabel]) -> Result<()> {
    if labels.len() < 2 {
        return Err(Error::EmptyInput("concordance needs at least two subjects"));
    }
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    Ok(())
}

/// Mean concordance over prediction-time index groups; groups without
/// comparable pairs are skipped, and when every group is unusable the pooled
/// concordance stands in. NaN only when even the pooled value is undefined.
pub(crate) fn mean_cindex_over_groups(
    scores: &[f64],
    labels: &[FgLabel],
    groups: &[Vec<usize>],
    k: crate::data::EventCode,
) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for group in groups {
        if group.len() < 2 {
            continue;
        }
        let sub_scores: Vec<f64> = group.iter().map(|&i| scores[i]).collect();
        let sub_labels: Vec<FgLabel> = group.iter().map(|&i| labels[i]).collect();
        if let Ok(c) = cr_cindex(&sub_scores, &sub_labels, k) {
            sum += c;
            count += 1;
        }
    }
    if count > 0 {
        return sum / count as f64;
    }
    cr_cindex(scores, labels, k).unwrap_or(f64::NAN)
}

/// Concordance of one model variant at one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonCell {
    pub horizon: f64,
    /// `None` when no pairs were comparable or the contribution was
    /// undefined at this horizon.
    pub cindex: Option<f64>,
}

/// Discrimination of the three variants at one prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkEval {
    pub t: f64,
    /// Snapshots still under observation at `t`.
    pub n_at_risk: usize,
    /// Ranking by the phase-1 score (horizon-free under proportional
    /// subhazards).
    pub phase1_cindex: Option<f64>,
    /// Ranking by the combined phase-1 + phase-2 score.
    pub phase2_cindex: Option<f64>,
    /// Thresholded predictor, ranked by its CIF at each horizon.
    pub thresholded: Vec<HorizonCell>,
    /// Mean of the defined per-horizon values.
    pub thresholded_mean: Option<f64>,
}

/// Evaluates a fitted stepwise model at each prediction time: only
/// snapshots taken at `t` (subjects still event-free then) enter, phase
/// scores are ranked directly, and the thresholded predictor is ranked by
/// its predicted CIF per horizon.
pub fn landmark_evaluate(
    model: &StepwiseModel,
    test: &SnapshotSet,
    times: &[f64],
    horizons: &[f64],
) -> Result<Vec<LandmarkEval>> {
    let k = model.event;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let idx = test.at_time(t);
        let labels: Vec<FgLabel> = idx
            .iter()
            .map(|&i| FgLabel {
                time: test.snapshots[i].residual_time,
                event: test.snapshots[i].event,
            })
            .collect();

        let mut phase1_scores = Vec::with_capacity(idx.len());
        let mut phase2_scores = Vec::with_capacity(idx.len());
        for &i in &idx {
            let snap = &test.snapshots[i];
            phase1_scores.push(model.phase1.score(snap)?);
            phase2_scores.push(model.phase2.score(snap)?);
        }

        let phase1_cindex = cr_cindex(&phase1_scores, &labels, k).ok();
        let phase2_cindex = cr_cindex(&phase2_scores, &labels, k).ok();

        let mut thresholded = Vec::with_capacity(horizons.len());
        let mut sum = 0.0;
        let mut count = 0usize;
        for &h in horizons {
            let mut cifs = Vec::with_capacity(idx.len());
            let mut defined = true;
            for &i in &idx {
                match predict(model, &test.snapshots[i], h) {
                    Ok(p) => cifs.push(p.cif),
                    Err(Error::UndefinedHazard { .. }) => {
                        defined = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            let cindex = if defined {
                cr_cindex(&cifs, &labels, k).ok()
            } else {
                None
            };
            if let Some(c) = cindex {
                sum += c;
                count += 1;
            }
            thresholded.push(HorizonCell { horizon: h, cindex });
        }
        let thresholded_mean = if count > 0 {
            Some(sum / count as f64)
        } else {
            None
        };

        out.push(LandmarkEval {
            t,
            n_at_risk: idx.len(),
            phase1_cindex,
            phase2_cindex,
            thresholded,
            thresholded_mean,
        });
    }
    Ok(out)
}

/// One subgroup cell: stratum by prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupCell {
    pub stratum: i64,
    pub t: f64,
    pub n: usize,
    /// Mean phase-2 CIF at the summary horizon over at-risk snapshots.
    pub mean_cif: f64,
    /// Mean incremental contribution at the summary horizon.
    pub mean_contribution: f64,
}

/// Per-stratum, per-prediction-time means of the phase-2 CIF at horizon `h`
/// and of the incremental contribution, over snapshots with `t <= t_max`.
/// Cells are ordered by stratum then time; empty cells are simply absent.
pub fn subgroup_summary(
    model: &StepwiseModel,
    snapshots: &SnapshotSet,
    h: f64,
    t_max: f64,
) -> Result<Vec<SubgroupCell>> {
    let hazard_ratio = log_baseline_hazard_ratio(model, h)?;
    let mut cells: alloc::collections::BTreeMap<(i64, u64), (f64, f64, usize, f64)> =
        Default::default();
    for snap in &snapshots.snapshots {
        if snap.t > t_max {
            continue;
        }
        let cif = predict_cif(&model.phase2, snap, h)?;
        let contribution = model.phase2.own_score(snap)? + hazard_ratio;
        let key = (snap.stratum, snap.t.to_bits());
        let entry = cells.entry(key).or_insert((0.0, 0.0, 0, snap.t));
        entry.0 += cif;
        entry.1 += contribution;
        entry.2 += 1;
    }
    let mut out: Vec<SubgroupCell> = cells
        .into_iter()
        .map(
            |((stratum, _), (cif_sum, contrib_sum, n, t))| SubgroupCell {
                stratum,
                t,
                n,
                mean_cif: cif_sum / n as f64,
                mean_contribution: contrib_sum / n as f64,
            },
        )
        .collect();
    out.sort_by(|a, b| a.stratum.cmp(&b.stratum).then(a.t.total_cmp(&b.t)));
    Ok(out)
}
