//! Two-phase stepwise fitting and thresholded prediction.
//!
//! Phase 1 models the event subhazard from static features (plus prediction
//! time); phase 2 refits on static and time-varying features with the
//! frozen phase-1 score as an offset, yielding its own baseline. The
//! incremental contribution of phase 2 at horizon `h` is the log ratio of
//! the two modeled subhazards,
//! `I = f2 + ln hazard2(h) - ln hazard1(h)`,
//! and a per-horizon threshold tuned on validation data decides which
//! phase's cumulative incidence is reported: phase 1 when `|I|` is at or
//! below the threshold, phase 2 above it.

use alloc::vec::Vec;

use crate::data::{EventCode, Snapshot, SnapshotSet};
use crate::eval::mean_cindex_over_groups;
use crate::finegray::{fit_phase, predict_cif, FeatureSlice, FitConfig, FitLog, PhaseModel};
use crate::num;
use crate::stepfn::StepFunction;
use crate::{Error, Result};

/// Horizons (hours past the prediction time) at which thresholds are tuned.
pub const DEFAULT_HORIZONS: [f64; 5] = [24.0, 48.0, 72.0, 120.0, 240.0];

/// Number of uniformly spaced candidates between 0 and the maximum absolute
/// incremental contribution.
pub const DEFAULT_THRESHOLD_GRID: usize = 100;

/// Width of the cell over which discrete baseline hazard mass is collected
/// when evaluating a hazard "at" an arbitrary horizon.
pub const HAZARD_WINDOW_HOURS: f64 = 1.0;

/// How far (in whole cells) to search for a nonempty hazard cell around the
/// requested horizon before declaring the log hazard undefined.
pub const HAZARD_FALLBACK_CELLS: usize = 6;

/// Discrete baseline-hazard mass near `h`: the increase of the cumulative
/// baseline over `(h - 1, h]`, falling back to the nearest nonempty
/// unit cell within six hours (earlier cell preferred on ties).
pub fn hazard_mass_near(baseline: &StepFunction, h: f64) -> Option<f64> {
    let cell = |center: f64| baseline.mass_between(center - HAZARD_WINDOW_HOURS, center);
    let direct = cell(h);
    if direct > 0.0 {
        return Some(direct);
    }
    for offset in 1..=HAZARD_FALLBACK_CELLS {
        let below = cell(h - offset as f64);
        if below > 0.0 {
            return Some(below);
        }
        let above = cell(h + offset as f64);
        if above > 0.0 {
            return Some(above);
        }
    }
    None
}

/// Per-horizon thresholds on the absolute incremental contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    horizons: Vec<f64>,
    deltas: Vec<f64>,
}

impl ThresholdTable {
    pub fn new(horizons: Vec<f64>, deltas: Vec<f64>) -> Result<Self> {
        if horizons.is_empty() {
            return Err(Error::EmptyInput("threshold horizons"));
        }
        if horizons.len() != deltas.len() {
            return Err(Error::DimensionMismatch {
                expected: horizons.len(),
                got: deltas.len(),
            });
        }
        for w in horizons.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Invalid(
                    "threshold horizons must be strictly increasing".into(),
                ));
            }
        }
        if horizons.iter().any(|&h| !(h > 0.0)) || deltas.iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::Invalid(
                "horizons must be positive and deltas nonnegative".into(),
            ));
        }
        Ok(ThresholdTable { horizons, deltas })
    }

    /// Threshold at `h`: the value tuned at the nearest horizon at or below
    /// `h`, or the first horizon's value when `h` precedes it.
    pub fn delta_at(&self, h: f64) -> f64 {
        let idx = self.horizons.partition_point(|&x| x <= h);
        if idx == 0 {
            self.deltas[0]
        } else {
            self.deltas[idx - 1]
        }
    }

    pub fn horizons(&self) -> &[f64] {
        &self.horizons
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }
}

/// A fitted two-phase model for one event with its tuned thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct StepwiseModel {
    pub event: EventCode,
    pub phase1: PhaseModel,
    pub phase2: PhaseModel,
    pub thresholds: ThresholdTable,
}

impl StepwiseModel {
    /// Bundles fitted phases, checking that both model the same event and
    /// that phase 2 carries phase 1 as its frozen offset.
    pub fn new(phase1: PhaseModel, phase2: PhaseModel, thresholds: ThresholdTable) -> Result<Self> {
        if phase1.event != phase2.event {
            return Err(Error::Invalid(
                "phase models target different events".into(),
            ));
        }
        match &phase2.offset {
            Some(offset) if offset.as_ref() == &phase1 => {}
            _ => {
                return Err(Error::Invalid(
                    "phase 2 must carry the frozen phase-1 model as its offset".into(),
                ))
            }
        }
        Ok(StepwiseModel {
            event: phase1.event,
            phase1,
            phase2,
            thresholds,
        })
    }
}

/// Log ratio of the two baseline hazards at `h`; the snapshot-independent
/// part of the incremental contribution.
pub fn log_baseline_hazard_ratio(model: &StepwiseModel, h: f64) -> Result<f64> {
    let l2 = hazard_mass_near(&model.phase2.baseline_cum, h)
        .ok_or(Error::UndefinedHazard { horizon: h })?;
    let l1 = hazard_mass_near(&model.phase1.baseline_cum, h)
        .ok_or(Error::UndefinedHazard { horizon: h })?;
    Ok(num::ln(l2) - num::ln(l1))
}

/// Incremental contribution of the phase-2 features at horizon `h`:
/// the phase-2 network score plus the log baseline-hazard ratio. Depends on
/// the snapshot only through the phase-2 score.
pub fn incremental_contribution(model: &StepwiseModel, snapshot: &Snapshot, h: f64) -> Result<f64> {
    Ok(model.phase2.own_score(snapshot)? + log_baseline_hazard_ratio(model, h)?)
}

/// Which phase produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsedPhase {
    Phase1,
    Phase2,
}

impl UsedPhase {
    pub fn as_number(self) -> u8 {
        match self {
            UsedPhase::Phase1 => 1,
            UsedPhase::Phase2 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub cif: f64,
    pub used_phase: UsedPhase,
    pub contribution: f64,
}

/// Thresholded prediction at horizon `h`: phase 2's CIF when the absolute
/// incremental contribution exceeds the tuned threshold, phase 1's
/// otherwise (ties go to phase 1).
pub fn predict(model: &StepwiseModel, snapshot: &Snapshot, h: f64) -> Result<Prediction> {
    let contribution = incremental_contribution(model, snapshot, h)?;
    let delta = model.thresholds.delta_at(h);
    if num::abs(contribution) > delta {
        Ok(Prediction {
            cif: predict_cif(&model.phase2, snapshot, h)?,
            used_phase: UsedPhase::Phase2,
            contribution,
        })
    } else {
        Ok(Prediction {
            cif: predict_cif(&model.phase1, snapshot, h)?,
            used_phase: UsedPhase::Phase1,
            contribution,
        })
    }
}

/// Mean validation concordance of the switched predictor at horizon `h` for
/// one threshold candidate. `delta` may be any real: negative values force
/// phase 2 everywhere, `f64::INFINITY` forces phase 1.
pub fn threshold_candidate_cindex(
    phase1: &PhaseModel,
    phase2: &PhaseModel,
    val: &SnapshotSet,
    h: f64,
    delta: f64,
    eval_times: &[f64],
) -> Result<f64> {
    let prepared = PreparedHorizon::build(phase1, phase2, val, h)?;
    let groups: Vec<Vec<usize>> = eval_times.iter().map(|&t| val.at_time(t)).collect();
    Ok(prepared.candidate_cindex(delta, &groups, &val.labels(), phase1.event))
}

/// Per-snapshot quantities reused across threshold candidates at one horizon.
struct PreparedHorizon {
    contributions: Vec<f64>,
    cif1: Vec<f64>,
    cif2: Vec<f64>,
}

impl PreparedHorizon {
    fn build(phase1: &PhaseModel, phase2: &PhaseModel, val: &SnapshotSet, h: f64) -> Result<Self> {
        let l2 = hazard_mass_near(&phase2.baseline_cum, h)
            .ok_or(Error::UndefinedHazard { horizon: h })?;
        let l1 = hazard_mass_near(&phase1.baseline_cum, h)
            .ok_or(Error::UndefinedHazard { horizon: h })?;
        let hazard_ratio = num::ln(l2) - num::ln(l1);
        let n = val.len();
        let mut contributions = Vec::with_capacity(n);
        let mut cif1 = Vec::with_capacity(n);
        let mut cif2 = Vec::with_capacity(n);
        for snap in &val.snapshots {
            let s1 = phase1.score(snap)?;
            let f2 = phase2.own_score(snap)?;
            contributions.push(f2 + hazard_ratio);
            cif1.push(phase1.cif_from_score(s1, h));
            cif2.push(phase2.cif_from_score(s1 + f2, h));
        }
        Ok(PreparedHorizon {
            contributions,
            cif1,
            cif2,
        })
    }

    fn candidate_cindex(
        &self,
        delta: f64,
        groups: &[Vec<usize>],
        labels: &[crate::finegray::FgLabel],
        k: EventCode,
    ) -> f64 {
        let scores: Vec<f64> = self
            .contributions
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if num::abs(c) > delta {
                    self.cif2[i]
                } else {
                    self.cif1[i]
                }
            })
            .collect();
        mean_cindex_over_groups(&scores, labels, groups, k)
    }
}

/// Tunes one threshold per horizon by grid search on the validation set.
///
/// For each horizon the grid holds `grid_size` evenly spaced values from 0
/// to the maximum absolute incremental contribution (both endpoints
/// included), and the candidate maximizing the mean validation concordance
/// over `eval_times` wins; ties go to the smallest threshold.
pub fn tune_threshold(
    phase1: &PhaseModel,
    phase2: &PhaseModel,
    val: &SnapshotSet,
    horizons: &[f64],
    grid_size: usize,
    eval_times: &[f64],
) -> Result<ThresholdTable> {
    if val.is_empty() {
        return Err(Error::EmptyInput("validation snapshots"));
    }
    if grid_size == 0 {
        return Err(Error::Invalid(
            "threshold grid must have at least one point".into(),
        ));
    }
    let labels = val.labels();
    let groups: Vec<Vec<usize>> = eval_times.iter().map(|&t| val.at_time(t)).collect();
    let k = phase1.event;

    let mut deltas = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let prepared = PreparedHorizon::build(phase1, phase2, val, h)?;
        let max_abs = prepared
            .contributions
            .iter()
            .fold(0.0_f64, |acc, &c| acc.max(num::abs(c)));
        let mut best_delta = 0.0;
        let mut best_score = f64::NEG_INFINITY;
        for g in 0..grid_size {
            let delta = if grid_size == 1 {
                0.0
            } else {
                max_abs * g as f64 / (grid_size - 1) as f64
            };
            let score = prepared.candidate_cindex(delta, &groups, &labels, k);
            if score > best_score {
                best_score = score;
                best_delta = delta;
            }
        }
        deltas.push(best_delta);
    }
    ThresholdTable::new(horizons.to_vec(), deltas)
}

/// Fitting trace of both phases.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepwiseLog {
    pub phase1: FitLog,
    pub phase2: FitLog,
}

/// Fits the full two-phase model for event `k`: phase 1 on static features,
/// phase 2 on all features with the frozen phase-1 score as offset, then
/// threshold tuning on the validation set.
pub fn fit_stepwise(
    train: &SnapshotSet,
    val: &SnapshotSet,
    k: EventCode,
    cfg: &FitConfig,
    horizons: &[f64],
    grid_size: usize,
) -> Result<(StepwiseModel, StepwiseLog)> {
    let phase1_fit = fit_phase(train, val, k, FeatureSlice::Phase1, None, cfg)?;
    let phase1 = phase1_fit.model;

    let mut cfg2 = cfg.clone();
    cfg2.seed = cfg.seed ^ 0x706832; // distinct init stream for phase 2
    let phase2_fit = fit_phase(
        train,
        val,
        k,
        FeatureSlice::Phase1And2,
        Some(&phase1),
        &cfg2,
    )?;
    let phase2 = phase2_fit.model;

    let thresholds = tune_threshold(&phase1, &phase2, val, horizons, grid_size, &cfg.eval_times)?;
    let model = StepwiseModel::new(phase1, phase2, thresholds)?;
    Ok((
        model,
        StepwiseLog {
            phase1: phase1_fit.log,
            phase2: phase2_fit.log,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finegray::FgLabel;
    use crate::risk_net::{init, MlpConfig};
    use crate::rng::Rng;
    use alloc::string::ToString;
    use alloc::vec;

    fn ev(code: u32) -> EventCode {
        EventCode::new(code)
    }

    /// Linear phase model with explicit weights over `[x, t]` and a given
    /// cumulative baseline.
    fn hand_model(
        weights: Vec<f64>,
        baseline: StepFunction,
        slice: FeatureSlice,
        offset: Option<PhaseModel>,
    ) -> PhaseModel {
        let cfg = MlpConfig::linear(weights.len(), 0);
        let mut net = init(&cfg).unwrap();
        net.weights[0] = weights;
        PhaseModel {
            event: ev(1),
            net,
            baseline_cum: baseline,
            feature_slice: slice,
            offset: offset.map(alloc::boxed::Box::new),
        }
    }

    fn snap(x: f64, phase2: Vec<f64>, residual: f64, event: u32, t: f64) -> Snapshot {
        Snapshot {
            subject_id: "s".to_string(),
            t,
            phase1: vec![x, t],
            phase2,
            residual_time: residual,
            event: ev(event),
            stratum: 0,
        }
    }

    /// Phase pair where f2 is the raw phase-2 coordinate times `w2` and the
    /// baselines put mass `m1`/`m2` into the cell ending at 10.
    fn hand_pair(w2: f64, m1: f64, m2: f64) -> StepwiseModel {
        let base1 = StepFunction::new(0.0, vec![10.0], vec![m1]).unwrap();
        let base2 = StepFunction::new(0.0, vec![10.0], vec![m2]).unwrap();
        let phase1 = hand_model(vec![0.0, 0.0], base1, FeatureSlice::Phase1, None);
        let phase2 = hand_model(
            vec![0.0, 0.0, w2],
            base2,
            FeatureSlice::Phase1And2,
            Some(phase1.clone()),
        );
        let thresholds = ThresholdTable::new(vec![24.0], vec![0.5]).unwrap();
        StepwiseModel::new(phase1, phase2, thresholds).unwrap()
    }

    #[test]
    fn contribution_null_case() {
        // Same baselines and a zero phase-2 score: I = 0.
        let model = hand_pair(0.0, 0.3, 0.3);
        let s = snap(1.0, vec![2.0], 5.0, 1, 6.0);
        assert_eq!(incremental_contribution(&model, &s, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn contribution_arithmetic_plug_in() {
        // f2 = 0.3, hazard masses 0.02 vs 0.04: I = 0.3 - ln 2.
        let model = hand_pair(0.3, 0.04, 0.02);
        let s = snap(5.0, vec![1.0], 5.0, 1, 6.0);
        let i = incremental_contribution(&model, &s, 10.0).unwrap();
        assert!((i - (0.3 - num::ln(2.0))).abs() < 1e-12);
    }

    #[test]
    fn contribution_depends_only_on_phase2_score() {
        let model = hand_pair(0.7, 0.05, 0.02);
        // Different phase-1 coordinates, same phase-2 score.
        let a = snap(1.0, vec![3.0], 5.0, 1, 6.0);
        let b = snap(-4.0, vec![3.0], 9.0, 2, 6.0);
        let ia = incremental_contribution(&model, &a, 10.0).unwrap();
        let ib = incremental_contribution(&model, &b, 10.0).unwrap();
        assert_eq!(ia, ib);
    }

    #[test]
    fn undefined_hazard_is_an_error() {
        let model = hand_pair(0.0, 0.3, 0.3);
        // All baseline mass sits at 10; beyond 10 + 6 fallback cells there is
        // nothing.
        let s = snap(1.0, vec![0.0], 5.0, 1, 6.0);
        let err = incremental_contribution(&model, &s, 30.0).unwrap_err();
        assert!(matches!(err, Error::UndefinedHazard { .. }));
    }

    #[test]
    fn hazard_fallback_finds_neighboring_cell() {
        let base = StepFunction::new(0.0, vec![10.0], vec![0.2]).unwrap();
        // Mass lives in (9, 10]; at h = 13 the fallback reaches it 3 cells down.
        assert_eq!(hazard_mass_near(&base, 13.0), Some(0.2));
        assert_eq!(hazard_mass_near(&base, 17.0), None);
    }

    #[test]
    fn predict_routes_by_threshold() {
        // delta fixed at 0.5 by hand_pair.
        let model = hand_pair(1.0, 0.3, 0.3); // I = phase-2 coordinate value
        let low = snap(0.0, vec![0.2], 5.0, 1, 6.0);
        let high = snap(0.0, vec![0.7], 5.0, 1, 6.0);
        let boundary = snap(0.0, vec![0.5], 5.0, 1, 6.0);
        assert_eq!(
            predict(&model, &low, 10.0).unwrap().used_phase,
            UsedPhase::Phase1
        );
        assert_eq!(
            predict(&model, &high, 10.0).unwrap().used_phase,
            UsedPhase::Phase2
        );
        // |I| exactly equal to the threshold stays with phase 1.
        assert_eq!(
            predict(&model, &boundary, 10.0).unwrap().used_phase,
            UsedPhase::Phase1
        );
    }

    #[test]
    fn routing_set_shrinks_as_delta_grows() {
        let model = hand_pair(1.0, 0.3, 0.3);
        let mut rng = Rng::seed_from(4);
        let snaps: Vec<Snapshot> = (0..40)
            .map(|_| snap(0.0, vec![rng.normal()], 5.0, 1, 6.0))
            .collect();
        let routed = |delta: f64| -> Vec<usize> {
            snaps
                .iter()
                .enumerate()
                .filter(|(_, s)| {
                    num::abs(incremental_contribution(&model, s, 10.0).unwrap()) > delta
                })
                .map(|(i, _)| i)
                .collect()
        };
        let wide = routed(0.1);
        let narrow = routed(0.8);
        assert!(narrow.iter().all(|i| wide.contains(i)));
        assert!(narrow.len() <= wide.len());
    }

    #[test]
    fn uniform_sign_contribution_orders_cifs() {
        // Shared knots; phase-2 hazard strictly dominates in every cell once
        // scaled by exp(f2), so the phase-2 CIF must exceed phase 1's.
        let knots = vec![2.0, 5.0, 9.0];
        let base1 = StepFunction::new(0.0, knots.clone(), vec![0.1, 0.25, 0.4]).unwrap();
        let base2 = StepFunction::new(0.0, knots, vec![0.15, 0.35, 0.55]).unwrap();
        let phase1 = hand_model(vec![0.0, 0.0], base1, FeatureSlice::Phase1, None);
        let phase2 = hand_model(
            vec![0.0, 0.0, 1.0],
            base2,
            FeatureSlice::Phase1And2,
            Some(phase1.clone()),
        );
        let thresholds = ThresholdTable::new(vec![24.0], vec![0.0]).unwrap();
        let model = StepwiseModel::new(phase1, phase2, thresholds).unwrap();

        let s_pos = snap(0.3, vec![0.4], 5.0, 1, 6.0); // f2 = 0.4 > 0
        for h in [2.0, 5.0, 9.0, 12.0] {
            let i_cells: Vec<f64> = [2.0, 5.0, 9.0]
                .iter()
                .filter(|&&eta| eta <= h)
                .map(|&eta| incremental_contribution(&model, &s_pos, eta).unwrap())
                .collect();
            assert!(i_cells.iter().all(|&i| i > 0.0));
            let c1 = predict_cif(&model.phase1, &s_pos, h).unwrap();
            let c2 = predict_cif(&model.phase2, &s_pos, h).unwrap();
            assert!(c2 > c1, "h={h}: phase2 {c2} vs phase1 {c1}");
        }

        // Symmetric negative case: strongly negative f2 flips the ordering.
        let s_neg = snap(0.3, vec![-1.5], 5.0, 1, 6.0);
        for h in [2.0, 5.0, 9.0] {
            let i = incremental_contribution(&model, &s_neg, h).unwrap();
            assert!(i < 0.0);
        }
        let c1 = predict_cif(&model.phase1, &s_neg, 9.0).unwrap();
        let c2 = predict_cif(&model.phase2, &s_neg, 9.0).unwrap();
        assert!(c2 < c1);
    }

    #[test]
    fn delta_lookup_is_piecewise_constant() {
        let table = ThresholdTable::new(vec![24.0, 48.0, 120.0], vec![0.3, 0.1, 0.7]).unwrap();
        assert_eq!(table.delta_at(5.0), 0.3); // below the first horizon
        assert_eq!(table.delta_at(24.0), 0.3);
        assert_eq!(table.delta_at(47.9), 0.3);
        assert_eq!(table.delta_at(48.0), 0.1);
        assert_eq!(table.delta_at(90.0), 0.1);
        assert_eq!(table.delta_at(120.0), 0.7);
        assert_eq!(table.delta_at(500.0), 0.7);
    }

    #[test]
    fn table_rejects_bad_shapes() {
        assert!(ThresholdTable::new(vec![], vec![]).is_err());
        assert!(ThresholdTable::new(vec![24.0, 24.0], vec![0.0, 0.0]).is_err());
        assert!(ThresholdTable::new(vec![24.0], vec![-0.1]).is_err());
    }

    /// Validation fixture where the phase-2 coordinate is pure noise for
    /// half the snapshots and signal for the rest.
    fn tuning_fixture() -> (PhaseModel, PhaseModel, SnapshotSet) {
        let mut rng = Rng::seed_from(21);
        let base1 = StepFunction::new(0.0, vec![3.0, 8.0], vec![0.2, 0.5]).unwrap();
        let base2 = StepFunction::new(0.0, vec![3.0, 8.0], vec![0.15, 0.45]).unwrap();
        let phase1 = hand_model(vec![1.0, 0.0], base1, FeatureSlice::Phase1, None);
        let phase2 = hand_model(
            vec![1.0, 0.0, 0.8],
            base2,
            FeatureSlice::Phase1And2,
            Some(phase1.clone()),
        );
        let mut snapshots = Vec::new();
        for i in 0..80 {
            let x = rng.normal();
            let z = rng.normal();
            let risk = x + 0.8 * z;
            let residual = 0.5 + 8.0 * num::exp(-risk) * rng.uniform_open();
            let event = if rng.uniform() < 0.8 { 1 } else { 2 };
            let mut s = snap(x, vec![z], residual, event, 6.0);
            s.subject_id = alloc::format!("v{i}");
            snapshots.push(s);
        }
        let set = SnapshotSet {
            snapshots,
            phase1_names: vec!["x".to_string(), "t_since_arrest_hr".to_string()],
            phase2_names: vec!["z".to_string()],
            m: 2,
        };
        (phase1, phase2, set)
    }

    #[test]
    fn tuned_delta_is_the_grid_argmax() {
        // Recompute every grid candidate through the public scoring helper
        // and confirm the tuner returned the first maximizer.
        let (phase1, phase2, val) = tuning_fixture();
        let eval_times = [6.0];
        let grid_size = 40;
        let table =
            tune_threshold(&phase1, &phase2, &val, &[6.0, 10.0], grid_size, &eval_times).unwrap();
        for &h in table.horizons() {
            let max_abs = val
                .snapshots
                .iter()
                .map(|s| {
                    let model = StepwiseModel::new(
                        phase1.clone(),
                        phase2.clone(),
                        ThresholdTable::new(vec![h], vec![0.0]).unwrap(),
                    )
                    .unwrap();
                    num::abs(incremental_contribution(&model, s, h).unwrap())
                })
                .fold(0.0_f64, f64::max);
            let mut best_delta = 0.0;
            let mut best_score = f64::NEG_INFINITY;
            for g in 0..grid_size {
                let delta = max_abs * g as f64 / (grid_size - 1) as f64;
                let score =
                    threshold_candidate_cindex(&phase1, &phase2, &val, h, delta, &eval_times)
                        .unwrap();
                if score > best_score {
                    best_score = score;
                    best_delta = delta;
                }
            }
            assert_eq!(table.delta_at(h), best_delta, "h={h}");
        }
    }

    #[test]
    fn tuned_threshold_dominates_boundary_candidates() {
        let (phase1, phase2, val) = tuning_fixture();
        let horizons = [6.0, 10.0];
        let eval_times = [6.0];
        let table = tune_threshold(&phase1, &phase2, &val, &horizons, 100, &eval_times).unwrap();
        for &h in &horizons {
            let tuned = threshold_candidate_cindex(
                &phase1,
                &phase2,
                &val,
                h,
                table.delta_at(h),
                &eval_times,
            )
            .unwrap();
            let all_phase1 =
                threshold_candidate_cindex(&phase1, &phase2, &val, h, f64::INFINITY, &eval_times)
                    .unwrap();
            let all_phase2 =
                threshold_candidate_cindex(&phase1, &phase2, &val, h, -1.0, &eval_times).unwrap();
            assert!(tuned >= all_phase1 - 1e-12, "h={h}");
            assert!(tuned >= all_phase2 - 1e-12, "h={h}");
        }
    }

    #[test]
    fn boundary_deltas_reduce_to_single_phase() {
        let (phase1, phase2, val) = tuning_fixture();
        let thresholds = ThresholdTable::new(vec![10.0], vec![0.0]).unwrap();
        let model = StepwiseModel::new(phase1.clone(), phase2.clone(), thresholds).unwrap();
        // delta = 0: every snapshot with |I| > 0 routes to phase 2.
        for snap in &val.snapshots {
            let p = predict(&model, snap, 10.0).unwrap();
            if num::abs(p.contribution) > 0.0 {
                assert_eq!(p.used_phase, UsedPhase::Phase2);
                let expected = predict_cif(&model.phase2, snap, 10.0).unwrap();
                assert_eq!(p.cif, expected);
            }
        }
        // delta = max |I|: every snapshot routes to phase 1.
        let max_abs = val
            .snapshots
            .iter()
            .map(|s| num::abs(incremental_contribution(&model, s, 10.0).unwrap()))
            .fold(0.0_f64, f64::max);
        let table_hi = ThresholdTable::new(vec![10.0], vec![max_abs]).unwrap();
        let model_hi = StepwiseModel::new(phase1, phase2, table_hi).unwrap();
        for snap in &val.snapshots {
            let p = predict(&model_hi, snap, 10.0).unwrap();
            assert_eq!(p.used_phase, UsedPhase::Phase1);
            let expected = predict_cif(&model_hi.phase1, snap, 10.0).unwrap();
            assert_eq!(p.cif, expected);
        }
    }

    #[test]
    fn stepwise_model_validates_offset_wiring() {
        let base = StepFunction::new(0.0, vec![1.0], vec![0.5]).unwrap();
        let phase1 = hand_model(vec![0.0, 0.0], base.clone(), FeatureSlice::Phase1, None);
        let detached = hand_model(vec![0.0, 0.0, 0.0], base, FeatureSlice::Phase1And2, None);
        let table = ThresholdTable::new(vec![24.0], vec![0.0]).unwrap();
        assert!(StepwiseModel::new(phase1, detached, table).is_err());
    }

    /// Residual labels used by eval in this module's fixtures.
    #[allow(dead_code)]
    fn labels_of(set: &SnapshotSet) -> Vec<FgLabel> {
        set.labels()
    }
}
