//! Subjects, pooled prediction-time snapshots, and stratified splits.
//!
//! A [`Subject`] couples static covariates with an hourly series of
//! hemodynamic measurements and a competing-risks label `(y_hours, event)`.
//! [`build_snapshots`] pools subjects into per-prediction-time training
//! instances: at each grid time `t` the subject's history up to `t` is
//! summarized into a static feature block (phase 1, with `t` appended) and a
//! time-varying block (phase 2), labeled with the residual time `y - t`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::num;
use crate::rng::Rng;
use crate::{Error, Result};

/// Competing-event code: 0 is censored, `1..=m` are event types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventCode(u32);

impl EventCode {
    pub const CENSORED: EventCode = EventCode(0);

    pub fn new(code: u32) -> Self {
        EventCode(code)
    }

    pub fn code(self) -> u32 {
        self.0
    }

    pub fn is_censored(self) -> bool {
        self.0 == 0
    }
}

impl core::fmt::Display for EventCode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Number of tracked vasopressor channels (dopamine, epinephrine,
/// norepinephrine, vasopressin, phenylephrine).
pub const DOSE_CHANNELS: usize = 5;

/// Width of the phase-2 feature block: window mean/min/max BP, BP change,
/// hourly doses, cumulative doses.
pub const PHASE2_DIM: usize = 4 + 2 * DOSE_CHANNELS;

/// Names of the phase-2 features, in vector order.
pub const PHASE2_FEATURE_NAMES: [&str; PHASE2_DIM] = [
    "mean_bp",
    "min_bp",
    "max_bp",
    "bp_diff",
    "dop_dose",
    "epi_dose",
    "nor_dose",
    "vas_dose",
    "phe_dose",
    "cum_dop_dose",
    "cum_epi_dose",
    "cum_nor_dose",
    "cum_vas_dose",
    "cum_phe_dose",
];

/// One hourly aggregate of the time-varying measurements. Fields are `None`
/// when the hour carries no record for them.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePoint {
    pub hour: u32,
    pub mean_bp: Option<f64>,
    pub min_bp: Option<f64>,
    pub max_bp: Option<f64>,
    pub doses: [Option<f64>; DOSE_CHANNELS],
}

impl TimePoint {
    /// True when the hour carries any measurement at all.
    pub fn has_any_data(&self) -> bool {
        self.mean_bp.is_some()
            || self.min_bp.is_some()
            || self.max_bp.is_some()
            || self.doses.iter().any(Option::is_some)
    }

    /// Checks `min <= mean <= max` whenever all three are present.
    pub fn validate(&self) -> Result<()> {
        if let (Some(lo), Some(mid), Some(hi)) = (self.min_bp, self.mean_bp, self.max_bp) {
            if !(lo <= mid && mid <= hi) {
                return Err(Error::Invalid(alloc::format!(
                    "hour {}: BP ordering violated (min {lo}, mean {mid}, max {hi})",
                    self.hour
                )));
            }
        }
        for d in self.doses.iter().flatten() {
            if *d < 0.0 {
                return Err(Error::Invalid(alloc::format!(
                    "hour {}: negative dose {d}",
                    self.hour
                )));
            }
        }
        Ok(())
    }
}

/// One study unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    /// Observed time in hours since arrest (event or censoring).
    pub y_hours: f64,
    pub event: EventCode,
    /// Encoded static covariates; layout given by the dataset registry.
    pub static_features: Vec<f64>,
    /// Hourly series, sorted by hour, all strictly before `y_hours`.
    pub series: Vec<TimePoint>,
    /// Subgroup label used for stratified splitting and subgroup summaries.
    pub stratum: i64,
}

impl Subject {
    pub fn validate(&self) -> Result<()> {
        if !(self.y_hours > 0.0) || !self.y_hours.is_finite() {
            return Err(Error::Invalid(alloc::format!(
                "subject {}: y_hours must be positive, got {}",
                self.id,
                self.y_hours
            )));
        }
        let mut prev: Option<u32> = None;
        for tp in &self.series {
            tp.validate()?;
            if let Some(p) = prev {
                if tp.hour <= p {
                    return Err(Error::Invalid(alloc::format!(
                        "subject {}: series hours not strictly increasing at {}",
                        self.id,
                        tp.hour
                    )));
                }
            }
            if (tp.hour as f64) >= self.y_hours {
                return Err(Error::Invalid(alloc::format!(
                    "subject {}: series hour {} not before observed time {}",
                    self.id,
                    tp.hour,
                    self.y_hours
                )));
            }
            prev = Some(tp.hour);
        }
        Ok(())
    }
}

/// How one raw static column is encoded into feature coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    Numeric,
    /// One-hot over the recorded categories; unseen categories encode as
    /// all-zeros.
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Registry describing how raw static columns map onto the encoded feature
/// vector. Stored with the dataset so prediction-time data can be encoded
/// the same way it was at training time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureRegistry {
    pub columns: Vec<ColumnSpec>,
}

impl FeatureRegistry {
    /// Registry of purely numeric columns with the given names.
    pub fn numeric(names: &[&str]) -> Self {
        FeatureRegistry {
            columns: names
                .iter()
                .map(|n| ColumnSpec {
                    name: (*n).to_string(),
                    kind: ColumnKind::Numeric,
                })
                .collect(),
        }
    }

    /// Names of the encoded coordinates, e.g. `rhythm=VT/VF` for one-hot bits.
    pub fn encoded_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for col in &self.columns {
            match &col.kind {
                ColumnKind::Numeric => out.push(col.name.clone()),
                ColumnKind::Categorical(cats) => {
                    for c in cats {
                        out.push(alloc::format!("{}={}", col.name, c));
                    }
                }
            }
        }
        out
    }

    pub fn encoded_dim(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Numeric => 1,
                ColumnKind::Categorical(cats) => cats.len(),
            })
            .sum()
    }

    /// Encodes one raw row (one string cell per registered column). Numeric
    /// cells must parse as floats; categorical cells one-hot against the
    /// registry, with unseen categories mapping to all-zeros.
    pub fn encode_row(&self, cells: &[&str]) -> Result<Vec<f64>> {
        if cells.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: cells.len(),
            });
        }
        let mut out = Vec::with_capacity(self.encoded_dim());
        for (col, cell) in self.columns.iter().zip(cells) {
            match &col.kind {
                ColumnKind::Numeric => {
                    let v: f64 = cell.trim().parse().map_err(|_| {
                        Error::Invalid(alloc::format!(
                            "column {}: non-numeric value {cell:?}",
                            col.name
                        ))
                    })?;
                    out.push(v);
                }
                ColumnKind::Categorical(cats) => {
                    for c in cats {
                        out.push(if c == cell.trim() { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// A cohort: subjects plus the static-feature registry and the number of
/// competing event types.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    pub registry: FeatureRegistry,
    /// Number of competing event types (codes run `0..=m`).
    pub m: u32,
}

impl Dataset {
    pub fn new(subjects: Vec<Subject>, registry: FeatureRegistry, m: u32) -> Result<Self> {
        if m < 1 {
            return Err(Error::Invalid(
                "need at least one event type (m >= 1)".into(),
            ));
        }
        let dim = registry.encoded_dim();
        for s in &subjects {
            s.validate()?;
            if s.static_features.len() != dim {
                return Err(Error::Invalid(alloc::format!(
                    "subject {}: {} static features, registry encodes {dim}",
                    s.id,
                    s.static_features.len()
                )));
            }
            if s.event.code() > m {
                return Err(Error::Invalid(alloc::format!(
                    "subject {}: event code {} exceeds m={m}",
                    s.id,
                    s.event
                )));
            }
        }
        Ok(Dataset {
            subjects,
            registry,
            m,
        })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }
}

/// One pooled training/prediction instance at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub subject_id: String,
    /// Prediction time, hours since arrest.
    pub t: f64,
    /// Static features with `t` appended as the last coordinate.
    pub phase1: Vec<f64>,
    /// Time-varying summary at `t`; see [`PHASE2_FEATURE_NAMES`].
    pub phase2: Vec<f64>,
    /// Residual observed time `y_hours - t`, always positive.
    pub residual_time: f64,
    pub event: EventCode,
    pub stratum: i64,
}

/// Snapshots plus the feature-name registry they share.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub snapshots: Vec<Snapshot>,
    pub phase1_names: Vec<String>,
    pub phase2_names: Vec<String>,
    pub m: u32,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Residual labels in snapshot order.
    pub fn labels(&self) -> Vec<crate::finegray::FgLabel> {
        self.snapshots
            .iter()
            .map(|s| crate::finegray::FgLabel {
                time: s.residual_time,
                event: s.event,
            })
            .collect()
    }

    /// Indices of snapshots taken at prediction time `t` (tolerant compare).
    pub fn at_time(&self, t: f64) -> Vec<usize> {
        self.snapshots
            .iter()
            .enumerate()
            .filter(|(_, s)| num::abs(s.t - t) < 1e-9)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Per-subject view of the series used while building snapshots.
struct SeriesIndex<'a> {
    subject: &'a Subject,
    /// Hours carrying any record, ascending.
    obs_hours: Vec<u32>,
    /// Hours carrying a mean-BP record, ascending.
    bp_hours: Vec<u32>,
    /// Start of the first inter-observation gap wider than the limit, if any.
    gap_cutoff: Option<f64>,
}

impl<'a> SeriesIndex<'a> {
    fn build(subject: &'a Subject, gap_limit_hours: f64) -> Self {
        let obs_hours: Vec<u32> = subject
            .series
            .iter()
            .filter(|tp| tp.has_any_data())
            .map(|tp| tp.hour)
            .collect();
        let bp_hours: Vec<u32> = subject
            .series
            .iter()
            .filter(|tp| tp.mean_bp.is_some())
            .map(|tp| tp.hour)
            .collect();
        let mut gap_cutoff = None;
        for w in obs_hours.windows(2) {
            if (w[1] - w[0]) as f64 > gap_limit_hours {
                gap_cutoff = Some(w[0] as f64);
                break;
            }
        }
        SeriesIndex {
            subject,
            obs_hours,
            bp_hours,
            gap_cutoff,
        }
    }

    fn last_obs_at_or_before(&self, t: f64) -> Option<u32> {
        let idx = self.obs_hours.partition_point(|&h| (h as f64) <= t);
        if idx == 0 {
            None
        } else {
            Some(self.obs_hours[idx - 1])
        }
    }

    /// Last-observation-carried-forward mean BP at time `t`.
    fn locf_mean_bp(&self, t: f64) -> Option<f64> {
        let idx = self.bp_hours.partition_point(|&h| (h as f64) <= t);
        if idx == 0 {
            return None;
        }
        self.row_at(self.bp_hours[idx - 1])
            .and_then(|tp| tp.mean_bp)
    }

    /// Series rows are sorted by hour, so lookup can bisect.
    fn row_at(&self, hour: u32) -> Option<&TimePoint> {
        self.subject
            .series
            .binary_search_by_key(&hour, |tp| tp.hour)
            .ok()
            .map(|i| &self.subject.series[i])
    }
}

/// Builds the pooled snapshot set on the grid `t = t_min, t_min + step, ...`
/// for `t < min(y_hours, max_t)` per subject.
///
/// A snapshot at `t` summarizes the 1-hour window ending at `t` with LOCF
/// imputation of mean BP; window min/max BP default to the carried-forward
/// mean when absent, doses default to 0, and cumulative doses sum from hour
/// 0. Snapshots are dropped while no BP observation precedes them, once the
/// most recent record is older than `gap_limit_hours`, and permanently after
/// the first inter-observation gap wider than `gap_limit_hours`.
pub fn build_snapshots(
    dataset: &Dataset,
    t_min: f64,
    step_hours: f64,
    max_t: f64,
    gap_limit_hours: f64,
) -> Result<SnapshotSet> {
    if !(t_min >= 0.0) {
        return Err(Error::Invalid(alloc::format!(
            "t_min must be nonnegative, got {t_min}"
        )));
    }
    if !(step_hours > 0.0) {
        return Err(Error::Invalid(alloc::format!(
            "step_hours must be positive, got {step_hours}"
        )));
    }

    let mut snapshots = Vec::new();
    for subject in &dataset.subjects {
        let index = SeriesIndex::build(subject, gap_limit_hours);
        let end = subject.y_hours.min(max_t);
        let mut step_no = 0u32;
        loop {
            let t = t_min + step_hours * step_no as f64;
            if t >= end {
                break;
            }
            step_no += 1;
            if let Some(snap) = snapshot_at(subject, &index, t, gap_limit_hours) {
                snapshots.push(snap);
            }
        }
    }

    let mut phase1_names = dataset.registry.encoded_names();
    phase1_names.push("t_since_arrest_hr".to_string());
    Ok(SnapshotSet {
        snapshots,
        phase1_names,
        phase2_names: PHASE2_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        m: dataset.m,
    })
}

/// Builds snapshots at an explicit list of prediction times instead of an
/// arithmetic grid; the same window, LOCF, and gap rules apply. Times are
/// visited in ascending order per subject.
pub fn build_snapshots_at(
    dataset: &Dataset,
    times: &[f64],
    gap_limit_hours: f64,
) -> Result<SnapshotSet> {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::Invalid("snapshot times must be nonnegative".into()));
    }
    let mut snapshots = Vec::new();
    for subject in &dataset.subjects {
        let index = SeriesIndex::build(subject, gap_limit_hours);
        for &t in &sorted {
            if t >= subject.y_hours {
                break;
            }
            if let Some(snap) = snapshot_at(subject, &index, t, gap_limit_hours) {
                snapshots.push(snap);
            }
        }
    }
    let mut phase1_names = dataset.registry.encoded_names();
    phase1_names.push("t_since_arrest_hr".to_string());
    Ok(SnapshotSet {
        snapshots,
        phase1_names,
        phase2_names: PHASE2_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        m: dataset.m,
    })
}

fn snapshot_at(
    subject: &Subject,
    index: &SeriesIndex<'_>,
    t: f64,
    gap_limit_hours: f64,
) -> Option<Snapshot> {
    let mean_bp = index.locf_mean_bp(t)?; // no BP history yet: drop
    if let Some(cutoff) = index.gap_cutoff {
        if t > cutoff {
            return None;
        }
    }
    let last_obs = index.last_obs_at_or_before(t)?;
    if t - last_obs as f64 > gap_limit_hours {
        return None; // monitoring has gone stale
    }

    let window_hour = num::floor(t) as u32;
    let window_row = index.row_at(window_hour);

    let min_bp = window_row.and_then(|r| r.min_bp).unwrap_or(mean_bp);
    let max_bp = window_row.and_then(|r| r.max_bp).unwrap_or(mean_bp);
    let bp_diff = match index.locf_mean_bp(t - 1.0) {
        Some(prev) => mean_bp - prev,
        None => 0.0,
    };

    let mut hourly = [0.0; DOSE_CHANNELS];
    if let Some(row) = window_row {
        for (c, dose) in row.doses.iter().enumerate() {
            hourly[c] = dose.unwrap_or(0.0);
        }
    }
    let mut cumulative = [0.0; DOSE_CHANNELS];
    for row in &subject.series {
        if row.hour > window_hour {
            break;
        }
        for (c, dose) in row.doses.iter().enumerate() {
            cumulative[c] += dose.unwrap_or(0.0);
        }
    }

    let mut phase1 = subject.static_features.clone();
    phase1.push(t);
    let mut phase2 = Vec::with_capacity(PHASE2_DIM);
    phase2.extend_from_slice(&[mean_bp, min_bp, max_bp, bp_diff]);
    phase2.extend_from_slice(&hourly);
    phase2.extend_from_slice(&cumulative);

    Some(Snapshot {
        subject_id: subject.id.clone(),
        t,
        phase1,
        phase2,
        residual_time: subject.y_hours - t,
        event: subject.event,
        stratum: subject.stratum,
    })
}

/// Result of a stratified subject-level split.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Strata too small to split (fewer than 3 subjects, assigned to train).
    pub warnings: Vec<String>,
}

/// Partitions subjects into train/validation/test, stratified by `stratum`.
///
/// Within each stratum the split counts match the fractions to within one
/// subject. Deterministic for a fixed seed; no subject spans splits.
pub fn split_stratified(dataset: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (f_train, f_val, f_test) = fractions;
    if !(f_train > 0.0 && f_val > 0.0 && f_test > 0.0) {
        return Err(Error::Invalid("split fractions must be positive".into()));
    }
    if num::abs(f_train + f_val + f_test - 1.0) > 1e-9 {
        return Err(Error::Invalid("split fractions must sum to 1".into()));
    }

    let mut by_stratum: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.subjects.iter().enumerate() {
        by_stratum.entry(s.stratum).or_default().push(i);
    }

    let mut rng = Rng::derive(seed, 0x73706c6974); // "split" stream
    let mut warnings = Vec::new();
    let mut assign = alloc::vec![0u8; dataset.subjects.len()]; // 0 train, 1 val, 2 test

    for (&stratum, members) in &by_stratum {
        if members.len() < 3 {
            warnings.push(alloc::format!(
                "stratum {stratum} has {} subject(s); assigned to train",
                members.len()
            ));
            continue; // already 0 = train
        }
        let mut order = members.clone();
        rng.shuffle(&mut order);
        let n = order.len() as f64;
        let n_train = num::round(f_train * n) as usize;
        let n_train_val = num::round((f_train + f_val) * n) as usize;
        for (pos, &idx) in order.iter().enumerate() {
            assign[idx] = if pos < n_train {
                0
            } else if pos < n_train_val {
                1
            } else {
                2
            };
        }
    }

    let pick = |code: u8| -> Vec<Subject> {
        dataset
            .subjects
            .iter()
            .zip(&assign)
            .filter(|(_, &a)| a == code)
            .map(|(s, _)| s.clone())
            .collect()
    };
    let make = |subjects: Vec<Subject>| Dataset {
        subjects,
        registry: dataset.registry.clone(),
        m: dataset.m,
    };

    Ok(Split {
        train: make(pick(0)),
        val: make(pick(1)),
        test: make(pick(2)),
        warnings,
    })
}

/// Convenience constructor used by generators and tests: a snapshot set made
/// directly from per-subject rows at a single prediction time, bypassing the
/// time-series pipeline. Phase-2 features are empty.
pub fn snapshots_from_rows(
    rows: &[(String, Vec<f64>, f64, EventCode)],
    t: f64,
    feature_names: &[String],
    m: u32,
) -> Result<SnapshotSet> {
    let mut snapshots = Vec::with_capacity(rows.len());
    for (id, features, y, event) in rows {
        if *y <= t {
            return Err(Error::Invalid(alloc::format!(
                "subject {id}: observed time {y} not after prediction time {t}"
            )));
        }
        let mut phase1 = features.clone();
        phase1.push(t);
        snapshots.push(Snapshot {
            subject_id: id.clone(),
            t,
            phase1,
            phase2: Vec::new(),
            residual_time: y - t,
            event: *event,
            stratum: 0,
        });
    }
    let mut phase1_names: Vec<String> = feature_names.to_vec();
    phase1_names.push("t_since_arrest_hr".to_string());
    Ok(SnapshotSet {
        snapshots,
        phase1_names,
        phase2_names: Vec::new(),
        m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tp(hour: u32, mean: Option<f64>) -> TimePoint {
        TimePoint {
            hour,
            mean_bp: mean,
            min_bp: None,
            max_bp: None,
            doses: [None; 5],
        }
    }

    fn subject(id: &str, y: f64, event: u32, series: Vec<TimePoint>) -> Subject {
        Subject {
            id: id.into(),
            y_hours: y,
            event: EventCode::new(event),
            static_features: vec![1.0],
            series,
            stratum: 0,
        }
    }

    fn dataset(subjects: Vec<Subject>) -> Dataset {
        Dataset::new(subjects, FeatureRegistry::numeric(&["x0"]), 3).unwrap()
    }

    #[test]
    fn grid_times_stop_before_observed_time() {
        // BP from hour 5, no gaps: snapshots at 6, 11, 16, 21.
        let series = (5..23).map(|h| tp(h, Some(80.0))).collect();
        let ds = dataset(vec![subject("s1", 23.0, 1, series)]);
        let set = build_snapshots(&ds, 6.0, 5.0, 240.0, 5.0).unwrap();
        let times: Vec<f64> = set.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![6.0, 11.0, 16.0, 21.0]);
        for s in &set.snapshots {
            assert!(s.residual_time > 0.0);
            assert_eq!(*s.phase1.last().unwrap(), s.t);
            assert_eq!(s.phase2.len(), PHASE2_DIM);
        }
    }

    #[test]
    fn locf_carries_mean_forward_and_zeroes_diff() {
        let series = vec![tp(6, Some(90.0)), tp(9, Some(70.0))];
        let ds = dataset(vec![subject("s1", 30.0, 2, series)]);
        let set = build_snapshots(&ds, 8.0, 100.0, 240.0, 5.0).unwrap();
        assert_eq!(set.snapshots.len(), 1);
        let snap = &set.snapshots[0];
        assert_eq!(snap.t, 8.0);
        assert_eq!(snap.phase2[0], 90.0); // hour-6 value carried forward
        assert_eq!(snap.phase2[3], 0.0); // LOCF at 7 equals LOCF at 8
    }

    #[test]
    fn bp_diff_uses_previous_hour() {
        let series = vec![tp(5, Some(80.0)), tp(6, Some(86.0))];
        let ds = dataset(vec![subject("s1", 30.0, 1, series)]);
        let set = build_snapshots(&ds, 6.0, 100.0, 240.0, 5.0).unwrap();
        assert_eq!(set.snapshots[0].phase2[3], 6.0);
    }

    #[test]
    fn gap_drops_everything_after_cutoff() {
        // Observations at 5..=13 then 20: the 13 -> 20 gap exceeds 5 hours, so
        // no snapshot after t = 13, even once data resumes.
        let mut series: Vec<TimePoint> = (5..=13).map(|h| tp(h, Some(80.0))).collect();
        series.push(tp(20, Some(75.0)));
        series.push(tp(21, Some(75.0)));
        let ds = dataset(vec![
            subject("gap", 40.0, 1, series),
            subject(
                "nogap",
                40.0,
                2,
                (5..=35).map(|h| tp(h, Some(82.0))).collect(),
            ),
            subject("nobp", 40.0, 1, vec![]),
        ]);
        let set = build_snapshots(&ds, 6.0, 4.0, 240.0, 5.0).unwrap();
        let emitted: Vec<(String, f64)> = set
            .snapshots
            .iter()
            .map(|s| (s.subject_id.clone(), s.t))
            .collect();
        let expected: Vec<(String, f64)> = vec![
            ("gap".into(), 6.0),
            ("gap".into(), 10.0),
            ("nogap".into(), 6.0),
            ("nogap".into(), 10.0),
            ("nogap".into(), 14.0),
            ("nogap".into(), 18.0),
            ("nogap".into(), 22.0),
            ("nogap".into(), 26.0),
            ("nogap".into(), 30.0),
            ("nogap".into(), 34.0),
            ("nogap".into(), 38.0),
        ];
        assert_eq!(emitted, expected);
    }

    #[test]
    fn stale_monitoring_without_resumption_is_dropped() {
        // Last observation at hour 8; with gap limit 5 the snapshot at 14 is
        // dropped even though no later observation reveals a gap pair.
        let series = (5..=8).map(|h| tp(h, Some(80.0))).collect();
        let ds = dataset(vec![subject("s1", 40.0, 1, series)]);
        let set = build_snapshots(&ds, 6.0, 4.0, 240.0, 5.0).unwrap();
        let times: Vec<f64> = set.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![6.0, 10.0]);
    }

    #[test]
    fn cumulative_doses_nondecreasing() {
        let mut series = Vec::new();
        for h in 2..30 {
            let mut doses = [None; 5];
            doses[2] = Some(0.5);
            series.push(TimePoint {
                hour: h,
                mean_bp: Some(80.0),
                min_bp: None,
                max_bp: None,
                doses,
            });
        }
        let ds = dataset(vec![subject("s1", 31.0, 1, series)]);
        let set = build_snapshots(&ds, 6.0, 5.0, 240.0, 5.0).unwrap();
        let cums: Vec<f64> = set.snapshots.iter().map(|s| s.phase2[4 + 2]).collect();
        assert!(cums.windows(2).all(|w| w[0] <= w[1]));
        assert!(cums[0] > 0.0);
    }

    #[test]
    fn build_snapshots_is_deterministic() {
        let series = (5..23).map(|h| tp(h, Some(80.0))).collect();
        let ds = dataset(vec![subject("s1", 23.0, 1, series)]);
        let a = build_snapshots(&ds, 6.0, 5.0, 240.0, 5.0).unwrap();
        let b = build_snapshots(&ds, 6.0, 5.0, 240.0, 5.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_counts_match_fractions() {
        let subjects: Vec<Subject> = (0..100)
            .map(|i| subject(&alloc::format!("s{i}"), 10.0, 1, vec![]))
            .collect();
        let ds = dataset(subjects);
        let split = split_stratified(&ds, (0.64, 0.16, 0.20), 7).unwrap();
        assert_eq!(split.train.len(), 64);
        assert_eq!(split.val.len(), 16);
        assert_eq!(split.test.len(), 20);
        assert!(split.warnings.is_empty());

        let again = split_stratified(&ds, (0.64, 0.16, 0.20), 7).unwrap();
        assert_eq!(split.train, again.train);
        assert_eq!(split.val, again.val);
        assert_eq!(split.test, again.test);
    }

    #[test]
    fn split_respects_strata() {
        let mut subjects = Vec::new();
        for i in 0..50 {
            let mut s = subject(&alloc::format!("a{i}"), 10.0, 1, vec![]);
            s.stratum = 0;
            subjects.push(s);
        }
        for i in 0..50 {
            let mut s = subject(&alloc::format!("b{i}"), 10.0, 2, vec![]);
            s.stratum = 1;
            subjects.push(s);
        }
        let ds = dataset(subjects);
        let split = split_stratified(&ds, (0.64, 0.16, 0.20), 3).unwrap();
        for stratum in [0, 1] {
            let count = |d: &Dataset| d.subjects.iter().filter(|s| s.stratum == stratum).count();
            assert_eq!(count(&split.train), 32);
            assert_eq!(count(&split.val), 8);
            assert_eq!(count(&split.test), 10);
        }
        // No subject appears twice.
        let mut ids: Vec<&str> = split
            .train
            .subjects
            .iter()
            .chain(&split.val.subjects)
            .chain(&split.test.subjects)
            .map(|s| s.id.as_str())
            .collect();
        ids.sort_unstable();
        let before = ids.len();
        ids.dedup();
        assert_eq!(before, ids.len());
        assert_eq!(before, 100);
    }

    #[test]
    fn split_counts_stay_within_one_of_fractions() {
        let mut rng = Rng::seed_from(91);
        for trial in 0..30 {
            let mut subjects = Vec::new();
            let n_strata = 1 + rng.below(4) as i64;
            for stratum in 0..n_strata {
                let size = 3 + rng.below(40);
                for i in 0..size {
                    let mut s = subject(&alloc::format!("s{stratum}-{i}"), 10.0, 1, vec![]);
                    s.stratum = stratum;
                    subjects.push(s);
                }
            }
            let f_train = 0.3 + 0.5 * rng.uniform();
            let f_val = (1.0 - f_train) * (0.2 + 0.5 * rng.uniform());
            let fractions = (f_train, f_val, 1.0 - f_train - f_val);
            let total = subjects.len();
            let ds = dataset(subjects);
            let split = split_stratified(&ds, fractions, trial).unwrap();
            assert_eq!(
                split.train.len() + split.val.len() + split.test.len(),
                total
            );
            for stratum in 0..n_strata {
                let count =
                    |d: &Dataset| d.subjects.iter().filter(|s| s.stratum == stratum).count();
                let n = (count(&split.train) + count(&split.val) + count(&split.test)) as f64;
                assert!((count(&split.train) as f64 - fractions.0 * n).abs() <= 1.0);
                assert!((count(&split.val) as f64 - fractions.1 * n).abs() <= 1.0);
                assert!((count(&split.test) as f64 - fractions.2 * n).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn explicit_times_agree_with_the_grid_builder() {
        let mut rng = Rng::seed_from(92);
        let mut subjects = Vec::new();
        for i in 0..8 {
            let y = 10.0 + 30.0 * rng.uniform();
            let mut series = Vec::new();
            for h in 0..(y as u32) {
                if rng.uniform() < 0.7 {
                    series.push(tp(h, Some(70.0 + 20.0 * rng.uniform())));
                }
            }
            subjects.push(subject(&alloc::format!("s{i}"), y, 1, series));
        }
        let ds = dataset(subjects);
        let grid = build_snapshots(&ds, 6.0, 5.0, 60.0, 5.0).unwrap();
        let times: Vec<f64> = (0..11).map(|k| 6.0 + 5.0 * k as f64).collect();
        let explicit = build_snapshots_at(&ds, &times, 5.0).unwrap();
        // The explicit list covers the grid up to max_t, minus the grid's
        // max_t cutoff; restrict both to t < 60.
        let explicit_cut: Vec<&Snapshot> =
            explicit.snapshots.iter().filter(|s| s.t < 60.0).collect();
        assert_eq!(grid.snapshots.len(), explicit_cut.len());
        for (a, b) in grid.snapshots.iter().zip(explicit_cut) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tiny_stratum_goes_to_train_with_warning() {
        let mut subjects: Vec<Subject> = (0..20)
            .map(|i| subject(&alloc::format!("s{i}"), 10.0, 1, vec![]))
            .collect();
        let mut odd = subject("tiny", 5.0, 2, vec![]);
        odd.stratum = 9;
        subjects.push(odd);
        let ds = dataset(subjects);
        let split = split_stratified(&ds, (0.5, 0.25, 0.25), 1).unwrap();
        assert_eq!(split.warnings.len(), 1);
        assert!(split.train.subjects.iter().any(|s| s.id == "tiny"));
    }

    #[test]
    fn registry_encoding_and_unseen_categories() {
        let registry = FeatureRegistry {
            columns: vec![
                ColumnSpec {
                    name: "age".into(),
                    kind: ColumnKind::Numeric,
                },
                ColumnSpec {
                    name: "rhythm".into(),
                    kind: ColumnKind::Categorical(vec!["PEA".into(), "VT/VF".into()]),
                },
            ],
        };
        assert_eq!(
            registry.encoded_names(),
            vec!["age", "rhythm=PEA", "rhythm=VT/VF"]
        );
        assert_eq!(
            registry.encode_row(&["61.5", "VT/VF"]).unwrap(),
            vec![61.5, 0.0, 1.0]
        );
        // Unseen category encodes as all-zeros.
        assert_eq!(
            registry.encode_row(&["61.5", "Unknown"]).unwrap(),
            vec![61.5, 0.0, 0.0]
        );
        assert!(registry.encode_row(&["abc", "PEA"]).is_err());
    }
}
