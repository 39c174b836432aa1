//! Long-format CSV ingestion and writing.
//!
//! Two files describe a cohort. `subjects.csv` has the required columns
//! `subject_id`, `y_hours`, `event`, `stratum` plus any number of static
//! feature columns (numeric, or categorical strings that get one-hot
//! encoded). `timeseries.csv` has exactly the columns `subject_id`, `hour`,
//! `mean_bp`, `min_bp`, `max_bp`, and the five dose columns; an empty cell
//! is a missing value. Files are UTF-8, comma-separated, `.` decimal, with
//! a header row. Cells must not contain commas.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use stepfg_core::data::{
    ColumnKind, ColumnSpec, Dataset, EventCode, FeatureRegistry, Subject, TimePoint, DOSE_CHANNELS,
};

const SUBJECT_REQUIRED: [&str; 4] = ["subject_id", "y_hours", "event", "stratum"];
const TIMESERIES_COLUMNS: [&str; 10] = [
    "subject_id",
    "hour",
    "mean_bp",
    "min_bp",
    "max_bp",
    "dop_dose",
    "epi_dose",
    "nor_dose",
    "vas_dose",
    "phe_dose",
];

/// A parsed CSV: header names and rows of trimmed cells.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| anyhow!("{}: file is empty, expected a header row", path.display()))?;
    let header: Vec<String> = header_line
        .split(',')
        .map(|c| c.trim().to_string())
        .collect();
    let mut seen = BTreeSet::new();
    for name in &header {
        if !seen.insert(name.as_str()) {
            bail!("{}: duplicate column {name:?}", path.display());
        }
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        if cells.len() != header.len() {
            bail!(
                "{}: row {}: {} cells but {} header columns",
                path.display(),
                line_no + 2,
                cells.len(),
                header.len()
            );
        }
        rows.push(cells);
    }
    Ok(Table { header, rows })
}

fn column_index(table: &Table, name: &str, path: &Path) -> Result<usize> {
    table
        .header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("{}: missing column {name:?}", path.display()))
}

fn parse_f64(cell: &str, row: usize, column: &str, path: &Path) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| {
        anyhow!(
            "{}: row {row}, column {column:?}: non-numeric field {cell:?}",
            path.display()
        )
    })
}

/// Loads a cohort from the two CSV files.
///
/// When `registry` is given (prediction-time data), feature columns are
/// encoded against it and must all be present; otherwise a registry is
/// inferred, treating a column as numeric when every cell parses as a float
/// and as categorical (sorted category list) otherwise.
pub fn load_dataset(
    subjects_path: &Path,
    timeseries_path: &Path,
    registry: Option<&FeatureRegistry>,
) -> Result<Dataset> {
    let table = read_table(subjects_path)?;
    let id_col = column_index(&table, "subject_id", subjects_path)?;
    let y_col = column_index(&table, "y_hours", subjects_path)?;
    let event_col = column_index(&table, "event", subjects_path)?;
    let stratum_col = column_index(&table, "stratum", subjects_path)?;

    let feature_cols: Vec<usize> = (0..table.header.len())
        .filter(|i| !SUBJECT_REQUIRED.contains(&table.header[*i].as_str()))
        .collect();

    let registry = match registry {
        Some(r) => {
            for col in &r.columns {
                if !table.header.iter().any(|h| h == &col.name) {
                    bail!("{}: missing column {:?}", subjects_path.display(), col.name);
                }
            }
            r.clone()
        }
        None => infer_registry(&table, &feature_cols),
    };
    // Cell positions per registry column, in registry order.
    let registry_cols: Vec<usize> = registry
        .columns
        .iter()
        .map(|c| column_index(&table, &c.name, subjects_path))
        .collect::<Result<_>>()?;

    let mut subjects = Vec::with_capacity(table.rows.len());
    let mut seen_ids: BTreeSet<&str> = BTreeSet::new();
    let mut max_event = 1u32;
    for (i, row) in table.rows.iter().enumerate() {
        let row_no = i + 2;
        let id = row[id_col].clone();
        if id.is_empty() {
            bail!(
                "{}: row {row_no}: empty subject_id",
                subjects_path.display()
            );
        }
        if !seen_ids.insert(&table.rows[i][id_col]) {
            bail!(
                "{}: row {row_no}, column \"subject_id\": duplicate subject {id:?}",
                subjects_path.display()
            );
        }
        let y_hours = parse_f64(&row[y_col], row_no, "y_hours", subjects_path)?;
        let event: u32 = row[event_col].parse().map_err(|_| {
            anyhow!(
                "{}: row {row_no}, column \"event\": unknown event code {:?}",
                subjects_path.display(),
                row[event_col]
            )
        })?;
        max_event = max_event.max(event);
        let stratum: i64 = row[stratum_col].parse().map_err(|_| {
            anyhow!(
                "{}: row {row_no}, column \"stratum\": non-numeric field {:?}",
                subjects_path.display(),
                row[stratum_col]
            )
        })?;
        let cells: Vec<&str> = registry_cols.iter().map(|&c| row[c].as_str()).collect();
        let static_features = registry
            .encode_row(&cells)
            .map_err(|e| anyhow!("{}: row {row_no}: {e}", subjects_path.display()))?;
        subjects.push(Subject {
            id,
            y_hours,
            event: EventCode::new(event),
            static_features,
            series: Vec::new(),
            stratum,
        });
    }

    attach_timeseries(timeseries_path, &mut subjects)?;
    Ok(Dataset::new(subjects, registry, max_event)?)
}

fn infer_registry(table: &Table, feature_cols: &[usize]) -> FeatureRegistry {
    let mut columns = Vec::with_capacity(feature_cols.len());
    for &c in feature_cols {
        let numeric = !table.rows.is_empty()
            && table
                .rows
                .iter()
                .all(|row| !row[c].is_empty() && row[c].parse::<f64>().is_ok());
        let kind = if numeric {
            ColumnKind::Numeric
        } else {
            let cats: BTreeSet<String> = table.rows.iter().map(|row| row[c].clone()).collect();
            ColumnKind::Categorical(cats.into_iter().collect())
        };
        columns.push(ColumnSpec {
            name: table.header[c].clone(),
            kind,
        });
    }
    FeatureRegistry { columns }
}

fn attach_timeseries(path: &Path, subjects: &mut [Subject]) -> Result<()> {
    let table = read_table(path)?;
    for required in TIMESERIES_COLUMNS {
        column_index(&table, required, path)?;
    }
    for name in &table.header {
        if !TIMESERIES_COLUMNS.contains(&name.as_str()) {
            bail!("{}: unexpected column {name:?}", path.display());
        }
    }
    let col: HashMap<&str, usize> = TIMESERIES_COLUMNS
        .iter()
        .map(|&n| (n, table.header.iter().position(|h| h == n).unwrap()))
        .collect();

    let index: HashMap<String, usize> = subjects
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.clone(), i))
        .collect();
    let mut seen: BTreeSet<(usize, u32)> = BTreeSet::new();

    for (i, row) in table.rows.iter().enumerate() {
        let row_no = i + 2;
        let id = row[col["subject_id"]].as_str();
        let &subject_idx = index.get(id).ok_or_else(|| {
            anyhow!(
                "{}: row {row_no}, column \"subject_id\": unknown subject {id:?}",
                path.display()
            )
        })?;
        let hour: u32 = row[col["hour"]].parse().map_err(|_| {
            anyhow!(
                "{}: row {row_no}, column \"hour\": non-numeric field {:?}",
                path.display(),
                row[col["hour"]]
            )
        })?;
        if !seen.insert((subject_idx, hour)) {
            bail!(
                "{}: row {row_no}: duplicate (subject_id, hour) = ({id:?}, {hour})",
                path.display()
            );
        }
        let subject = &mut subjects[subject_idx];
        if (hour as f64) >= subject.y_hours {
            bail!(
                "{}: row {row_no}, column \"hour\": hour {hour} is not before subject {id:?}'s observed time {}",
                path.display(),
                subject.y_hours
            );
        }
        let optional = |name: &str| -> Result<Option<f64>> {
            let cell = &row[col[name]];
            if cell.is_empty() {
                Ok(None)
            } else {
                parse_f64(cell, row_no, name, path).map(Some)
            }
        };
        let mut doses = [None; DOSE_CHANNELS];
        for (d, name) in ["dop_dose", "epi_dose", "nor_dose", "vas_dose", "phe_dose"]
            .iter()
            .enumerate()
        {
            doses[d] = optional(name)?;
        }
        subject.series.push(TimePoint {
            hour,
            mean_bp: optional("mean_bp")?,
            min_bp: optional("min_bp")?,
            max_bp: optional("max_bp")?,
            doses,
        });
    }
    for subject in subjects.iter_mut() {
        subject.series.sort_by_key(|tp| tp.hour);
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a dataset back to the two-file schema. Only numeric registries can
/// round-trip (one-hot columns cannot be decoded back into categories).
pub fn write_dataset(
    dataset: &Dataset,
    subjects_path: &Path,
    timeseries_path: &Path,
) -> Result<()> {
    let mut names = Vec::new();
    for col in &dataset.registry.columns {
        match col.kind {
            ColumnKind::Numeric => names.push(col.name.clone()),
            ColumnKind::Categorical(_) => {
                bail!(
                    "cannot write categorical feature column {:?} back to CSV",
                    col.name
                )
            }
        }
    }

    let mut subjects = String::new();
    write!(subjects, "subject_id,y_hours,event,stratum")?;
    for n in &names {
        write!(subjects, ",{n}")?;
    }
    subjects.push('\n');
    for s in &dataset.subjects {
        write!(subjects, "{},{},{},{}", s.id, s.y_hours, s.event, s.stratum)?;
        for v in &s.static_features {
            write!(subjects, ",{v}")?;
        }
        subjects.push('\n');
    }

    let mut series = String::new();
    series.push_str(&TIMESERIES_COLUMNS.join(","));
    series.push('\n');
    for s in &dataset.subjects {
        for tp in &s.series {
            write!(
                series,
                "{},{},{},{},{}",
                s.id,
                tp.hour,
                fmt_opt(tp.mean_bp),
                fmt_opt(tp.min_bp),
                fmt_opt(tp.max_bp)
            )?;
            for d in tp.doses {
                write!(series, ",{}", fmt_opt(d))?;
            }
            series.push('\n');
        }
    }

    if let Some(dir) = subjects_path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    if let Some(dir) = timeseries_path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(subjects_path, subjects)
        .with_context(|| format!("writing {}", subjects_path.display()))?;
    std::fs::write(timeseries_path, series)
        .with_context(|| format!("writing {}", timeseries_path.display()))?;
    Ok(())
}

/// Index of a numeric static column in the encoded feature vector.
pub fn encoded_numeric_index(registry: &FeatureRegistry, name: &str) -> Option<usize> {
    let mut offset = 0;
    for col in &registry.columns {
        match &col.kind {
            ColumnKind::Numeric => {
                if col.name == name {
                    return Some(offset);
                }
                offset += 1;
            }
            ColumnKind::Categorical(cats) => offset += cats.len(),
        }
    }
    None
}

/// Drops subjects whose numeric `year` column falls inside `[from, to]`.
pub fn filter_years(dataset: &Dataset, from: i64, to: i64) -> Result<Dataset> {
    let year_idx = encoded_numeric_index(&dataset.registry, "year")
        .ok_or_else(|| anyhow!("--filter-years requires a numeric \"year\" column"))?;
    let subjects: Vec<Subject> = dataset
        .subjects
        .iter()
        .filter(|s| {
            let year = s.static_features[year_idx];
            year < from as f64 || year > to as f64
        })
        .cloned()
        .collect();
    Ok(Dataset::new(subjects, dataset.registry.clone(), dataset.m)?)
}

/// Groups cells of a metrics table into CSV text; values are written with
/// shortest round-trip formatting and `NA` for undefined entries.
pub fn format_cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => x.to_string(),
        _ => "NA".to_string(),
    }
}

/// Writes string content, creating parent directories as needed.
pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

/// Stable listing of `seed<N>` subdirectories under a model root.
pub fn seed_dirs(model_root: &Path) -> Result<Vec<(u64, std::path::PathBuf)>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(model_root)
        .with_context(|| format!("reading {}", model_root.display()))?;
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(rest) = name.strip_prefix("seed") {
            if let Ok(seed) = rest.parse::<u64>() {
                out.push((seed, entry.path()));
            }
        }
    }
    out.sort_by_key(|(seed, _)| *seed);
    Ok(out)
}

/// Per-event model files inside one seed directory.
pub fn event_model_paths(seed_dir: &Path) -> Result<BTreeMap<u32, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(seed_dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(rest) = name.strip_prefix("event") {
            if let Some(num) = rest.strip_suffix(".json") {
                if let Ok(event) = num.parse::<u32>() {
                    out.insert(event, entry.path());
                }
            }
        }
    }
    Ok(out)
}
