//! Typed in-memory datasets, CSV ingestion and deterministic record partitioning.
//!
//! A [`Dataset`] is immutable once built: every derived view (row subsets,
//! column projections) produces a new value. Column kinds are inferred on load
//! with fixed rules that can be overridden per column:
//!
//! * every value in `{0, 1}` → [`ColumnKind::Binary`]
//! * between 2 and `max_categories` distinct values that are non-numeric or
//!   integral → [`ColumnKind::Nominal`]
//! * anything else numeric → [`ColumnKind::Continuous`]
//!
//! Missing cells are rejected; no imputation is performed.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper bound on distinct values for nominal inference.
pub const DEFAULT_MAX_CATEGORIES: usize = 20;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("row {row} has {found} cells, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("cannot parse cell at row {row}, column `{col}`: {value:?}")]
    UnparseableCell {
        row: usize,
        col: String,
        value: String,
    },
    #[error("missing value at row {row}, column `{col}`")]
    MissingValue { row: usize, col: String },
    #[error("no data rows")]
    EmptyData,
    #[error("dataset needs at least 2 records, found {0}")]
    TooFewRecords(usize),
    #[error("class {class} has {count} records, fewer than {k_folds} folds")]
    ClassTooSmall {
        class: usize,
        count: usize,
        k_folds: usize,
    },
    #[error("fold count must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("split fractions {0:?} must be positive and sum to 1")]
    BadFractions((f64, f64, f64)),
    #[error("duplicate feature name `{0}`")]
    DuplicateName(String),
    #[error("column `{name}` has length {len}, expected {expected}")]
    LengthMismatch {
        name: String,
        len: usize,
        expected: usize,
    },
    #[error("column `{name}` is invalid: {reason}")]
    InvalidColumn { name: String, reason: String },
    #[error("bad schema entry `{0}`, expected name:kind with kind in continuous|binary|nominal")]
    BadSchema(String),
    #[error("feature index {index} out of range for {n} features")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Binary,
    Nominal,
}

impl std::str::FromStr for ColumnKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "continuous" => Ok(ColumnKind::Continuous),
            "binary" => Ok(ColumnKind::Binary),
            "nominal" => Ok(ColumnKind::Nominal),
            other => Err(format!("unknown column kind `{other}`")),
        }
    }
}

impl ColumnKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, ColumnKind::Continuous)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Classification { num_classes: usize },
    Regression,
}

impl TargetKind {
    pub fn is_classification(self) -> bool {
        matches!(self, TargetKind::Classification { .. })
    }

    pub fn num_classes(self) -> Option<usize> {
        match self {
            TargetKind::Classification { num_classes } => Some(num_classes),
            TargetKind::Regression => None,
        }
    }
}

/// A named column of `f64` values.
///
/// Binary and nominal columns store category indices as integral floats;
/// `labels[c]` is the original text of category `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    kind: ColumnKind,
    values: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl Column {
    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Continuous,
            values,
            labels: None,
        }
    }

    pub fn binary(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Binary,
            values,
            labels: Some(vec!["0".into(), "1".into()]),
        }
    }

    /// Nominal column from category indices and their labels.
    pub fn nominal(name: impl Into<String>, codes: Vec<usize>, labels: Vec<String>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Nominal,
            values: codes.into_iter().map(|c| c as f64).collect(),
            labels: Some(labels),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Number of categories for discrete columns.
    pub fn num_categories(&self) -> Option<usize> {
        match self.kind {
            ColumnKind::Continuous => None,
            ColumnKind::Binary => Some(2),
            ColumnKind::Nominal => self.labels.as_ref().map(Vec::len),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn validate(&self) -> Result<(), DataError> {
        let bad = |reason: String| DataError::InvalidColumn {
            name: self.name.clone(),
            reason,
        };
        match self.kind {
            ColumnKind::Continuous => {
                if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
                    return Err(bad(format!("non-finite value {v}")));
                }
            }
            ColumnKind::Binary => {
                if let Some(v) = self.values.iter().find(|&&v| v != 0.0 && v != 1.0) {
                    return Err(bad(format!("binary column holds {v}")));
                }
            }
            ColumnKind::Nominal => {
                let c = self.num_categories().unwrap_or(0);
                if c < 2 {
                    return Err(bad(format!("nominal column needs at least 2 categories, has {c}")));
                }
                if let Some(v) = self
                    .values
                    .iter()
                    .find(|&&v| v < 0.0 || v.fract() != 0.0 || v >= c as f64)
                {
                    return Err(bad(format!("category index {v} outside [0, {c})")));
                }
            }
        }
        Ok(())
    }

    fn gather(&self, rows: &[usize]) -> Column {
        Column {
            name: self.name.clone(),
            kind: self.kind,
            values: rows.iter().map(|&r| self.values[r]).collect(),
            labels: self.labels.clone(),
        }
    }

    fn cell_text(&self, row: usize) -> String {
        let v = self.values[row];
        match (&self.labels, self.kind) {
            (Some(labels), ColumnKind::Nominal) => labels[v as usize].clone(),
            _ => format!("{v}"),
        }
    }
}

/// N records of n typed features plus one target column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Column>,
    target: Column,
    target_kind: TargetKind,
}

impl Dataset {
    pub fn new(features: Vec<Column>, target: Column, target_kind: TargetKind) -> Result<Self, DataError> {
        let n_records = target.len();
        if n_records < 2 {
            return Err(DataError::TooFewRecords(n_records));
        }
        let mut names = HashSet::new();
        for col in &features {
            if col.len() != n_records {
                return Err(DataError::LengthMismatch {
                    name: col.name.clone(),
                    len: col.len(),
                    expected: n_records,
                });
            }
            if !names.insert(col.name.as_str()) {
                return Err(DataError::DuplicateName(col.name.clone()));
            }
            col.validate()?;
        }
        match target_kind {
            TargetKind::Classification { num_classes } => {
                if let Some(v) = target
                    .values
                    .iter()
                    .find(|&&v| v < 0.0 || v.fract() != 0.0 || v >= num_classes as f64)
                {
                    return Err(DataError::InvalidColumn {
                        name: target.name.clone(),
                        reason: format!("class index {v} outside [0, {num_classes})"),
                    });
                }
            }
            TargetKind::Regression => {
                if target.values.iter().any(|v| !v.is_finite()) {
                    return Err(DataError::InvalidColumn {
                        name: target.name.clone(),
                        reason: "regression target must be finite".into(),
                    });
                }
            }
        }
        Ok(Dataset {
            features,
            target,
            target_kind,
        })
    }

    /// Record count N.
    pub fn n_records(&self) -> usize {
        self.target.len()
    }

    /// Feature count n.
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[Column] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &Column {
        &self.features[i]
    }

    pub fn target(&self) -> &Column {
        &self.target
    }

    pub fn target_kind(&self) -> TargetKind {
        self.target_kind
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|c| c.name()).collect()
    }

    /// Class index of every record; `None` for regression targets.
    pub fn class_labels(&self) -> Option<Vec<usize>> {
        self.target_kind
            .is_classification()
            .then(|| self.target.values.iter().map(|&v| v as usize).collect())
    }

    /// Row-major feature matrix of the given records.
    pub fn rows(&self, records: &[usize]) -> Vec<Vec<f64>> {
        records
            .iter()
            .map(|&r| self.features.iter().map(|c| c.values[r]).collect())
            .collect()
    }

    /// Dataset restricted to the given records, in the given order.
    pub fn subset_rows(&self, records: &[usize]) -> Result<Dataset, DataError> {
        let n = self.n_records();
        if let Some(&bad) = records.iter().find(|&&r| r >= n) {
            return Err(DataError::IndexOutOfRange { index: bad, n });
        }
        Dataset::new(
            self.features.iter().map(|c| c.gather(records)).collect(),
            self.target.gather(records),
            self.target_kind,
        )
    }

    /// Dataset restricted to the given feature columns; target unchanged.
    pub fn select_features(&self, indices: &[usize]) -> Result<Dataset, DataError> {
        let n = self.n_features();
        let mut features = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= n {
                return Err(DataError::IndexOutOfRange { index: i, n });
            }
            features.push(self.features[i].clone());
        }
        Dataset::new(features, self.target.clone(), self.target_kind)
    }

    /// Write the dataset as CSV with features first and the target last.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names();
        header.push(self.target.name());
        w.write_record(&header)?;
        for row in 0..self.n_records() {
            let mut cells: Vec<String> = self.features.iter().map(|c| c.cell_text(row)).collect();
            cells.push(self.target.cell_text(row));
            w.write_record(&cells)?;
        }
        w.flush().map_err(|e| DataError::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }

    /// The schema string (`name:kind,...`) that reproduces this dataset's
    /// column kinds on reload.
    pub fn schema_string(&self) -> String {
        self.features
            .iter()
            .chain(std::iter::once(&self.target))
            .map(|c| {
                let kind = match c.kind {
                    ColumnKind::Continuous => "continuous",
                    ColumnKind::Binary => "binary",
                    ColumnKind::Nominal => "nominal",
                };
                format!("{}:{kind}", c.name)
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Per-column kind overrides applied after inference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schema {
    overrides: BTreeMap<String, ColumnKind>,
    max_categories: Option<usize>,
}

impl Schema {
    pub fn new() -> Self {
        Schema::default()
    }

    pub fn with_kind(mut self, name: impl Into<String>, kind: ColumnKind) -> Self {
        self.overrides.insert(name.into(), kind);
        self
    }

    pub fn with_max_categories(mut self, max: usize) -> Self {
        self.max_categories = Some(max);
        self
    }

    pub fn max_categories(&self) -> usize {
        self.max_categories.unwrap_or(DEFAULT_MAX_CATEGORIES)
    }

    pub fn kind_of(&self, name: &str) -> Option<ColumnKind> {
        self.overrides.get(name).copied()
    }

    /// Parse `name:kind,name:kind`.
    pub fn parse(spec: &str) -> Result<Self, DataError> {
        let mut schema = Schema::new();
        for entry in spec.split(',').map(str::trim).filter(|e| !e.is_empty()) {
            let (name, kind) = entry
                .rsplit_once(':')
                .ok_or_else(|| DataError::BadSchema(entry.to_string()))?;
            let kind = kind
                .parse::<ColumnKind>()
                .map_err(|_| DataError::BadSchema(entry.to_string()))?;
            schema.overrides.insert(name.trim().to_string(), kind);
        }
        Ok(schema)
    }
}

/// Load a CSV file; see [`read_csv`].
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema, target_name: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_csv(file, schema, target_name)
}

/// Parse comma-delimited text with a header row into a [`Dataset`].
///
/// Row numbers in errors are 1-based data rows (the header is row 0).
pub fn read_csv<R: Read>(reader: R, schema: &Schema, target_name: &str) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let target_idx = header
        .iter()
        .position(|h| h == target_name)
        .ok_or_else(|| DataError::MissingColumn(target_name.to_string()))?;
    for name in schema.overrides.keys() {
        if !header.contains(name) {
            return Err(DataError::MissingColumn(name.clone()));
        }
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(DataError::MissingValue {
                    row,
                    col: header[c].clone(),
                });
            }
            cells[c].push(cell.to_string());
        }
    }
    if cells[0].is_empty() {
        return Err(DataError::EmptyData);
    }

    let max_categories = schema.max_categories();
    let mut features = Vec::with_capacity(header.len() - 1);
    let mut target = None;
    for (c, (name, raw)) in header.iter().zip(cells).enumerate() {
        let column = build_column(name, raw, schema.kind_of(name), max_categories)?;
        if c == target_idx {
            target = Some(column);
        } else {
            features.push(column);
        }
    }
    let target = target.expect("target index located in header");
    let target_kind = match target.kind {
        ColumnKind::Continuous => TargetKind::Regression,
        _ => TargetKind::Classification {
            num_classes: target.num_categories().unwrap_or(2),
        },
    };
    Dataset::new(features, target, target_kind)
}

fn parse_numeric(name: &str, raw: &[String]) -> Result<Vec<f64>, DataError> {
    raw.iter()
        .enumerate()
        .map(|(i, s)| match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(DataError::UnparseableCell {
                row: i + 1,
                col: name.to_string(),
                value: s.clone(),
            }),
        })
        .collect()
}

fn build_column(
    name: &str,
    raw: Vec<String>,
    forced: Option<ColumnKind>,
    max_categories: usize,
) -> Result<Column, DataError> {
    let numeric: Option<Vec<f64>> = raw
        .iter()
        .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect();

    let kind = match forced {
        Some(kind) => kind,
        None => match &numeric {
            Some(vals) if vals.iter().all(|&v| v == 0.0 || v == 1.0) => ColumnKind::Binary,
            Some(vals) => {
                let distinct: BTreeSet<u64> = vals.iter().map(|v| v.to_bits()).collect();
                let integral = vals.iter().all(|v| v.fract() == 0.0);
                if integral && (2..=max_categories).contains(&distinct.len()) {
                    ColumnKind::Nominal
                } else {
                    ColumnKind::Continuous
                }
            }
            None => {
                let distinct: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
                if (2..=max_categories).contains(&distinct.len()) {
                    ColumnKind::Nominal
                } else {
                    // Non-numeric text that cannot be treated as categories.
                    let (row, value) = raw
                        .iter()
                        .enumerate()
                        .find(|(_, s)| s.parse::<f64>().is_err())
                        .map(|(i, s)| (i + 1, s.clone()))
                        .unwrap_or((1, raw[0].clone()));
                    return Err(DataError::UnparseableCell {
                        row,
                        col: name.to_string(),
                        value,
                    });
                }
            }
        },
    };

    match kind {
        ColumnKind::Continuous => Ok(Column::continuous(name, parse_numeric(name, &raw)?)),
        ColumnKind::Binary => {
            let vals = parse_numeric(name, &raw)?;
            if let Some(i) = vals.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(DataError::UnparseableCell {
                    row: i + 1,
                    col: name.to_string(),
                    value: raw[i].clone(),
                });
            }
            Ok(Column::binary(name, vals))
        }
        ColumnKind::Nominal => {
            // Numeric categories are ordered numerically, text lexicographically.
            let labels: Vec<String> = match &numeric {
                Some(vals) => {
                    let mut uniq: Vec<(f64, &str)> = vals.iter().copied().zip(raw.iter().map(String::as_str)).collect();
                    uniq.sort_by(|a, b| a.0.total_cmp(&b.0));
                    uniq.dedup_by(|a, b| a.0 == b.0);
                    uniq.into_iter().map(|(_, s)| s.to_string()).collect()
                }
                None => raw.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
            };
            let codes: Vec<usize> = match &numeric {
                Some(vals) => {
                    let keys: Vec<f64> = labels.iter().map(|l| l.parse::<f64>().unwrap()).collect();
                    vals.iter()
                        .map(|v| keys.iter().position(|k| k == v).unwrap())
                        .collect()
                }
                None => raw
                    .iter()
                    .map(|s| labels.binary_search(s).unwrap())
                    .collect(),
            };
            let col = Column::nominal(name, codes, labels);
            col.validate()?;
            Ok(col)
        }
    }
}

/// Assignment of every record to one of `k_folds` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k_folds: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub stratified: bool,
}

impl FoldPlan {
    /// Record indices of fold `fold`, ascending.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&r| self.assignments[r] == fold)
            .collect()
    }

    /// Record indices outside fold `fold`, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&r| self.assignments[r] != fold)
            .collect()
    }
}

/// Records grouped by class, each group shuffled; regression data yields a
/// single shuffled group.
fn shuffled_groups(ds: &Dataset, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut groups = match ds.target_kind() {
        TargetKind::Classification { num_classes } => {
            let mut groups = vec![Vec::new(); num_classes];
            for (r, &v) in ds.target().values().iter().enumerate() {
                groups[v as usize].push(r);
            }
            groups
        }
        TargetKind::Regression => vec![(0..ds.n_records()).collect()],
    };
    for g in &mut groups {
        g.shuffle(rng);
    }
    groups
}

/// Deterministic k-fold partition, stratified iff the target is a class label.
///
/// Classes are laid out one after another and dealt round-robin, so total fold
/// sizes differ by at most one and so do per-class counts.
pub fn make_folds(ds: &Dataset, k_folds: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k_folds < 2 {
        return Err(DataError::TooFewFolds(k_folds));
    }
    let n = ds.n_records();
    if n < k_folds {
        return Err(DataError::TooFewRecords(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = shuffled_groups(ds, &mut rng);
    let stratified = ds.target_kind().is_classification();
    if stratified {
        for (class, g) in groups.iter().enumerate() {
            if !g.is_empty() && g.len() < k_folds {
                return Err(DataError::ClassTooSmall {
                    class,
                    count: g.len(),
                    k_folds,
                });
            }
        }
    }
    let mut assignments = vec![0; n];
    for (pos, &r) in groups.iter().flatten().enumerate() {
        assignments[r] = pos % k_folds;
    }
    Ok(FoldPlan {
        k_folds,
        assignments,
        seed,
        stratified,
    })
}

/// Part sizes by the largest-remainder rule.
fn allocate(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, r) in sizes.iter_mut().zip(&raw) {
        *s = r.floor() as usize;
    }
    let mut rest = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[i] += 1;
        rest -= 1;
    }
    sizes
}

/// Deterministic train/validation/test split, stratified for classification.
pub fn split(
    ds: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|&x| !(x > 0.0) || !x.is_finite()) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions(fractions));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = shuffled_groups(ds, &mut rng);
    // Interleave classes by relative position so every prefix is stratified.
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(ds.n_records());
    for (class, g) in groups.iter().enumerate() {
        for (j, &r) in g.iter().enumerate() {
            keyed.push(((j as f64 + 0.5) / g.len() as f64, class, r));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = keyed.into_iter().map(|(_, _, r)| r).collect();
    let [a, b, _] = allocate(order.len(), f);
    let train = ds.subset_rows(&order[..a])?;
    let valid = ds.subset_rows(&order[a..a + b])?;
    let test = ds.subset_rows(&order[a + b..])?;
    Ok((train, valid, test))
}
