//! Dataset ingestion and preprocessing.
//!
//! CSV files with a header row are parsed into a numeric feature matrix:
//! numeric columns pass through, categorical columns are integer-coded and
//! one-hot expanded. Rows can then be normalized (per-row L1 or L2),
//! corrupted for augmentation, and subset by index.
//!
//! Datasets are immutable after construction; every transforming operation
//! returns a new value. Corruption takes an explicit seed and is pure given
//! it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-row normalization kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
}

/// Prediction task attached to a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Classification { classes: usize },
    Regression,
}

impl TaskKind {
    pub fn is_classification(&self) -> bool {
        matches!(self, TaskKind::Classification { .. })
    }
}

/// Targets: class labels in `0..K` or real values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A source column before one-hot expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    /// Categories listed in sorted order; expansion width equals the count.
    Categorical { categories: Vec<String> },
}

impl ColumnSpec {
    pub fn width(&self) -> usize {
        match &self.kind {
            ColumnKind::Numeric => 1,
            ColumnKind::Categorical { categories } => categories.len(),
        }
    }
}

/// Preprocessed tabular matrix with labels/targets, schema, and task kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    features: Array2<f64>,
    targets: Targets,
    task: TaskKind,
    schema: Vec<ColumnSpec>,
    target_name: String,
    /// Class label strings for classification targets, in label order.
    class_names: Vec<String>,
    norm_applied: Option<NormKind>,
}

/// Kind override or task hint supplied alongside a CSV path.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SchemaHint {
    /// Name of the target column. Required.
    pub target: String,
    /// Explicit task. When absent the task is inferred: a target column
    /// where every value parses as a number is treated as regression.
    pub task: Option<TaskHint>,
    /// Per-column kind overrides by column name.
    #[serde(default)]
    pub overrides: BTreeMap<String, KindHint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskHint {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindHint {
    Numeric,
    Categorical,
}

/// Feature-corruption settings: each cell (each categorical block counts as
/// one cell) is independently resampled from its column's empirical pool
/// with probability `rate`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorruptionConfig {
    pub rate: f64,
    pub seed: u64,
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) || !self.rate.is_finite() {
            return Err(Error::Config(format!("corruption rate {} outside [0, 1]", self.rate)));
        }
        Ok(())
    }
}

/// Per-column empirical value pools used by [`corrupt`].
#[derive(Debug, Clone)]
pub struct Marginals {
    pools: Vec<MarginalPool>,
    expanded_dim: usize,
}

#[derive(Debug, Clone)]
enum MarginalPool {
    Numeric {
        offset: usize,
        values: Vec<f64>,
    },
    /// Observed (category, hot value) pairs. Resampling a block clears it and
    /// writes the drawn hot value at the drawn category, so the single-nonzero
    /// structure survives and drawn blocks are exactly observed ones.
    Categorical {
        offset: usize,
        width: usize,
        observed: Vec<(usize, f64)>,
    },
}

impl Dataset {
    /// Builds a dataset from already-expanded parts, validating invariants.
    pub fn from_parts(
        features: Array2<f64>,
        targets: Targets,
        task: TaskKind,
        schema: Vec<ColumnSpec>,
        target_name: impl Into<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() != targets.len() {
            return Err(Error::dim(features.nrows(), targets.len(), "rows vs targets"));
        }
        let width: usize = schema.iter().map(|c| c.width()).sum();
        if width != features.ncols() {
            return Err(Error::dim(width, features.ncols(), "schema width vs feature width"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        match (&task, &targets) {
            (TaskKind::Classification { classes }, Targets::Classes(labels)) => {
                if let Some(&bad) = labels.iter().find(|&&l| l >= *classes) {
                    return Err(Error::Data(format!("label {bad} outside 0..{classes}")));
                }
            }
            (TaskKind::Regression, Targets::Values(values)) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data("non-finite regression target".into()));
                }
            }
            _ => return Err(Error::Data("task kind does not match target kind".into())),
        }
        Ok(Dataset {
            features,
            targets,
            task,
            schema,
            target_name: target_name.into(),
            class_names,
            norm_applied: None,
        })
    }

    /// All-numeric dataset with synthesized column names.
    pub fn from_numeric(features: Array2<f64>, targets: Targets, task: TaskKind) -> Result<Self> {
        let schema = (0..features.ncols())
            .map(|i| ColumnSpec {
                name: format!("x{i}"),
                kind: ColumnKind::Numeric,
            })
            .collect();
        let class_names = match &task {
            TaskKind::Classification { classes } => (0..*classes).map(|c| c.to_string()).collect(),
            TaskKind::Regression => Vec::new(),
        };
        Self::from_parts(features, targets, task, schema, "target", class_names)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn schema(&self) -> &[ColumnSpec] {
        &self.schema
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn norm_applied(&self) -> Option<NormKind> {
        self.norm_applied
    }

    /// Class labels, or an error for regression datasets.
    pub fn labels(&self) -> Result<&[usize]> {
        match &self.targets {
            Targets::Classes(l) => Ok(l),
            Targets::Values(_) => Err(Error::Data("regression dataset has no class labels".into())),
        }
    }

    /// Regression targets, or an error for classification datasets.
    pub fn values(&self) -> Result<&[f64]> {
        match &self.targets {
            Targets::Values(v) => Ok(v),
            Targets::Classes(_) => Err(Error::Data("classification dataset has no real targets".into())),
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match self.task {
            TaskKind::Classification { classes } => Some(classes),
            TaskKind::Regression => None,
        }
    }

    /// Expanded-column offset of each source column.
    pub fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.schema.len());
        let mut at = 0;
        for col in &self.schema {
            offsets.push(at);
            at += col.width();
        }
        offsets
    }

    /// Per-row rescaling so each row's L1 or L2 norm equals 1. All-zero rows
    /// pass through unchanged. Normalizing twice is rejected.
    pub fn normalize(&self, kind: NormKind) -> Result<Dataset> {
        if let Some(applied) = self.norm_applied {
            return Err(Error::Precondition(format!(
                "dataset already normalized with {applied:?}"
            )));
        }
        let mut features = self.features.clone();
        for mut row in features.rows_mut() {
            let norm = match kind {
                NormKind::L1 => row.iter().map(|v| v.abs()).sum::<f64>(),
                NormKind::L2 => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
            };
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
        let mut out = self.clone();
        out.features = features;
        out.norm_applied = Some(kind);
        Ok(out)
    }

    /// Row-subset dataset with the same schema. Indices may repeat;
    /// out-of-range indices are rejected.
    pub fn take(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::Data(format!("index {bad} out of range for {} rows", self.n())));
        }
        let features = self.features.select(Axis(0), indices);
        let targets = match &self.targets {
            Targets::Classes(l) => Targets::Classes(indices.iter().map(|&i| l[i]).collect()),
            Targets::Values(v) => Targets::Values(indices.iter().map(|&i| v[i]).collect()),
        };
        let mut out = self.clone();
        out.features = features;
        out.targets = targets;
        Ok(out)
    }

    /// Empirical value pools per source column, for [`corrupt`].
    pub fn marginals(&self) -> Marginals {
        let offsets = self.offsets();
        let pools = self
            .schema
            .iter()
            .zip(&offsets)
            .map(|(col, &offset)| match &col.kind {
                ColumnKind::Numeric => MarginalPool::Numeric {
                    offset,
                    values: self.features.column(offset).to_vec(),
                },
                ColumnKind::Categorical { categories } => {
                    let width = categories.len();
                    let observed = self
                        .features
                        .rows()
                        .into_iter()
                        .map(|row| {
                            let block = row.slice(ndarray::s![offset..offset + width]);
                            let (cat, &hot) = block
                                .iter()
                                .enumerate()
                                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                                .expect("non-empty block");
                            (cat, hot)
                        })
                        .collect();
                    MarginalPool::Categorical {
                        offset,
                        width,
                        observed,
                    }
                }
            })
            .collect();
        Marginals {
            pools,
            expanded_dim: self.dim(),
        }
    }

    /// Stable fingerprint of the preprocessing contract: schema, target,
    /// task, and normalization. Checkpoints embed it so encode-time
    /// mismatches are detectable.
    pub fn fingerprint(&self) -> u64 {
        let mut canon = String::new();
        let _ = write!(canon, "target={};task={:?};norm={:?};", self.target_name, self.task, self.norm_applied);
        for col in &self.schema {
            match &col.kind {
                ColumnKind::Numeric => {
                    let _ = write!(canon, "n:{};", col.name);
                }
                ColumnKind::Categorical { categories } => {
                    let _ = write!(canon, "c:{}={};", col.name, categories.join("|"));
                }
            }
        }
        for name in &self.class_names {
            let _ = write!(canon, "y:{name};");
        }
        fnv1a64(canon.as_bytes())
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Loads a CSV file with a header row.
///
/// Numeric columns parse as reals; categorical columns are integer-coded in
/// sorted category order and one-hot expanded. Unparseable or missing cells
/// are rejected with row-indexed diagnostics.
pub fn load_csv(path: impl AsRef<Path>, hint: &SchemaHint) -> Result<Dataset> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(Error::Data(format!("{display}: empty file")));
    }
    let target_idx = headers
        .iter()
        .position(|h| h == &hint.target)
        .ok_or_else(|| Error::Data(format!("{display}: target column `{}` not found", hint.target)))?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut diagnostics: Vec<String> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            push_diag(&mut diagnostics, format!("row {}: expected {} fields, got {}", i + 1, headers.len(), record.len()));
            continue;
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    if !diagnostics.is_empty() {
        return Err(Error::CsvRows { path: display, diagnostics });
    }

    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != target_idx).collect();

    // Kind per feature column: override wins, otherwise numeric iff every
    // cell parses as a finite number.
    let mut kinds: Vec<ColumnKind> = Vec::with_capacity(feature_cols.len());
    for &c in &feature_cols {
        let name = &headers[c];
        let hint_kind = hint.overrides.get(name);
        let kind = match hint_kind {
            Some(KindHint::Numeric) => ColumnKind::Numeric,
            Some(KindHint::Categorical) => ColumnKind::Categorical {
                categories: sorted_categories(&rows, c),
            },
            None => {
                // Vacuously numeric when there are no rows to inspect.
                let numeric = rows
                    .iter()
                    .all(|r| r[c].trim().parse::<f64>().map(|v| v.is_finite()).unwrap_or(false));
                if numeric {
                    ColumnKind::Numeric
                } else {
                    ColumnKind::Categorical {
                        categories: sorted_categories(&rows, c),
                    }
                }
            }
        };
        kinds.push(kind);
    }

    let schema: Vec<ColumnSpec> = feature_cols
        .iter()
        .zip(&kinds)
        .map(|(&c, kind)| ColumnSpec {
            name: headers[c].clone(),
            kind: kind.clone(),
        })
        .collect();
    let width: usize = schema.iter().map(|c| c.width()).sum();

    let mut features = Array2::zeros((rows.len(), width));
    for (r, row) in rows.iter().enumerate() {
        let mut at = 0;
        for (spec, &c) in schema.iter().zip(&feature_cols) {
            let cell = row[c].trim();
            match &spec.kind {
                ColumnKind::Numeric => {
                    match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => features[[r, at]] = v,
                        _ => push_diag(
                            &mut diagnostics,
                            format!("row {}: column `{}`: cannot parse `{}` as a finite number", r + 1, spec.name, cell),
                        ),
                    }
                    at += 1;
                }
                ColumnKind::Categorical { categories } => {
                    match categories.binary_search_by(|probe| probe.as_str().cmp(cell)) {
                        Ok(idx) => features[[r, at + idx]] = 1.0,
                        Err(_) => push_diag(
                            &mut diagnostics,
                            format!("row {}: column `{}`: unknown category `{}`", r + 1, spec.name, cell),
                        ),
                    }
                    at += categories.len();
                }
            }
        }
    }

    // Targets.
    let target_cells: Vec<&str> = rows.iter().map(|r| r[target_idx].trim()).collect();
    let all_numeric = !target_cells.is_empty()
        && target_cells
            .iter()
            .all(|c| c.parse::<f64>().map(|v| v.is_finite()).unwrap_or(false));
    let regression = match hint.task {
        Some(TaskHint::Regression) => true,
        Some(TaskHint::Classification) => false,
        None => all_numeric,
    };
    let (targets, task, class_names) = if regression {
        let mut values = Vec::with_capacity(target_cells.len());
        for (r, cell) in target_cells.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    push_diag(
                        &mut diagnostics,
                        format!("row {}: target `{}`: cannot parse `{}` as a finite number", r + 1, hint.target, cell),
                    );
                    values.push(0.0);
                }
            }
        }
        (Targets::Values(values), TaskKind::Regression, Vec::new())
    } else {
        let names: Vec<String> = target_cells
            .iter()
            .map(|c| c.to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut labels = Vec::with_capacity(target_cells.len());
        for (r, cell) in target_cells.iter().enumerate() {
            if cell.is_empty() {
                push_diag(&mut diagnostics, format!("row {}: target `{}` is empty", r + 1, hint.target));
                labels.push(0);
            } else {
                labels.push(names.binary_search_by(|p| p.as_str().cmp(cell)).unwrap_or(0));
            }
        }
        let classes = names.len().max(1);
        (Targets::Classes(labels), TaskKind::Classification { classes }, names)
    };

    if !diagnostics.is_empty() {
        return Err(Error::CsvRows { path: display, diagnostics });
    }

    Dataset::from_parts(features, targets, task, schema, hint.target.clone(), class_names)
}

fn sorted_categories(rows: &[Vec<String>], col: usize) -> Vec<String> {
    rows.iter()
        .map(|r| r[col].trim().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn push_diag(diags: &mut Vec<String>, msg: String) {
    // Cap the list so a thoroughly broken file stays readable.
    if diags.len() < 20 {
        diags.push(msg);
    }
}

/// Writes a dataset back to CSV, inverting one-hot expansion.
///
/// Only unnormalized datasets round-trip exactly (normalization rescales
/// one-hot blocks), so normalized inputs are rejected.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    if ds.norm_applied().is_some() {
        return Err(Error::Precondition("write_csv requires an unnormalized dataset".into()));
    }
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<&str> = ds.schema.iter().map(|c| c.name.as_str()).collect();
    header.push(ds.target_name());
    writer.write_record(&header)?;
    let offsets = ds.offsets();
    for r in 0..ds.n() {
        let mut record: Vec<String> = Vec::with_capacity(ds.schema.len() + 1);
        for (col, &offset) in ds.schema.iter().zip(&offsets) {
            match &col.kind {
                ColumnKind::Numeric => record.push(format!("{}", ds.features[[r, offset]])),
                ColumnKind::Categorical { categories } => {
                    let block = ds.features.row(r);
                    let hot = (0..categories.len())
                        .max_by(|&a, &b| {
                            block[offset + a].partial_cmp(&block[offset + b]).unwrap()
                        })
                        .unwrap();
                    record.push(categories[hot].clone());
                }
            }
        }
        match &ds.targets {
            Targets::Classes(l) => record.push(ds.class_names[l[r]].clone()),
            Targets::Values(v) => record.push(format!("{}", v[r])),
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Cell-wise resampling from empirical pools with probability `cfg.rate`.
pub fn corrupt(batch: &Array2<f64>, marginals: &Marginals, cfg: &CorruptionConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    corrupt_with_rng(batch, marginals, cfg.rate, &mut rng)
}

/// Corruption driven by a caller-owned RNG stream; used by training loops
/// that draw many views from one stage stream.
pub fn corrupt_with_rng<R: Rng>(
    batch: &Array2<f64>,
    marginals: &Marginals,
    rate: f64,
    rng: &mut R,
) -> Result<Array2<f64>> {
    if batch.ncols() != marginals.expanded_dim {
        return Err(Error::dim(marginals.expanded_dim, batch.ncols(), "marginals must cover all columns"));
    }
    for pool in &marginals.pools {
        let empty = match pool {
            MarginalPool::Numeric { values, .. } => values.is_empty(),
            MarginalPool::Categorical { observed, .. } => observed.is_empty(),
        };
        if empty {
            return Err(Error::Data("empty marginal pool for a column".into()));
        }
    }
    let mut out = batch.clone();
    for r in 0..out.nrows() {
        for pool in &marginals.pools {
            if rng.random::<f64>() >= rate {
                continue;
            }
            match pool {
                MarginalPool::Numeric { offset, values } => {
                    out[[r, *offset]] = values[rng.random_range(0..values.len())];
                }
                MarginalPool::Categorical { offset, width, observed } => {
                    let (cat, hot) = observed[rng.random_range(0..observed.len())];
                    for w in 0..*width {
                        out[[r, offset + w]] = 0.0;
                    }
                    out[[r, offset + cat]] = hot;
                }
            }
        }
    }
    Ok(out)
}

use rand_chacha::rand_core::SeedableRng;

/// Seeded disjoint split of `0..n` into (rest, holdout) index lists, where
/// the holdout has `ceil(fraction · n)` rows.
pub fn split_indices<R: Rng>(n: usize, fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..n).collect();
    shuffle(&mut indices, rng);
    let holdout_len = ((n as f64) * fraction).ceil() as usize;
    let holdout_len = holdout_len.min(n);
    let holdout = indices.split_off(n - holdout_len);
    (indices, holdout)
}

/// Fisher–Yates shuffle driven by the caller's RNG.
pub fn shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn hint(target: &str) -> SchemaHint {
        SchemaHint {
            target: target.to_string(),
            ..Default::default()
        }
    }

    #[test]
    fn header_only_file_loads_empty() {
        let f = write_tmp("a,b,y\n");
        let ds = load_csv(f.path(), &hint("y")).unwrap();
        assert_eq!(ds.n(), 0);
        assert_eq!(ds.schema().len(), 2);
    }

    #[test]
    fn one_hot_expansion_width() {
        let f = write_tmp("a,b,color,y\n1.0,2.0,red,yes\n3.5,0.5,blue,no\n-1.0,0.0,red,yes\n");
        let ds = load_csv(f.path(), &hint("y")).unwrap();
        assert_eq!(ds.n(), 3);
        // 2 numeric + 2 one-hot columns.
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.classes(), Some(2));
        // Sorted categories: blue < red.
        assert_eq!(ds.features().row(0).to_vec(), vec![1.0, 2.0, 0.0, 1.0]);
        assert_eq!(ds.labels().unwrap(), &[1, 0, 1]);
    }

    #[test]
    fn one_hot_blocks_have_exactly_one_hot() {
        let f = write_tmp("c,y\nred,0\nblue,1\ngreen,0\nred,1\nblue,0\n");
        let mut h = hint("y");
        h.task = Some(TaskHint::Classification);
        let ds = load_csv(f.path(), &h).unwrap();
        for row in ds.features().rows() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            assert_eq!(ones, 1);
            assert_eq!(zeros, row.len() - 1);
        }
    }

    #[test]
    fn zero_byte_file_is_rejected() {
        let f = write_tmp("");
        assert!(load_csv(f.path(), &hint("y")).is_err());
    }

    #[test]
    fn missing_target_column_is_rejected() {
        let f = write_tmp("a,b\n1,2\n");
        assert!(matches!(load_csv(f.path(), &hint("y")), Err(Error::Data(_))));
    }

    #[test]
    fn ragged_rows_reported_with_row_indices() {
        let f = write_tmp("a,b,y\n1,2,0\n1,2\n3,4,1\n");
        let err = load_csv(f.path(), &hint("y")).unwrap_err();
        match err {
            Error::CsvRows { diagnostics, .. } => {
                assert!(diagnostics[0].contains("row 2"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn unparseable_numeric_cell_reported() {
        let f = write_tmp("a,y\n1.0,0\nabc,1\n");
        let mut h = hint("y");
        h.overrides.insert("a".into(), KindHint::Numeric);
        let err = load_csv(f.path(), &h).unwrap_err();
        match err {
            Error::CsvRows { diagnostics, .. } => {
                assert!(diagnostics[0].contains("row 2"));
                assert!(diagnostics[0].contains("`a`"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn write_then_reload_roundtrips_exactly() {
        let f = write_tmp("a,b,color,y\n1.25,-3.625,red,yes\n0.1,2.7182818284590452,blue,no\n-7.5,0.0,green,yes\n");
        let ds = load_csv(f.path(), &hint("y")).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, out.path()).unwrap();
        let back = load_csv(out.path(), &hint("y")).unwrap();
        assert_eq!(ds.features(), back.features());
        assert_eq!(ds.labels().unwrap(), back.labels().unwrap());
        assert_eq!(ds.schema(), back.schema());
    }

    #[test]
    fn normalize_l2_unit_rows() {
        let ds = Dataset::from_numeric(
            array![[3.0, 4.0], [0.0, 0.0], [1.0, 1.0]],
            Targets::Values(vec![0.0, 1.0, 2.0]),
            TaskKind::Regression,
        )
        .unwrap();
        let normed = ds.normalize(NormKind::L2).unwrap();
        let f = normed.features();
        assert_abs_diff_eq!(f.row(0).mapv(|v| v * v).sum().sqrt(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.row(2).mapv(|v| v * v).sum().sqrt(), 1.0, epsilon = 1e-12);
        // All-zero row unchanged.
        assert_eq!(f.row(1).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn normalize_l1_unit_rows() {
        let ds = Dataset::from_numeric(
            array![[3.0, -1.0], [2.0, 2.0]],
            Targets::Values(vec![0.0, 1.0]),
            TaskKind::Regression,
        )
        .unwrap();
        let normed = ds.normalize(NormKind::L1).unwrap();
        for row in normed.features().rows() {
            assert_abs_diff_eq!(row.iter().map(|v| v.abs()).sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn double_normalization_rejected() {
        let ds = Dataset::from_numeric(
            array![[3.0, 4.0]],
            Targets::Values(vec![0.0]),
            TaskKind::Regression,
        )
        .unwrap();
        let once = ds.normalize(NormKind::L2).unwrap();
        assert!(matches!(once.normalize(NormKind::L2), Err(Error::Precondition(_))));
    }

    #[test]
    fn normalize_keeps_unit_rows_unchanged() {
        // Rows already at unit norm move by at most 1e-12.
        let ds = Dataset::from_numeric(
            array![[0.6, 0.8], [1.0, 0.0]],
            Targets::Values(vec![0.0, 1.0]),
            TaskKind::Regression,
        )
        .unwrap();
        let normed = ds.normalize(NormKind::L2).unwrap();
        for (a, b) in ds.features().iter().zip(normed.features().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn corrupt_rate_zero_is_identity() {
        let ds = Dataset::from_numeric(
            Array2::from_shape_fn((20, 3), |(r, c)| (r * 3 + c) as f64),
            Targets::Values(vec![0.0; 20]),
            TaskKind::Regression,
        )
        .unwrap();
        let m = ds.marginals();
        let out = corrupt(&ds.features().to_owned(), &m, &CorruptionConfig { rate: 0.0, seed: 7 }).unwrap();
        assert_eq!(out, ds.features().to_owned());
    }

    #[test]
    fn corrupt_rate_one_draws_from_pools() {
        let ds = Dataset::from_numeric(
            Array2::from_shape_fn((10, 2), |(r, c)| (r * 2 + c) as f64),
            Targets::Values(vec![0.0; 10]),
            TaskKind::Regression,
        )
        .unwrap();
        let m = ds.marginals();
        let out = corrupt(&ds.features().to_owned(), &m, &CorruptionConfig { rate: 1.0, seed: 3 }).unwrap();
        for c in 0..2 {
            let pool: Vec<f64> = ds.features().column(c).to_vec();
            for &v in out.column(c) {
                assert!(pool.contains(&v));
            }
        }
    }

    #[test]
    fn corrupt_rate_concentrates_near_expectation() {
        // 10,000 cells at rate 0.3: the replaced fraction lands in 0.3 ± 0.02.
        // Pool values are dense reals, so a replacement changing nothing has
        // negligible probability.
        let mut rng = seed::rng(1, "corrupt-conc");
        let features = Array2::from_shape_fn((1000, 10), |_| rng.random_range(0.0..1.0));
        let ds = Dataset::from_numeric(features, Targets::Values(vec![0.0; 1000]), TaskKind::Regression).unwrap();
        let m = ds.marginals();
        let out = corrupt(&ds.features().to_owned(), &m, &CorruptionConfig { rate: 0.3, seed: 11 }).unwrap();
        let changed = out
            .iter()
            .zip(ds.features().iter())
            .filter(|(a, b)| a != b)
            .count();
        let fraction = changed as f64 / 10_000.0;
        assert!((fraction - 0.3).abs() < 0.02, "changed fraction {fraction}");
    }

    #[test]
    fn corrupt_rejects_empty_pools() {
        let empty = Dataset::from_numeric(
            Array2::zeros((0, 2)),
            Targets::Values(vec![]),
            TaskKind::Regression,
        )
        .unwrap();
        let m = empty.marginals();
        let batch = array![[1.0, 2.0]];
        assert!(matches!(
            corrupt(&batch, &m, &CorruptionConfig { rate: 0.5, seed: 1 }),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn corrupt_same_seed_reproducible() {
        let ds = Dataset::from_numeric(
            Array2::from_shape_fn((50, 4), |(r, c)| (r + c) as f64),
            Targets::Values(vec![0.0; 50]),
            TaskKind::Regression,
        )
        .unwrap();
        let m = ds.marginals();
        let cfg = CorruptionConfig { rate: 0.5, seed: 99 };
        let a = corrupt(&ds.features().to_owned(), &m, &cfg).unwrap();
        let b = corrupt(&ds.features().to_owned(), &m, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_preserves_one_hot_blocks() {
        let f = write_tmp("c,y\nred,0\nblue,1\ngreen,0\nred,1\n");
        let mut h = hint("y");
        h.task = Some(TaskHint::Classification);
        let ds = load_csv(f.path(), &h).unwrap();
        let m = ds.marginals();
        let out = corrupt(&ds.features().to_owned(), &m, &CorruptionConfig { rate: 1.0, seed: 5 }).unwrap();
        for row in out.rows() {
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), row.len() - 1);
        }
    }

    #[test]
    fn take_identity_and_empty() {
        let ds = Dataset::from_numeric(
            array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            Targets::Classes(vec![0, 1, 0]),
            TaskKind::Classification { classes: 2 },
        )
        .unwrap();
        let all = ds.take(&[0, 1, 2]).unwrap();
        assert_eq!(all.features(), ds.features());
        assert_eq!(all.labels().unwrap(), ds.labels().unwrap());
        let none = ds.take(&[]).unwrap();
        assert_eq!(none.n(), 0);
    }

    #[test]
    fn take_out_of_range_rejected() {
        let ds = Dataset::from_numeric(
            array![[1.0], [2.0]],
            Targets::Values(vec![0.0, 1.0]),
            TaskKind::Regression,
        )
        .unwrap();
        assert!(ds.take(&[0, 2]).is_err());
    }

    #[test]
    fn take_union_equals_concat_of_takes() {
        let ds = Dataset::from_numeric(
            Array2::from_shape_fn((6, 2), |(r, c)| (10 * r + c) as f64),
            Targets::Classes(vec![0, 1, 0, 1, 0, 1]),
            TaskKind::Classification { classes: 2 },
        )
        .unwrap();
        let a = [0usize, 2];
        let b = [3usize, 5];
        let joined: Vec<usize> = a.iter().chain(b.iter()).cloned().collect();
        let whole = ds.take(&joined).unwrap();
        let left = ds.take(&a).unwrap();
        let right = ds.take(&b).unwrap();
        for (i, row) in whole.features().rows().into_iter().enumerate() {
            let expect = if i < a.len() {
                left.row(i)
            } else {
                right.row(i - a.len())
            };
            assert_eq!(row, expect);
        }
    }

    #[test]
    fn split_indices_disjoint_exhaustive() {
        let mut rng = seed::rng(2, "split-idx");
        let (rest, holdout) = split_indices(10, 0.3, &mut rng);
        assert_eq!(rest.len() + holdout.len(), 10);
        let mut all: Vec<usize> = rest.iter().chain(holdout.iter()).cloned().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(holdout.len(), 3);
    }

    #[test]
    fn fingerprint_tracks_schema_and_norm() {
        let ds = Dataset::from_numeric(
            array![[1.0, 2.0]],
            Targets::Values(vec![0.0]),
            TaskKind::Regression,
        )
        .unwrap();
        let normed = ds.normalize(NormKind::L2).unwrap();
        assert_ne!(ds.fingerprint(), normed.fingerprint());
        assert_eq!(ds.fingerprint(), ds.clone().fingerprint());
    }
}
