//! Dataset loading, encoding, scaling, splitting, and synthetic generators.
//!
//! CSV datasets come in with a header row; categorical features are one-hot
//! expanded (one column per level), targets are mapped by sorted level order,
//! and missing values are rejected outright. Scalers fit on training rows
//! only. The train/test boundary is fixed by one seeded shuffle per
//! experiment; the validation slice is re-drawn from the training pool on
//! every call in random mode and is the fixed last block in deterministic
//! mode.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::{derive, Stream, StreamAddress};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetKind {
    Binary,
    Multiclass(usize),
    Regression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    MinMax01,
    Standardize,
}

/// How to read a CSV file: which column is the target, what kind of target
/// it is, which feature columns are categorical, and how to scale.
#[derive(Clone, Debug)]
pub struct DatasetSchema {
    pub target: String,
    pub target_kind: TargetKind,
    pub categorical: Vec<String>,
    pub scaling: Scaling,
}

/// Target vector, by task kind. Binary labels are 0/1.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Binary(Vec<f64>),
    Multiclass { classes: usize, labels: Vec<usize> },
    Regression(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Binary(v) | Targets::Regression(v) => v.len(),
            Targets::Multiclass { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> TargetKind {
        match self {
            Targets::Binary(_) => TargetKind::Binary,
            Targets::Multiclass { classes, .. } => TargetKind::Multiclass(*classes),
            Targets::Regression(_) => TargetKind::Regression,
        }
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Binary(v) => Targets::Binary(idx.iter().map(|&i| v[i]).collect()),
            Targets::Regression(v) => Targets::Regression(idx.iter().map(|&i| v[i]).collect()),
            Targets::Multiclass { classes, labels } => Targets::Multiclass {
                classes: *classes,
                labels: idx.iter().map(|&i| labels[i]).collect(),
            },
        }
    }
}

/// A numeric dataset: one row per instance.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub targets: Targets,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), idx),
            targets: self.targets.select(idx),
            feature_names: self.feature_names.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DataError {
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("non-numeric cell at data row {row}, column '{column}': '{value}'")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("file '{0}' has no data rows")]
    EmptyFile(String),
    #[error("target '{target}' has {found} distinct values, expected {expected}")]
    TargetCardinality {
        target: String,
        expected: usize,
        found: usize,
    },
    #[error("dataset too small to split: {0}")]
    TooSmall(String),
    #[error("csv read failed: {0}")]
    Csv(String),
}

/// Loads a CSV file under `schema`: numeric matrix plus target vector, with
/// categorical columns one-hot expanded in place (one 0/1 column per level,
/// levels in sorted order).
pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| DataError::Csv(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();

    let target_col = headers
        .iter()
        .position(|h| *h == schema.target)
        .ok_or_else(|| DataError::MissingColumn(schema.target.clone()))?;
    for cat in &schema.categorical {
        if !headers.contains(cat) {
            return Err(DataError::MissingColumn(cat.clone()));
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(DataError::EmptyFile(path.display().to_string()));
    }

    // Collect levels of each categorical column in sorted order.
    let cat_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(i, h)| *i != target_col && schema.categorical.contains(h))
        .map(|(i, _)| i)
        .collect();
    let mut levels: Vec<(usize, Vec<String>)> = Vec::new();
    for &c in &cat_cols {
        let mut set = BTreeSet::new();
        for (r, row) in rows.iter().enumerate() {
            let v = cell(row, r, c, &headers)?;
            set.insert(v.to_string());
        }
        levels.push((c, set.into_iter().collect()));
    }

    // Expanded feature layout, preserving original column order.
    let mut feature_names = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if i == target_col {
            continue;
        }
        match levels.iter().find(|(c, _)| *c == i) {
            Some((_, lv)) => {
                feature_names.extend(lv.iter().map(|l| format!("{h}={l}")));
            }
            None => feature_names.push(h.clone()),
        }
    }

    let mut features = Array2::zeros((rows.len(), feature_names.len()));
    let mut raw_targets = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let mut out = 0;
        for (i, h) in headers.iter().enumerate() {
            let value = cell(row, r, i, &headers)?;
            if i == target_col {
                raw_targets.push(value.to_string());
                continue;
            }
            match levels.iter().find(|(c, _)| *c == i) {
                Some((_, lv)) => {
                    let hit = lv.iter().position(|l| l == value).expect("level collected");
                    for k in 0..lv.len() {
                        features[[r, out + k]] = f64::from(k == hit);
                    }
                    out += lv.len();
                }
                None => {
                    features[[r, out]] = parse_numeric(value, r, h)?;
                    out += 1;
                }
            }
        }
    }

    let targets = encode_targets(&raw_targets, schema)?;
    Ok(Dataset {
        features,
        targets,
        feature_names,
    })
}

fn cell<'a>(
    row: &'a [String],
    r: usize,
    c: usize,
    headers: &[String],
) -> Result<&'a str, DataError> {
    let value = row.get(c).map(String::as_str).unwrap_or("");
    if value.trim().is_empty() {
        return Err(DataError::NonNumericCell {
            row: r + 1,
            column: headers[c].clone(),
            value: "<missing>".to_string(),
        });
    }
    Ok(value.trim())
}

fn parse_numeric(value: &str, row: usize, column: &str) -> Result<f64, DataError> {
    value.parse::<f64>().map_err(|_| DataError::NonNumericCell {
        row: row + 1,
        column: column.to_string(),
        value: value.to_string(),
    })
}

fn encode_targets(raw: &[String], schema: &DatasetSchema) -> Result<Targets, DataError> {
    match schema.target_kind {
        TargetKind::Regression => {
            let values = raw
                .iter()
                .enumerate()
                .map(|(r, v)| parse_numeric(v, r, &schema.target))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Targets::Regression(values))
        }
        TargetKind::Binary | TargetKind::Multiclass(_) => {
            let expected = match schema.target_kind {
                TargetKind::Binary => 2,
                TargetKind::Multiclass(k) => k,
                TargetKind::Regression => unreachable!(),
            };
            let classes: Vec<String> = raw
                .iter()
                .cloned()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if classes.len() != expected {
                return Err(DataError::TargetCardinality {
                    target: schema.target.clone(),
                    expected,
                    found: classes.len(),
                });
            }
            let labels: Vec<usize> = raw
                .iter()
                .map(|v| {
                    classes
                        .iter()
                        .position(|c| c == v)
                        .expect("class collected")
                })
                .collect();
            Ok(match schema.target_kind {
                TargetKind::Binary => {
                    Targets::Binary(labels.into_iter().map(|l| l as f64).collect())
                }
                _ => Targets::Multiclass {
                    classes: expected,
                    labels,
                },
            })
        }
    }
}

/// Column scaler fitted on training rows only.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaler {
    method: Scaling,
    // (offset, divisor) per column; divisor 0 marks a constant column,
    // which maps to all zeros.
    columns: Vec<(f64, f64)>,
}

impl Scaler {
    pub fn fit(method: Scaling, train: ArrayView2<'_, f64>) -> Scaler {
        assert!(train.nrows() > 0, "empty training partition");
        let n = train.nrows() as f64;
        let columns = train
            .axis_iter(Axis(1))
            .map(|col| match method {
                Scaling::MinMax01 => {
                    let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (min, max - min)
                }
                Scaling::Standardize => {
                    let mean = col.sum() / n;
                    // Population (n) denominator, so two points scale to +-1.
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    (mean, var.sqrt())
                }
            })
            .collect();
        Scaler { method, columns }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.columns.len(), "column count mismatch");
        let mut out = x.to_owned();
        for (mut col, &(offset, divisor)) in out.axis_iter_mut(Axis(1)).zip(&self.columns) {
            if divisor == 0.0 {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|v| (v - offset) / divisor);
            }
        }
        out
    }

    pub fn method(&self) -> Scaling {
        self.method
    }
}

/// Split proportions and the seed of the one shuffle that fixes the
/// train/test boundary for a whole experiment.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub shuffle_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.25,
            val_fraction: 0.10,
            shuffle_seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffled base order of `0..n` under the spec's seed. The tail of this
/// order is the test partition; the rest is the training pool.
pub fn base_order(n: usize, spec: &SplitSpec) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = derive(
        spec.shuffle_seed,
        &StreamAddress::root().child("dataset_shuffle", 0),
    );
    order.shuffle(&mut rng);
    order
}

/// Held-out sizes: the test and validation slices round up, the training
/// remainder absorbs the rest.
pub fn partition_sizes(n: usize, spec: &SplitSpec) -> (usize, usize, usize) {
    let test = (n as f64 * spec.test_fraction).ceil() as usize;
    let pool = n.saturating_sub(test);
    let val = (pool as f64 * spec.val_fraction).ceil() as usize;
    (pool.saturating_sub(val), val, test)
}

/// Splits `0..n` into train/val/test index sets. The train/test boundary
/// depends only on `spec`; `deterministic` picks the fixed last block of the
/// training pool as validation, otherwise the validation rows are drawn from
/// the pool with `rng`.
pub fn split(
    n: usize,
    spec: &SplitSpec,
    deterministic: bool,
    rng: &mut Stream,
) -> Result<SplitIndices, DataError> {
    assert!(
        spec.test_fraction > 0.0 && spec.test_fraction < 1.0,
        "test fraction out of range"
    );
    assert!(
        spec.val_fraction > 0.0 && spec.val_fraction < 1.0,
        "val fraction out of range"
    );
    let (n_train, n_val, n_test) = partition_sizes(n, spec);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(DataError::TooSmall(format!(
            "{n} rows give train/val/test sizes {n_train}/{n_val}/{n_test}"
        )));
    }
    let order = base_order(n, spec);
    let test = order[n - n_test..].to_vec();
    let pool = &order[..n - n_test];
    let (train, val) = if deterministic {
        (pool[..n_train].to_vec(), pool[n_train..].to_vec())
    } else {
        let mut shuffled = pool.to_vec();
        shuffled.shuffle(rng);
        (shuffled[..n_train].to_vec(), shuffled[n_train..].to_vec())
    };
    Ok(SplitIndices { train, val, test })
}

/// Convenience wrapper carving a dataset into three row subsets.
pub fn split_dataset(
    dataset: &Dataset,
    spec: &SplitSpec,
    deterministic: bool,
    rng: &mut Stream,
) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let idx = split(dataset.n_rows(), spec, deterministic, rng)?;
    Ok((
        dataset.select(&idx.train),
        dataset.select(&idx.val),
        dataset.select(&idx.test),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Xor,
    Moons,
    SineRegression,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Xor => "xor",
            SynthKind::Moons => "moons",
            SynthKind::SineRegression => "sine_regression",
        }
    }
}

/// Self-contained synthetic datasets for desk-scale experiments.
pub fn synth(kind: SynthKind, n: usize, noise: f64, rng: &mut Stream) -> Dataset {
    assert!(n >= 4, "need at least 4 rows");
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    match kind {
        SynthKind::Xor => {
            // Cycle the four corners so classes stay balanced; labels are the
            // coordinate parity.
            const CORNERS: [(f64, f64, f64); 4] = [
                (0.0, 0.0, 0.0),
                (0.0, 1.0, 1.0),
                (1.0, 0.0, 1.0),
                (1.0, 1.0, 0.0),
            ];
            let mut features = Array2::zeros((n, 2));
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let (x, y, label) = CORNERS[i % 4];
                features[[i, 0]] = x + noise * gauss.sample(rng);
                features[[i, 1]] = y + noise * gauss.sample(rng);
                labels.push(label);
            }
            Dataset {
                features,
                targets: Targets::Binary(labels),
                feature_names: vec!["x1".into(), "x2".into()],
            }
        }
        SynthKind::Moons => {
            let n_inner = n / 2;
            let n_outer = n - n_inner;
            let mut features = Array2::zeros((n, 2));
            let mut labels = Vec::with_capacity(n);
            let arc = |j: usize, count: usize| {
                if count <= 1 {
                    0.0
                } else {
                    std::f64::consts::PI * j as f64 / (count - 1) as f64
                }
            };
            for j in 0..n_outer {
                let t = arc(j, n_outer);
                features[[j, 0]] = t.cos() + noise * gauss.sample(rng);
                features[[j, 1]] = t.sin() + noise * gauss.sample(rng);
                labels.push(0.0);
            }
            for j in 0..n_inner {
                let t = arc(j, n_inner);
                features[[n_outer + j, 0]] = 1.0 - t.cos() + noise * gauss.sample(rng);
                features[[n_outer + j, 1]] = 0.5 - t.sin() + noise * gauss.sample(rng);
                labels.push(1.0);
            }
            Dataset {
                features,
                targets: Targets::Binary(labels),
                feature_names: vec!["x1".into(), "x2".into()],
            }
        }
        SynthKind::SineRegression => {
            let mut features = Array2::zeros((n, 1));
            let mut values = Vec::with_capacity(n);
            for i in 0..n {
                let x: f64 = rng.random_range(-2.0..2.0);
                features[[i, 0]] = x;
                values.push((3.0 * x).sin() + noise * gauss.sample(rng));
            }
            Dataset {
                features,
                targets: Targets::Regression(values),
                feature_names: vec!["x".into()],
            }
        }
    }
}
