//! Tabular dataset ingestion: CSV loading against a small schema registry,
//! mean imputation, and a seeded train/test split with training-set
//! standardization.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AlimeError, Result};

/// Default held-out fraction (70-30 split).
pub const DEFAULT_TEST_FRACTION: f64 = 0.30;

const MIN_ROWS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    BreastCancer,
    Hepatitis,
    Liver,
}

impl Schema {
    pub const ALL: [Schema; 3] = [Schema::BreastCancer, Schema::Hepatitis, Schema::Liver];

    pub fn name(self) -> &'static str {
        match self {
            Schema::BreastCancer => "breast_cancer",
            Schema::Hepatitis => "hepatitis",
            Schema::Liver => "liver",
        }
    }

    pub fn registry(self) -> &'static SchemaSpec {
        match self {
            Schema::BreastCancer => &BREAST_CANCER,
            Schema::Hepatitis => &HEPATITIS,
            Schema::Liver => &LIVER,
        }
    }

    /// Number of predictors after dropping id and label columns.
    pub fn n_features(self) -> usize {
        self.registry()
            .columns
            .iter()
            .filter(|(_, role)| role.is_feature())
            .count()
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Schema {
    type Err = AlimeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "breast_cancer" => Ok(Schema::BreastCancer),
            "hepatitis" => Ok(Schema::Hepatitis),
            "liver" => Ok(Schema::Liver),
            other => Err(AlimeError::config(format!(
                "unknown dataset schema `{other}` (expected breast_cancer, hepatitis or liver)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum ColumnRole {
    Id,
    Feature,
    /// Text-coded feature; each accepted token maps to a numeric code.
    Coded(&'static [(&'static str, f64)]),
    Label,
}

impl ColumnRole {
    fn is_feature(&self) -> bool {
        matches!(self, ColumnRole::Feature | ColumnRole::Coded(_))
    }
}

#[derive(Debug)]
pub struct SchemaSpec {
    pub columns: &'static [(&'static str, ColumnRole)],
    /// Raw label token encoded as class 1.
    pub positive_label: &'static str,
    /// Raw label token encoded as class 0.
    pub negative_label: &'static str,
}

// Original UCI layout: sample code number, nine cytology scores, class (2 benign, 4 malignant).
static BREAST_CANCER: SchemaSpec = SchemaSpec {
    columns: &[
        ("id", ColumnRole::Id),
        ("clump_thickness", ColumnRole::Feature),
        ("cell_size_uniformity", ColumnRole::Feature),
        ("cell_shape_uniformity", ColumnRole::Feature),
        ("marginal_adhesion", ColumnRole::Feature),
        ("single_epithelial_cell_size", ColumnRole::Feature),
        ("bare_nuclei", ColumnRole::Feature),
        ("bland_chromatin", ColumnRole::Feature),
        ("normal_nucleoli", ColumnRole::Feature),
        ("mitoses", ColumnRole::Feature),
        ("class", ColumnRole::Label),
    ],
    positive_label: "4",
    negative_label: "2",
};

// Class first (1 die, 2 live); the died class is the positive one.
static HEPATITIS: SchemaSpec = SchemaSpec {
    columns: &[
        ("class", ColumnRole::Label),
        ("age", ColumnRole::Feature),
        ("sex", ColumnRole::Feature),
        ("steroid", ColumnRole::Feature),
        ("antivirals", ColumnRole::Feature),
        ("fatigue", ColumnRole::Feature),
        ("malaise", ColumnRole::Feature),
        ("anorexia", ColumnRole::Feature),
        ("liver_big", ColumnRole::Feature),
        ("liver_firm", ColumnRole::Feature),
        ("spleen_palpable", ColumnRole::Feature),
        ("spiders", ColumnRole::Feature),
        ("ascites", ColumnRole::Feature),
        ("varices", ColumnRole::Feature),
        ("bilirubin", ColumnRole::Feature),
        ("alk_phosphate", ColumnRole::Feature),
        ("sgot", ColumnRole::Feature),
        ("albumin", ColumnRole::Feature),
        ("protime", ColumnRole::Feature),
        ("histology", ColumnRole::Feature),
    ],
    positive_label: "1",
    negative_label: "2",
};

// Indian Liver Patient Dataset; selector 1 marks a liver patient.
static LIVER: SchemaSpec = SchemaSpec {
    columns: &[
        ("age", ColumnRole::Feature),
        (
            "gender",
            ColumnRole::Coded(&[("male", 1.0), ("female", 0.0)]),
        ),
        ("total_bilirubin", ColumnRole::Feature),
        ("direct_bilirubin", ColumnRole::Feature),
        ("alkaline_phosphotase", ColumnRole::Feature),
        ("alamine_aminotransferase", ColumnRole::Feature),
        ("aspartate_aminotransferase", ColumnRole::Feature),
        ("total_proteins", ColumnRole::Feature),
        ("albumin", ColumnRole::Feature),
        ("albumin_globulin_ratio", ColumnRole::Feature),
        ("selector", ColumnRole::Label),
    ],
    positive_label: "1",
    negative_label: "2",
};

/// Dataset as read from disk: numeric cells with explicit gaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub name: Schema,
    pub rows: Vec<Vec<Option<f64>>>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
}

impl RawDataset {
    pub fn new(
        name: Schema,
        rows: Vec<Vec<Option<f64>>>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let k = feature_names.len();
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(AlimeError::MalformedInput {
                line: i + 1,
                message: format!("expected {k} feature cells, found {}", row.len()),
            });
        }
        if labels.len() != rows.len() {
            return Err(AlimeError::Shape {
                expected: rows.len(),
                actual: labels.len(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(AlimeError::config("labels must be 0 or 1"));
        }
        let positives = labels.iter().filter(|&&l| l == 1).count();
        let negatives = labels.len() - positives;
        if positives < 2 || negatives < 2 {
            return Err(AlimeError::InsufficientData(format!(
                "need at least 2 rows per class, found {negatives} negative and {positives} positive"
            )));
        }
        Ok(RawDataset {
            name,
            rows,
            labels,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_missing(&self) -> usize {
        self.rows.iter().flatten().filter(|c| c.is_none()).count()
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "?"
}

fn labels_match(cell: &str, token: &str) -> bool {
    if cell.eq_ignore_ascii_case(token) {
        return true;
    }
    match (cell.parse::<f64>(), token.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Parses CSV text against a schema. `load_csv` is the file-based entry point.
pub fn parse_csv(text: &str, schema: Schema) -> Result<RawDataset> {
    let spec = schema.registry();
    let n_cols = spec.columns.len();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| AlimeError::MalformedInput {
            line: e.position().map(|p| p.line() as usize).unwrap_or(line),
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && record.iter().all(|c| !c.is_empty() && c.parse::<f64>().is_err()) {
            // header row
            continue;
        }
        if record.len() != n_cols {
            return Err(AlimeError::MalformedInput {
                line,
                message: format!("expected {n_cols} columns, found {}", record.len()),
            });
        }

        let mut row = Vec::with_capacity(n_cols);
        let mut label = None;
        for (cell, (col_name, role)) in record.iter().zip(spec.columns) {
            match role {
                ColumnRole::Id => {}
                ColumnRole::Label => {
                    label = if labels_match(cell, spec.positive_label) {
                        Some(1u8)
                    } else if labels_match(cell, spec.negative_label) {
                        Some(0u8)
                    } else {
                        return Err(AlimeError::MalformedInput {
                            line,
                            message: format!("unrecognized label `{cell}` in column `{col_name}`"),
                        });
                    };
                }
                ColumnRole::Feature if is_missing(cell) => row.push(None),
                ColumnRole::Feature => {
                    let v = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        AlimeError::MalformedInput {
                            line,
                            message: format!("non-numeric cell `{cell}` in column `{col_name}`"),
                        }
                    })?;
                    row.push(Some(v));
                }
                ColumnRole::Coded(_) if is_missing(cell) => row.push(None),
                ColumnRole::Coded(codes) => {
                    let code = codes
                        .iter()
                        .find(|(token, _)| token.eq_ignore_ascii_case(cell))
                        .map(|&(_, v)| v)
                        .ok_or_else(|| AlimeError::MalformedInput {
                            line,
                            message: format!("unknown category `{cell}` in column `{col_name}`"),
                        })?;
                    row.push(Some(code));
                }
            }
        }
        rows.push(row);
        // every schema has exactly one label column
        labels.push(label.expect("schema without label column"));
    }

    let feature_names = spec
        .columns
        .iter()
        .filter(|(_, role)| role.is_feature())
        .map(|(name, _)| name.to_string())
        .collect();
    RawDataset::new(schema, rows, labels, feature_names)
}

pub fn load_csv(path: impl AsRef<Path>, schema: Schema) -> Result<RawDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AlimeError::io(path, e))?;
    parse_csv(&text, schema)
}

/// Replaces every absent cell with its column's mean over present cells.
pub fn impute_missing(raw: &RawDataset) -> Result<RawDataset> {
    let k = raw.n_features();
    let mut means = Vec::with_capacity(k);
    for j in 0..k {
        let (sum, count) = raw
            .rows
            .iter()
            .filter_map(|r| r[j])
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if count == 0 {
            return Err(AlimeError::DegenerateColumn(raw.feature_names[j].clone()));
        }
        means.push(sum / count as f64);
    }
    let rows = raw
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&means)
                .map(|(c, &m)| Some(c.unwrap_or(m)))
                .collect()
        })
        .collect();
    Ok(RawDataset {
        name: raw.name,
        rows,
        labels: raw.labels.clone(),
        feature_names: raw.feature_names.clone(),
    })
}

/// Standardized feature matrix with a fixed train/test partition.
///
/// Rows of `features` are in the original file order; `train_idx` and
/// `test_idx` are sorted ascending. `means`/`stds` are in original units and
/// were estimated on training rows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    pub name: Schema,
    pub feature_names: Vec<String>,
    pub features: DMatrix<f64>,
    pub labels: Vec<u8>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub split_seed: u64,
}

impl TabularDataset {
    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    fn select_rows(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), self.n_features(), |r, c| self.features[(idx[r], c)])
    }

    pub fn train_features(&self) -> DMatrix<f64> {
        self.select_rows(&self.train_idx)
    }

    pub fn test_features(&self) -> DMatrix<f64> {
        self.select_rows(&self.test_idx)
    }

    pub fn train_labels(&self) -> Vec<u8> {
        self.train_idx.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn test_labels(&self) -> Vec<u8> {
        self.test_idx.iter().map(|&i| self.labels[i]).collect()
    }

    /// Maps a row from original units into the standardized space.
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Seeded uniform shuffle into train/test, then z-scores every column with
/// statistics (sample std, divisor N-1) from training rows.
pub fn standardize_and_split(
    raw: &RawDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<TabularDataset> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(AlimeError::config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = raw.n_rows();
    if n < MIN_ROWS {
        return Err(AlimeError::InsufficientData(format!(
            "{n} rows, need at least {MIN_ROWS}"
        )));
    }
    let k = raw.n_features();
    let mut values = DMatrix::<f64>::zeros(n, k);
    for (i, row) in raw.rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            values[(i, j)] = cell.ok_or_else(|| {
                AlimeError::config(format!(
                    "row {} column `{}` is missing; impute before splitting",
                    i + 1,
                    raw.feature_names[j]
                ))
            })?;
        }
    }

    let n_test = (n as f64 * test_fraction).floor() as usize;
    let n_train = n - n_test;
    if n_test == 0 || n_train < 2 {
        return Err(AlimeError::InsufficientData(format!(
            "split of {n} rows at fraction {test_fraction} leaves {n_train} train / {n_test} test"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let mut means = vec![0.0; k];
    let mut stds = vec![1.0; k];
    let mut constant = vec![false; k];
    for j in 0..k {
        let mean = train_idx.iter().map(|&i| values[(i, j)]).sum::<f64>() / n_train as f64;
        let var = train_idx
            .iter()
            .map(|&i| (values[(i, j)] - mean).powi(2))
            .sum::<f64>()
            / (n_train - 1) as f64;
        let std = var.sqrt();
        means[j] = mean;
        if std > 1e-12 * mean.abs().max(1.0) {
            stds[j] = std;
        } else {
            constant[j] = true;
        }
    }

    let mut features = values;
    for j in 0..k {
        for i in 0..n {
            features[(i, j)] = (features[(i, j)] - means[j]) / stds[j];
        }
        if constant[j] {
            for &i in &train_idx {
                features[(i, j)] = 0.0;
            }
        }
    }

    Ok(TabularDataset {
        name: raw.name,
        feature_names: raw.feature_names.clone(),
        features,
        labels: raw.labels.clone(),
        means,
        stds,
        train_idx,
        test_idx,
        split_seed: seed,
    })
}

/// Load, impute and split in one step.
pub fn prepare(path: impl AsRef<Path>, schema: Schema, test_fraction: f64, seed: u64) -> Result<TabularDataset> {
    let raw = load_csv(path, schema)?;
    standardize_and_split(&impute_missing(&raw)?, test_fraction, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_raw(rows: Vec<Vec<Option<f64>>>) -> RawDataset {
        let n = rows.len();
        let k = rows[0].len();
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        let names = (0..k).map(|j| format!("f{j}")).collect();
        RawDataset::new(Schema::Liver, rows, labels, names).unwrap()
    }

    fn synthetic_rows(n: usize) -> Vec<Vec<Option<f64>>> {
        (0..n)
            .map(|i| vec![Some(i as f64), Some((i * i % 7) as f64), Some(3.5)])
            .collect()
    }

    #[test]
    fn breast_cancer_rows_parse() {
        let text = "1000025,5,1,1,1,2,1,3,1,1,2\n1002945,5,4,4,5,7,10,3,2,1,2\n\
                    1057013,8,4,5,1,2,?,7,3,1,4\n1016277,6,8,8,1,3,4,3,7,1,4\n";
        let raw = parse_csv(text, Schema::BreastCancer).unwrap();
        assert_eq!(raw.n_rows(), 4);
        assert_eq!(raw.n_features(), 9);
        assert_eq!(raw.labels, vec![0, 0, 1, 1]);
        assert_eq!(raw.rows[2][5], None);
        assert_eq!(raw.rows[0][0], Some(5.0));
        assert_eq!(raw.n_missing(), 1);
    }

    #[test]
    fn liver_header_and_gender_codes() {
        let text = "Age,Gender,TB,DB,Alkphos,Sgpt,Sgot,TP,ALB,A/G Ratio,Selector\n\
                    65,Female,0.7,0.1,187,16,18,6.8,3.3,0.9,1\n\
                    62,Male,10.9,5.5,699,64,100,7.5,3.2,0.74,1\n\
                    58,Male,1,0.4,182,14,20,6.8,3.4,,2\n\
                    72,Male,3.9,2,195,27,59,7.3,2.4,0.4,2\n";
        let raw = parse_csv(text, Schema::Liver).unwrap();
        assert_eq!(raw.n_rows(), 4);
        assert_eq!(raw.n_features(), 10);
        assert_eq!(raw.rows[0][1], Some(0.0));
        assert_eq!(raw.rows[1][1], Some(1.0));
        assert_eq!(raw.rows[2][9], None);
        assert_eq!(raw.labels, vec![1, 1, 0, 0]);
    }

    #[test]
    fn non_numeric_cell_names_line() {
        let text = "1000025,5,1,1,1,2,1,3,1,1,2\n1002945,5,4,abc,5,7,10,3,2,1,2\n";
        match parse_csv(text, Schema::BreastCancer) {
            Err(AlimeError::MalformedInput { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("abc"));
            }
            other => panic!("expected malformed input, got {other:?}"),
        }
    }

    #[test]
    fn wrong_column_count_is_malformed() {
        let text = "1000025,5,1,1,1,2,1,3,1,1,2\n1,2,3\n";
        assert!(matches!(
            parse_csv(text, Schema::BreastCancer),
            Err(AlimeError::MalformedInput { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_schema_is_config_error() {
        assert!(matches!("diabetes".parse::<Schema>(), Err(AlimeError::Config(_))));
        assert_eq!("breast-cancer".parse::<Schema>().unwrap(), Schema::BreastCancer);
    }

    #[test]
    fn registry_feature_counts() {
        assert_eq!(Schema::BreastCancer.n_features(), 9);
        assert_eq!(Schema::Hepatitis.n_features(), 19);
        assert_eq!(Schema::Liver.n_features(), 10);
    }

    #[test]
    fn class_minimum_enforced() {
        let rows = vec![vec![Some(1.0)]; 4];
        let err = RawDataset::new(Schema::Liver, rows, vec![0, 0, 0, 1], vec!["a".into()]);
        assert!(matches!(err, Err(AlimeError::InsufficientData(_))));
    }

    #[test]
    fn impute_uses_present_mean() {
        let raw = toy_raw(vec![
            vec![Some(1.0), Some(0.0)],
            vec![None, Some(0.0)],
            vec![Some(3.0), Some(0.0)],
            vec![Some(2.0), Some(0.0)],
        ]);
        let out = impute_missing(&raw).unwrap();
        assert_eq!(out.rows[1][0], Some(2.0));
        assert_eq!(out.n_missing(), 0);

        let complete = toy_raw(synthetic_rows(6));
        assert_eq!(impute_missing(&complete).unwrap(), complete);
    }

    #[test]
    fn impute_rejects_empty_column() {
        let raw = toy_raw(vec![vec![Some(1.0), None]; 4]);
        assert!(matches!(impute_missing(&raw), Err(AlimeError::DegenerateColumn(c)) if c == "f1"));
    }

    #[test]
    fn split_sizes_follow_floor() {
        let raw = toy_raw(synthetic_rows(699));
        let data = standardize_and_split(&raw, 0.30, 3).unwrap();
        assert_eq!(data.train_idx.len(), 490);
        assert_eq!(data.test_idx.len(), 209);
        let mut all: Vec<usize> = data.train_idx.iter().chain(&data.test_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..699).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_deterministic() {
        let raw = toy_raw(synthetic_rows(50));
        let a = standardize_and_split(&raw, 0.3, 11).unwrap();
        let b = standardize_and_split(&raw, 0.3, 11).unwrap();
        assert_eq!(a, b);
        let c = standardize_and_split(&raw, 0.3, 12).unwrap();
        assert_ne!(a.train_idx, c.train_idx);
    }

    #[test]
    fn constant_column_becomes_zero() {
        let raw = toy_raw(synthetic_rows(30));
        let data = standardize_and_split(&raw, 0.3, 1).unwrap();
        assert_eq!(data.stds[2], 1.0);
        assert!(data.train_idx.iter().all(|&i| data.features[(i, 2)] == 0.0));
    }

    #[test]
    fn training_columns_are_z_scored() {
        let raw = toy_raw(synthetic_rows(40));
        let data = standardize_and_split(&raw, 0.3, 5).unwrap();
        let train = data.train_features();
        let n = train.nrows() as f64;
        for j in 0..2 {
            let col = train.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_rows() {
        let raw = toy_raw(synthetic_rows(9));
        assert!(matches!(
            standardize_and_split(&raw, 0.3, 0),
            Err(AlimeError::InsufficientData(_))
        ));
    }
}
