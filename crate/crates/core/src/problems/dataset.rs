//! Sparse binary-classification data: LIBSVM text ingestion and a synthetic
//! generator with a sparse ground truth.

use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CostaError, Result};

/// A feature row with sorted, 0-based indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn from_dense(v: &[f64]) -> Self {
        let mut r = Self::default();
        for (i, &x) in v.iter().enumerate() {
            if x != 0.0 {
                r.indices.push(i);
                r.values.push(x);
            }
        }
        r
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| v * x[i]).sum()
    }

    /// `out += alpha · a`
    pub fn axpy(&self, alpha: f64, out: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] += alpha * v;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// How raw labels map to `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "value")]
pub enum LabelRule {
    /// `+1` when the raw label is positive.
    Sign,
    /// `+1` when the raw label equals the value (one-vs-rest).
    Equals(f64),
}

impl LabelRule {
    pub fn apply(&self, raw: f64) -> f64 {
        let pos = match *self {
            LabelRule::Sign => raw > 0.0,
            LabelRule::Equals(v) => raw == v,
        };
        if pos {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<SparseRow>,
    /// `±1`
    pub labels: Vec<f64>,
    pub n_features: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    /// All rows in the training split, none in test.
    pub fn new(rows: Vec<SparseRow>, labels: Vec<f64>, n_features: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(CostaError::InvalidInput("dataset is empty".into()));
        }
        if rows.len() != labels.len() {
            return Err(CostaError::DimensionMismatch { expected: rows.len(), got: labels.len() });
        }
        if labels.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(CostaError::InvalidInput("labels must be +1 or -1".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.indices.last().is_some_and(|&i| i >= n_features)) {
            return Err(CostaError::InvalidInput(format!(
                "feature index {} out of range for {n_features} features",
                r.indices.last().unwrap() + 1
            )));
        }
        let train = (0..rows.len()).collect();
        Ok(Self { rows, labels, n_features, train, test: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Random split with `test_fraction` of the rows held out.
    pub fn split(mut self, test_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(CostaError::InvalidConfig(format!("test fraction must lie in [0, 1), got {test_fraction}")));
        }
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (test_fraction * idx.len() as f64).round() as usize;
        self.test = idx[..n_test].to_vec();
        self.train = idx[n_test..].to_vec();
        self.train.sort_unstable();
        self.test.sort_unstable();
        if self.train.is_empty() {
            return Err(CostaError::InvalidConfig("split leaves no training rows".into()));
        }
        Ok(self)
    }

    /// Appends `other`'s rows as the test split.
    pub fn with_test_set(mut self, other: Dataset) -> Result<Self> {
        let offset = self.rows.len();
        let n = self.n_features.max(other.n_features);
        self.n_features = n;
        self.test = (offset..offset + other.rows.len()).collect();
        self.rows.extend(other.rows);
        self.labels.extend(other.labels);
        Ok(self)
    }

    /// Scales every feature column by its largest absolute value.
    pub fn normalize_max_abs(&mut self) {
        let mut scale = vec![0.0f64; self.n_features];
        for r in &self.rows {
            for (&i, &v) in r.indices.iter().zip(&r.values) {
                scale[i] = scale[i].max(v.abs());
            }
        }
        for r in &mut self.rows {
            for (&i, v) in r.indices.iter().zip(r.values.iter_mut()) {
                *v /= scale[i];
            }
        }
    }
}

/// Parses LIBSVM text: `label idx:val idx:val …` with 1-based indices.
/// Blank lines and `#` comments are skipped. `n_features` fixes the width;
/// otherwise the largest index seen is used.
pub fn parse_libsvm<R: BufRead>(reader: R, rule: LabelRule, n_features: Option<usize>) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let bad = |msg: String| CostaError::Parse { line: lineno + 1, msg };
        let mut parts = content.split_whitespace();
        let raw: f64 = parts
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|_| bad("label is not a number".into()))?;
        let mut pairs: Vec<(usize, f64)> = Vec::new();
        for tok in parts {
            let (i, v) = tok.split_once(':').ok_or_else(|| bad(format!("expected index:value, got {tok:?}")))?;
            let i: usize = i.parse().map_err(|_| bad(format!("bad feature index {i:?}")))?;
            if i == 0 {
                return Err(bad("feature indices are 1-based".into()));
            }
            let v: f64 = v.parse().map_err(|_| bad(format!("bad feature value {v:?}")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite feature value {v}")));
            }
            pairs.push((i - 1, v));
        }
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(bad("duplicate feature index".into()));
        }
        if let Some(&(i, _)) = pairs.last() {
            width = width.max(i + 1);
        }
        let row = SparseRow {
            indices: pairs.iter().map(|p| p.0).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
        };
        rows.push(SparseRow::from_pairs_dropping_zeros(row));
        labels.push(rule.apply(raw));
    }
    let n = match n_features {
        Some(n) if n < width => {
            return Err(CostaError::InvalidInput(format!("data has {width} features, more than the declared {n}")))
        }
        Some(n) => n,
        None => width,
    };
    Dataset::new(rows, labels, n)
}

impl SparseRow {
    fn from_pairs_dropping_zeros(row: SparseRow) -> SparseRow {
        let keep: Vec<usize> = (0..row.values.len()).filter(|&k| row.values[k] != 0.0).collect();
        SparseRow {
            indices: keep.iter().map(|&k| row.indices[k]).collect(),
            values: keep.iter().map(|&k| row.values[k]).collect(),
        }
    }
}

pub fn load_libsvm(path: &Path, rule: LabelRule, n_features: Option<usize>) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| CostaError::Io(format!("{}: {e}", path.display())))?;
    parse_libsvm(std::io::BufReader::new(f), rule, n_features)
}

/// Parameters of [`synthetic_classification`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub features: usize,
    /// Nonzeros in the ground-truth weight vector.
    pub informative: usize,
    /// Fraction of nonzero entries per feature row.
    pub density: f64,
    /// Probability of flipping each label.
    pub label_noise: f64,
}

/// Rows with `density`-sparse Gaussian entries, labels `sign(⟨a, w*⟩)` with
/// `w*` supported on `informative` coordinates, flipped with probability
/// `label_noise`. Returns the data and `w*`.
pub fn synthetic_classification(spec: &SyntheticSpec, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    if spec.samples == 0 || spec.features == 0 || spec.informative == 0 || spec.informative > spec.features {
        return Err(CostaError::InvalidConfig(format!("invalid synthetic dataset spec {spec:?}")));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) || !(0.0..0.5).contains(&spec.label_noise) {
        return Err(CostaError::InvalidConfig("density must be in (0, 1] and label noise in [0, 0.5)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support: Vec<usize> = (0..spec.features).collect();
    support.shuffle(&mut rng);
    let mut truth = vec![0.0; spec.features];
    for &i in &support[..spec.informative] {
        let s: f64 = StandardNormal.sample(&mut rng);
        truth[i] = s.signum() * (1.0 + s.abs());
    }
    let mut rows = Vec::with_capacity(spec.samples);
    let mut labels = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let mut dense = vec![0.0; spec.features];
        for v in dense.iter_mut() {
            if rng.random::<f64>() < spec.density {
                *v = StandardNormal.sample(&mut rng);
            }
        }
        let row = SparseRow::from_dense(&dense);
        let margin = row.dot(&truth);
        let mut b = if margin >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < spec.label_noise {
            b = -b;
        }
        rows.push(row);
        labels.push(b);
    }
    Ok((Dataset::new(rows, labels, spec.features)?, truth))
}
