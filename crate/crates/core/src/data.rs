//! Labelled datasets, label encoding and stratified partitioning.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Feature matrix plus integer class ids.
///
/// Every label lies in `0..n_classes()` and every class occurs at least once.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    class_names: Vec<String>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "label count",
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if feature_names.len() != features.cols() {
            return Err(Error::DimensionMismatch {
                what: "feature name count",
                expected: features.cols(),
                actual: feature_names.len(),
            });
        }
        features.check_finite()?;
        let n_classes = class_names.len();
        let mut seen = alloc::vec![false; n_classes];
        for (row, &label) in labels.iter().enumerate() {
            if label >= n_classes {
                return Err(Error::InvalidLabel {
                    row,
                    label,
                    n_classes,
                });
            }
            seen[label] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::MissingClass(c));
        }
        Ok(Self {
            features,
            labels,
            class_names,
            feature_names,
        })
    }

    /// Builds a dataset from raw string labels, naming features `f0..f{d-1}`.
    pub fn from_raw_labels<S: AsRef<str>>(features: Matrix, raw_labels: &[S]) -> Result<Self> {
        let (labels, class_names) = encode_labels(raw_labels);
        let names = synthetic_feature_names(features.cols());
        Self::new(features, labels, class_names, names)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Rows `idx`, keeping the class and feature naming of `self`.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.features.select_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
            self.class_names.clone(),
            self.feature_names.clone(),
        )
    }

    /// Row indices of every class, in original order.
    pub fn rows_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.n_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

pub fn synthetic_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}

/// Maps raw labels to ids in lexicographic order of the distinct strings.
pub fn encode_labels<S: AsRef<str>>(raw_labels: &[S]) -> (Vec<usize>, Vec<String>) {
    let mut index: BTreeMap<&str, usize> = raw_labels.iter().map(|s| (s.as_ref(), 0)).collect();
    for (i, v) in index.values_mut().enumerate() {
        *v = i;
    }
    let ids = raw_labels.iter().map(|s| index[s.as_ref()]).collect();
    let names = index.keys().map(|s| s.to_string()).collect();
    (ids, names)
}

/// Per-class sample counts, ordered like `class_names`.
pub fn class_proportions(ds: &Dataset) -> Vec<usize> {
    let mut counts = alloc::vec![0; ds.n_classes()];
    for &l in ds.labels() {
        counts[l] += 1;
    }
    counts
}

/// Train / holdout partition of a source dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: Dataset,
    pub holdout: Dataset,
    /// Source row indices of each part, ascending.
    pub train_rows: Vec<usize>,
    pub holdout_rows: Vec<usize>,
    pub seed: u64,
    pub fraction: f64,
}

fn check_fraction(f: f64) -> Result<()> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "holdout fraction must lie in (0, 1), got {f}"
        )));
    }
    Ok(())
}

/// Number of rows of a class of size `n` that go to the holdout side.
fn holdout_count(n: usize, fraction: f64) -> usize {
    let h = libm::round(n as f64 * fraction) as usize;
    h.clamp(1, n - 1)
}

/// Stratified split: each class sends `round(n_c * fraction)` rows to the
/// holdout part (at least one row to each side).
pub fn stratified_split(ds: &Dataset, holdout_fraction: f64, seed: u64) -> Result<SplitPair> {
    check_fraction(holdout_fraction)?;
    let by_class = ds.rows_by_class();
    for (class, rows) in by_class.iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::TooFewPerClass {
                class,
                count: rows.len(),
                needed: 2,
            });
        }
    }
    let mut rng = seed::rng(seed);
    let mut in_holdout = alloc::vec![false; ds.n_samples()];
    for mut rows in by_class {
        rows.shuffle(&mut rng);
        let h = holdout_count(rows.len(), holdout_fraction);
        for &r in &rows[..h] {
            in_holdout[r] = true;
        }
    }
    assemble(ds, &in_holdout, seed, holdout_fraction)
}

/// Unstratified split. Fails if either side would miss a class.
pub fn random_split(ds: &Dataset, holdout_fraction: f64, seed: u64) -> Result<SplitPair> {
    check_fraction(holdout_fraction)?;
    let n = ds.n_samples();
    if n < 2 {
        return Err(Error::Empty("random split needs at least two rows"));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut seed::rng(seed));
    let h = holdout_count(n, holdout_fraction);
    let mut in_holdout = alloc::vec![false; n];
    for &r in &rows[..h] {
        in_holdout[r] = true;
    }
    assemble(ds, &in_holdout, seed, holdout_fraction)
}

fn assemble(ds: &Dataset, in_holdout: &[bool], seed: u64, fraction: f64) -> Result<SplitPair> {
    let (holdout_rows, train_rows): (Vec<usize>, Vec<usize>) =
        (0..ds.n_samples()).partition(|&i| in_holdout[i]);
    Ok(SplitPair {
        train: ds.subset(&train_rows)?,
        holdout: ds.subset(&holdout_rows)?,
        train_rows,
        holdout_rows,
        seed,
        fraction,
    })
}

/// Stratified row cap. Each class keeps roughly its share of `max_rows`, and
/// never fewer than `min(n_c, 2)` rows so the result stays splittable.
pub fn stratified_subsample(ds: &Dataset, max_rows: usize, seed: u64) -> Result<Dataset> {
    let n = ds.n_samples();
    if max_rows >= n {
        return Ok(ds.clone());
    }
    if max_rows == 0 {
        return Err(Error::Empty("row cap of zero"));
    }
    let mut rng = seed::rng(seed);
    let mut keep = Vec::with_capacity(max_rows);
    for mut rows in ds.rows_by_class() {
        let share = libm::round(rows.len() as f64 * max_rows as f64 / n as f64) as usize;
        let take = share.max(rows.len().min(2)).min(rows.len());
        rows.shuffle(&mut rng);
        keep.extend_from_slice(&rows[..take]);
    }
    keep.sort_unstable();
    ds.subset(&keep)
}

/// Assigns every row to one of `folds` folds, stratified by class.
///
/// Rows of each class are shuffled then dealt round-robin, so fold sizes per
/// class differ by at most one.
pub fn stratified_folds(
    labels: &[usize],
    n_classes: usize,
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!(
            "k-fold needs at least 2 folds, got {folds}"
        )));
    }
    let mut by_class = alloc::vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = seed::rng(seed);
    let mut assignment = alloc::vec![0; labels.len()];
    for (class, mut rows) in by_class.into_iter().enumerate() {
        if rows.len() < folds {
            return Err(Error::TooFewPerClass {
                class,
                count: rows.len(),
                needed: folds,
            });
        }
        rows.shuffle(&mut rng);
        // start each class at a different fold so small classes don't all pile into fold 0
        for (k, r) in rows.into_iter().enumerate() {
            assignment[r] = (k + class) % folds;
        }
    }
    Ok(assignment)
}
