//! Random forests and extremely randomized trees.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::learners::tree::{fit_tree_on_rows, DecisionTree, MaxFeatures, SplitStyle, TreeConfig};
use crate::learners::{check_training_input, Classifier};
use crate::matrix::Matrix;
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeConfig,
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestConfig {
    /// Bootstrap resamples, `floor(sqrt(d))` candidate features, exhaustive thresholds.
    pub fn random_forest(n_trees: usize, seed: u64) -> Self {
        Self {
            n_trees,
            tree: TreeConfig {
                max_features: MaxFeatures::Sqrt,
                ..TreeConfig::default()
            },
            bootstrap: true,
            seed,
        }
    }

    /// Full sample per tree, `floor(sqrt(d))` candidate features, random thresholds.
    pub fn extra_trees(n_trees: usize, seed: u64) -> Self {
        Self {
            n_trees,
            tree: TreeConfig {
                max_features: MaxFeatures::Sqrt,
                split_style: SplitStyle::RandomThreshold,
                ..TreeConfig::default()
            },
            bootstrap: false,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub(crate) n_features: usize,
    pub(crate) n_classes: usize,
    pub(crate) trees: Vec<DecisionTree>,
}

impl Forest {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}

impl Classifier for Forest {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features_in(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        x.expect_cols("forest input columns", self.n_features)?;
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        let scale = 1.0 / self.trees.len() as f64;
        for i in 0..x.rows() {
            let row = x.row(i);
            let acc = out.row_mut(i);
            for t in &self.trees {
                for (a, p) in acc.iter_mut().zip(t.leaf_distribution(row)) {
                    *a += p;
                }
            }
            acc.iter_mut().for_each(|a| *a *= scale);
        }
        Ok(out)
    }
}

/// Fits `config.n_trees` trees. Tree `t` draws from its own seed stream, so
/// the result does not depend on the order trees are built in.
pub fn fit_forest(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    config: &ForestConfig,
) -> Result<Forest> {
    check_training_input(x, y, n_classes)?;
    if config.n_trees == 0 {
        return Err(Error::InvalidConfig("forest needs at least one tree".into()));
    }
    let n = x.rows();
    let columns = x.to_column_major();
    let mut trees = Vec::with_capacity(config.n_trees);
    for t in 0..config.n_trees {
        let mut rng = seed::stream_rng(config.seed, stream::TREE, t as u64);
        let rows: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        trees.push(fit_tree_on_rows(
            &columns,
            n,
            x.cols(),
            y,
            n_classes,
            rows,
            &config.tree,
            &mut rng,
        )?);
    }
    Ok(Forest {
        n_features: x.cols(),
        n_classes,
        trees,
    })
}

pub fn fit_random_forest(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    n_trees: usize,
    seed: u64,
) -> Result<Forest> {
    fit_forest(x, y, n_classes, &ForestConfig::random_forest(n_trees, seed))
}

pub fn fit_extra_trees(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    n_trees: usize,
    seed: u64,
) -> Result<Forest> {
    fit_forest(x, y, n_classes, &ForestConfig::extra_trees(n_trees, seed))
}
