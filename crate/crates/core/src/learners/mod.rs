//! Base learners behind one classifier contract.
//!
//! Every learner produces class-probability rows that lie on the simplex.
//! `predict` is the row-wise argmax with ties going to the lowest class id.

pub mod forest;
pub mod gbdt;
pub mod softmax;
pub mod tree;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::math::argmax;
use crate::matrix::Matrix;
use crate::seed;

pub use forest::{fit_extra_trees, fit_forest, fit_random_forest, Forest, ForestConfig};
pub use gbdt::{fit_gbdt, fit_gbdt_traced, Gbdt, GbdtConfig};
pub use softmax::{fit_softmax_regression, SoftmaxConfig, SoftmaxRegression};
pub use tree::{fit_tree, gini, DecisionTree, MaxFeatures, SplitStyle, TreeConfig};

pub trait Classifier {
    fn n_classes(&self) -> usize;
    fn n_features_in(&self) -> usize;
    /// `[rows x n_classes]` probabilities. Rejects inputs whose width is not `n_features_in`.
    fn predict_proba(&self, x: &Matrix) -> Result<Matrix>;

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(p.iter_rows().map(argmax).collect())
    }
}

pub(crate) fn check_training_input(x: &Matrix, y: &[usize], n_classes: usize) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::Empty("training rows"));
    }
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "label count",
            expected: x.rows(),
            actual: y.len(),
        });
    }
    if let Some((row, &label)) = y.iter().enumerate().find(|(_, &l)| l >= n_classes) {
        return Err(Error::InvalidLabel {
            row,
            label,
            n_classes,
        });
    }
    Ok(())
}

/// Learner kind plus hyperparameters; the seed is supplied at fit time.
///
/// Text form: `random-forest-<trees>`, `extra-trees-<trees>`,
/// `gbdt-<rounds>[-lr<rate>][-d<depth>]`, `tree[-d<depth>]`,
/// `softmax[-e<epochs>][-s<step>]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerSpec {
    DecisionTree { max_depth: Option<usize> },
    RandomForest { n_trees: usize },
    ExtraTrees { n_trees: usize },
    Gbdt(GbdtConfig),
    Softmax(SoftmaxConfig),
}

impl LearnerSpec {
    pub fn gbdt(n_rounds: usize) -> Self {
        LearnerSpec::Gbdt(GbdtConfig {
            n_rounds,
            ..GbdtConfig::default()
        })
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerSpec::DecisionTree { max_depth: None } => write!(f, "tree"),
            LearnerSpec::DecisionTree { max_depth: Some(d) } => write!(f, "tree-d{d}"),
            LearnerSpec::RandomForest { n_trees } => write!(f, "random-forest-{n_trees}"),
            LearnerSpec::ExtraTrees { n_trees } => write!(f, "extra-trees-{n_trees}"),
            LearnerSpec::Gbdt(c) => {
                write!(f, "gbdt-{}", c.n_rounds)?;
                let d = GbdtConfig::default();
                if c.learning_rate != d.learning_rate {
                    write!(f, "-lr{}", c.learning_rate)?;
                }
                if c.max_depth != d.max_depth {
                    write!(f, "-d{}", c.max_depth)?;
                }
                Ok(())
            }
            LearnerSpec::Softmax(c) => {
                write!(f, "softmax")?;
                let d = SoftmaxConfig::default();
                if c.epochs != d.epochs {
                    write!(f, "-e{}", c.epochs)?;
                }
                if c.step_size != d.step_size {
                    write!(f, "-s{}", c.step_size)?;
                }
                Ok(())
            }
        }
    }
}

fn parse_num<T: FromStr>(s: &str, text: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::InvalidConfig(format!("bad number {s:?} in learner spec {text:?}")))
}

impl FromStr for LearnerSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown learner spec {text:?}"));
        let positive = |n: usize| {
            if n == 0 {
                Err(Error::InvalidConfig(format!("{text:?}: count must be positive")))
            } else {
                Ok(n)
            }
        };
        if let Some(n) = text.strip_prefix("random-forest-") {
            return Ok(LearnerSpec::RandomForest {
                n_trees: positive(parse_num(n, text)?)?,
            });
        }
        if let Some(n) = text.strip_prefix("extra-trees-") {
            return Ok(LearnerSpec::ExtraTrees {
                n_trees: positive(parse_num(n, text)?)?,
            });
        }
        if let Some(rest) = text.strip_prefix("gbdt-") {
            let mut parts = rest.split('-');
            let mut c = GbdtConfig {
                n_rounds: parse_num(parts.next().ok_or_else(bad)?, text)?,
                ..GbdtConfig::default()
            };
            for p in parts {
                if let Some(v) = p.strip_prefix("lr") {
                    c.learning_rate = parse_num(v, text)?;
                } else if let Some(v) = p.strip_prefix('d') {
                    c.max_depth = positive(parse_num(v, text)?)?;
                } else {
                    return Err(bad());
                }
            }
            return Ok(LearnerSpec::Gbdt(c));
        }
        if let Some(rest) = text.strip_prefix("tree") {
            return match rest.strip_prefix("-d") {
                None if rest.is_empty() => Ok(LearnerSpec::DecisionTree { max_depth: None }),
                Some(d) => Ok(LearnerSpec::DecisionTree {
                    max_depth: Some(positive(parse_num(d, text)?)?),
                }),
                None => Err(bad()),
            };
        }
        if let Some(rest) = text.strip_prefix("softmax") {
            let mut c = SoftmaxConfig::default();
            for p in rest.split('-').filter(|p| !p.is_empty()) {
                if let Some(v) = p.strip_prefix('e') {
                    c.epochs = parse_num(v, text)?;
                } else if let Some(v) = p.strip_prefix('s') {
                    c.step_size = parse_num(v, text)?;
                } else {
                    return Err(bad());
                }
            }
            return Ok(LearnerSpec::Softmax(c));
        }
        Err(bad())
    }
}

/// Fits a learner spec into a concrete model. The cascade is generic over this
/// so tests can substitute scripted learners.
pub trait LearnerFactory {
    type Model: Classifier;

    fn fit(
        &self,
        spec: &LearnerSpec,
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        seed: u64,
    ) -> Result<Self::Model>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultFactory;

impl LearnerFactory for DefaultFactory {
    type Model = FittedModel;

    fn fit(
        &self,
        spec: &LearnerSpec,
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        seed: u64,
    ) -> Result<FittedModel> {
        Ok(match *spec {
            LearnerSpec::DecisionTree { max_depth } => {
                let cfg = TreeConfig {
                    max_depth,
                    ..TreeConfig::default()
                };
                FittedModel::Tree(fit_tree(x, y, n_classes, &cfg, &mut seed::rng(seed))?)
            }
            LearnerSpec::RandomForest { n_trees } => {
                FittedModel::RandomForest(fit_random_forest(x, y, n_classes, n_trees, seed)?)
            }
            LearnerSpec::ExtraTrees { n_trees } => {
                FittedModel::ExtraTrees(fit_extra_trees(x, y, n_classes, n_trees, seed)?)
            }
            LearnerSpec::Gbdt(cfg) => FittedModel::Gbdt(fit_gbdt(x, y, n_classes, &cfg)?),
            LearnerSpec::Softmax(cfg) => {
                FittedModel::Softmax(fit_softmax_regression(x, y, n_classes, &cfg)?)
            }
        })
    }
}

/// A fitted model of any built-in kind.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Tree(DecisionTree),
    RandomForest(Forest),
    ExtraTrees(Forest),
    Gbdt(Gbdt),
    Softmax(SoftmaxRegression),
}

impl FittedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            FittedModel::Tree(_) => "tree",
            FittedModel::RandomForest(_) => "random-forest",
            FittedModel::ExtraTrees(_) => "extra-trees",
            FittedModel::Gbdt(_) => "gbdt",
            FittedModel::Softmax(_) => "softmax",
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            FittedModel::Tree(m) => m,
            FittedModel::RandomForest(m) | FittedModel::ExtraTrees(m) => m,
            FittedModel::Gbdt(m) => m,
            FittedModel::Softmax(m) => m,
        }
    }
}

impl Classifier for FittedModel {
    fn n_classes(&self) -> usize {
        self.inner().n_classes()
    }

    fn n_features_in(&self) -> usize {
        self.inner().n_features_in()
    }

    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.inner().predict_proba(x)
    }
}

/// Human-readable kind list, e.g. for summaries.
pub fn describe_kinds<'a, I: IntoIterator<Item = &'a FittedModel>>(models: I) -> String {
    let kinds: Vec<&str> = models.into_iter().map(|m| m.kind()).collect();
    kinds.join(",")
}
