//! CART classification tree with Gini impurity.
//!
//! Two split styles share one builder: exhaustive (every midpoint between
//! consecutive distinct values of a candidate feature) and random (a single
//! uniform threshold per candidate feature, as in extremely randomized trees).
//!
//! Split quality is compared exactly. For a split with left class counts `l`
//! and right counts `r`, minimizing the weighted Gini impurity is the same as
//! maximizing `sum(l_c^2) / n_l + sum(r_c^2) / n_r`, which is a ratio of
//! integers and is compared by cross-multiplication. Ties go to the lowest
//! feature index, then the lowest threshold.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::learners::{check_training_input, Classifier};
use crate::matrix::Matrix;
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    All,
    /// `floor(sqrt(d))`, at least 1.
    Sqrt,
    Fixed(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> Result<usize> {
        let k = match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => (libm::floor(crate::math::sqrt(d as f64)) as usize).max(1),
            MaxFeatures::Fixed(k) => k,
        };
        if k == 0 || k > d {
            return Err(Error::InvalidConfig(format!(
                "{k} candidate features requested for {d} columns"
            )));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStyle {
    Exhaustive,
    RandomThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    /// `None` grows until nodes are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub split_style: SplitStyle,
    /// Additive smoothing of leaf class frequencies; 0 keeps raw frequencies.
    pub leaf_smoothing: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            max_features: MaxFeatures::All,
            split_style: SplitStyle::Exhaustive,
            leaf_smoothing: 0.0,
        }
    }
}

impl TreeConfig {
    fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::InvalidConfig(format!(
                "min_samples_split must be at least 2, got {}",
                self.min_samples_split
            )));
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidConfig("max_depth must be positive".into()));
        }
        if !(self.leaf_smoothing >= 0.0 && self.leaf_smoothing.is_finite()) {
            return Err(Error::InvalidConfig("leaf_smoothing must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Leaf {
        distribution: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub(crate) n_features: usize,
    pub(crate) n_classes: usize,
    pub(crate) nodes: Vec<Node>,
}

impl DecisionTree {
    /// Leaf distribution reached by one feature row.
    pub fn leaf_distribution(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { distribution } => return distribution,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// `(feature, threshold)` of the root, or `None` for a single-leaf tree.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match &self.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Checks node references and leaf distributions; used when loading models.
    pub(crate) fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Corrupt("tree without nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Leaf { distribution } => {
                    if distribution.len() != self.n_classes {
                        return Err(Error::Corrupt(format!(
                            "leaf {i} has {} classes, tree has {}",
                            distribution.len(),
                            self.n_classes
                        )));
                    }
                    let sum: f64 = distribution.iter().sum();
                    if distribution.iter().any(|p| p.is_nan() || *p < 0.0) || libm::fabs(sum - 1.0) > 1e-9 {
                        return Err(Error::Corrupt(format!("leaf {i} is not a distribution")));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= self.n_features
                        || !threshold.is_finite()
                        || *left <= i
                        || *right <= i
                        || *left >= self.nodes.len()
                        || *right >= self.nodes.len()
                    {
                        return Err(Error::Corrupt(format!("split node {i} is malformed")));
                    }
                }
            }
        }
        Ok(())
    }
}

impl Classifier for DecisionTree {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features_in(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        x.expect_cols("tree input columns", self.n_features)?;
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        for i in 0..x.rows() {
            out.row_mut(i)
                .copy_from_slice(self.leaf_distribution(x.row(i)));
        }
        Ok(out)
    }
}

/// Gini impurity of a label multiset given by class counts.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

/// Fits a single tree on all rows of `x`.
pub fn fit_tree(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    config: &TreeConfig,
    rng: &mut Rng,
) -> Result<DecisionTree> {
    check_training_input(x, y, n_classes)?;
    let columns = x.to_column_major();
    let rows: Vec<usize> = (0..x.rows()).collect();
    fit_tree_on_rows(&columns, x.rows(), x.cols(), y, n_classes, rows, config, rng)
}

/// Split candidate score `num / den` (see module docs), with its location.
#[derive(Clone, Copy)]
struct Candidate {
    num: u128,
    den: u128,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        let lhs = self.num * other.den;
        let rhs = other.num * self.den;
        lhs > rhs
            || (lhs == rhs
                && (self.feature < other.feature
                    || (self.feature == other.feature && self.threshold < other.threshold)))
    }
}

fn sum_sq(counts: &[usize]) -> u128 {
    counts.iter().map(|&c| (c as u128) * (c as u128)).sum()
}

fn score(left: &[usize], n_left: usize, right: &[usize], n_right: usize) -> (u128, u128) {
    let (nl, nr) = (n_left as u128, n_right as u128);
    (sum_sq(left) * nr + sum_sq(right) * nl, nl * nr)
}

struct Builder<'a> {
    columns: &'a [f64],
    n_rows: usize,
    n_features: usize,
    y: &'a [usize],
    n_classes: usize,
    config: &'a TreeConfig,
    k: usize,
    features: Vec<usize>,
    pairs: Vec<(f64, usize)>,
    left: Vec<usize>,
    total: Vec<usize>,
}

impl Builder<'_> {
    #[inline]
    fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature * self.n_rows + row]
    }

    fn leaf(&self, counts: &[usize], n: usize) -> Node {
        let a = self.config.leaf_smoothing;
        let denom = n as f64 + a * self.n_classes as f64;
        Node::Leaf {
            distribution: counts.iter().map(|&c| (c as f64 + a) / denom).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize], rng: &mut Rng) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        if self.k < self.n_features {
            self.features.shuffle(rng);
        }
        let mut evaluated = 0;
        for fi in 0..self.n_features {
            if evaluated == self.k {
                break;
            }
            let feature = self.features[fi];
            let found = match self.config.split_style {
                SplitStyle::Exhaustive => self.exhaustive(rows, feature),
                SplitStyle::RandomThreshold => self.random_threshold(rows, feature, rng),
            };
            // constant features in this node don't count toward the k candidates
            let Some(found) = found else { continue };
            evaluated += 1;
            if best.as_ref().is_none_or(|b| found.beats(b)) {
                best = Some(found);
            }
        }
        best
    }

    fn exhaustive(&mut self, rows: &[usize], feature: usize) -> Option<Candidate> {
        self.pairs.clear();
        for &r in rows {
            self.pairs.push((self.value(r, feature), self.y[r]));
        }
        self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if self.pairs[0].0 == self.pairs[self.pairs.len() - 1].0 {
            return None;
        }
        self.left.iter_mut().for_each(|c| *c = 0);
        let n = self.pairs.len();
        let mut right = self.total.clone();
        let mut best: Option<Candidate> = None;
        for i in 0..n - 1 {
            let (v, label) = self.pairs[i];
            self.left[label] += 1;
            right[label] -= 1;
            let next = self.pairs[i + 1].0;
            if next == v {
                continue;
            }
            let (num, den) = score(&self.left, i + 1, &right, n - i - 1);
            let cand = Candidate {
                num,
                den,
                feature,
                threshold: v + (next - v) / 2.0,
            };
            if best.as_ref().is_none_or(|b| cand.beats(b)) {
                best = Some(cand);
            }
        }
        best
    }

    fn random_threshold(&mut self, rows: &[usize], feature: usize, rng: &mut Rng) -> Option<Candidate> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in rows {
            let v = self.value(r, feature);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo == hi {
            return None;
        }
        let mut threshold = lo + rng.gen::<f64>() * (hi - lo);
        if threshold >= hi {
            threshold = lo;
        }
        self.left.iter_mut().for_each(|c| *c = 0);
        let mut n_left = 0;
        for &r in rows {
            if self.value(r, feature) <= threshold {
                self.left[self.y[r]] += 1;
                n_left += 1;
            }
        }
        let right: Vec<usize> = self.total.iter().zip(&self.left).map(|(t, l)| t - l).collect();
        let (num, den) = score(&self.left, n_left, &right, rows.len() - n_left);
        Some(Candidate {
            num,
            den,
            feature,
            threshold,
        })
    }
}

/// Grows a tree over `rows` (which may repeat, for bootstrap samples) of a
/// column-major feature buffer.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fit_tree_on_rows(
    columns: &[f64],
    n_rows: usize,
    n_features: usize,
    y: &[usize],
    n_classes: usize,
    mut rows: Vec<usize>,
    config: &TreeConfig,
    rng: &mut Rng,
) -> Result<DecisionTree> {
    config.validate()?;
    if rows.is_empty() || n_features == 0 {
        return Err(Error::Empty("tree training rows"));
    }
    let k = config.max_features.resolve(n_features)?;
    let mut b = Builder {
        columns,
        n_rows,
        n_features,
        y,
        n_classes,
        config,
        k,
        features: (0..n_features).collect(),
        pairs: Vec::with_capacity(rows.len()),
        left: alloc::vec![0; n_classes],
        total: alloc::vec![0; n_classes],
    };

    let mut nodes: Vec<Node> = Vec::new();
    // (start, end, depth, node slot)
    let mut stack = alloc::vec![(0usize, rows.len(), 0usize, 0usize)];
    nodes.push(Node::Leaf {
        distribution: Vec::new(),
    });
    while let Some((start, end, depth, slot)) = stack.pop() {
        let node_rows = &mut rows[start..end];
        let n = node_rows.len();
        b.total.iter_mut().for_each(|c| *c = 0);
        for &r in node_rows.iter() {
            b.total[y[r]] += 1;
        }
        let pure = b.total.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_reached = config.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_reached || n < config.min_samples_split {
            nodes[slot] = b.leaf(&b.total, n);
            continue;
        }
        let Some(split) = b.best_split(node_rows, rng) else {
            nodes[slot] = b.leaf(&b.total, n);
            continue;
        };
        // partition in place: rows going left first
        let mut mid = 0;
        for i in 0..n {
            if b.value(node_rows[i], split.feature) <= split.threshold {
                node_rows.swap(i, mid);
                mid += 1;
            }
        }
        debug_assert!(mid > 0 && mid < n);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf {
            distribution: Vec::new(),
        });
        nodes.push(Node::Leaf {
            distribution: Vec::new(),
        });
        nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((start + mid, end, depth + 1, right));
        stack.push((start, start + mid, depth + 1, left));
    }
    Ok(DecisionTree {
        n_features,
        n_classes,
        nodes,
    })
}
