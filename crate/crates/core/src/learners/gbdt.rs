//! Multiclass gradient boosting with softmax loss.
//!
//! Each round fits one depth-limited regression tree per class to the
//! residuals `onehot(y) - softmax(F)` and adds `learning_rate * tree(x)` to
//! that class's score column. No Hessian weighting and no regularization.
//!
//! Regression trees are grown level by level over feature orders that are
//! sorted once per boosting fit, so each level costs one pass per feature.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::learners::{check_training_input, Classifier};
use crate::math::{ln, softmax_into};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_split: 2,
        }
    }
}

impl GbdtConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.max_depth == 0 || self.min_samples_split < 2 {
            return Err(Error::InvalidConfig(
                "regression trees need max_depth >= 1 and min_samples_split >= 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum RegNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub(crate) nodes: Vec<RegNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf(v) => return *v,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub(crate) fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Corrupt("regression tree without nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let ok = match node {
                RegNode::Leaf(v) => v.is_finite(),
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    *feature < n_features
                        && threshold.is_finite()
                        && *left > i
                        && *right > i
                        && *left < self.nodes.len()
                        && *right < self.nodes.len()
                }
            };
            if !ok {
                return Err(Error::Corrupt(format!("regression node {i} is malformed")));
            }
        }
        Ok(())
    }
}

/// Boosted model: `trees[round][class]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gbdt {
    pub(crate) n_features: usize,
    pub(crate) n_classes: usize,
    pub(crate) learning_rate: f64,
    pub(crate) trees: Vec<Vec<RegressionTree>>,
}

impl Gbdt {
    pub fn n_rounds(&self) -> usize {
        self.trees.len()
    }

    fn scores_into(&self, row: &[f64], scores: &mut [f64]) {
        scores.iter_mut().for_each(|s| *s = 0.0);
        for round in &self.trees {
            for (s, t) in scores.iter_mut().zip(round) {
                *s += self.learning_rate * t.predict_row(row);
            }
        }
    }
}

impl Classifier for Gbdt {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features_in(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        x.expect_cols("boosted model input columns", self.n_features)?;
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        let mut scores = alloc::vec![0.0; self.n_classes];
        for i in 0..x.rows() {
            self.scores_into(x.row(i), &mut scores);
            softmax_into(&scores, out.row_mut(i));
        }
        Ok(out)
    }
}

/// Per-feature row orders sorted by value, computed once per boosting fit.
struct Presorted {
    columns: Vec<f64>,
    n_rows: usize,
    order: Vec<Vec<u32>>,
}

impl Presorted {
    fn new(x: &Matrix) -> Self {
        let n_rows = x.rows();
        let columns = x.to_column_major();
        let order = (0..x.cols())
            .map(|j| {
                let col = &columns[j * n_rows..(j + 1) * n_rows];
                let mut idx: Vec<u32> = (0..n_rows as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect();
        Self {
            columns,
            n_rows,
            order,
        }
    }

    #[inline]
    fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature * self.n_rows + row]
    }
}

#[derive(Clone, Copy)]
struct NodeStats {
    sum: f64,
    count: usize,
}

#[derive(Clone, Copy)]
struct ScanState {
    left_sum: f64,
    left_count: usize,
    last: f64,
    best_score: f64,
    best_feature: usize,
    best_threshold: f64,
}

const NO_NODE: usize = usize::MAX;

/// Grows a variance-reduction regression tree on all rows; writes each row's
/// fitted leaf value into `fitted`.
fn fit_regression_tree(
    pre: &Presorted,
    residuals: &[f64],
    config: &GbdtConfig,
    fitted: &mut [f64],
) -> RegressionTree {
    let n = pre.n_rows;
    let n_features = pre.order.len();
    // tree node currently holding each row, NO_NODE once the row sits in a finished leaf
    let mut node_of = alloc::vec![0usize; n];
    let mut nodes = alloc::vec![RegNode::Leaf(0.0)];
    let mut active: Vec<usize> = alloc::vec![0];
    let total: f64 = residuals.iter().sum();
    let mut stats: Vec<NodeStats> = alloc::vec![NodeStats { sum: total, count: n }];
    // map tree node id -> slot in the per-level arrays
    let mut slot_of: Vec<usize> = alloc::vec![0];

    for depth in 0..=config.max_depth {
        if active.is_empty() {
            break;
        }
        let splittable = |s: &NodeStats| depth < config.max_depth && s.count >= config.min_samples_split;
        let mut scan: Vec<ScanState> = active
            .iter()
            .map(|&id| {
                let s = stats[slot_of[id]];
                ScanState {
                    left_sum: 0.0,
                    left_count: 0,
                    last: f64::NAN,
                    // a split must improve on leaving the node whole
                    best_score: s.sum * s.sum / s.count as f64,
                    best_feature: NO_NODE,
                    best_threshold: 0.0,
                }
            })
            .collect();
        if active.iter().any(|&id| splittable(&stats[slot_of[id]])) {
            for f in 0..n_features {
                for st in scan.iter_mut() {
                    st.left_sum = 0.0;
                    st.left_count = 0;
                    st.last = f64::NAN;
                }
                for &r in &pre.order[f] {
                    let r = r as usize;
                    let node = node_of[r];
                    if node == NO_NODE {
                        continue;
                    }
                    let slot = slot_of[node];
                    let s = stats[slot];
                    if !splittable(&s) {
                        continue;
                    }
                    let v = pre.value(r, f);
                    let st = &mut scan[slot];
                    if st.left_count > 0 && v != st.last {
                        let rc = s.count - st.left_count;
                        let rs = s.sum - st.left_sum;
                        let score = st.left_sum * st.left_sum / st.left_count as f64
                            + rs * rs / rc as f64;
                        if score > st.best_score {
                            st.best_score = score;
                            st.best_feature = f;
                            st.best_threshold = st.last + (v - st.last) / 2.0;
                        }
                    }
                    st.left_sum += residuals[r];
                    st.left_count += 1;
                    st.last = v;
                }
            }
        }

        // materialize this level's decisions
        let mut next_active = Vec::new();
        let mut next_stats = Vec::new();
        for (slot, &id) in active.iter().enumerate() {
            let st = scan[slot];
            let s = stats[slot];
            if st.best_feature == NO_NODE || !splittable(&s) {
                nodes[id] = RegNode::Leaf(s.sum / s.count as f64);
                continue;
            }
            let left = nodes.len();
            let right = left + 1;
            nodes.push(RegNode::Leaf(0.0));
            nodes.push(RegNode::Leaf(0.0));
            slot_of.resize(nodes.len(), NO_NODE);
            nodes[id] = RegNode::Split {
                feature: st.best_feature,
                threshold: st.best_threshold,
                left,
                right,
            };
            slot_of[left] = next_active.len();
            next_active.push(left);
            next_stats.push(NodeStats { sum: 0.0, count: 0 });
            slot_of[right] = next_active.len();
            next_active.push(right);
            next_stats.push(NodeStats { sum: 0.0, count: 0 });
        }
        for r in 0..n {
            let id = node_of[r];
            if id == NO_NODE {
                continue;
            }
            match nodes[id] {
                RegNode::Leaf(v) => {
                    fitted[r] = v;
                    node_of[r] = NO_NODE;
                }
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let child = if pre.value(r, feature) <= threshold { left } else { right };
                    node_of[r] = child;
                    let s = &mut next_stats[slot_of[child]];
                    s.sum += residuals[r];
                    s.count += 1;
                }
            }
        }
        active = next_active;
        stats = next_stats;
    }
    RegressionTree { nodes }
}

fn mean_log_loss(scores: &Matrix, y: &[usize], probs: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (i, &label) in y.iter().enumerate() {
        softmax_into(scores.row(i), probs);
        total -= ln(probs[label].max(f64::MIN_POSITIVE));
    }
    total / y.len() as f64
}

/// Fits the boosted model and returns the mean training log-loss before the
/// first round and after every round (`n_rounds + 1` values).
pub fn fit_gbdt_traced(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    config: &GbdtConfig,
) -> Result<(Gbdt, Vec<f64>)> {
    check_training_input(x, y, n_classes)?;
    config.validate()?;
    let n = x.rows();
    let pre = Presorted::new(x);
    let mut scores = Matrix::zeros(n, n_classes);
    let mut probs = Matrix::zeros(n, n_classes);
    let mut residuals = alloc::vec![0.0; n];
    let mut fitted = alloc::vec![0.0; n];
    let mut scratch = alloc::vec![0.0; n_classes];
    let mut losses = Vec::with_capacity(config.n_rounds + 1);
    losses.push(mean_log_loss(&scores, y, &mut scratch));
    let mut trees = Vec::with_capacity(config.n_rounds);
    for _ in 0..config.n_rounds {
        for i in 0..n {
            softmax_into(scores.row(i), probs.row_mut(i));
        }
        let mut round = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            for i in 0..n {
                let target = if y[i] == k { 1.0 } else { 0.0 };
                residuals[i] = target - probs.get(i, k);
            }
            let tree = fit_regression_tree(&pre, &residuals, config, &mut fitted);
            for (i, f) in fitted.iter().enumerate() {
                let s = scores.get(i, k) + config.learning_rate * f;
                scores.set(i, k, s);
            }
            round.push(tree);
        }
        trees.push(round);
        losses.push(mean_log_loss(&scores, y, &mut scratch));
    }
    Ok((
        Gbdt {
            n_features: x.cols(),
            n_classes,
            learning_rate: config.learning_rate,
            trees,
        },
        losses,
    ))
}

pub fn fit_gbdt(x: &Matrix, y: &[usize], n_classes: usize, config: &GbdtConfig) -> Result<Gbdt> {
    fit_gbdt_traced(x, y, n_classes, config).map(|(m, _)| m)
}
