//! Shared fixtures for integration tests: scripted learners, independent
//! simulations of the growth rules, and small synthetic datasets.
#![allow(dead_code)]

use std::cell::{Cell, RefCell};

use agm_core::cascade::fit_cascade_with;
use agm_core::seed;
use agm_core::{
    AgmConfig, Cascade, Classifier, Dataset, FeatureMode, LearnerFactory, LearnerSpec, Matrix,
    Result, StopReason, Version,
};
use rand::Rng as _;

/// Rows in the inner validation set of [`label_dataset`] under [`scripted_config`].
pub const VAL_ROWS: usize = 10;

/// Predicts the class stored in column 0 for the first `hits` rows of any
/// input and the next class over for the rest.
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    pub hits: usize,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Classifier for ScriptedModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features_in(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        let mut p = Matrix::zeros(x.rows(), self.n_classes);
        for r in 0..x.rows() {
            // rotated inputs no longer carry the label; any class will do there
            let truth = x.get(r, 0).round().max(0.0) as usize % self.n_classes;
            let c = if r < self.hits { truth } else { (truth + 1) % self.n_classes };
            p.set(r, c, 1.0);
        }
        Ok(p)
    }
}

/// Each fit of `scored` consumes the next script entry (hits out of
/// [`VAL_ROWS`]); fits of any other spec predict perfectly.
pub struct ScriptedFactory {
    pub scored: LearnerSpec,
    pub script: Vec<usize>,
    pub consumed: Cell<usize>,
    pub seeds: RefCell<Vec<u64>>,
}

impl ScriptedFactory {
    pub fn new(scored: LearnerSpec, script: &[usize]) -> Self {
        Self {
            scored,
            script: script.to_vec(),
            consumed: Cell::new(0),
            seeds: RefCell::new(Vec::new()),
        }
    }
}

impl LearnerFactory for ScriptedFactory {
    type Model = ScriptedModel;

    fn fit(
        &self,
        spec: &LearnerSpec,
        x: &Matrix,
        _y: &[usize],
        n_classes: usize,
        seed: u64,
    ) -> Result<ScriptedModel> {
        self.seeds.borrow_mut().push(seed);
        let hits = if *spec == self.scored {
            let i = self.consumed.get();
            self.consumed.set(i + 1);
            *self.script.get(i).expect("cascade fitted more models than scripted")
        } else {
            usize::MAX
        };
        Ok(ScriptedModel {
            hits,
            n_features: x.cols(),
            n_classes,
        })
    }
}

pub fn scored_spec() -> LearnerSpec {
    LearnerSpec::DecisionTree { max_depth: Some(1) }
}

pub fn probe_spec() -> LearnerSpec {
    LearnerSpec::DecisionTree { max_depth: Some(2) }
}

/// Two classes of `VAL_ROWS` rows each; column 0 holds the label.
pub fn label_dataset() -> Dataset {
    let per_class = VAL_ROWS;
    let rows: Vec<[f64; 2]> = (0..2 * per_class)
        .map(|i| [(i % 2) as f64, i as f64])
        .collect();
    let labels: Vec<&str> = (0..2 * per_class).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
    Dataset::from_raw_labels(Matrix::from_rows(&rows).unwrap(), &labels).unwrap()
}

/// Half of [`label_dataset`] goes to inner validation, i.e. `VAL_ROWS` rows.
pub fn scripted_config(version: Version) -> AgmConfig {
    AgmConfig {
        version,
        fixed_width: 1,
        base_model_set: vec![scored_spec()],
        probe_model: probe_spec(),
        val_model: scored_spec(),
        val_fraction: 0.5,
        feature_mode: FeatureMode::Label,
        ..AgmConfig::with_version(version)
    }
}

/// Runs a v1 cascade whose layer accuracies follow `script` (hits per layer).
pub fn run_scripted_depth(script: &[usize], patience: usize) -> Cascade<ScriptedModel> {
    let factory = ScriptedFactory::new(scored_spec(), script);
    let config = AgmConfig {
        patience,
        max_layers: script.len(),
        ..scripted_config(Version::V1)
    };
    fit_cascade_with(&factory, &label_dataset(), &config).unwrap()
}

/// Depth-growth rule written as a direct transcription of the pseudo-code:
/// `Acc_d[n]` is compared with `Acc_d[n-1]`; a drop stops, a tie costs one
/// unit of `maxnum`, and running out of layers stops as well.
pub fn simulate_depth(acc: &[usize], maxnum_init: usize) -> (usize, StopReason) {
    let mut acc_d: Vec<usize> = Vec::new();
    let mut maxnum = maxnum_init as i64;
    let mut n = 0;
    loop {
        acc_d.push(acc[n]);
        if n > 0 {
            if acc_d[n] < acc_d[n - 1] {
                return (n + 1, StopReason::Drop);
            }
            if acc_d[n] == acc_d[n - 1] {
                maxnum -= 1;
                if maxnum == 0 {
                    return (n + 1, StopReason::Patience);
                }
            }
        }
        if n + 1 == acc.len() {
            return (n + 1, StopReason::Cap);
        }
        n += 1;
    }
}

/// Layers kept after pruning: up to the first position of the maximum.
pub fn simulate_kept(acc: &[usize], grown: usize) -> usize {
    let grown = &acc[..grown];
    let best = *grown.iter().max().unwrap();
    grown.iter().position(|&a| a == best).unwrap() + 1
}

/// Width-probe rule: count strictly improving validation scores starting
/// from `Acc_w = 0`, stop at the first non-improvement or after `cap` steps,
/// then apply the floor of one model.
pub fn simulate_width(acc: &[usize], cap: usize) -> usize {
    let mut acc_w = 0;
    let mut i = 0;
    for &a in acc.iter().take(cap) {
        if a > acc_w {
            acc_w = a;
            i += 1;
        } else {
            break;
        }
    }
    i.max(1)
}

/// Calls `f` on every sequence of length `1..=max_len` over `0..=10`.
pub fn for_each_sequence(max_len: usize, mut f: impl FnMut(&[usize])) {
    let mut seq = Vec::with_capacity(max_len);
    fn rec(seq: &mut Vec<usize>, max_len: usize, f: &mut dyn FnMut(&[usize])) {
        if !seq.is_empty() {
            f(seq);
        }
        if seq.len() == max_len {
            return;
        }
        for v in 0..=10 {
            seq.push(v);
            rec(seq, max_len, f);
            seq.pop();
        }
    }
    rec(&mut seq, max_len, &mut f);
}

/// Unit-variance Gaussian blobs. Class `c` is shifted by `separation` along
/// axis `c % d`, so centres are distinct while `n_classes <= d`.
pub fn blobs(per_class: usize, d: usize, n_classes: usize, separation: f64, seed_value: u64) -> Dataset {
    let mut rng = seed::rng(seed_value);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..n_classes {
        for _ in 0..per_class {
            let row: Vec<f64> = (0..d)
                .map(|j| {
                    let centre = if j == c % d { separation } else { 0.0 };
                    centre + gaussian(&mut rng)
                })
                .collect();
            rows.push(row);
            labels.push(format!("c{c}"));
        }
    }
    Dataset::from_raw_labels(Matrix::from_rows(&rows).unwrap(), &labels).unwrap()
}

pub fn gaussian(rng: &mut seed::Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut seed::Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-3.0..3.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Exact non-negative rational, kept reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: i128,
    pub den: i128,
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 { a.abs() } else { gcd(b, a % b) }
}

impl Ratio {
    pub fn new(num: i128, den: i128) -> Self {
        let g = gcd(num, den).max(1);
        Ratio { num: num / g, den: den / g }
    }

    pub fn add(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }

    pub fn mul(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.num, self.den * o.den)
    }

    pub fn lt(self, o: Ratio) -> bool {
        self.num * o.den < o.num * self.den
    }
}

/// Gini impurity `1 - sum p_c^2` as an exact fraction.
pub fn gini_ratio(counts: &[usize]) -> Ratio {
    let n: usize = counts.iter().sum();
    let sq: usize = counts.iter().map(|c| c * c).sum();
    Ratio::new((n * n - sq) as i128, (n * n) as i128)
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleTree {
    Leaf(Vec<f64>),
    Split { feature: usize, threshold: f64, left: Box<OracleTree>, right: Box<OracleTree> },
}

impl OracleTree {
    pub fn distribution(&self, row: &[f64]) -> &[f64] {
        match self {
            OracleTree::Leaf(p) => p,
            OracleTree::Split { feature, threshold, left, right } => {
                if row[*feature] <= *threshold { left.distribution(row) } else { right.distribution(row) }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            OracleTree::Leaf(_) => 1,
            OracleTree::Split { left, right, .. } => 1 + left.n_nodes() + right.n_nodes(),
        }
    }
}

/// Unbounded CART by enumeration: every feature, every midpoint between
/// consecutive distinct values, weighted child impurity computed exactly.
/// The first strictly smallest candidate in (feature, threshold) order wins.
pub fn oracle_tree(rows: &[Vec<f64>], y: &[usize], n_classes: usize) -> OracleTree {
    let mut counts = vec![0; n_classes];
    for &l in y {
        counts[l] += 1;
    }
    let n = y.len();
    let leaf = || OracleTree::Leaf(counts.iter().map(|&c| c as f64 / n as f64).collect());
    if counts.iter().filter(|&&c| c > 0).count() <= 1 || n < 2 {
        return leaf();
    }
    let mut best: Option<(Ratio, usize, f64)> = None;
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = w[0] + (w[1] - w[0]) / 2.0;
            let mut l = vec![0; n_classes];
            let mut r = vec![0; n_classes];
            for (row, &lab) in rows.iter().zip(y) {
                if row[f] <= thr { l[lab] += 1 } else { r[lab] += 1 }
            }
            let nl: usize = l.iter().sum();
            let nr: usize = r.iter().sum();
            let imp = Ratio::new(nl as i128, n as i128)
                .mul(gini_ratio(&l))
                .add(Ratio::new(nr as i128, n as i128).mul(gini_ratio(&r)));
            if best.is_none_or(|(b, _, _)| imp.lt(b)) {
                best = Some((imp, f, thr));
            }
        }
    }
    let Some((_, feature, threshold)) = best else { return leaf() };
    let (mut lx, mut ly, mut rx, mut ry) = (vec![], vec![], vec![], vec![]);
    for (row, &lab) in rows.iter().zip(y) {
        if row[feature] <= threshold {
            lx.push(row.clone());
            ly.push(lab);
        } else {
            rx.push(row.clone());
            ry.push(lab);
        }
    }
    OracleTree::Split {
        feature,
        threshold,
        left: Box::new(oracle_tree(&lx, &ly, n_classes)),
        right: Box::new(oracle_tree(&rx, &ry, n_classes)),
    }
}

/// Small tree instance: `n <= 8` rows, `d <= 2` columns on a coarse value grid
/// so duplicates and ties are common.
pub fn small_tree_instance(rng: &mut seed::Rng) -> (Vec<Vec<f64>>, Vec<usize>, usize) {
    let n = rng.gen_range(1..=8);
    let d = rng.gen_range(1..=2);
    let c = rng.gen_range(2..=3);
    let rows = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(0..5) as f64 * 0.5).collect())
        .collect();
    let y = (0..n).map(|_| rng.gen_range(0..c)).collect();
    (rows, y, c)
}

/// Compares the fitted exhaustive tree with [`oracle_tree`] node count and
/// leaf distribution on every training row and every grid point.
pub fn tree_agrees_with_oracle(rows: &[Vec<f64>], y: &[usize], n_classes: usize) -> std::result::Result<(), String> {
    use agm_core::learners::{fit_tree, TreeConfig};
    let x = Matrix::from_rows(rows).unwrap();
    let tree = fit_tree(&x, y, n_classes, &TreeConfig::default(), &mut seed::rng(0))
        .map_err(|e| e.to_string())?;
    let oracle = oracle_tree(rows, y, n_classes);
    if tree.n_nodes() != oracle.n_nodes() {
        return Err(format!("{} nodes, oracle {}", tree.n_nodes(), oracle.n_nodes()));
    }
    let d = rows[0].len();
    let grid: Vec<f64> = (-1..=10).map(|v| v as f64 * 0.25).collect();
    let mut probes: Vec<Vec<f64>> = rows.to_vec();
    for &a in &grid {
        if d == 1 {
            probes.push(vec![a]);
        } else {
            probes.extend(grid.iter().map(|&b| vec![a, b]));
        }
    }
    for p in &probes {
        if tree.leaf_distribution(p) != oracle.distribution(p) {
            return Err(format!("disagree at {p:?}"));
        }
    }
    Ok(())
}

/// Largest deviation from the simplex over all rows: negative mass or
/// `|sum - 1|`.
pub fn simplex_violation(p: &Matrix) -> f64 {
    p.iter_rows()
        .map(|r| {
            let neg = r.iter().fold(0.0f64, |m, &v| m.max(-v));
            neg.max((r.iter().sum::<f64>() - 1.0).abs())
        })
        .fold(0.0, f64::max)
}

/// Max relative error between the analytic cross-entropy gradient and central
/// differences with step `h`, on a random 6x3 two-class instance.
pub fn softmax_gradient_error(seed_value: u64, h: f64) -> f64 {
    use agm_core::learners::softmax::loss_and_gradient;
    let mut rng = seed::rng(seed_value);
    let x = random_matrix(6, 3, &mut rng);
    let y: Vec<usize> = (0..6).map(|i| i % 2).collect();
    let w: Vec<f64> = (0..2 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, g) = loss_and_gradient(&w, &x, &y, 2);
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let mut up = w.clone();
        let mut down = w.clone();
        up[i] += h;
        down[i] -= h;
        let fd = (loss_and_gradient(&up, &x, &y, 2).0 - loss_and_gradient(&down, &x, &y, 2).0) / (2.0 * h);
        let scale = g[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((g[i] - fd).abs() / scale);
    }
    worst
}

/// Largest per-round increase of the traced GBDT training loss.
pub fn gbdt_max_loss_increase(ds: &Dataset, config: &agm_core::learners::GbdtConfig) -> f64 {
    let (_, losses) =
        agm_core::learners::fit_gbdt_traced(ds.features(), ds.labels(), ds.n_classes(), config).unwrap();
    losses.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

/// Eigenpairs of a symmetric 3x3 matrix from the characteristic cubic
/// (trigonometric roots) and cross products of rows of `A - lambda I`.
/// Eigenvalues descending; vectors unit length, sign arbitrary.
pub fn eigen_3x3(a: &[[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let p2 = (0..3).map(|i| (a[i][i] - q).powi(2)).sum::<f64>() + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det_b / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let tau = 2.0 * std::f64::consts::PI / 3.0;
    let l0 = q + 2.0 * p * phi.cos();
    let l2 = q + 2.0 * p * (phi + tau).cos();
    let l1 = 3.0 * q - l0 - l2;
    let vals = [l0, l1, l2];
    let mut vecs = [[0.0; 3]; 3];
    for (k, &l) in vals.iter().enumerate() {
        let m: Vec<[f64; 3]> = (0..3)
            .map(|i| [a[i][0] - if i == 0 { l } else { 0.0 }, a[i][1] - if i == 1 { l } else { 0.0 }, a[i][2] - if i == 2 { l } else { 0.0 }])
            .collect();
        let cross = |u: [f64; 3], v: [f64; 3]| [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        let cands = [cross(m[0], m[1]), cross(m[0], m[2]), cross(m[1], m[2])];
        let norm = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let best = cands.iter().max_by(|u, v| norm(u).total_cmp(&norm(v))).unwrap();
        let n = norm(best);
        vecs[k] = [best[0] / n, best[1] / n, best[2] / n];
    }
    (vals, vecs)
}

/// Fits a full PCA on a random 5x3 matrix and returns the largest
/// disagreement with [`eigen_3x3`] over eigenvalues and components (up to
/// sign), or `None` when two eigenvalues are too close for eigenvectors to
/// be well defined.
pub fn pca_eigen_disagreement(seed_value: u64) -> Option<f64> {
    let mut rng = seed::rng(seed_value);
    let x = random_matrix(5, 3, &mut rng);
    let t = agm_core::pca::fit_pca(&x, 3).unwrap();
    // independent sample covariance
    let mean: Vec<f64> = (0..3).map(|j| (0..5).map(|i| x.get(i, j)).sum::<f64>() / 5.0).collect();
    let mut cov = [[0.0; 3]; 3];
    for (a, row) in cov.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = (0..5).map(|i| (x.get(i, a) - mean[a]) * (x.get(i, b) - mean[b])).sum::<f64>() / 4.0;
        }
    }
    let (vals, vecs) = eigen_3x3(&cov);
    if (vals[0] - vals[1]).abs() < 1e-3 || (vals[1] - vals[2]).abs() < 1e-3 {
        return None;
    }
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        worst = worst.max((t.eigenvalues()[k] - vals[k]).abs());
        let c = t.components().row(k);
        let same: f64 = (0..3).map(|j| (c[j] - vecs[k][j]).abs()).fold(0.0, f64::max);
        let flip: f64 = (0..3).map(|j| (c[j] + vecs[k][j]).abs()).fold(0.0, f64::max);
        worst = worst.max(same.min(flip));
    }
    Some(worst)
}

/// Counts of `sample_k(d)` over `draws` draws, indexed by value.
pub fn sample_k_counts(d: usize, draws: usize, seed_value: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed_value);
    let mut counts = vec![0; d + 1];
    for _ in 0..draws {
        let k = agm_core::pca::sample_k(d, &mut rng);
        assert!(k <= d, "sample_k({d}) returned {k}");
        counts[k] += 1;
    }
    counts
}
