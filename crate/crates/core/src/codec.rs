//! Binary model format.
//!
//! Little-endian throughout. Integers are `u64`, reals are the IEEE-754 bit
//! pattern as `u64`, strings are a `u64` byte length followed by UTF-8.
//! The layout is documented field by field in `docs/model-format.md`.
//! Decoding checks every structural invariant before handing a model back.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cascade::{
    AgmConfig, CascadeModel, EvalOn, FeatureMode, LayerRecord, PcaFit, StopReason, Version,
};
use crate::error::{Error, Result};
use crate::learners::forest::Forest;
use crate::learners::gbdt::{Gbdt, GbdtConfig, RegNode, RegressionTree};
use crate::learners::softmax::{SoftmaxConfig, SoftmaxRegression};
use crate::learners::tree::{DecisionTree, Node};
use crate::learners::{FittedModel, LearnerSpec};
use crate::matrix::Matrix;
use crate::pca::PcaTransform;

pub const MAGIC: &[u8; 8] = b"AGMMODEL";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(model: &CascadeModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    w.config(&model.config);
    w.usize(model.class_names.len());
    for name in &model.class_names {
        w.str(name);
    }
    w.usize(model.n_features_in);
    w.f64s(&model.acc_history);
    w.u8(match model.stop_reason {
        StopReason::Drop => 0,
        StopReason::Patience => 1,
        StopReason::Cap => 2,
    });
    w.usize(model.layers.len());
    for layer in &model.layers {
        w.usize(layer.expected_input_width);
        w.f64(layer.val_accuracy);
        match &layer.pca {
            None => w.u8(0),
            Some(p) => {
                w.u8(1);
                w.usize(p.input_dim());
                w.usize(p.k());
                w.raw_f64s(p.mean());
                w.raw_f64s(p.components().as_slice());
                w.raw_f64s(p.eigenvalues());
            }
        }
        w.usize(layer.models.len());
        for (m, spec) in layer.models.iter().zip(&layer.kinds) {
            w.spec(spec);
            w.model(m);
        }
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<CascadeModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Corrupt("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let config = r.config()?;
    let n_names = r.count()?;
    let mut class_names = Vec::with_capacity(n_names);
    for _ in 0..n_names {
        class_names.push(r.str()?);
    }
    let n_features_in = r.usize()?;
    let acc_history = r.f64s()?;
    let stop_reason = match r.u8()? {
        0 => StopReason::Drop,
        1 => StopReason::Patience,
        2 => StopReason::Cap,
        t => return Err(bad_tag("stop reason", t)),
    };
    let n_layers = r.count()?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let expected_input_width = r.usize()?;
        let val_accuracy = r.f64()?;
        let pca = match r.u8()? {
            0 => None,
            1 => {
                let d = r.usize()?;
                let k = r.usize()?;
                let mean = r.raw_f64s(d)?;
                let comps = r.raw_f64s(k.checked_mul(d).ok_or_else(overflow)?)?;
                let eig = r.raw_f64s(k)?;
                Some(PcaTransform::from_parts(mean, Matrix::new(k, d, comps)?, eig)?)
            }
            t => return Err(bad_tag("PCA flag", t)),
        };
        let n_models = r.count()?;
        let mut models = Vec::with_capacity(n_models);
        let mut kinds = Vec::with_capacity(n_models);
        for _ in 0..n_models {
            let spec = r.spec()?;
            let model = r.model()?;
            if !spec_matches(&spec, &model) {
                return Err(Error::Corrupt(format!(
                    "model of kind {} recorded as {spec}",
                    model.kind()
                )));
            }
            kinds.push(spec);
            models.push(model);
        }
        layers.push(LayerRecord {
            models,
            kinds,
            pca,
            expected_input_width,
            val_accuracy,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after model",
            bytes.len() - r.pos
        )));
    }
    CascadeModel::from_parts(layers, config, class_names, n_features_in, acc_history, stop_reason)
}

fn spec_matches(spec: &LearnerSpec, model: &FittedModel) -> bool {
    matches!(
        (spec, model),
        (LearnerSpec::DecisionTree { .. }, FittedModel::Tree(_))
            | (LearnerSpec::RandomForest { .. }, FittedModel::RandomForest(_))
            | (LearnerSpec::ExtraTrees { .. }, FittedModel::ExtraTrees(_))
            | (LearnerSpec::Gbdt(_), FittedModel::Gbdt(_))
            | (LearnerSpec::Softmax(_), FittedModel::Softmax(_))
    )
}

fn bad_tag(what: &str, tag: u8) -> Error {
    Error::Corrupt(format!("unknown {what} tag {tag}"))
}

fn overflow() -> Error {
    Error::Corrupt("size overflow".into())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn usize(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    fn raw_f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|&x| self.f64(x));
    }

    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        self.raw_f64s(v);
    }

    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    fn config(&mut self, c: &AgmConfig) {
        self.u8(match c.version {
            Version::V1 => 1,
            Version::V2 => 2,
            Version::V3 => 3,
        });
        self.usize(c.fixed_width);
        self.usize(c.patience);
        self.usize(c.base_model_set.len());
        for s in &c.base_model_set {
            self.spec(s);
        }
        self.spec(&c.probe_model);
        self.spec(&c.val_model);
        self.f64(c.val_fraction);
        self.u8(match c.feature_mode {
            FeatureMode::Probability => 0,
            FeatureMode::Label => 1,
        });
        self.u8(match c.pca_fit {
            PcaFit::Train => 0,
            PcaFit::Joint => 1,
        });
        self.u8(match c.eval_on {
            EvalOn::Train => 0,
            EvalOn::Val => 1,
        });
        self.u8(c.global_acc_w as u8);
        match c.probe_oof_folds {
            None => self.u8(0),
            Some(k) => {
                self.u8(1);
                self.usize(k);
            }
        }
        self.usize(c.max_layers);
        self.usize(c.max_width);
        self.0.extend_from_slice(&c.seed.to_le_bytes());
    }

    fn spec(&mut self, s: &LearnerSpec) {
        match *s {
            LearnerSpec::DecisionTree { max_depth } => {
                self.u8(0);
                match max_depth {
                    None => self.u8(0),
                    Some(d) => {
                        self.u8(1);
                        self.usize(d);
                    }
                }
            }
            LearnerSpec::RandomForest { n_trees } => {
                self.u8(1);
                self.usize(n_trees);
            }
            LearnerSpec::ExtraTrees { n_trees } => {
                self.u8(2);
                self.usize(n_trees);
            }
            LearnerSpec::Gbdt(c) => {
                self.u8(3);
                self.usize(c.n_rounds);
                self.f64(c.learning_rate);
                self.usize(c.max_depth);
                self.usize(c.min_samples_split);
            }
            LearnerSpec::Softmax(c) => {
                self.u8(4);
                self.usize(c.epochs);
                self.f64(c.step_size);
            }
        }
    }

    fn tree(&mut self, t: &DecisionTree) {
        self.usize(t.n_features);
        self.usize(t.n_classes);
        self.usize(t.nodes.len());
        for n in &t.nodes {
            match n {
                Node::Leaf { distribution } => {
                    self.u8(0);
                    self.raw_f64s(distribution);
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    self.u8(1);
                    self.usize(*feature);
                    self.f64(*threshold);
                    self.usize(*left);
                    self.usize(*right);
                }
            }
        }
    }

    fn forest(&mut self, f: &Forest) {
        self.usize(f.n_features);
        self.usize(f.n_classes);
        self.usize(f.trees.len());
        f.trees.iter().for_each(|t| self.tree(t));
    }

    fn model(&mut self, m: &FittedModel) {
        match m {
            FittedModel::Tree(t) => {
                self.u8(0);
                self.tree(t);
            }
            FittedModel::RandomForest(f) => {
                self.u8(1);
                self.forest(f);
            }
            FittedModel::ExtraTrees(f) => {
                self.u8(2);
                self.forest(f);
            }
            FittedModel::Gbdt(g) => {
                self.u8(3);
                self.usize(g.n_features);
                self.usize(g.n_classes);
                self.f64(g.learning_rate);
                self.usize(g.trees.len());
                for round in &g.trees {
                    for t in round {
                        self.usize(t.nodes.len());
                        for n in &t.nodes {
                            match n {
                                RegNode::Leaf(v) => {
                                    self.u8(0);
                                    self.f64(*v);
                                }
                                RegNode::Split {
                                    feature,
                                    threshold,
                                    left,
                                    right,
                                } => {
                                    self.u8(1);
                                    self.usize(*feature);
                                    self.f64(*threshold);
                                    self.usize(*left);
                                    self.usize(*right);
                                }
                            }
                        }
                    }
                }
            }
            FittedModel::Softmax(s) => {
                self.u8(4);
                self.usize(s.mean.len());
                self.usize(s.n_classes);
                self.raw_f64s(&s.mean);
                self.raw_f64s(&s.scale);
                self.raw_f64s(&s.weights);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(overflow)?;
        if end > self.buf.len() {
            return Err(Error::Corrupt(format!(
                "truncated: needed {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| overflow())
    }

    /// An element count; bounded by the bytes left so corrupt input cannot
    /// trigger huge allocations.
    fn count(&mut self) -> Result<usize> {
        let n = self.usize()?;
        if n > self.buf.len() - self.pos {
            return Err(Error::Corrupt(format!("count {n} exceeds remaining input")));
        }
        Ok(n)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn raw_f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.checked_mul(8).ok_or_else(overflow)? > self.buf.len() - self.pos {
            return Err(Error::Corrupt("truncated real array".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        self.raw_f64s(n)
    }

    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            t => Err(bad_tag("boolean", t)),
        }
    }

    fn str(&mut self) -> Result<String> {
        let n = self.count()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Corrupt("string is not UTF-8".into()))
    }

    fn config(&mut self) -> Result<AgmConfig> {
        let version = match self.u8()? {
            1 => Version::V1,
            2 => Version::V2,
            3 => Version::V3,
            t => return Err(bad_tag("cascade version", t)),
        };
        let fixed_width = self.usize()?;
        let patience = self.usize()?;
        let n = self.count()?;
        let base_model_set = (0..n).map(|_| self.spec()).collect::<Result<Vec<_>>>()?;
        let probe_model = self.spec()?;
        let val_model = self.spec()?;
        let val_fraction = self.f64()?;
        let feature_mode = match self.u8()? {
            0 => FeatureMode::Probability,
            1 => FeatureMode::Label,
            t => return Err(bad_tag("feature mode", t)),
        };
        let pca_fit = match self.u8()? {
            0 => PcaFit::Train,
            1 => PcaFit::Joint,
            t => return Err(bad_tag("PCA fit", t)),
        };
        let eval_on = match self.u8()? {
            0 => EvalOn::Train,
            1 => EvalOn::Val,
            t => return Err(bad_tag("evaluation set", t)),
        };
        let global_acc_w = self.bool()?;
        let probe_oof_folds = if self.bool()? { Some(self.usize()?) } else { None };
        Ok(AgmConfig {
            version,
            fixed_width,
            patience,
            base_model_set,
            probe_model,
            val_model,
            val_fraction,
            feature_mode,
            pca_fit,
            eval_on,
            global_acc_w,
            probe_oof_folds,
            max_layers: self.usize()?,
            max_width: self.usize()?,
            seed: self.u64()?,
        })
    }

    fn spec(&mut self) -> Result<LearnerSpec> {
        Ok(match self.u8()? {
            0 => LearnerSpec::DecisionTree {
                max_depth: if self.bool()? { Some(self.usize()?) } else { None },
            },
            1 => LearnerSpec::RandomForest {
                n_trees: self.usize()?,
            },
            2 => LearnerSpec::ExtraTrees {
                n_trees: self.usize()?,
            },
            3 => LearnerSpec::Gbdt(GbdtConfig {
                n_rounds: self.usize()?,
                learning_rate: self.f64()?,
                max_depth: self.usize()?,
                min_samples_split: self.usize()?,
            }),
            4 => LearnerSpec::Softmax(SoftmaxConfig {
                epochs: self.usize()?,
                step_size: self.f64()?,
            }),
            t => return Err(bad_tag("learner spec", t)),
        })
    }

    fn tree(&mut self) -> Result<DecisionTree> {
        let n_features = self.usize()?;
        let n_classes = self.usize()?;
        let n_nodes = self.count()?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            nodes.push(match self.u8()? {
                0 => Node::Leaf {
                    distribution: self.raw_f64s(n_classes)?,
                },
                1 => Node::Split {
                    feature: self.usize()?,
                    threshold: self.f64()?,
                    left: self.usize()?,
                    right: self.usize()?,
                },
                t => return Err(bad_tag("tree node", t)),
            });
        }
        let t = DecisionTree {
            n_features,
            n_classes,
            nodes,
        };
        t.validate()?;
        Ok(t)
    }

    fn forest(&mut self) -> Result<Forest> {
        let n_features = self.usize()?;
        let n_classes = self.usize()?;
        let n_trees = self.count()?;
        if n_trees == 0 {
            return Err(Error::Corrupt("forest without trees".into()));
        }
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let t = self.tree()?;
            if t.n_features != n_features || t.n_classes != n_classes {
                return Err(Error::Corrupt("forest tree shape differs from forest".into()));
            }
            trees.push(t);
        }
        Ok(Forest {
            n_features,
            n_classes,
            trees,
        })
    }

    fn regression_tree(&mut self, n_features: usize) -> Result<RegressionTree> {
        let n_nodes = self.count()?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            nodes.push(match self.u8()? {
                0 => RegNode::Leaf(self.f64()?),
                1 => RegNode::Split {
                    feature: self.usize()?,
                    threshold: self.f64()?,
                    left: self.usize()?,
                    right: self.usize()?,
                },
                t => return Err(bad_tag("regression node", t)),
            });
        }
        let t = RegressionTree { nodes };
        t.validate(n_features)?;
        Ok(t)
    }

    fn model(&mut self) -> Result<FittedModel> {
        Ok(match self.u8()? {
            0 => FittedModel::Tree(self.tree()?),
            1 => FittedModel::RandomForest(self.forest()?),
            2 => FittedModel::ExtraTrees(self.forest()?),
            3 => {
                let n_features = self.usize()?;
                let n_classes = self.usize()?;
                let learning_rate = self.f64()?;
                if n_classes == 0 || !(learning_rate > 0.0 && learning_rate.is_finite()) {
                    return Err(Error::Corrupt("boosted model header is malformed".into()));
                }
                let n_rounds = self.count()?;
                let mut trees = Vec::with_capacity(n_rounds);
                for _ in 0..n_rounds {
                    let round = (0..n_classes)
                        .map(|_| self.regression_tree(n_features))
                        .collect::<Result<Vec<_>>>()?;
                    trees.push(round);
                }
                FittedModel::Gbdt(Gbdt {
                    n_features,
                    n_classes,
                    learning_rate,
                    trees,
                })
            }
            4 => {
                let d = self.usize()?;
                let n_classes = self.usize()?;
                let mean = self.raw_f64s(d)?;
                let scale = self.raw_f64s(d)?;
                let n_weights = n_classes
                    .checked_mul(d.checked_add(1).ok_or_else(overflow)?)
                    .ok_or_else(overflow)?;
                let weights = self.raw_f64s(n_weights)?;
                let finite = mean.iter().chain(&weights).all(|v| v.is_finite());
                if n_classes == 0 || !finite || scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(Error::Corrupt("softmax parameters are malformed".into()));
                }
                FittedModel::Softmax(SoftmaxRegression {
                    mean,
                    scale,
                    n_classes,
                    weights,
                })
            }
            t => return Err(bad_tag("model", t)),
        })
    }
}
