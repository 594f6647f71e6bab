//! The adaptive generation cascade.
//!
//! A cascade is a stack of layers. Each layer trains some number of base
//! models on the previous layer's features concatenated with the previous
//! layer's prediction blocks, optionally rotated by a PCA fitted on the
//! training rows. Layers keep being added while validation accuracy does not
//! drop (equal accuracy is tolerated `patience` times in total), and width per
//! layer is either fixed or found by a probe loop (see [`determine_width`]).
//!
//! Prediction replays exactly the same feature pipeline and soft-votes over
//! the last retained layer.

mod config;
mod fit;
mod stacking;
mod vote;
mod width;

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::learners::{Classifier, FittedModel, LearnerSpec};
use crate::matrix::Matrix;
use crate::pca::PcaTransform;

pub use config::{AgmConfig, EvalOn, FeatureMode, PcaFit, Version};
pub use fit::{fit_cascade, fit_cascade_with, inner_split};
pub use stacking::{fit_two_layer_stacking, out_of_fold_proba, StackingConfig, StackingModel};
pub use vote::{augment_features, layer_vote};
pub use width::{determine_width, WidthProbeState};

/// One fitted layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord<M> {
    pub models: Vec<M>,
    /// Learner spec each model was fitted from, same order as `models`.
    pub kinds: Vec<LearnerSpec>,
    pub pca: Option<PcaTransform>,
    /// Feature width this layer receives, after augmentation and before PCA.
    pub expected_input_width: usize,
    pub val_accuracy: f64,
}

impl<M> LayerRecord<M> {
    pub fn width(&self) -> usize {
        self.models.len()
    }

    /// Width the layer's models see.
    pub fn model_input_width(&self) -> usize {
        self.pca.as_ref().map_or(self.expected_input_width, |p| p.k())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Validation accuracy fell below the previous layer's.
    Drop,
    /// Equal accuracy exhausted the patience budget.
    Patience,
    /// Hit `max_layers`.
    Cap,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Drop => "drop",
            StopReason::Patience => "patience",
            StopReason::Cap => "cap",
        }
    }
}

/// A fitted cascade over models of type `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade<M> {
    pub(crate) layers: Vec<LayerRecord<M>>,
    pub(crate) config: AgmConfig,
    pub(crate) class_names: Vec<String>,
    pub(crate) n_features_in: usize,
    /// Validation accuracy of every layer grown, including pruned ones.
    pub(crate) acc_history: Vec<f64>,
    pub(crate) stop_reason: StopReason,
}

/// The cascade over built-in learners; this is what gets saved and loaded.
pub type CascadeModel = Cascade<FittedModel>;

impl<M> Cascade<M> {
    pub fn layers(&self) -> &[LayerRecord<M>] {
        &self.layers
    }

    pub fn config(&self) -> &AgmConfig {
        &self.config
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn acc_history(&self) -> &[f64] {
        &self.acc_history
    }

    pub fn stop_reason(&self) -> StopReason {
        self.stop_reason
    }

    /// Number of layers grown before pruning.
    pub fn layers_grown(&self) -> usize {
        self.acc_history.len()
    }

    /// Whether entry `i` of `acc_history` belongs to a pruned layer.
    pub fn is_pruned(&self, i: usize) -> bool {
        i >= self.layers.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(LayerRecord::width).collect()
    }

    /// PCA component count per retained layer (`None` where no PCA ran).
    pub fn pca_ks(&self) -> Vec<Option<usize>> {
        self.layers
            .iter()
            .map(|l| l.pca.as_ref().map(PcaTransform::k))
            .collect()
    }
}

impl<M: Classifier> Cascade<M> {
    /// Checks the structural invariants, including the width arithmetic that
    /// links consecutive layers.
    pub fn validate(&self) -> Result<()> {
        let c = self.class_names.len();
        if self.layers.is_empty() {
            return Err(Error::Corrupt("cascade has no layers".into()));
        }
        if c == 0 {
            return Err(Error::Corrupt("cascade has no classes".into()));
        }
        if self.acc_history.len() < self.layers.len() {
            return Err(Error::Corrupt("accuracy history shorter than layer list".into()));
        }
        let block = self.config.feature_mode.block_width(c);
        let mut expected = self.n_features_in;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.models.is_empty() || layer.models.len() != layer.kinds.len() {
                return Err(Error::Corrupt(alloc::format!("layer {i} has no models")));
            }
            if layer.expected_input_width != expected {
                return Err(Error::Corrupt(alloc::format!(
                    "layer {i} expects {} input columns, previous layer produces {expected}",
                    layer.expected_input_width
                )));
            }
            if let Some(p) = &layer.pca {
                p.validate()?;
                if p.input_dim() != expected {
                    return Err(Error::Corrupt(alloc::format!(
                        "layer {i} PCA takes {} columns, expected {expected}",
                        p.input_dim()
                    )));
                }
            }
            let inner = layer.model_input_width();
            for m in &layer.models {
                if m.n_features_in() != inner || m.n_classes() != c {
                    return Err(Error::Corrupt(alloc::format!(
                        "layer {i} model shape ({} -> {}) does not match ({inner} -> {c})",
                        m.n_features_in(),
                        m.n_classes()
                    )));
                }
            }
            if !(0.0..=1.0).contains(&layer.val_accuracy) {
                return Err(Error::Corrupt(alloc::format!("layer {i} accuracy out of range")));
            }
            expected = inner + layer.width() * block;
        }
        Ok(())
    }

    /// Replays every layer on `x` and returns the soft-vote of the last one.
    pub fn predict_with_proba(&self, x: &Matrix) -> Result<(Vec<usize>, Matrix)> {
        x.expect_cols("cascade input columns", self.n_features_in)?;
        let mode = self.config.feature_mode;
        let mut current = x.clone();
        let mut feature_blocks: Vec<Matrix> = Vec::new();
        let mut vote_blocks: Vec<Matrix> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                current = augment_features(&current, &feature_blocks, mode)?;
            }
            if current.cols() != layer.expected_input_width {
                return Err(Error::Corrupt(alloc::format!(
                    "layer {i} received {} columns, recorded {}",
                    current.cols(),
                    layer.expected_input_width
                )));
            }
            if let Some(p) = &layer.pca {
                current = p.transform(&current)?;
            }
            let out = vote::forward(&layer.models, &current, mode)?;
            feature_blocks = out.features;
            vote_blocks = out.votes;
        }
        layer_vote(&vote_blocks)
    }
}

impl<M: Classifier> Classifier for Cascade<M> {
    fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    fn n_features_in(&self) -> usize {
        self.n_features_in
    }

    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.predict_with_proba(x).map(|(_, p)| p)
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.predict_with_proba(x).map(|(l, _)| l)
    }
}

impl CascadeModel {
    /// Reassembles a cascade from decoded parts and validates it.
    pub fn from_parts(
        layers: Vec<LayerRecord<FittedModel>>,
        config: AgmConfig,
        class_names: Vec<String>,
        n_features_in: usize,
        acc_history: Vec<f64>,
        stop_reason: StopReason,
    ) -> Result<Self> {
        config.validate().map_err(|e| Error::Corrupt(alloc::format!("{e}")))?;
        let m = Cascade {
            layers,
            config,
            class_names,
            n_features_in,
            acc_history,
            stop_reason,
        };
        m.validate()?;
        Ok(m)
    }
}

pub(crate) fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}
