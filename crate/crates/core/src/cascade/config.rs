use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::learners::LearnerSpec;

/// Ablation variant. `V1`: fixed width, no PCA. `V2`: fixed width with PCA.
/// `V3`: adaptive width with PCA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Version {
    V1,
    V2,
    V3,
}

impl Version {
    pub fn uses_pca(self) -> bool {
        matches!(self, Version::V2 | Version::V3)
    }

    pub fn adaptive_width(self) -> bool {
        matches!(self, Version::V3)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Version::V1 => "v1",
            Version::V2 => "v2",
            Version::V3 => "v3",
        }
    }
}

/// What a model contributes to the next layer's features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Full class-probability row (`C` columns per model).
    Probability,
    /// Predicted class id as one column per model.
    Label,
}

impl FeatureMode {
    pub fn block_width(self, n_classes: usize) -> usize {
        match self {
            FeatureMode::Probability => n_classes,
            FeatureMode::Label => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Probability => "probability",
            FeatureMode::Label => "label",
        }
    }
}

/// Rows the inter-layer PCA is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaFit {
    Train,
    /// Inner-train and inner-validation rows together.
    Joint,
}

impl PcaFit {
    pub fn as_str(self) -> &'static str {
        match self {
            PcaFit::Train => "train",
            PcaFit::Joint => "joint",
        }
    }
}

/// Rows a layer's accuracy is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalOn {
    Train,
    Val,
}

impl EvalOn {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalOn::Train => "train",
            EvalOn::Val => "val",
        }
    }
}

macro_rules! parse_enum {
    ($ty:ty, $what:literal, $($text:literal => $val:expr),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($val),)+
                    other => Err(Error::InvalidConfig(format!(
                        concat!("unknown ", $what, " {:?}"), other
                    ))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

parse_enum!(Version, "version", "v1" => Version::V1, "v2" => Version::V2, "v3" => Version::V3);
parse_enum!(FeatureMode, "feature mode",
    "probability" => FeatureMode::Probability, "label" => FeatureMode::Label);
parse_enum!(PcaFit, "PCA fit mode", "train" => PcaFit::Train, "joint" => PcaFit::Joint);
parse_enum!(EvalOn, "evaluation set", "train" => EvalOn::Train, "val" => EvalOn::Val);

#[derive(Debug, Clone, PartialEq)]
pub struct AgmConfig {
    pub version: Version,
    /// Models per layer when width is not adaptive.
    pub fixed_width: usize,
    /// Total number of equal-accuracy layers tolerated before growth stops.
    pub patience: usize,
    /// Pool each layer's models are drawn from, uniformly at random.
    pub base_model_set: Vec<LearnerSpec>,
    /// Model added per step of the width probe.
    pub probe_model: LearnerSpec,
    /// Model re-fitted on the probe-augmented features to score each step.
    pub val_model: LearnerSpec,
    pub val_fraction: f64,
    pub feature_mode: FeatureMode,
    pub pca_fit: PcaFit,
    pub eval_on: EvalOn,
    /// Keep the width probe's best accuracy across layers instead of resetting it.
    pub global_acc_w: bool,
    /// Use out-of-fold probe blocks on the training side of the width probe.
    pub probe_oof_folds: Option<usize>,
    pub max_layers: usize,
    pub max_width: usize,
    pub seed: u64,
}

impl Default for AgmConfig {
    fn default() -> Self {
        Self {
            version: Version::V3,
            fixed_width: 4,
            patience: 3,
            base_model_set: vec![
                LearnerSpec::RandomForest { n_trees: 100 },
                LearnerSpec::gbdt(100),
                LearnerSpec::ExtraTrees { n_trees: 100 },
            ],
            probe_model: LearnerSpec::RandomForest { n_trees: 100 },
            val_model: LearnerSpec::RandomForest { n_trees: 100 },
            val_fraction: 0.2,
            feature_mode: FeatureMode::Probability,
            pca_fit: PcaFit::Train,
            eval_on: EvalOn::Val,
            global_acc_w: false,
            probe_oof_folds: None,
            max_layers: 16,
            max_width: 16,
            seed: 0,
        }
    }
}

impl AgmConfig {
    pub fn with_version(version: Version) -> Self {
        Self {
            version,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fixed_width", self.fixed_width),
            ("patience", self.patience),
            ("max_layers", self.max_layers),
            ("max_width", self.max_width),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if self.base_model_set.is_empty() {
            return Err(Error::InvalidConfig("base model set is empty".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if let Some(k) = self.probe_oof_folds {
            if k < 2 {
                return Err(Error::InvalidConfig("probe_oof_folds must be at least 2".into()));
            }
        }
        Ok(())
    }
}
