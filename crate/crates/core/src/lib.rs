//! Adaptive generation stacking cascade.
//!
//! A stacking ensemble that grows per layer in width (how many base models a
//! layer holds) and in depth (how many layers), with an optional PCA rotation
//! of the augmented feature space between layers.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, CSV ingestion
//! and the command line live in the companion `agm` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
mod math;
mod matrix;

pub mod cascade;
pub mod codec;
pub mod data;
pub mod learners;
pub mod pca;
pub mod seed;

pub use cascade::{
    augment_features, determine_width, fit_cascade, fit_two_layer_stacking, inner_split,
    layer_vote, AgmConfig, Cascade, CascadeModel, EvalOn, FeatureMode, LayerRecord, PcaFit,
    StackingModel, StopReason, Version, WidthProbeState,
};
pub use data::{Dataset, SplitPair};
pub use error::{Error, Result};
pub use learners::{Classifier, DefaultFactory, FittedModel, LearnerFactory, LearnerSpec};
pub use matrix::Matrix;
pub use pca::PcaTransform;
