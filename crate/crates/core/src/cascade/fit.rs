use alloc::vec::Vec;

use rand::Rng as _;

use crate::cascade::vote::{augment_features, forward, layer_vote};
use crate::cascade::width::{determine_width, WidthProbeState};
use crate::cascade::{accuracy, AgmConfig, Cascade, CascadeModel, EvalOn, LayerRecord, PcaFit, StopReason};
use crate::data::{stratified_split, Dataset, SplitPair};
use crate::error::Result;
use crate::learners::{DefaultFactory, LearnerFactory};
use crate::matrix::Matrix;
use crate::pca::{fit_pca, sample_k};
use crate::seed::{derive, stream, stream_rng};

/// The inner-train / inner-validation partition that drives width and depth.
pub fn inner_split(train: &Dataset, config: &AgmConfig) -> Result<SplitPair> {
    stratified_split(train, config.val_fraction, derive(config.seed, stream::INNER_SPLIT, 0))
}

pub fn fit_cascade(train: &Dataset, config: &AgmConfig) -> Result<CascadeModel> {
    fit_cascade_with(&DefaultFactory, train, config)
}

/// Grows the cascade layer by layer until validation accuracy drops, the
/// patience budget runs out, or `max_layers` is reached, then drops every
/// layer after the earliest best one.
pub fn fit_cascade_with<F: LearnerFactory>(
    factory: &F,
    train: &Dataset,
    config: &AgmConfig,
) -> Result<Cascade<F::Model>> {
    config.validate()?;
    let split = inner_split(train, config)?;
    let c = train.n_classes();
    let mode = config.feature_mode;
    let seed = config.seed;
    let (y_tr, y_va) = (split.train.labels(), split.holdout.labels());
    let mut x_tr = split.train.features().clone();
    let mut x_va = split.holdout.features().clone();

    let mut layers: Vec<LayerRecord<F::Model>> = Vec::new();
    let mut acc_history: Vec<f64> = Vec::new();
    let mut prev_blocks: Option<(Vec<Matrix>, Vec<Matrix>)> = None;
    let mut probe_state = WidthProbeState::default();
    let mut patience = config.patience;
    let mut n: u64 = 0;

    let stop_reason = loop {
        if let Some((bt, bv)) = prev_blocks.take() {
            x_tr = augment_features(&x_tr, &bt, mode)?;
            x_va = augment_features(&x_va, &bv, mode)?;
        }
        let expected_input_width = x_tr.cols();

        let pca = if n > 0 && config.version.uses_pca() {
            let k = sample_k(x_tr.cols(), &mut stream_rng(seed, stream::PCA_K, n));
            let p = match config.pca_fit {
                PcaFit::Train => fit_pca(&x_tr, k)?,
                PcaFit::Joint => fit_pca(&x_tr.vstack(&x_va)?, k)?,
            };
            x_tr = p.transform(&x_tr)?;
            x_va = p.transform(&x_va)?;
            Some(p)
        } else {
            None
        };

        let width = if config.version.adaptive_width() {
            determine_width(
                factory,
                &x_tr,
                y_tr,
                &x_va,
                y_va,
                c,
                config,
                &mut probe_state,
                derive(seed, stream::WIDTH_PROBE, n),
            )?
        } else {
            config.fixed_width
        };

        let mut kind_rng = stream_rng(seed, stream::MODEL_KIND, n);
        let mut models = Vec::with_capacity(width);
        let mut kinds = Vec::with_capacity(width);
        for j in 0..width as u64 {
            let spec = config.base_model_set[kind_rng.gen_range(0..config.base_model_set.len())];
            let fit_seed = derive(seed, stream::MODEL_FIT, (n << 32) | j);
            models.push(factory.fit(&spec, &x_tr, y_tr, c, fit_seed)?);
            kinds.push(spec);
        }

        let out_tr = forward(&models, &x_tr, mode)?;
        let out_va = forward(&models, &x_va, mode)?;
        let acc = match config.eval_on {
            EvalOn::Val => accuracy(&layer_vote(&out_va.votes)?.0, y_va),
            EvalOn::Train => accuracy(&layer_vote(&out_tr.votes)?.0, y_tr),
        };
        prev_blocks = Some((out_tr.features, out_va.features));
        layers.push(LayerRecord {
            models,
            kinds,
            pca,
            expected_input_width,
            val_accuracy: acc,
        });
        acc_history.push(acc);

        if n > 0 {
            let prev = acc_history[acc_history.len() - 2];
            if acc < prev {
                break StopReason::Drop;
            }
            if acc == prev {
                patience -= 1;
                if patience == 0 {
                    break StopReason::Patience;
                }
            }
        }
        if layers.len() >= config.max_layers {
            break StopReason::Cap;
        }
        n += 1;
    };

    layers.truncate(earliest_max(&acc_history) + 1);
    Ok(Cascade {
        layers,
        config: config.clone(),
        class_names: train.class_names().to_vec(),
        n_features_in: train.n_features(),
        acc_history,
        stop_reason,
    })
}

fn earliest_max(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &a) in v.iter().enumerate() {
        if a > v[best] {
            best = i;
        }
    }
    best
}
