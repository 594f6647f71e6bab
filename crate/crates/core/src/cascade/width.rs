use crate::cascade::stacking::out_of_fold_proba;
use crate::cascade::vote::{augment_features, model_blocks, proba_blocks};
use crate::cascade::{accuracy, AgmConfig};
use crate::error::Result;
use crate::learners::{Classifier, LearnerFactory};
use crate::matrix::Matrix;
use crate::seed::{derive, stream};

/// Probe loop state: best validation accuracy so far and accepted steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WidthProbeState {
    pub best_acc: f64,
    pub width: usize,
}

/// Counts how many probe models keep improving the validation model.
///
/// Step `i` fits `config.probe_model` on the current training features,
/// appends its prediction block to both sides, refits `config.val_model` on
/// the augmented training rows and scores it on the validation rows. The step
/// is accepted while the score strictly beats `state.best_acc`. Stops early at
/// `config.max_width` accepted steps. Returns at least 1.
///
/// `state.best_acc` starts from 0 unless `config.global_acc_w` is set, in which
/// case it carries over from the previous call.
#[allow(clippy::too_many_arguments)]
pub fn determine_width<F: LearnerFactory>(
    factory: &F,
    train_x: &Matrix,
    train_y: &[usize],
    val_x: &Matrix,
    val_y: &[usize],
    n_classes: usize,
    config: &AgmConfig,
    state: &mut WidthProbeState,
    seed: u64,
) -> Result<usize> {
    if !config.global_acc_w {
        state.best_acc = 0.0;
    }
    let mode = config.feature_mode;
    let mut tr = train_x.clone();
    let mut va = val_x.clone();
    let mut i = 0;
    while i < config.max_width {
        let step = i as u64;
        let probe_seed = derive(seed, stream::WIDTH_PROBE, 2 * step);
        let probe = factory.fit(&config.probe_model, &tr, train_y, n_classes, probe_seed)?;
        let train_block = match config.probe_oof_folds {
            Some(folds) => {
                let oof = out_of_fold_proba(
                    factory,
                    &config.probe_model,
                    &tr,
                    train_y,
                    n_classes,
                    folds,
                    probe_seed,
                )?;
                proba_blocks(oof, mode).0
            }
            None => model_blocks(&probe, &tr, mode)?.0,
        };
        let val_block = model_blocks(&probe, &va, mode)?.0;
        tr = augment_features(&tr, &[train_block], mode)?;
        va = augment_features(&va, &[val_block], mode)?;

        let val_seed = derive(seed, stream::WIDTH_PROBE, 2 * step + 1);
        let h = factory.fit(&config.val_model, &tr, train_y, n_classes, val_seed)?;
        let acc = accuracy(&h.predict(&va)?, val_y);
        if acc > state.best_acc {
            state.best_acc = acc;
            i += 1;
        } else {
            break;
        }
    }
    state.width = i;
    Ok(i.max(1))
}
