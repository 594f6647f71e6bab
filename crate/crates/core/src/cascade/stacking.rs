use alloc::vec::Vec;

use crate::data::{stratified_folds, Dataset};
use crate::error::{Error, Result};
use crate::learners::{
    fit_softmax_regression, Classifier, DefaultFactory, FittedModel, LearnerFactory, LearnerSpec,
    SoftmaxConfig, SoftmaxRegression,
};
use crate::matrix::Matrix;
use crate::seed::{derive, stream};

/// Out-of-fold probabilities: every row is predicted by a model fitted on the
/// folds that do not contain it.
pub fn out_of_fold_proba<F: LearnerFactory>(
    factory: &F,
    spec: &LearnerSpec,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    folds: usize,
    seed: u64,
) -> Result<Matrix> {
    let assignment = stratified_folds(y, n_classes, folds, derive(seed, stream::FOLDS, 0))?;
    let mut out = Matrix::zeros(x.rows(), n_classes);
    for f in 0..folds {
        let (held, fit_rows): (Vec<usize>, Vec<usize>) =
            (0..x.rows()).partition(|&i| assignment[i] == f);
        let fit_y: Vec<usize> = fit_rows.iter().map(|&i| y[i]).collect();
        let model = factory.fit(
            spec,
            &x.select_rows(&fit_rows),
            &fit_y,
            n_classes,
            derive(seed, stream::OOF_FIT, f as u64),
        )?;
        let p = model.predict_proba(&x.select_rows(&held))?;
        for (r, &i) in held.iter().enumerate() {
            out.row_mut(i).copy_from_slice(p.row(r));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackingConfig {
    pub folds: usize,
    pub base: LearnerSpec,
    pub meta: SoftmaxConfig,
    pub seed: u64,
}

impl Default for StackingConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            base: LearnerSpec::gbdt(100),
            meta: SoftmaxConfig::default(),
            seed: 0,
        }
    }
}

/// Base learner whose out-of-fold probabilities, appended to the original
/// features, train a softmax regression on top.
#[derive(Debug, Clone, PartialEq)]
pub struct StackingModel {
    pub base: FittedModel,
    pub meta: SoftmaxRegression,
}

impl Classifier for StackingModel {
    fn n_classes(&self) -> usize {
        self.meta.n_classes()
    }

    fn n_features_in(&self) -> usize {
        self.base.n_features_in()
    }

    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        let block = self.base.predict_proba(x)?;
        self.meta.predict_proba(&x.hstack(&[&block])?)
    }
}

pub fn fit_two_layer_stacking(train: &Dataset, config: &StackingConfig) -> Result<StackingModel> {
    if config.folds < 2 {
        return Err(Error::InvalidConfig("stacking needs at least 2 folds".into()));
    }
    let (x, y, c) = (train.features(), train.labels(), train.n_classes());
    let oof = out_of_fold_proba(&DefaultFactory, &config.base, x, y, c, config.folds, config.seed)?;
    let meta = fit_softmax_regression(&x.hstack(&[&oof])?, y, c, &config.meta)?;
    let base = DefaultFactory.fit(&config.base, x, y, c, derive(config.seed, stream::MODEL_FIT, 0))?;
    Ok(StackingModel { base, meta })
}
