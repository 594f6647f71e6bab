use alloc::vec::Vec;

use crate::cascade::FeatureMode;
use crate::error::{Error, Result};
use crate::learners::Classifier;
use crate::math::argmax;
use crate::matrix::Matrix;

/// Soft vote: mean of the probability blocks, then row-wise argmax with ties
/// to the lowest class id.
pub fn layer_vote(blocks: &[Matrix]) -> Result<(Vec<usize>, Matrix)> {
    let first = blocks.first().ok_or(Error::Empty("vote blocks"))?;
    let (n, c) = (first.rows(), first.cols());
    let mut mean = Matrix::zeros(n, c);
    for b in blocks {
        if b.rows() != n || b.cols() != c {
            return Err(Error::DimensionMismatch {
                what: "vote block size",
                expected: n * c,
                actual: b.rows() * b.cols(),
            });
        }
        for i in 0..n {
            for (m, v) in mean.row_mut(i).iter_mut().zip(b.row(i)) {
                *m += v;
            }
        }
    }
    let scale = blocks.len() as f64;
    for i in 0..n {
        mean.row_mut(i).iter_mut().for_each(|m| *m /= scale);
    }
    let labels = mean.iter_rows().map(argmax).collect();
    Ok((labels, mean))
}

/// `x` followed by each block's columns, in block order.
///
/// Label-mode blocks must be single columns; probability-mode blocks must all
/// share one width.
pub fn augment_features(x: &Matrix, blocks: &[Matrix], mode: FeatureMode) -> Result<Matrix> {
    if let Some(first) = blocks.first() {
        let width = match mode {
            FeatureMode::Label => 1,
            FeatureMode::Probability => first.cols(),
        };
        for b in blocks {
            if b.cols() != width {
                return Err(Error::DimensionMismatch {
                    what: "prediction block columns",
                    expected: width,
                    actual: b.cols(),
                });
            }
        }
    }
    let refs: Vec<&Matrix> = blocks.iter().collect();
    x.hstack(&refs)
}

pub(crate) fn one_hot(labels: &[usize], n_classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), n_classes);
    for (i, &l) in labels.iter().enumerate() {
        m.set(i, l, 1.0);
    }
    m
}

pub(crate) fn label_column(labels: &[usize]) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), 1);
    for (i, &l) in labels.iter().enumerate() {
        m.set(i, 0, l as f64);
    }
    m
}

/// Feature blocks (fed forward) and vote blocks (voted on) of a set of models.
pub(crate) struct LayerOutput {
    pub features: Vec<Matrix>,
    pub votes: Vec<Matrix>,
}

pub(crate) fn model_blocks<M: Classifier>(
    model: &M,
    x: &Matrix,
    mode: FeatureMode,
) -> Result<(Matrix, Matrix)> {
    Ok(proba_blocks(model.predict_proba(x)?, mode))
}

/// (feature block, vote block) derived from a probability matrix.
pub(crate) fn proba_blocks(proba: Matrix, mode: FeatureMode) -> (Matrix, Matrix) {
    match mode {
        FeatureMode::Probability => (proba.clone(), proba),
        FeatureMode::Label => {
            let labels: Vec<usize> = proba.iter_rows().map(argmax).collect();
            (label_column(&labels), one_hot(&labels, proba.cols()))
        }
    }
}

/// Shared by training and replay so both see bit-identical blocks.
pub(crate) fn forward<M: Classifier>(
    models: &[M],
    x: &Matrix,
    mode: FeatureMode,
) -> Result<LayerOutput> {
    let mut features = Vec::with_capacity(models.len());
    let mut votes = Vec::with_capacity(models.len());
    for m in models {
        let (f, v) = model_blocks(m, x, mode)?;
        features.push(f);
        votes.push(v);
    }
    Ok(LayerOutput { features, votes })
}
