//! Least-squares gradient boosting with regression-tree stages.

use serde::{Deserialize, Serialize};

use super::tree::{fit_decision_tree, DecisionTree, TreeConfig};
use super::{check_xy, Regressor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{mean, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct GbmConfig<F> {
    pub n_estimators: usize,
    pub learning_rate: F,
    pub tree: TreeConfig,
}

impl<F: Scalar> Default for GbmConfig<F> {
    fn default() -> Self {
        Self {
            n_estimators: 1000,
            learning_rate: F::of(0.05),
            tree: TreeConfig::new(6),
        }
    }
}

impl<F: Scalar> GbmConfig<F> {
    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        if !(self.learning_rate > F::zero() && self.learning_rate <= F::one()) {
            return Err(Error::Argument("learning_rate must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Gbm<F> {
    pub config: GbmConfig<F>,
    base: F,
    stages: Vec<DecisionTree<F>>,
    n_features: usize,
}

impl<F: Scalar> Gbm<F> {
    pub fn base(&self) -> F {
        self.base
    }

    pub fn stages(&self) -> &[DecisionTree<F>] {
        &self.stages
    }
}

impl<F: Scalar> Regressor<F> for Gbm<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    // Same accumulation order as training, so training predictions are
    // reproduced bit for bit.
    fn predict_row(&self, x: &[F]) -> F {
        let lr = self.config.learning_rate;
        self.stages.iter().fold(self.base, |acc, t| acc + lr * t.predict_row(x))
    }
}

#[derive(Debug, Clone)]
pub struct GbmFit<F> {
    pub model: Gbm<F>,
    /// Training MSE after 0, 1, ..., n_estimators stages.
    pub train_mse: Vec<F>,
}

pub fn fit_gbm<F: Scalar>(x: &Matrix<F>, y: &[F], cfg: &GbmConfig<F>) -> Result<Gbm<F>> {
    fit_gbm_traced(x, y, cfg).map(|f| f.model)
}

pub fn fit_gbm_traced<F: Scalar>(x: &Matrix<F>, y: &[F], cfg: &GbmConfig<F>) -> Result<GbmFit<F>> {
    cfg.validate()?;
    check_xy(x, y)?;
    let base = mean(y);
    let mut pred = vec![base; y.len()];
    let mse = |pred: &[F]| crate::scalar::sum_sq_diff(pred, y) / F::of_usize(y.len());
    let mut train_mse = vec![mse(&pred)];
    let mut stages = Vec::with_capacity(cfg.n_estimators);
    let mut resid = vec![F::zero(); y.len()];
    for stage in 0..cfg.n_estimators {
        for ((r, &t), &p) in resid.iter_mut().zip(y).zip(&pred) {
            *r = t - p;
        }
        let tree = fit_decision_tree(x, &resid, &cfg.tree)?;
        for (p, row) in pred.iter_mut().zip(x.iter_rows()) {
            *p += cfg.learning_rate * tree.predict_row(row);
        }
        let m = mse(&pred);
        if !m.is_finite() {
            return Err(Error::Numeric(format!(
                "training MSE not finite after stage {}",
                stage + 1
            )));
        }
        train_mse.push(m);
        stages.push(tree);
    }
    Ok(GbmFit {
        model: Gbm {
            config: cfg.clone(),
            base,
            stages,
            n_features: x.cols(),
        },
        train_mse,
    })
}
