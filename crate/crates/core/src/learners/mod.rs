//! From-scratch regressors behind a common prediction contract.

pub mod elastic_net;
pub mod fcnn;
pub mod forest;
pub mod gbm;
pub mod gnn;
pub mod mlp;
pub mod persist;
pub mod tree;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub use elastic_net::{fit_elastic_net, ElasticNetConfig, LinearModel};
pub use fcnn::{fit_fcnn, Fcnn, FcnnConfig};
pub use forest::{fit_random_forest, ForestConfig, RandomForest};
pub use gbm::{fit_gbm, Gbm, GbmConfig};
pub use gnn::{extract_gnnr, fit_gnn, GnnConfig, GnnModel, GraphPairs};
pub use persist::{load_model, model_from_str, model_to_string, save_model, FittedModel};
pub use tree::{fit_decision_tree, DecisionTree, TreeConfig};

/// Configuration of any learner that consumes fixed-width feature rows.
#[derive(Debug, Clone, PartialEq)]
pub enum TabularLearner<F> {
    ElasticNet(ElasticNetConfig<F>),
    Tree(TreeConfig),
    Forest(ForestConfig<F>),
    Gbm(GbmConfig<F>),
    Fcnn(FcnnConfig<F>),
}

impl<F: Scalar> TabularLearner<F> {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::ElasticNet(_) => "elastic_net",
            Self::Tree(_) => "tree",
            Self::Forest(_) => "forest",
            Self::Gbm(_) => "gbm",
            Self::Fcnn(_) => "fcnn",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::ElasticNet(c) => c.validate(),
            Self::Tree(c) => c.validate(),
            Self::Forest(c) => c.validate(),
            Self::Gbm(c) => c.validate(),
            Self::Fcnn(c) => c.validate(),
        }
    }

    pub fn fit(&self, x: &Matrix<F>, y: &[F]) -> Result<FittedModel<F>> {
        Ok(match self {
            Self::ElasticNet(c) => FittedModel::ElasticNet {
                config: c.clone(),
                model: fit_elastic_net(x, y, c)?,
            },
            Self::Tree(c) => FittedModel::Tree {
                config: c.clone(),
                model: fit_decision_tree(x, y, c)?,
            },
            Self::Forest(c) => FittedModel::Forest(fit_random_forest(x, y, c)?),
            Self::Gbm(c) => FittedModel::Gbm(fit_gbm(x, y, c)?),
            Self::Fcnn(c) => FittedModel::Fcnn(fit_fcnn(x, y, c)?),
        })
    }
}

/// A fitted model over fixed-width feature rows.
pub trait Regressor<F: Scalar> {
    fn n_features(&self) -> usize;

    /// Prediction for one row of width [`Regressor::n_features`].
    fn predict_row(&self, x: &[F]) -> F;

    fn predict(&self, x: &Matrix<F>) -> Result<Vec<F>> {
        if x.is_empty() {
            return Ok(Vec::new());
        }
        if x.cols() != self.n_features() {
            return Err(Error::Shape(format!(
                "model expects {} features, input has {}",
                self.n_features(),
                x.cols()
            )));
        }
        let out: Vec<F> = x.iter_rows().map(|r| self.predict_row(r)).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite prediction".into()));
        }
        Ok(out)
    }
}

pub(crate) fn check_xy<F: Scalar>(x: &Matrix<F>, y: &[F]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Shape("cannot fit on zero rows".into()));
    }
    Ok(())
}
