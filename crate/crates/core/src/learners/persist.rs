//! Versioned JSON model files.
//!
//! A file is one JSON object: `format`, `version`, `scalar`, `kind`, `seed`
//! and the model (config echo plus exact weights). Floats are written in
//! shortest round-trip form and parsed back bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::elastic_net::{ElasticNetConfig, LinearModel};
use super::fcnn::Fcnn;
use super::forest::RandomForest;
use super::gbm::Gbm;
use super::gnn::GnnModel;
use super::tree::{DecisionTree, TreeConfig};
use super::Regressor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_FORMAT: &str = "synergy-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar", rename_all = "snake_case")]
pub enum FittedModel<F> {
    ElasticNet {
        config: ElasticNetConfig<F>,
        model: LinearModel<F>,
    },
    Tree {
        config: TreeConfig,
        model: DecisionTree<F>,
    },
    Forest(RandomForest<F>),
    Gbm(Gbm<F>),
    Fcnn(Fcnn<F>),
    Gnn(GnnModel<F>),
}

impl<F: Scalar> FittedModel<F> {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::ElasticNet { .. } => "elastic_net",
            Self::Tree { .. } => "tree",
            Self::Forest(_) => "forest",
            Self::Gbm(_) => "gbm",
            Self::Fcnn(_) => "fcnn",
            Self::Gnn(_) => "gnn",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Forest(m) => m.config.seed,
            Self::Fcnn(m) => m.config.seed,
            Self::Gnn(m) => m.config.seed,
            _ => 0,
        }
    }

    /// The row-wise predictor, for every kind except the graph network.
    pub fn as_regressor(&self) -> Option<&dyn Regressor<F>> {
        match self {
            Self::ElasticNet { model, .. } => Some(model),
            Self::Tree { model, .. } => Some(model),
            Self::Forest(m) => Some(m),
            Self::Gbm(m) => Some(m),
            Self::Fcnn(m) => Some(m),
            Self::Gnn(_) => None,
        }
    }
}

#[derive(Serialize)]
#[serde(bound = "F: Scalar")]
struct ModelFileOut<'a, F> {
    format: &'static str,
    version: u32,
    scalar: &'static str,
    kind: &'static str,
    seed: u64,
    model: &'a FittedModel<F>,
}

#[derive(Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
    scalar: String,
    kind: String,
}

#[derive(Deserialize)]
#[serde(bound = "F: Scalar")]
struct ModelFileIn<F> {
    model: FittedModel<F>,
}

pub fn model_to_string<F: Scalar>(model: &FittedModel<F>) -> String {
    let out = ModelFileOut {
        format: MODEL_FORMAT,
        version: MODEL_VERSION,
        scalar: F::NAME,
        kind: model.kind(),
        seed: model.seed(),
        model,
    };
    serde_json::to_string(&out).expect("model types serialize infallibly")
}

pub fn model_from_str<F: Scalar>(text: &str) -> Result<FittedModel<F>> {
    let header: ModelHeader = serde_json::from_str(text).map_err(|e| Error::Model(format!("bad header: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(Error::Model(format!("unknown format `{}`", header.format)));
    }
    if header.version != MODEL_VERSION {
        return Err(Error::Model(format!("unsupported version {}", header.version)));
    }
    if header.scalar != F::NAME {
        return Err(Error::Model(format!(
            "file holds {} weights, expected {}",
            header.scalar,
            F::NAME
        )));
    }
    let body: ModelFileIn<F> = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
    if body.model.kind() != header.kind {
        return Err(Error::Model(format!(
            "header kind `{}` does not match body `{}`",
            header.kind,
            body.model.kind()
        )));
    }
    Ok(body.model)
}

pub fn save_model<F: Scalar>(model: &FittedModel<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model<F: Scalar>(path: impl AsRef<Path>) -> Result<FittedModel<F>> {
    let path = path.as_ref();
    model_from_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
