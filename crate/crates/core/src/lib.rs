//! Drug-pair synergy regression toolkit.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the bottom of this file fix the scalar for callers that do not
//! need the generality.

pub mod dataio;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod learners;
pub mod matrix;
pub mod molgraph;
pub mod scalar;
pub mod synthetic;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type RepresentationTable64 = dataio::RepresentationTable<f64>;
pub type RepresentationTable32 = dataio::RepresentationTable<f32>;
pub type SynergyInstance64 = dataio::SynergyInstance<f64>;
pub type SynergyInstance32 = dataio::SynergyInstance<f32>;
pub type AssembledDataset64 = dataio::AssembledDataset<f64>;
pub type AssembledDataset32 = dataio::AssembledDataset<f32>;
pub type LinearModel64 = learners::LinearModel<f64>;
pub type LinearModel32 = learners::LinearModel<f32>;
pub type DecisionTree64 = learners::DecisionTree<f64>;
pub type DecisionTree32 = learners::DecisionTree<f32>;
pub type RandomForest64 = learners::RandomForest<f64>;
pub type RandomForest32 = learners::RandomForest<f32>;
pub type Gbm64 = learners::Gbm<f64>;
pub type Gbm32 = learners::Gbm<f32>;
pub type Fcnn64 = learners::Fcnn<f64>;
pub type Fcnn32 = learners::Fcnn<f32>;
pub type GnnModel64 = learners::GnnModel<f64>;
pub type GnnModel32 = learners::GnnModel<f32>;
pub type FittedModel64 = learners::FittedModel<f64>;
pub type FittedModel32 = learners::FittedModel<f32>;
pub type EnsembleModel64 = ensemble::EnsembleModel<f64>;
pub type EnsembleModel32 = ensemble::EnsembleModel<f32>;
pub type EvalReport64 = eval::EvalReport<f64>;
pub type EvalReport32 = eval::EvalReport<f32>;
