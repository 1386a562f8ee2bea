//! Deep Gaussian Markov random fields on general graphs.

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod kv;
pub mod linalg;
pub mod logdet;
pub mod model;
pub mod posterior;
pub mod scalar;
pub mod vi;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Graph = graph::SparseGraph<f64>;
pub type Graph32 = graph::SparseGraph<f32>;
pub type Params = model::DgmrfParams<f64>;
pub type Params32 = model::DgmrfParams<f32>;
pub type Layer = model::LayerParams<f64>;
pub type Operator<'g> = model::DgmrfOperator<'g, f64>;
pub type VariationalParams = vi::VariationalParams<f64>;
pub type Preprocessed = logdet::Preprocess<f64>;
pub type Dataset = experiment::Dataset<f64>;
pub type Posterior = posterior::PosteriorSummary<f64>;
