//! Reference predictors and evaluation metrics.

mod igmrf;
mod lp;
mod metrics;

pub use igmrf::{
    igmrf_fit, igmrf_grid, igmrf_posterior, log_marginal_likelihood, GridCell, IgmrfGrid, IgmrfModel,
    IgmrfPrior, DEFAULT_EPSILON, DENSE_GRAPH_EPSILON,
};
pub use lp::label_propagation;
pub use metrics::{crps_gaussian, mae, mean_crps, rmse, MetricReport};
