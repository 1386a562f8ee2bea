//! Synthetic data, dataset persistence and end-to-end experiment runs.

mod dataset;
mod pipeline;
mod synth;

pub use dataset::{Dataset, Provenance, Recipe, Truth};
pub use pipeline::{
    data_hash, evaluate, infer, load_or_generate, prepare_logdet, run_baseline, run_experiment, run_sweep,
    summary_csv, tail_mean, true_posterior_report, BaselineModel, DataSource, ExperimentConfig, InferenceConfig,
    LogdetSettings, RunReport, Spread, SweepConfig, SweepRow, ELBO_TAIL,
};
pub use synth::{
    exact_posterior, generate, make_dense, make_mix, make_synth_dgmrf, mix_precision, sample_dgmrf_prior,
    SynthConfig, DEFAULT_TRUE_POSTERIOR_CAP, SYNTH_ALPHA, SYNTH_BETA, SYNTH_NOISE_STD,
};
