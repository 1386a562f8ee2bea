use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::adam::{AdamConfig, AdamState};
use super::elbo::{elbo_with_noise, mc_noise, Observations, ParamLayout};
use super::variational::VariationalParams;
use crate::error::{Error, Result};
use crate::graph::{ObservationMask, SparseGraph};
use crate::kv::{KvFile, KvWriter};
use crate::linalg::Purpose;
use crate::logdet::{LogdetBackend, Preprocess};
use crate::model::{DgmrfParams, LayerParams};
use crate::scalar::Scalar;

/// `theta3` magnitude used to pin `gamma` at 0 or 1.
pub const SATURATED_THETA3: f64 = 30.0;

/// Whether `gamma` is learned or held at a fixed value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaMode {
    Trainable,
    /// Frozen `gamma`; 0 and 1 are reached through a saturated sigmoid.
    Fixed(f64),
}

impl GammaMode {
    pub fn initial_theta3(&self) -> f64 {
        match *self {
            GammaMode::Trainable => 0.0,
            GammaMode::Fixed(g) => {
                let logit = (g / (1.0 - g)).ln();
                logit.clamp(-SATURATED_THETA3, SATURATED_THETA3)
            }
        }
    }
}

impl fmt::Display for GammaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaMode::Trainable => f.write_str("trainable"),
            GammaMode::Fixed(g) => write!(f, "{g}"),
        }
    }
}

impl FromStr for GammaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "trainable" {
            return Ok(GammaMode::Trainable);
        }
        match s.parse::<f64>() {
            Ok(g) if (0.0..=1.0).contains(&g) => Ok(GammaMode::Fixed(g)),
            _ => Err(Error::Validation(format!("gamma must be 'trainable' or a value in [0, 1], got '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub n_mc_samples: usize,
    pub logdet_backend: LogdetBackend,
    pub seed: u64,
    pub layers: usize,
    pub vi_layers: usize,
    pub gamma: GammaMode,
    /// Invoke the checkpoint callback every this many iterations (0 = never).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 50_000,
            learning_rate: 0.01,
            n_mc_samples: 10,
            logdet_backend: LogdetBackend::Eigen,
            seed: 0,
            layers: 1,
            vi_layers: 1,
            gamma: GammaMode::Trainable,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.n_mc_samples == 0 || self.layers == 0 {
            return Err(Error::Validation(
                "iterations, n_mc_samples and layers must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Validation("learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Reads the training keys of a `key=value` file; unknown keys are left
    /// for the caller.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            iterations: kv.get_or("iterations", d.iterations)?,
            learning_rate: kv.get_or("lr", d.learning_rate)?,
            n_mc_samples: kv.get_or("n_mc_samples", d.n_mc_samples)?,
            logdet_backend: kv.get_or("logdet_backend", d.logdet_backend)?,
            seed: kv.get_or("seed", d.seed)?,
            layers: kv.get_or("layers", d.layers)?,
            vi_layers: kv.get_or("vi_layers", d.vi_layers)?,
            gamma: kv.get_or("gamma", d.gamma)?,
            checkpoint_every: kv.get_or("checkpoint_every", d.checkpoint_every)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write_kv(&self, w: &mut KvWriter) {
        w.put("iterations", self.iterations)
            .put("lr", self.learning_rate)
            .put("n_mc_samples", self.n_mc_samples)
            .put("logdet_backend", self.logdet_backend)
            .put("seed", self.seed)
            .put("layers", self.layers)
            .put("vi_layers", self.vi_layers)
            .put("gamma", self.gamma)
            .put("checkpoint_every", self.checkpoint_every);
    }
}

/// Model parameters at their initial values for `config`.
pub fn init_params<T: Scalar>(config: &TrainConfig) -> Result<DgmrfParams<T>> {
    let layer = LayerParams {
        theta3: T::lit(config.gamma.initial_theta3()),
        ..LayerParams::zeroed()
    };
    DgmrfParams::new(vec![layer; config.layers], T::zero())
}

#[derive(Clone, Debug)]
pub struct TrainResult<T> {
    pub params: DgmrfParams<T>,
    pub vp: VariationalParams<T>,
    /// Per-node ELBO estimate of every iteration, taken before its update.
    pub elbo_trace: Vec<T>,
}

/// Snapshot handed to the progress callback.
pub struct Progress<'a, T> {
    pub iteration: usize,
    pub elbo: T,
    pub params: &'a DgmrfParams<T>,
    pub vp: &'a VariationalParams<T>,
}

fn describe<T: Scalar>(params: &DgmrfParams<T>) -> String {
    let mut s = format!("sigma={}", params.sigma());
    for (l, p) in params.layers.iter().enumerate() {
        let c = p.coefficients();
        let _ = write!(s, "; layer {l}: alpha={} beta={} gamma={} b={}", c.alpha, c.beta, c.gamma, p.bias);
    }
    s
}

/// Maximizes the ELBO with Adam from the default initialization.
pub fn train<T: Scalar>(
    g: &SparseGraph<T>,
    y: &[T],
    mask: &ObservationMask,
    pre: &Preprocess<T>,
    config: &TrainConfig,
) -> Result<TrainResult<T>> {
    let params = init_params(config)?;
    let vp = VariationalParams::init(y, mask, config.vi_layers)?;
    train_from(g, y, mask, pre, config, params, vp, |_| Ok(()))
}

/// Training loop from given starting parameters. `on_checkpoint` runs every
/// `config.checkpoint_every` iterations and after the last one.
#[allow(clippy::too_many_arguments)]
pub fn train_from<T: Scalar>(
    g: &SparseGraph<T>,
    y: &[T],
    mask: &ObservationMask,
    pre: &Preprocess<T>,
    config: &TrainConfig,
    params: DgmrfParams<T>,
    vp: VariationalParams<T>,
    mut on_checkpoint: impl FnMut(&Progress<'_, T>) -> Result<()>,
) -> Result<TrainResult<T>> {
    config.validate()?;
    pre.expect_backend(config.logdet_backend)?;
    pre.check_graph(g)?;
    let layout = ParamLayout::of(&params, &vp);
    let mut flat = layout.flatten(&params, &vp);
    let frozen: Vec<usize> = match config.gamma {
        GammaMode::Trainable => Vec::new(),
        GammaMode::Fixed(_) => (0..layout.n_layers).map(|l| layout.layer(l).start + 2).collect(),
    };
    let mut adam = AdamState::new(
        layout.len(),
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let obs = Observations { y, mask };
    let mut trace = Vec::with_capacity(config.iterations);
    let (mut cur_params, mut cur_vp) = (params, vp);
    for it in 0..config.iterations {
        let noise = mc_noise(g.n_nodes(), config.n_mc_samples, config.seed, Purpose::TrainingMc, it as u64);
        let ev = match elbo_with_noise(g, &cur_params, &cur_vp, obs, pre, &noise, true) {
            Ok(ev) => ev,
            Err(Error::Numeric(reason)) => {
                return Err(Error::Diverged {
                    iteration: it,
                    reason: format!("{reason}; last finite parameters: {}", describe(&cur_params)),
                })
            }
            Err(e) => return Err(e),
        };
        trace.push(ev.terms.total);
        let mut grad: Vec<T> = ev.grad.iter().map(|&v| -v).collect();
        for &i in &frozen {
            grad[i] = T::zero();
        }
        adam.step(&mut flat, &grad)?;
        let next = layout.unflatten(&flat)?;
        cur_params = next.0;
        cur_vp = next.1;
        let last = it + 1 == config.iterations;
        if last || (config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0) {
            on_checkpoint(&Progress {
                iteration: it + 1,
                elbo: ev.terms.total,
                params: &cur_params,
                vp: &cur_vp,
            })?;
        }
    }
    Ok(TrainResult {
        params: cur_params,
        vp: cur_vp,
        elbo_trace: trace,
    })
}

/// Moving average over a trailing window (shorter at the start).
pub fn smoothed<T: Scalar>(trace: &[T], window: usize) -> Vec<T> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(trace.len());
    let mut acc = T::zero();
    for i in 0..trace.len() {
        acc += trace[i];
        if i >= window {
            acc -= trace[i - window];
        }
        out.push(acc / T::from_count(window.min(i + 1)));
    }
    out
}

/// ELBO trace as CSV `iteration,elbo` (1-based iterations).
pub fn write_elbo_trace<T: Scalar>(path: impl AsRef<Path>, trace: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("iteration,elbo\n");
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, v);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
