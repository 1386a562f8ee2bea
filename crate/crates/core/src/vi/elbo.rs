use std::f64::consts::PI;
use std::ops::Range;

use super::variational::VariationalParams;
use crate::autodiff::{Tape, Var};
use crate::error::{check_len, Error, Result};
use crate::graph::{ObservationMask, SparseGraph};
use crate::linalg::{standard_normal, Purpose, SeedStreams};
use crate::logdet::{layer_logdet_grad, LogdetBackend, Preprocess};
use crate::model::{DgmrfParams, LayerParams};
use crate::scalar::Scalar;

/// Position of every free parameter in the flat vector used by the optimizer:
/// model layers `(theta1, theta2, theta3, b)`, `theta_sigma`, variational
/// layers `(theta1, theta2, theta3)`, then `nu`, `log xi`, `log tau`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub n_nodes: usize,
    pub n_layers: usize,
    pub n_vi_layers: usize,
}

impl ParamLayout {
    pub fn of<T: Scalar>(params: &DgmrfParams<T>, vp: &VariationalParams<T>) -> Self {
        ParamLayout {
            n_nodes: vp.n_nodes(),
            n_layers: params.n_layers(),
            n_vi_layers: vp.vi_layers.len(),
        }
    }

    pub fn len(&self) -> usize {
        4 * self.n_layers + 1 + 3 * self.n_vi_layers + 3 * self.n_nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn layer(&self, l: usize) -> Range<usize> {
        4 * l..4 * l + 4
    }

    pub fn theta_sigma(&self) -> usize {
        4 * self.n_layers
    }

    pub fn vi_layer(&self, l: usize) -> Range<usize> {
        let s = 4 * self.n_layers + 1 + 3 * l;
        s..s + 3
    }

    fn vec_start(&self) -> usize {
        4 * self.n_layers + 1 + 3 * self.n_vi_layers
    }

    pub fn nu(&self) -> Range<usize> {
        let s = self.vec_start();
        s..s + self.n_nodes
    }

    pub fn log_xi(&self) -> Range<usize> {
        let s = self.vec_start() + self.n_nodes;
        s..s + self.n_nodes
    }

    pub fn log_tau(&self) -> Range<usize> {
        let s = self.vec_start() + 2 * self.n_nodes;
        s..s + self.n_nodes
    }

    pub fn flatten<T: Scalar>(&self, params: &DgmrfParams<T>, vp: &VariationalParams<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        for p in &params.layers {
            out.extend([p.theta1, p.theta2, p.theta3, p.bias]);
        }
        out.push(params.theta_sigma);
        for p in &vp.vi_layers {
            out.extend([p.theta1, p.theta2, p.theta3]);
        }
        out.extend_from_slice(&vp.nu);
        out.extend_from_slice(&vp.log_xi);
        out.extend_from_slice(&vp.log_tau);
        out
    }

    pub fn unflatten<T: Scalar>(&self, flat: &[T]) -> Result<(DgmrfParams<T>, VariationalParams<T>)> {
        check_len(self.len(), flat.len())?;
        let layers = (0..self.n_layers)
            .map(|l| {
                let s = &flat[self.layer(l)];
                LayerParams {
                    theta1: s[0],
                    theta2: s[1],
                    theta3: s[2],
                    bias: s[3],
                }
            })
            .collect();
        let vi_layers = (0..self.n_vi_layers)
            .map(|l| {
                let s = &flat[self.vi_layer(l)];
                LayerParams {
                    theta1: s[0],
                    theta2: s[1],
                    theta3: s[2],
                    bias: T::zero(),
                }
            })
            .collect();
        Ok((
            DgmrfParams::new(layers, flat[self.theta_sigma()])?,
            VariationalParams {
                nu: flat[self.nu()].to_vec(),
                log_xi: flat[self.log_xi()].to_vec(),
                log_tau: flat[self.log_tau()].to_vec(),
                vi_layers,
            },
        ))
    }
}

/// Observed data the ELBO conditions on.
#[derive(Clone, Copy, Debug)]
pub struct Observations<'a, T> {
    pub y: &'a [T],
    pub mask: &'a ObservationMask,
}

/// The ELBO split into its terms, each already divided by `N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms<T> {
    /// MC estimate of `-1/2 E[g(x)^T g(x)]`.
    pub prior_quadratic: T,
    /// MC estimate of `-1/2 sigma^{-2} E[(y - x)^T I_m (y - x)]`.
    pub likelihood_quadratic: T,
    pub logdet_g: T,
    /// `-M log sigma`.
    pub noise_log_det: T,
    pub entropy: T,
    /// Sum of the terms above: the per-node ELBO without constants.
    pub total: T,
}

/// Per-node ELBO and its gradient in [`ParamLayout`] order.
#[derive(Clone, Debug)]
pub struct ElboEvaluation<T> {
    pub terms: ElboTerms<T>,
    pub grad: Vec<T>,
}

/// The constants dropped from the ELBO: `-M/2 log(2 pi) + N/2` (the prior
/// and entropy `log(2 pi)` terms cancel). Adding this to `N * per_node_elbo`
/// gives the ELBO on the scale of `log p(y_m)`.
pub fn elbo_constant(n_nodes: usize, m_observed: usize) -> f64 {
    -(m_observed as f64) / 2.0 * (2.0 * PI).ln() + n_nodes as f64 / 2.0
}

struct LayerVars {
    theta: [Var; 3],
    bias: Option<Var>,
}

fn tape_layer<T: Scalar>(t: &mut Tape<'_, T>, lv: &LayerVars, h: Var) -> Result<Var> {
    let alpha = t.exp(lv.theta[0])?;
    let ratio = t.tanh(lv.theta[1])?;
    let beta = t.mul(alpha, ratio)?;
    let gamma = t.sigmoid(lv.theta[2])?;
    let dg = t.degree_pow(gamma, T::zero())?;
    let dg1 = t.degree_pow(gamma, -T::one())?;
    let self_coef = t.mul(alpha, dg)?;
    let nb_coef = t.mul(beta, dg1)?;
    let s = t.mul(self_coef, h)?;
    let ah = t.adjacency(h)?;
    let nb = t.mul(nb_coef, ah)?;
    let out = t.add(s, nb)?;
    match lv.bias {
        Some(b) => t.add(out, b),
        None => Ok(out),
    }
}

fn check_term<T: Scalar>(name: &str, v: T) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("ELBO term '{name}' is {v}")))
    }
}

/// ELBO for fixed standard-normal noise `noise` (length `n * S`, one block
/// per MC sample), with reverse-mode gradients when `with_grad`.
pub fn elbo_with_noise<T: Scalar>(
    g: &SparseGraph<T>,
    params: &DgmrfParams<T>,
    vp: &VariationalParams<T>,
    obs: Observations<'_, T>,
    pre: &Preprocess<T>,
    noise: &[T],
    with_grad: bool,
) -> Result<ElboEvaluation<T>> {
    let n = g.n_nodes();
    check_len(n, obs.y.len())?;
    check_len(n, obs.mask.len())?;
    vp.validate()?;
    check_len(n, vp.n_nodes())?;
    if noise.is_empty() || noise.len() % n != 0 {
        return Err(Error::Dimension {
            expected: n,
            got: noise.len(),
        });
    }
    let n_samples = noise.len() / n;
    let layout = ParamLayout::of(params, vp);
    let inv_n = T::from_count(n).recip();
    let inv_s = T::from_count(n_samples).recip();
    let m = T::from_count(obs.mask.m_count());

    let mut t = Tape::with_graph(g);
    let mut layer_vars = Vec::with_capacity(params.n_layers());
    for p in &params.layers {
        layer_vars.push(LayerVars {
            theta: [t.leaf_scalar(p.theta1)?, t.leaf_scalar(p.theta2)?, t.leaf_scalar(p.theta3)?],
            bias: Some(t.leaf_scalar(p.bias)?),
        });
    }
    let theta_sigma = t.leaf_scalar(params.theta_sigma)?;
    let mut vi_vars = Vec::with_capacity(vp.vi_layers.len());
    for p in &vp.vi_layers {
        vi_vars.push(LayerVars {
            theta: [t.leaf_scalar(p.theta1)?, t.leaf_scalar(p.theta2)?, t.leaf_scalar(p.theta3)?],
            bias: None,
        });
    }
    let nu = t.leaf(vp.nu.clone())?;
    let log_xi = t.leaf(vp.log_xi.clone())?;
    let log_tau = t.leaf(vp.log_tau.clone())?;
    let y_obs: Vec<T> = (0..n)
        .map(|i| if obs.mask.is_observed(i) { obs.y[i] } else { T::zero() })
        .collect();
    if y_obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("observations must be finite on observed nodes".into()));
    }
    let y = t.leaf(y_obs)?;
    let mask = t.leaf(obs.mask.indicator())?;
    let r = t.leaf(noise.to_vec())?;

    // x = xi * G̃ (tau * r) + nu
    let tau = t.exp(log_tau)?;
    let mut w = t.mul(tau, r)?;
    for lv in &vi_vars {
        w = tape_layer(&mut t, lv, w)?;
    }
    let xi = t.exp(log_xi)?;
    let xw = t.mul(xi, w)?;
    let x = t.add(xw, nu)?;

    let mut z = x;
    for lv in &layer_vars {
        z = tape_layer(&mut t, lv, z)?;
    }
    let z2 = t.square(z)?;
    let zsum = t.sum(z2)?;
    let prior_q = t.scale(zsum, -T::lit(0.5) * inv_s * inv_n)?;

    let resid = t.sub(y, x)?;
    let resid_m = t.mul(resid, mask)?;
    let r2 = t.square(resid_m)?;
    let rsum = t.sum(r2)?;
    let neg2 = t.scale(theta_sigma, -T::lit(2.0))?;
    let prec = t.exp(neg2)?;
    let lik = t.mul(prec, rsum)?;
    let lik_q = t.scale(lik, -T::lit(0.5) * inv_s * inv_n)?;

    let logdet_term = |t: &mut Tape<'_, T>, layers: &[LayerParams<T>], vars: &[LayerVars]| -> Result<Var> {
        let mut value = T::zero();
        let mut partials = Vec::with_capacity(3 * layers.len());
        for (p, lv) in layers.iter().zip(vars) {
            let lg = layer_logdet_grad(pre, p)?;
            value += lg.value;
            for k in 0..3 {
                partials.push((lv.theta[k], lg.d_theta[k] * inv_n));
            }
        }
        t.scalar_fn(value * inv_n, partials)
    };
    let logdet_g = logdet_term(&mut t, &params.layers, &layer_vars)?;
    let noise_ld = t.scale(theta_sigma, -m * inv_n)?;
    let sum_xi = t.sum(log_xi)?;
    let sum_tau = t.sum(log_tau)?;
    let diag_ent = t.add(sum_xi, sum_tau)?;
    let diag_ent = t.scale(diag_ent, inv_n)?;
    let entropy = if vp.vi_layers.is_empty() {
        diag_ent
    } else {
        let ld = logdet_term(&mut t, &vp.vi_layers, &vi_vars)?;
        t.add(ld, diag_ent)?
    };

    let a = t.add(prior_q, lik_q)?;
    let b = t.add(a, logdet_g)?;
    let c = t.add(b, noise_ld)?;
    let total = t.add(c, entropy)?;

    let terms = ElboTerms {
        prior_quadratic: check_term("prior quadratic", t.scalar(prior_q))?,
        likelihood_quadratic: check_term("likelihood quadratic", t.scalar(lik_q))?,
        logdet_g: check_term("log det G", t.scalar(logdet_g))?,
        noise_log_det: check_term("noise log det", t.scalar(noise_ld))?,
        entropy: check_term("entropy", t.scalar(entropy))?,
        total: check_term("total", t.scalar(total))?,
    };
    let grad = if with_grad {
        let gr = t.backward(total)?;
        let mut out = Vec::with_capacity(layout.len());
        for lv in &layer_vars {
            for v in lv.theta {
                out.push(gr.wrt(v)[0]);
            }
            out.push(gr.wrt(lv.bias.expect("model layers carry a bias"))[0]);
        }
        out.push(gr.wrt(theta_sigma)[0]);
        for lv in &vi_vars {
            for v in lv.theta {
                out.push(gr.wrt(v)[0]);
            }
        }
        out.extend_from_slice(gr.wrt(nu));
        out.extend_from_slice(gr.wrt(log_xi));
        out.extend_from_slice(gr.wrt(log_tau));
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("ELBO gradient is not finite".into()));
        }
        out
    } else {
        Vec::new()
    };
    Ok(ElboEvaluation { terms, grad })
}

/// Standard-normal noise for `n_samples` MC samples drawn from the
/// `purpose`/`index` sub-stream of `seed`.
pub fn mc_noise<T: Scalar>(n: usize, n_samples: usize, seed: u64, purpose: Purpose, index: u64) -> Vec<T> {
    standard_normal(&mut SeedStreams::new(seed).rng(purpose, index), n * n_samples)
}

/// MC estimate of the per-node ELBO (constants dropped) with `n_samples`
/// draws from `q`.
#[allow(clippy::too_many_arguments)]
pub fn elbo_estimate<T: Scalar>(
    g: &SparseGraph<T>,
    params: &DgmrfParams<T>,
    vp: &VariationalParams<T>,
    obs: Observations<'_, T>,
    backend: LogdetBackend,
    pre: &Preprocess<T>,
    n_samples: usize,
    seed: u64,
) -> Result<T> {
    pre.expect_backend(backend)?;
    if n_samples == 0 {
        return Err(Error::Validation("ELBO estimate needs at least one sample".into()));
    }
    // evaluate in chunks so memory stays bounded for large sample counts
    let chunk = 16usize;
    let mut acc = T::zero();
    let mut done = 0usize;
    let mut index = 0u64;
    let mut fixed = None;
    while done < n_samples {
        let s = chunk.min(n_samples - done);
        let noise = mc_noise(g.n_nodes(), s, seed, Purpose::Evaluation, index);
        let ev = elbo_with_noise(g, params, vp, obs, pre, &noise, false)?;
        let quad = ev.terms.prior_quadratic + ev.terms.likelihood_quadratic;
        acc += quad * T::from_count(s);
        fixed = Some(ev.terms.logdet_g + ev.terms.noise_log_det + ev.terms.entropy);
        done += s;
        index += 1;
    }
    Ok(acc / T::from_count(n_samples) + fixed.expect("at least one chunk"))
}
