use crate::error::{check_len, Error, Result};
use crate::graph::{ObservationMask, SparseGraph};
use crate::linalg::{standard_normal, Purpose, SeedStreams};
use crate::logdet::{total_logdet, LogdetBackend, Preprocess};
use crate::model::{LayerOperator, LayerParams};
use crate::scalar::Scalar;

/// Gaussian `q(x)` with mean `nu` and covariance `S S^T`,
/// `S = diag(xi) G̃ diag(tau)`. An empty `vi_layers` gives the mean-field family.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalParams<T> {
    pub nu: Vec<T>,
    pub log_xi: Vec<T>,
    pub log_tau: Vec<T>,
    /// Layers of `G̃`. Their bias is never used.
    pub vi_layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> VariationalParams<T> {
    /// `nu = y` with unobserved nodes set to the observed mean, unit scales,
    /// `G̃` layers at `theta = 0`.
    pub fn init(y: &[T], mask: &ObservationMask, n_vi_layers: usize) -> Result<Self> {
        check_len(mask.len(), y.len())?;
        let obs_mean = mask.observed_indices().map(|i| y[i]).sum::<T>() / T::from_count(mask.m_count());
        let nu = (0..y.len())
            .map(|i| if mask.is_observed(i) { y[i] } else { obs_mean })
            .collect();
        Ok(VariationalParams {
            nu,
            log_xi: vec![T::zero(); y.len()],
            log_tau: vec![T::zero(); y.len()],
            vi_layers: vec![LayerParams::zeroed(); n_vi_layers],
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nu.len();
        check_len(n, self.log_xi.len())?;
        check_len(n, self.log_tau.len())?;
        if self.nu.iter().chain(&self.log_xi).chain(&self.log_tau).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("variational parameters are not finite".into()));
        }
        Ok(())
    }
}

/// `x = diag(xi) G̃ diag(tau) r + nu` for a given standard-normal `r`.
pub fn sample_q_with_noise<T: Scalar>(g: &SparseGraph<T>, vp: &VariationalParams<T>, r: &[T]) -> Result<Vec<T>> {
    check_len(g.n_nodes(), r.len())?;
    check_len(g.n_nodes(), vp.n_nodes())?;
    let mut w: Vec<T> = r.iter().zip(&vp.log_tau).map(|(&ri, &lt)| lt.exp() * ri).collect();
    let mut next = vec![T::zero(); w.len()];
    for p in &vp.vi_layers {
        LayerOperator::new(g, p).apply_into(g, &w, &mut next, false);
        std::mem::swap(&mut w, &mut next);
    }
    Ok(w.iter()
        .zip(&vp.log_xi)
        .zip(&vp.nu)
        .map(|((&wi, &lx), &m)| lx.exp() * wi + m)
        .collect())
}

/// `n_samples` independent draws from `q`; sample `s` uses its own sub-stream.
pub fn sample_q<T: Scalar>(
    g: &SparseGraph<T>,
    vp: &VariationalParams<T>,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    let streams = SeedStreams::new(seed);
    (0..n_samples)
        .map(|s| {
            let r = standard_normal(&mut streams.rng(Purpose::Evaluation, s as u64), g.n_nodes());
            sample_q_with_noise(g, vp, &r)
        })
        .collect()
}

/// Entropy of `q` up to its additive constant: `log|det G̃| + sum(log xi) + sum(log tau)`.
pub fn q_entropy<T: Scalar>(vp: &VariationalParams<T>, backend: LogdetBackend, pre: &Preprocess<T>) -> Result<T> {
    let ld = if vp.vi_layers.is_empty() {
        T::zero()
    } else {
        total_logdet(&vp.vi_layers, backend, pre)?
    };
    Ok(ld + vp.log_xi.iter().copied().sum::<T>() + vp.log_tau.iter().copied().sum::<T>())
}
