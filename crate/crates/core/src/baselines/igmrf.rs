use crate::error::{check_len, Error, Result};
use crate::graph::{ObservationMask, SparseGraph};
use crate::linalg::{standard_normal, CgConfig, CsrMatrix, EnvelopeCholesky};
use crate::posterior::{GaussianPosterior, GaussianPrior, PosteriorSummary};
use crate::scalar::{dot, Scalar};

/// Jitter for sparse spatial graphs.
pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Jitter for dense social-style graphs.
pub const DENSE_GRAPH_EPSILON: f64 = 1e-4;

/// Prior `Q = kappa (D - A) + epsilon I` with noise level `sigma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IgmrfModel<T> {
    pub kappa: T,
    pub sigma: T,
    pub epsilon: T,
}

impl<T: Scalar> IgmrfModel<T> {
    pub fn new(kappa: T, sigma: T, epsilon: T) -> Result<Self> {
        if !(kappa >= T::zero() && sigma > T::zero() && epsilon > T::zero()) {
            return Err(Error::Validation(format!(
                "IGMRF needs kappa >= 0, sigma > 0, epsilon > 0 (got {kappa}, {sigma}, {epsilon})"
            )));
        }
        Ok(IgmrfModel { kappa, sigma, epsilon })
    }

    pub fn precision_matrix(&self, g: &SparseGraph<T>) -> CsrMatrix<T> {
        let mut t = Vec::with_capacity(g.nnz() + g.n_nodes());
        for i in 0..g.n_nodes() {
            t.push((i, i, self.kappa * g.degrees()[i] + self.epsilon));
        }
        for (i, j, w) in g.edges() {
            t.push((i, j, -self.kappa * w));
            t.push((j, i, -self.kappa * w));
        }
        CsrMatrix::from_triplets(g.n_nodes(), g.n_nodes(), t)
    }

    pub fn prior<'g>(&self, g: &'g SparseGraph<T>) -> IgmrfPrior<'g, T> {
        IgmrfPrior { graph: g, model: *self }
    }
}

/// Matrix-free view of an IGMRF prior on a graph.
pub struct IgmrfPrior<'g, T> {
    graph: &'g SparseGraph<T>,
    model: IgmrfModel<T>,
}

impl<T: Scalar> GaussianPrior<T> for IgmrfPrior<'_, T> {
    fn dim(&self) -> usize {
        self.graph.n_nodes()
    }

    fn precision_apply_into(&self, v: &[T], out: &mut [T]) {
        self.graph.adjacency_apply_into(v, out);
        let m = self.model;
        for i in 0..v.len() {
            out[i] = m.kappa * (self.graph.degrees()[i] * v[i] - out[i]) + m.epsilon * v[i];
        }
    }

    fn precision_times_mean(&self) -> Vec<T> {
        vec![T::zero(); self.dim()]
    }

    /// `sqrt(kappa) B^T z_e + sqrt(epsilon) z_n` with `B` the weighted incidence matrix.
    fn precision_noise(&self, rng: &mut dyn rand::RngCore) -> Vec<T> {
        let n = self.dim();
        let mut out: Vec<T> = standard_normal(rng, n);
        let se = self.model.epsilon.sqrt();
        out.iter_mut().for_each(|v| *v *= se);
        for (i, j, w) in self.graph.edges() {
            let e: T = standard_normal(rng, 1)[0];
            let s = (self.model.kappa * w).sqrt() * e;
            out[i] += s;
            out[j] -= s;
        }
        out
    }
}

/// `log p(y_m)` of a zero-mean Gaussian prior with precision `q` under
/// observation noise `sigma`, via the identity
/// `log p(y_m) = log p(y_m | x') + log p(x') - log p(x' | y_m)` at
/// `x_prime` (the posterior mean when `None`).
pub fn log_marginal_likelihood<T: Scalar>(
    q: &CsrMatrix<T>,
    y: &[T],
    mask: &ObservationMask,
    sigma: T,
    x_prime: Option<&[T]>,
) -> Result<T> {
    let n = q.n_rows();
    check_len(n, y.len())?;
    check_len(n, mask.len())?;
    let p = (sigma * sigma).recip();
    let obs: Vec<T> = mask.indicator();
    let q_tilde = q.add(&CsrMatrix::diag(&obs.iter().map(|&o| o * p).collect::<Vec<_>>()));
    let chol_q = EnvelopeCholesky::factor(q)?;
    let chol_qt = EnvelopeCholesky::factor(&q_tilde)?;
    let rhs: Vec<T> = (0..n).map(|i| obs[i] * p * if mask.is_observed(i) { y[i] } else { T::zero() }).collect();
    let mu = chol_qt.solve(&rhs);
    let x = x_prime.map_or_else(|| mu.clone(), <[T]>::to_vec);
    check_len(n, x.len())?;
    let half = T::lit(0.5);
    let ln_2pi = T::lit((2.0 * std::f64::consts::PI).ln());
    let mut lik = T::zero();
    for i in mask.observed_indices() {
        let r = (y[i] - x[i]) / sigma;
        lik -= half * (ln_2pi + r * r) + sigma.ln();
    }
    let d: Vec<T> = x.iter().zip(&mu).map(|(&a, &b)| a - b).collect();
    let prior = half * chol_q.log_det() - half * dot(&x, &q.matvec(&x));
    let post = half * chol_qt.log_det() - half * dot(&d, &q_tilde.matvec(&d));
    Ok(lik + prior - post)
}

/// Grid of `(sigma, kappa)` candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct IgmrfGrid {
    pub sigmas: Vec<f64>,
    pub kappas: Vec<f64>,
    pub epsilon: f64,
}

impl Default for IgmrfGrid {
    /// `sigma` in {0.001, 0.01, 0.1, 1} and 20 log-spaced `kappa` in [0.01, 1000].
    fn default() -> Self {
        IgmrfGrid {
            sigmas: vec![0.001, 0.01, 0.1, 1.0],
            kappas: (0..20).map(|k| 10f64.powf(-2.0 + 5.0 * k as f64 / 19.0)).collect(),
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell<T> {
    pub kappa: f64,
    pub sigma: f64,
    pub log_marginal: T,
}

/// Log marginal likelihood at every grid cell, `sigma`-major.
pub fn igmrf_grid<T: Scalar>(
    g: &SparseGraph<T>,
    y: &[T],
    mask: &ObservationMask,
    grid: &IgmrfGrid,
) -> Result<Vec<GridCell<T>>> {
    if grid.sigmas.is_empty() || grid.kappas.is_empty() {
        return Err(Error::Validation("IGMRF grid is empty".into()));
    }
    let mut cells = Vec::with_capacity(grid.sigmas.len() * grid.kappas.len());
    for &sigma in &grid.sigmas {
        for &kappa in &grid.kappas {
            let m = IgmrfModel::new(T::lit(kappa), T::lit(sigma), T::lit(grid.epsilon))?;
            let lml = log_marginal_likelihood(&m.precision_matrix(g), y, mask, m.sigma, None)?;
            cells.push(GridCell { kappa, sigma, log_marginal: lml });
        }
    }
    Ok(cells)
}

/// Grid cell with the largest log marginal likelihood.
pub fn igmrf_fit<T: Scalar>(
    g: &SparseGraph<T>,
    y: &[T],
    mask: &ObservationMask,
    grid: &IgmrfGrid,
) -> Result<IgmrfModel<T>> {
    let cells = igmrf_grid(g, y, mask, grid)?;
    let best = cells
        .iter()
        .filter(|c| c.log_marginal.is_finite())
        .max_by(|a, b| a.log_marginal.partial_cmp(&b.log_marginal).expect("finite"))
        .ok_or_else(|| Error::Numeric("no grid cell has a finite marginal likelihood".into()))?;
    IgmrfModel::new(T::lit(best.kappa), T::lit(best.sigma), T::lit(grid.epsilon))
}

/// Posterior mean and MC marginal standard deviations under a fitted IGMRF.
pub fn igmrf_posterior<T: Scalar>(
    model: &IgmrfModel<T>,
    g: &SparseGraph<T>,
    y: &[T],
    mask: &ObservationMask,
    n_samples: usize,
    seed: u64,
    cg: &CgConfig<T>,
) -> Result<PosteriorSummary<T>> {
    let prior = model.prior(g);
    GaussianPosterior::new(&prior, y, mask, model.sigma)?.summarize(n_samples, seed, cg)
}
