use rand::Rng;

use super::dataset::{Dataset, Provenance, Recipe, Truth};
use crate::error::{check_len, Error, Result};
use crate::graph::{generate_delaunay_graph, generate_mask, DelaunayConfig, ObservationMask, SparseGraph};
use crate::linalg::{standard_normal, CgConfig, CsrMatrix, EnvelopeCholesky, Purpose, SeedStreams};
use crate::model::{DgmrfOperator, DgmrfParams, LayerOperator, LayerParams};
use crate::scalar::Scalar;
use crate::vi::SATURATED_THETA3;

/// Largest graph for which the exact posterior is stored with a dataset.
pub const DEFAULT_TRUE_POSTERIOR_CAP: usize = 5000;
pub const SYNTH_NOISE_STD: f64 = 0.01;
pub const SYNTH_ALPHA: f64 = 1.2;
pub const SYNTH_BETA: f64 = -1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub recipe: Recipe,
    pub n: usize,
    pub seed: u64,
    /// Layers of the generating DGMRF for [`Recipe::Dgmrf`].
    pub true_layers: usize,
    pub posterior_cap: usize,
    /// Overrides the recipe's unobserved fraction.
    pub unobserved_fraction: Option<f64>,
}

impl SynthConfig {
    /// Recipe defaults: 3000 nodes (5000 for Mix) and one generating layer.
    pub fn new(recipe: Recipe, seed: u64) -> Self {
        SynthConfig {
            recipe,
            n: if recipe == Recipe::Mix { 5000 } else { 3000 },
            seed,
            true_layers: 1,
            posterior_cap: DEFAULT_TRUE_POSTERIOR_CAP,
            unobserved_fraction: None,
        }
    }

    fn fraction(&self) -> f64 {
        self.unobserved_fraction
            .unwrap_or(if self.recipe == Recipe::Mix { 0.5 } else { 0.25 })
    }
}

/// Draws `x` with `g(x) = z`, `z ~ N(0, I)`, solving one layer at a time.
pub fn sample_dgmrf_prior<T: Scalar>(
    g: &SparseGraph<T>,
    params: &DgmrfParams<T>,
    seed: u64,
    cg: &CgConfig<T>,
) -> Result<Vec<T>> {
    let z: Vec<T> = standard_normal(&mut SeedStreams::new(seed).rng(Purpose::SyntheticField, 0), g.n_nodes());
    DgmrfOperator::new(g, params).g_inverse_apply(&z, cg).map(|(x, _)| x)
}

/// Exact posterior mean and marginal standard deviations for an explicit
/// prior precision `q` (with `q_mu = Q mu`) by sparse Cholesky.
pub fn exact_posterior<T: Scalar>(
    q: &CsrMatrix<T>,
    q_mu: &[T],
    y: &[T],
    mask: &ObservationMask,
    sigma: T,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = q.n_rows();
    check_len(n, y.len())?;
    check_len(n, q_mu.len())?;
    check_len(n, mask.len())?;
    let p = (sigma * sigma).recip();
    let d: Vec<T> = (0..n).map(|i| if mask.is_observed(i) { p } else { T::zero() }).collect();
    let chol = EnvelopeCholesky::factor(&q.add(&CsrMatrix::diag(&d)))?;
    let rhs: Vec<T> = (0..n).map(|i| q_mu[i] + if mask.is_observed(i) { p * y[i] } else { T::zero() }).collect();
    let mean = chol.solve(&rhs);
    let std = chol.inverse_diagonal().into_iter().map(|v| v.sqrt()).collect();
    Ok((mean, std))
}

fn fixed_layer<T: Scalar>(alpha: f64, beta: f64) -> Result<LayerParams<T>> {
    LayerParams::from_coefficients(T::lit(alpha), T::lit(beta), T::lit(SATURATED_THETA3), T::zero())
}

fn tight_cg<T: Scalar>() -> CgConfig<T> {
    CgConfig {
        tol: T::lit(1e-10),
        max_iter: None,
    }
}

fn add_noise<T: Scalar>(x: &[T], seed: u64) -> Vec<T> {
    let e: Vec<T> = standard_normal(&mut SeedStreams::new(seed).rng(Purpose::SyntheticField, 1), x.len());
    x.iter().zip(e).map(|(&a, b)| a + T::lit(SYNTH_NOISE_STD) * b).collect()
}

struct Assembled<T> {
    graph: SparseGraph<T>,
    points: Vec<[f64; 2]>,
    x: Vec<T>,
    q: Option<CsrMatrix<T>>,
    true_layers: usize,
    coefficients: Vec<(f64, f64)>,
}

fn finish<T: Scalar>(cfg: &SynthConfig, a: Assembled<T>) -> Result<Dataset<T>> {
    let n = a.graph.n_nodes();
    let y = add_noise(&a.x, cfg.seed);
    let mask = generate_mask(n, cfg.fraction(), cfg.seed)?;
    let (posterior_mean, posterior_std) = match (&a.q, n <= cfg.posterior_cap) {
        (Some(q), true) => {
            let (m, s) = exact_posterior(q, &vec![T::zero(); n], &y, &mask, T::lit(SYNTH_NOISE_STD))?;
            (Some(m), Some(s))
        }
        _ => (None, None),
    };
    let ds = Dataset {
        graph: a.graph,
        points: Some(a.points),
        y,
        mask,
        truth: Some(Truth {
            x: a.x,
            posterior_mean,
            posterior_std,
        }),
        provenance: Provenance {
            recipe: cfg.recipe,
            seed: cfg.seed,
            true_layers: a.true_layers,
            noise_std: SYNTH_NOISE_STD,
            unobserved_fraction: cfg.fraction(),
            true_coefficients: a.coefficients,
        },
    };
    ds.validate()?;
    Ok(ds)
}

fn base_graph<T: Scalar>(cfg: &SynthConfig) -> Result<(SparseGraph<T>, Vec<[f64; 2]>)> {
    let pg = generate_delaunay_graph(cfg.n, cfg.seed, &DelaunayConfig::default())?;
    Ok((pg.graph, pg.points))
}

/// Single draw from a DGMRF with `alpha = 1.2`, `beta = -1`, `gamma = 1`,
/// `b = 0` in every layer, observed with noise 0.01 on 75% of the nodes.
pub fn make_synth_dgmrf<T: Scalar>(cfg: &SynthConfig) -> Result<Dataset<T>> {
    if cfg.true_layers == 0 {
        return Err(Error::Validation("the generating DGMRF needs at least one layer".into()));
    }
    let (graph, points) = base_graph::<T>(cfg)?;
    let params = DgmrfParams::new(vec![fixed_layer(SYNTH_ALPHA, SYNTH_BETA)?; cfg.true_layers], T::zero())?;
    let x = sample_dgmrf_prior(&graph, &params, cfg.seed, &tight_cg())?;
    let q = (cfg.n <= cfg.posterior_cap).then(|| DgmrfOperator::new(&graph, &params).precision_matrix());
    finish(
        cfg,
        Assembled {
            graph,
            points,
            x,
            q,
            true_layers: cfg.true_layers,
            coefficients: vec![(SYNTH_ALPHA, SYNTH_BETA); cfg.true_layers],
        },
    )
}

/// One-layer DGMRF defined on the 3-hop graph; the dataset keeps the
/// original graph.
pub fn make_dense<T: Scalar>(cfg: &SynthConfig) -> Result<Dataset<T>> {
    let (graph, points) = base_graph::<T>(cfg)?;
    let hop3 = graph.k_hop_graph(3)?;
    let params = DgmrfParams::new(vec![fixed_layer(SYNTH_ALPHA, SYNTH_BETA)?], T::zero())?;
    let x = sample_dgmrf_prior(&hop3, &params, cfg.seed, &tight_cg())?;
    let q = (cfg.n <= cfg.posterior_cap).then(|| DgmrfOperator::new(&hop3, &params).precision_matrix());
    finish(
        cfg,
        Assembled {
            graph,
            points,
            x,
            q,
            true_layers: 1,
            coefficients: vec![(SYNTH_ALPHA, SYNTH_BETA)],
        },
    )
}

/// Explicit `Q = sum_{i=1}^{4} G_i^T G_i` with `G_i` a `gamma = 1` layer on
/// the `i`-hop graph, `alpha_i ~ U[0.5, 1.5]`, `beta_i ~ U[-1.1, -0.1]`.
/// Draws with `|beta| >= alpha` are rejected and redrawn.
pub fn mix_precision<T: Scalar>(graph: &SparseGraph<T>, seed: u64) -> Result<(CsrMatrix<T>, Vec<(f64, f64)>)> {
    let mut rng = SeedStreams::new(seed).rng(Purpose::SyntheticParams, 0);
    let n = graph.n_nodes();
    let mut q = CsrMatrix::from_triplets(n, n, Vec::new());
    let mut coefficients = Vec::with_capacity(4);
    for hops in 1..=4 {
        let (alpha, beta) = loop {
            let a = rng.random_range(0.5..1.5);
            let b = rng.random_range(-1.1..-0.1);
            if f64::abs(b) < a {
                break (a, b);
            }
        };
        let gi = if hops == 1 { graph.clone() } else { graph.k_hop_graph(hops)? };
        let layer = LayerOperator::new(&gi, &fixed_layer(alpha, beta)?);
        q = q.add(&layer.to_csr(&gi).gram());
        coefficients.push((alpha, beta));
    }
    Ok((q, coefficients))
}

/// Zero-mean GMRF with the mixed precision of [`mix_precision`], 50% unobserved.
pub fn make_mix<T: Scalar>(cfg: &SynthConfig) -> Result<Dataset<T>> {
    let (graph, points) = base_graph::<T>(cfg)?;
    let (q, coefficients) = mix_precision(&graph, cfg.seed)?;
    let z: Vec<T> = standard_normal(&mut SeedStreams::new(cfg.seed).rng(Purpose::SyntheticField, 0), cfg.n);
    let x = EnvelopeCholesky::factor(&q)?.sample_with_precision(&z);
    finish(
        cfg,
        Assembled {
            graph,
            points,
            x,
            q: Some(q),
            true_layers: 0,
            coefficients,
        },
    )
}

pub fn generate<T: Scalar>(cfg: &SynthConfig) -> Result<Dataset<T>> {
    match cfg.recipe {
        Recipe::Dgmrf => make_synth_dgmrf(cfg),
        Recipe::Dense => make_dense(cfg),
        Recipe::Mix => make_mix(cfg),
        Recipe::External => Err(Error::Validation("external datasets are loaded, not generated".into())),
    }
}
