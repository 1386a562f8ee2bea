#![allow(dead_code)]

use dgmrf::graph::{generate_delaunay_graph, generate_mask, DelaunayConfig, SparseGraph};
use dgmrf::linalg::{DenseMatrix, Purpose, SeedStreams};
use dgmrf::logdet::Preprocess;
use dgmrf::model::{DgmrfOperator, DgmrfParams, LayerParams};
use dgmrf::vi::{elbo_with_noise, mc_noise, Observations, ParamLayout, VariationalParams};
use rand::Rng;

pub fn delaunay(n: usize, seed: u64) -> SparseGraph<f64> {
    generate_delaunay_graph(n, seed, &DelaunayConfig::default()).unwrap().graph
}

/// Connected random graph: a random spanning tree plus extra weighted edges.
pub fn random_graph(n: usize, extra: usize, seed: u64) -> SparseGraph<f64> {
    let mut rng = SeedStreams::new(seed).rng(Purpose::GraphPoints, 99);
    let mut edges: Vec<(usize, usize, f64)> = (1..n).map(|i| (i, rng.random_range(0..i), rng.random_range(0.5..2.0))).collect();
    for _ in 0..extra {
        edges.push((rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0.5..2.0)));
    }
    SparseGraph::from_edges(n, edges).unwrap()
}

pub fn random_layer(rng: &mut impl Rng) -> LayerParams<f64> {
    LayerParams {
        theta1: rng.random_range(-0.5..0.5),
        theta2: rng.random_range(-1.5..1.5),
        theta3: rng.random_range(-2.0..2.0),
        bias: rng.random_range(-0.5..0.5),
    }
}

pub fn dense_g(g: &SparseGraph<f64>, layers: &[LayerParams<f64>]) -> DenseMatrix<f64> {
    DgmrfOperator::from_layers(g, layers, 1.0).g_matrix().to_dense()
}

/// Independent dense construction of one layer matrix.
pub fn dense_layer(g: &SparseGraph<f64>, p: &LayerParams<f64>) -> DenseMatrix<f64> {
    let c = p.coefficients();
    let a = g.to_dense_adjacency();
    let d = g.degrees();
    DenseMatrix::from_fn(g.n_nodes(), g.n_nodes(), |i, j| {
        let diag = if i == j { c.alpha * d[i].powf(c.gamma) } else { 0.0 };
        diag + c.beta * d[i].powf(c.gamma - 1.0) * a[i][j]
    })
}

pub fn dense_product(g: &SparseGraph<f64>, layers: &[LayerParams<f64>]) -> DenseMatrix<f64> {
    let mut m = DenseMatrix::identity(g.n_nodes());
    for p in layers {
        m = dense_layer(g, p).matmul(&m);
    }
    m
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Central differences of the frozen-noise ELBO against the tape gradient.
pub fn worst_gradient_error(pre: &Preprocess<f64>) -> f64 {
    let g = delaunay(50, 11);
    let mut rng = SeedStreams::new(3).rng(Purpose::Init, 0);
    let params = DgmrfParams::new((0..2).map(|_| random_layer(&mut rng)).collect(), -0.7).unwrap();
    let mask = generate_mask(50, 0.3, 4).unwrap();
    let y: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut vp = VariationalParams::init(&y, &mask, 1).unwrap();
    for i in 0..50 {
        vp.nu[i] += rng.random_range(-0.3..0.3);
        vp.log_xi[i] = rng.random_range(-0.5..0.5);
        vp.log_tau[i] = rng.random_range(-0.5..0.5);
    }
    vp.vi_layers[0] = random_layer(&mut rng);
    vp.vi_layers[0].bias = 0.0;
    let obs = Observations { y: &y, mask: &mask };
    let noise = mc_noise(50, 3, 5, Purpose::TrainingMc, 0);
    let layout = ParamLayout::of(&params, &vp);
    let flat = layout.flatten(&params, &vp);
    let ev = elbo_with_noise(&g, &params, &vp, obs, pre, &noise, true).unwrap();
    let f = |x: &[f64]| {
        let (p, v) = layout.unflatten(x).unwrap();
        elbo_with_noise(&g, &p, &v, obs, pre, &noise, false).unwrap().terms.total
    };
    let mut worst = 0.0f64;
    let h = 1e-4;
    for i in 0..flat.len() {
        let mut xp = flat.clone();
        let mut xm = flat.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd = (f(&xp) - f(&xm)) / (2.0 * h);
        let err = (fd - ev.grad[i]).abs() / (fd.abs().max(ev.grad[i].abs()).max(1e-3));
        worst = worst.max(err);
    }
    worst
}
