//! Matrix-free application of the layer maps, their composition, and the
//! prior and posterior precision operators.

use super::params::{DgmrfParams, LayerCoefficients, LayerParams};
use crate::error::{check_len, Error, Result};
use crate::graph::{ObservationMask, SparseGraph};
use crate::linalg::{conjugate_gradient, CgConfig, CgReport, CsrMatrix, FnOperator, LinearOperator};
use crate::scalar::Scalar;

/// Per-node coefficients of `G_l = alpha D^gamma + beta D^{gamma-1} A`:
/// `self_coef = alpha d^gamma`, `nb_coef = beta d^{gamma-1}`.
#[derive(Clone, Debug)]
pub struct LayerOperator<T> {
    coef: LayerCoefficients<T>,
    bias: T,
    self_coef: Vec<T>,
    nb_coef: Vec<T>,
}

impl<T: Scalar> LayerOperator<T> {
    pub fn new(g: &SparseGraph<T>, p: &LayerParams<T>) -> Self {
        Self::from_coefficients(g, p.coefficients(), p.bias)
    }

    pub fn from_coefficients(g: &SparseGraph<T>, coef: LayerCoefficients<T>, bias: T) -> Self {
        let self_coef = g
            .log_degrees()
            .iter()
            .map(|&ld| coef.alpha * (coef.gamma * ld).exp())
            .collect();
        let nb_coef = g
            .log_degrees()
            .iter()
            .map(|&ld| coef.beta * ((coef.gamma - T::one()) * ld).exp())
            .collect();
        LayerOperator {
            coef,
            bias,
            self_coef,
            nb_coef,
        }
    }

    pub fn coefficients(&self) -> LayerCoefficients<T> {
        self.coef
    }

    pub fn bias(&self) -> T {
        self.bias
    }

    /// `out = G_l h`, plus `b_l` on every node when `include_bias`.
    pub fn apply_into(&self, g: &SparseGraph<T>, h: &[T], out: &mut [T], include_bias: bool) {
        let (offs, cols, w) = (g.row_offsets(), g.col_indices(), g.weights());
        let b = if include_bias { self.bias } else { T::zero() };
        for i in 0..h.len() {
            let mut acc = T::zero();
            for k in offs[i]..offs[i + 1] {
                acc += w[k] * h[cols[k]];
            }
            out[i] = self.self_coef[i] * h[i] + self.nb_coef[i] * acc + b;
        }
    }

    /// `out = G_l^T h = alpha D^gamma h + beta A D^{gamma-1} h`.
    pub fn apply_transpose_into(&self, g: &SparseGraph<T>, h: &[T], out: &mut [T]) {
        let (offs, cols, w) = (g.row_offsets(), g.col_indices(), g.weights());
        for i in 0..h.len() {
            let mut acc = T::zero();
            for k in offs[i]..offs[i + 1] {
                let j = cols[k];
                acc += w[k] * self.nb_coef[j] * h[j];
            }
            out[i] = self.self_coef[i] * h[i] + acc;
        }
    }

    /// Solves `G_l h = rhs` through the SPD factorization
    /// `G_l = D^{gamma-1/2} (alpha I + beta Ã) D^{1/2}`.
    pub fn solve(&self, g: &SparseGraph<T>, rhs: &[T], cg: &CgConfig<T>) -> Result<(Vec<T>, CgReport<T>)> {
        let half = T::lit(0.5);
        let LayerCoefficients { alpha, beta, gamma } = self.coef;
        let scaled: Vec<T> = rhs
            .iter()
            .zip(g.log_degrees())
            .map(|(&r, &ld)| r * ((half - gamma) * ld).exp())
            .collect();
        let op = FnOperator::new(g.n_nodes(), |v: &[T], out: &mut [T]| {
            g.normalized_adjacency_apply_into(v, out);
            for (o, &vi) in out.iter_mut().zip(v) {
                *o = alpha * vi + beta * *o;
            }
        });
        let (u, report) = conjugate_gradient(&op, &scaled, cg, None)?;
        let h = u
            .iter()
            .zip(g.log_degrees())
            .map(|(&ui, &ld)| ui * (-half * ld).exp())
            .collect();
        Ok((h, report))
    }

    /// Explicit sparse `G_l`.
    pub fn to_csr(&self, g: &SparseGraph<T>) -> CsrMatrix<T> {
        let n = g.n_nodes();
        let mut t = Vec::with_capacity(n + g.nnz());
        for i in 0..n {
            t.push((i, i, self.self_coef[i]));
            for (j, w) in g.neighbors(i) {
                t.push((i, j, self.nb_coef[i] * w));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }
}

/// A trained or hand-set model bound to its graph, with per-layer
/// coefficients evaluated once.
#[derive(Clone, Debug)]
pub struct DgmrfOperator<'g, T> {
    graph: &'g SparseGraph<T>,
    layers: Vec<LayerOperator<T>>,
    sigma: T,
}

impl<'g, T: Scalar> DgmrfOperator<'g, T> {
    pub fn new(graph: &'g SparseGraph<T>, params: &DgmrfParams<T>) -> Self {
        Self::from_layers(graph, &params.layers, params.sigma())
    }

    pub fn from_layers(graph: &'g SparseGraph<T>, layers: &[LayerParams<T>], sigma: T) -> Self {
        DgmrfOperator {
            graph,
            layers: layers.iter().map(|p| LayerOperator::new(graph, p)).collect(),
            sigma,
        }
    }

    pub fn graph(&self) -> &'g SparseGraph<T> {
        self.graph
    }

    pub fn layers(&self) -> &[LayerOperator<T>] {
        &self.layers
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    fn compose(&self, x: &[T], include_bias: bool) -> Vec<T> {
        let mut cur = x.to_vec();
        let mut next = vec![T::zero(); cur.len()];
        for layer in &self.layers {
            layer.apply_into(self.graph, &cur, &mut next, include_bias);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// `z = g(x) = G x + b_acc`.
    pub fn g_apply(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.n_nodes(), x.len())?;
        Ok(self.compose(x, true))
    }

    /// `G x`, biases excluded.
    pub fn g_linear_apply(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.n_nodes(), x.len())?;
        Ok(self.compose(x, false))
    }

    /// `G^T v = G_1^T ... G_L^T v`.
    pub fn g_transpose_apply(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.n_nodes(), v.len())?;
        let mut cur = v.to_vec();
        let mut next = vec![T::zero(); cur.len()];
        for layer in self.layers.iter().rev() {
            layer.apply_transpose_into(self.graph, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Accumulated offset `b_acc = g(0)`.
    pub fn offset(&self) -> Vec<T> {
        self.compose(&vec![T::zero(); self.n_nodes()], true)
    }

    /// `Q v = G^T G v`.
    pub fn precision_apply(&self, v: &[T]) -> Result<Vec<T>> {
        self.g_transpose_apply(&self.g_linear_apply(v)?)
    }

    /// `Q mu = -G^T b_acc`, the prior mean term of the posterior system.
    pub fn precision_times_mean(&self) -> Vec<T> {
        let b = self.offset();
        self.g_transpose_apply(&b)
            .expect("offset has graph dimension")
            .into_iter()
            .map(|x| -x)
            .collect()
    }

    /// `Q̃ v = Q v + sigma^{-2} I_m v`.
    pub fn posterior_precision_apply(&self, mask: &ObservationMask, v: &[T]) -> Result<Vec<T>> {
        check_len(self.n_nodes(), mask.len())?;
        let mut out = self.precision_apply(v)?;
        let prec = (self.sigma * self.sigma).recip();
        for (i, o) in out.iter_mut().enumerate() {
            if mask.is_observed(i) {
                *o += prec * v[i];
            }
        }
        Ok(out)
    }

    /// Solves `g(x) = z` layer by layer.
    pub fn g_inverse_apply(&self, z: &[T], cg: &CgConfig<T>) -> Result<(Vec<T>, Vec<CgReport<T>>)> {
        check_len(self.n_nodes(), z.len())?;
        let mut cur = z.to_vec();
        let mut reports = Vec::with_capacity(self.layers.len());
        for layer in self.layers.iter().rev() {
            for c in cur.iter_mut() {
                *c -= layer.bias;
            }
            let (h, rep) = layer.solve(self.graph, &cur, cg)?;
            if !rep.converged {
                return Err(Error::Numeric(format!(
                    "layer solve did not converge (residual {})",
                    rep.final_residual_norm
                )));
            }
            reports.push(rep);
            cur = h;
        }
        Ok((cur, reports))
    }

    /// Explicit sparse `G = G_L ... G_1`.
    pub fn g_matrix(&self) -> CsrMatrix<T> {
        let mut g = CsrMatrix::identity(self.n_nodes());
        for layer in &self.layers {
            g = layer.to_csr(self.graph).matmul(&g);
        }
        g
    }

    /// Explicit sparse `Q = G^T G`.
    pub fn precision_matrix(&self) -> CsrMatrix<T> {
        self.g_matrix().gram()
    }

    /// Explicit sparse `Q̃`.
    pub fn posterior_precision_matrix(&self, mask: &ObservationMask) -> CsrMatrix<T> {
        let prec = (self.sigma * self.sigma).recip();
        let d: Vec<T> = mask
            .as_slice()
            .iter()
            .map(|&b| if b { prec } else { T::zero() })
            .collect();
        self.precision_matrix().add(&CsrMatrix::diag(&d))
    }

    /// The posterior precision as a [`LinearOperator`].
    pub fn posterior_operator<'a>(&'a self, mask: &'a ObservationMask) -> impl LinearOperator<T> + 'a {
        FnOperator::new(self.n_nodes(), move |v: &[T], out: &mut [T]| {
            out.copy_from_slice(&self.posterior_precision_apply(mask, v).expect("dimension checked"));
        })
    }
}

/// `G_l h` (+ `b_l` when `include_bias`), or `G_l^T h` when `transpose`
/// (the bias never enters the transpose).
pub fn layer_apply<T: Scalar>(
    g: &SparseGraph<T>,
    p: &LayerParams<T>,
    h: &[T],
    transpose: bool,
    include_bias: bool,
) -> Result<Vec<T>> {
    check_len(g.n_nodes(), h.len())?;
    let op = LayerOperator::new(g, p);
    let mut out = vec![T::zero(); h.len()];
    if transpose {
        op.apply_transpose_into(g, h, &mut out);
    } else {
        op.apply_into(g, h, &mut out, include_bias);
    }
    Ok(out)
}

pub fn g_apply<T: Scalar>(g: &SparseGraph<T>, params: &DgmrfParams<T>, x: &[T]) -> Result<Vec<T>> {
    DgmrfOperator::new(g, params).g_apply(x)
}

pub fn g_transpose_apply<T: Scalar>(g: &SparseGraph<T>, params: &DgmrfParams<T>, v: &[T]) -> Result<Vec<T>> {
    DgmrfOperator::new(g, params).g_transpose_apply(v)
}

pub fn precision_apply<T: Scalar>(g: &SparseGraph<T>, params: &DgmrfParams<T>, v: &[T]) -> Result<Vec<T>> {
    DgmrfOperator::new(g, params).precision_apply(v)
}

pub fn posterior_precision_apply<T: Scalar>(
    g: &SparseGraph<T>,
    params: &DgmrfParams<T>,
    mask: &ObservationMask,
    v: &[T],
) -> Result<Vec<T>> {
    DgmrfOperator::new(g, params).posterior_precision_apply(mask, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{DenseMatrix, SeedStreams, Purpose};
    use rand::Rng;

    fn random_graph(n: usize, seed: u64) -> SparseGraph<f64> {
        let mut rng = SeedStreams::new(seed).rng(Purpose::GraphPoints, 0);
        let mut edges: Vec<(usize, usize, f64)> = (1..n).map(|i| (i, rng.random_range(0..i), 1.0)).collect();
        for _ in 0..n {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            edges.push((a, b, rng.random_range(0.5..2.0)));
        }
        SparseGraph::from_edges(n, edges).unwrap()
    }

    fn random_layer(rng: &mut impl Rng) -> LayerParams<f64> {
        LayerParams {
            theta1: rng.random_range(-0.5..0.5),
            theta2: rng.random_range(-1.5..1.5),
            theta3: rng.random_range(-2.0..2.0),
            bias: rng.random_range(-1.0..1.0),
        }
    }

    fn dense_layer(g: &SparseGraph<f64>, p: &LayerParams<f64>) -> DenseMatrix<f64> {
        let c = p.coefficients();
        let a = g.to_dense_adjacency();
        let d = g.degrees();
        DenseMatrix::from_fn(g.n_nodes(), g.n_nodes(), |i, j| {
            let diag = if i == j { c.alpha * d[i].powf(c.gamma) } else { 0.0 };
            diag + c.beta * d[i].powf(c.gamma - 1.0) * a[i][j]
        })
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol * (1.0 + y.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn identity_layer() {
        let g = random_graph(10, 1);
        let p = LayerParams { theta1: 0.0, theta2: 0.0, theta3: -30.0, bias: 0.0 };
        let h: Vec<f64> = (0..10).map(|i| i as f64 - 3.0).collect();
        close(&layer_apply(&g, &p, &h, false, true).unwrap(), &h, 1e-6);
    }

    #[test]
    fn two_node_synthetic_layer() {
        let g = SparseGraph::from_edges(2, [(0, 1, 1.0f64)]).unwrap();
        let p = LayerParams::from_coefficients(1.2, -1.0, 30.0, 0.0).unwrap();
        close(&layer_apply(&g, &p, &[1.0, 0.0], false, true).unwrap(), &[1.2, -1.0], 1e-12);
    }

    #[test]
    fn layer_matches_dense() {
        let g = random_graph(50, 2);
        let mut rng = SeedStreams::new(2).rng(Purpose::Init, 0);
        let p = random_layer(&mut rng);
        let h: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = dense_layer(&g, &p);
        let mut expect = m.matvec(&h);
        expect.iter_mut().for_each(|v| *v += p.bias);
        close(&layer_apply(&g, &p, &h, false, true).unwrap(), &expect, 1e-12);
        close(&layer_apply(&g, &p, &h, true, true).unwrap(), &m.transpose().matvec(&h), 1e-12);
    }

    #[test]
    fn composition_matches_dense() {
        let g = random_graph(40, 3);
        let mut rng = SeedStreams::new(3).rng(Purpose::Init, 0);
        let layers: Vec<_> = (0..3).map(|_| random_layer(&mut rng)).collect();
        let params = DgmrfParams::new(layers.clone(), 0.0).unwrap();
        let x: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut expect = x.clone();
        for p in &layers {
            expect = dense_layer(&g, p).matvec(&expect);
            expect.iter_mut().for_each(|v| *v += p.bias);
        }
        close(&g_apply(&g, &params, &x).unwrap(), &expect, 1e-10);

        let op = DgmrfOperator::new(&g, &params);
        let gm = op.g_matrix().to_dense();
        close(&op.g_transpose_apply(&x).unwrap(), &gm.transpose().matvec(&x), 1e-10);
        close(gm.matvec(&x).as_slice(), &op.g_linear_apply(&x).unwrap(), 1e-10);
    }

    #[test]
    fn precision_matches_dense_and_is_symmetric_pd() {
        let g = random_graph(30, 4);
        let mut rng = SeedStreams::new(4).rng(Purpose::Init, 0);
        let layers: Vec<_> = (0..2).map(|_| random_layer(&mut rng)).collect();
        let params = DgmrfParams::new(layers.clone(), -0.5).unwrap();
        let g2g1 = dense_layer(&g, &layers[1]).matmul(&dense_layer(&g, &layers[0]));
        let q = g2g1.transpose().matmul(&g2g1);
        let v: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let qv = precision_apply(&g, &params, &v).unwrap();
        close(&qv, &q.matvec(&v), 1e-10);
        let qw = precision_apply(&g, &params, &w).unwrap();
        let (a, b) = (crate::scalar::dot(&w, &qv), crate::scalar::dot(&v, &qw));
        assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        assert!(q.cholesky().is_ok());
        let sparse = DgmrfOperator::new(&g, &params).precision_matrix().to_dense();
        close(sparse.as_slice(), q.as_slice(), 1e-10);
    }

    #[test]
    fn identity_posterior_precision_doubles() {
        let g = random_graph(8, 5);
        let params = DgmrfParams::new(vec![LayerParams { theta1: 0.0, theta2: 0.0, theta3: -30.0, bias: 0.0 }], 0.0).unwrap();
        let v: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let out = posterior_precision_apply(&g, &params, &ObservationMask::all_observed(8), &v).unwrap();
        close(&out, &v.iter().map(|x| 2.0 * x).collect::<Vec<_>>(), 1e-6);
    }

    #[test]
    fn gamma_limits_match_mean_and_sum_layers() {
        let g = random_graph(20, 6);
        let (alpha, beta) = (1.3, -0.7);
        let h: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let d = g.degrees();
        let mut mean_layer = vec![0.0; 20];
        let mut sum_layer = vec![0.0; 20];
        for i in 0..20 {
            let s: f64 = g.neighbors(i).map(|(j, w)| w * h[j]).sum();
            mean_layer[i] = alpha * h[i] + beta * s / d[i];
            sum_layer[i] = alpha * d[i] * h[i] + beta * s;
        }
        let lo = LayerParams::from_coefficients(alpha, beta, -30.0, 0.0).unwrap();
        let hi = LayerParams::from_coefficients(alpha, beta, 30.0, 0.0).unwrap();
        close(&layer_apply(&g, &lo, &h, false, false).unwrap(), &mean_layer, 1e-6);
        close(&layer_apply(&g, &hi, &h, false, false).unwrap(), &sum_layer, 1e-6);
    }

    #[test]
    fn layerwise_inverse_recovers_input() {
        let g = random_graph(60, 7);
        let mut rng = SeedStreams::new(7).rng(Purpose::Init, 0);
        let layers: Vec<_> = (0..3).map(|_| random_layer(&mut rng)).collect();
        let op = DgmrfOperator::from_layers(&g, &layers, 1.0);
        let x: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = op.g_apply(&x).unwrap();
        let cfg = CgConfig { tol: 1e-12, max_iter: None };
        let (back, reports) = op.g_inverse_apply(&z, &cfg).unwrap();
        assert_eq!(reports.len(), 3);
        close(&back, &x, 1e-8);
    }

    #[test]
    fn dimension_mismatch() {
        let g = random_graph(5, 8);
        let p = LayerParams::zeroed();
        assert!(matches!(layer_apply(&g, &p, &[1.0; 4], false, false), Err(Error::Dimension { .. })));
    }
}
