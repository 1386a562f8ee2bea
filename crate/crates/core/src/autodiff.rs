//! Reverse-mode differentiation over vector-valued primitives.
//!
//! Every node holds a vector. Binary operations broadcast a shorter operand
//! whose length divides the longer one by tiling it, which covers scalars
//! (length 1), per-node quantities (length `n`) and batches of `S` stacked
//! node vectors (length `n * S`). Adjoints of broadcast operands are reduced
//! by summing over the tiles.

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::scalar::{sigmoid, Scalar};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Exp(Var),
    Tanh(Var),
    Sigmoid(Var),
    Square(Var),
    Sum(Var),
    /// `A v` applied to each length-`n` block.
    Adjacency(Var),
    /// `exp((gamma + offset) log d)` for scalar `gamma`.
    DegreePow(Var, T),
    /// A scalar function of scalar inputs with known partial derivatives.
    ScalarFn(Vec<(Var, T)>),
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Vec<T>,
}

/// Default upper bound on recorded nodes.
pub const DEFAULT_TAPE_CAPACITY: usize = 1 << 20;

pub struct Tape<'g, T> {
    graph: Option<&'g SparseGraph<T>>,
    nodes: Vec<Node<T>>,
    capacity: usize,
}

/// Adjoints of every node with respect to one output.
pub struct Gradients<T> {
    adj: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, v: Var) -> &[T] {
        &self.adj[v.0]
    }
}

fn tile_len(a: usize, b: usize) -> Result<usize> {
    let (lo, hi) = (a.min(b), a.max(b));
    if lo == 0 || hi % lo != 0 {
        return Err(Error::Dimension { expected: hi, got: lo });
    }
    Ok(hi)
}

/// `out[i] = f(a[i % la], b[i % lb])`.
fn broadcast<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    let n = a.len().max(b.len());
    let mut out = Vec::with_capacity(n);
    if a.len() == b.len() {
        out.extend(a.iter().zip(b).map(|(&x, &y)| f(x, y)));
    } else if a.len() == n {
        for chunk in a.chunks(b.len()) {
            out.extend(chunk.iter().zip(b).map(|(&x, &y)| f(x, y)));
        }
    } else {
        for chunk in b.chunks(a.len()) {
            out.extend(a.iter().zip(chunk).map(|(&x, &y)| f(x, y)));
        }
    }
    out
}

/// Adds `src` (long) into `dst` (a divisor-length target), summing tiles.
fn accumulate<T: Scalar>(dst: &mut [T], src: impl Iterator<Item = T>) {
    let k = dst.len();
    if k == 1 {
        dst[0] += src.sum::<T>();
        return;
    }
    for (i, v) in src.enumerate() {
        dst[i % k] += v;
    }
}

impl<'g, T: Scalar> Tape<'g, T> {
    pub fn new() -> Self {
        Tape {
            graph: None,
            nodes: Vec::new(),
            capacity: DEFAULT_TAPE_CAPACITY,
        }
    }

    /// A tape whose adjacency primitives act on `graph`.
    pub fn with_graph(graph: &'g SparseGraph<T>) -> Self {
        Tape {
            graph: Some(graph),
            nodes: Vec::new(),
            capacity: DEFAULT_TAPE_CAPACITY,
        }
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Vec<T>) -> Result<Var> {
        if self.nodes.len() >= self.capacity {
            return Err(Error::Capacity(format!("tape holds at most {} nodes", self.capacity)));
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    fn graph(&self) -> Result<&'g SparseGraph<T>> {
        self.graph
            .ok_or_else(|| Error::Validation("graph primitive on a tape without a graph".into()))
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    /// An input; its adjoint is reported by [`Gradients::wrt`].
    pub fn leaf(&mut self, value: Vec<T>) -> Result<Var> {
        self.push(Op::Leaf, value)
    }

    pub fn leaf_scalar(&mut self, value: T) -> Result<Var> {
        self.leaf(vec![value])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        tile_len(self.value(a).len(), self.value(b).len())?;
        let v = broadcast(self.value(a), self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        tile_len(self.value(a).len(), self.value(b).len())?;
        let v = broadcast(self.value(a), self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        tile_len(self.value(a).len(), self.value(b).len())?;
        let v = broadcast(self.value(a), self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let v = self.value(a).iter().map(|&x| c * x).collect();
        self.push(Op::Scale(a, c), v)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).iter().map(|&x| x.exp()).collect();
        self.push(Op::Exp(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).iter().map(|&x| x.tanh()).collect();
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(Op::Sigmoid(a), v)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).iter().map(|&x| x * x).collect();
        self.push(Op::Square(a), v)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().copied().sum();
        self.push(Op::Sum(a), vec![s])
    }

    /// Adjacency product on every length-`n` block of `a`.
    pub fn adjacency(&mut self, a: Var) -> Result<Var> {
        let g = self.graph()?;
        let len = self.value(a).len();
        if len % g.n_nodes() != 0 {
            return Err(Error::Dimension {
                expected: g.n_nodes(),
                got: len,
            });
        }
        let v = g.adjacency_apply_batched(self.value(a));
        self.push(Op::Adjacency(a), v)
    }

    /// `d_i^{gamma + offset}` for every node, with scalar `gamma`.
    pub fn degree_pow(&mut self, gamma: Var, offset: T) -> Result<Var> {
        let g = self.graph()?;
        check_scalar(self.value(gamma).len())?;
        let e = self.scalar(gamma) + offset;
        let v = g.log_degrees().iter().map(|&ld| (e * ld).exp()).collect();
        self.push(Op::DegreePow(gamma, offset), v)
    }

    /// Records `value = f(inputs)` for scalar inputs with the given partials.
    pub fn scalar_fn(&mut self, value: T, partials: Vec<(Var, T)>) -> Result<Var> {
        for &(v, _) in &partials {
            check_scalar(self.value(v).len())?;
        }
        self.push(Op::ScalarFn(partials), vec![value])
    }

    /// Adjoints of `output` (which must be a scalar) with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        check_scalar(self.value(output).len())?;
        let mut adj: Vec<Vec<T>> = self
            .nodes
            .iter()
            .take(output.0 + 1)
            .map(|n| vec![T::zero(); n.value.len()])
            .collect();
        adj[output.0][0] = T::one();
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = std::mem::take(&mut adj[idx]);
            if g.iter().all(|&x| x == T::zero()) {
                adj[idx] = g;
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut adj[a.0], g.iter().copied());
                    accumulate(&mut adj[b.0], g.iter().copied());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj[a.0], g.iter().copied());
                    accumulate(&mut adj[b.0], g.iter().map(|&x| -x));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = broadcast(&g, vb, |x, y| x * y);
                    let gb = broadcast(&g, va, |x, y| x * y);
                    accumulate(&mut adj[a.0], ga.into_iter());
                    accumulate(&mut adj[b.0], gb.into_iter());
                }
                Op::Scale(a, c) => accumulate(&mut adj[a.0], g.iter().map(|&x| *c * x)),
                Op::Exp(a) => accumulate(&mut adj[a.0], g.iter().zip(&node.value).map(|(&x, &y)| x * y)),
                Op::Tanh(a) => accumulate(
                    &mut adj[a.0],
                    g.iter().zip(&node.value).map(|(&x, &y)| x * (T::one() - y * y)),
                ),
                Op::Sigmoid(a) => accumulate(
                    &mut adj[a.0],
                    g.iter().zip(&node.value).map(|(&x, &y)| x * y * (T::one() - y)),
                ),
                Op::Square(a) => {
                    let two = T::lit(2.0);
                    accumulate(&mut adj[a.0], g.iter().zip(self.value(*a)).map(|(&x, &y)| two * x * y))
                }
                Op::Sum(a) => {
                    let s = g[0];
                    adj[a.0].iter_mut().for_each(|x| *x += s);
                }
                Op::Adjacency(a) => {
                    let back = self.graph()?.adjacency_apply_batched(&g);
                    accumulate(&mut adj[a.0], back.into_iter());
                }
                Op::DegreePow(gamma, _) => {
                    let lds = self.graph()?.log_degrees();
                    let d: T = g
                        .iter()
                        .zip(&node.value)
                        .zip(lds)
                        .map(|((&x, &y), &ld)| x * y * ld)
                        .sum();
                    adj[gamma.0][0] += d;
                }
                Op::ScalarFn(partials) => {
                    for &(v, p) in partials {
                        adj[v.0][0] += g[0] * p;
                    }
                }
            }
            adj[idx] = g;
        }
        adj.resize_with(self.nodes.len(), Vec::new);
        Ok(Gradients { adj })
    }
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn check_scalar(len: usize) -> Result<()> {
    if len != 1 {
        return Err(Error::Dimension { expected: 1, got: len });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_objective_has_zero_gradient() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(vec![1.0, 2.0]).unwrap();
        let c = t.leaf_scalar(3.0).unwrap();
        let g = t.backward(c).unwrap();
        assert_eq!(g.wrt(x), &[0.0, 0.0]);
    }

    #[test]
    fn half_squared_norm() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(vec![1.0, 2.0]).unwrap();
        let sq = t.square(x).unwrap();
        let s = t.sum(sq).unwrap();
        let h = t.scale(s, 0.5).unwrap();
        assert_eq!(t.scalar(h), 2.5);
        assert_eq!(t.backward(h).unwrap().wrt(x), &[1.0, 2.0]);
    }

    #[test]
    fn broadcasting_reduces_adjoints() {
        // f = sum(c * x) with scalar c and x of length 4 tiled over 2 blocks of 2
        let mut t = Tape::<f64>::new();
        let c = t.leaf_scalar(3.0).unwrap();
        let w = t.leaf(vec![1.0, -1.0]).unwrap();
        let x = t.leaf(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let cx = t.mul(c, x).unwrap();
        let wx = t.mul(cx, w).unwrap();
        let f = t.sum(wx).unwrap();
        assert_eq!(t.scalar(f), 3.0 * (1.0 - 2.0 + 3.0 - 4.0));
        let g = t.backward(f).unwrap();
        assert_eq!(g.wrt(c), &[-2.0]);
        assert_eq!(g.wrt(w), &[3.0 * 4.0, 3.0 * 6.0]);
        assert_eq!(g.wrt(x), &[3.0, -3.0, 3.0, -3.0]);
        let bad = t.leaf(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(t.add(x, bad).is_err());
    }

    #[test]
    fn graph_primitives_match_finite_differences() {
        let g = SparseGraph::from_edges(4, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (0, 3, 1.0), (0, 2, 1.0)]).unwrap();
        let h0 = vec![0.3, -0.2, 0.5, 1.0, -0.7, 0.1, 0.2, 0.4];
        let f = |theta: f64, h: &[f64]| -> (f64, f64, Vec<f64>) {
            let mut t = Tape::with_graph(&g);
            let th = t.leaf_scalar(theta).unwrap();
            let x = t.leaf(h.to_vec()).unwrap();
            let gam = t.sigmoid(th).unwrap();
            let dp = t.degree_pow(gam, -1.0).unwrap();
            let ax = t.adjacency(x).unwrap();
            let y = t.mul(dp, ax).unwrap();
            let e = t.exp(th).unwrap();
            let y2 = t.mul(e, y).unwrap();
            let th2 = t.tanh(y2).unwrap();
            let sq = t.square(th2).unwrap();
            let out = t.sum(sq).unwrap();
            let gr = t.backward(out).unwrap();
            (t.scalar(out), gr.wrt(th)[0], gr.wrt(x).to_vec())
        };
        let theta = 0.4;
        let (_, dth, dx) = f(theta, &h0);
        let eps = 1e-6;
        let fd = (f(theta + eps, &h0).0 - f(theta - eps, &h0).0) / (2.0 * eps);
        assert!((fd - dth).abs() < 1e-7, "{fd} vs {dth}");
        for i in 0..h0.len() {
            let mut hp = h0.clone();
            let mut hm = h0.clone();
            hp[i] += eps;
            hm[i] -= eps;
            let fd = (f(theta, &hp).0 - f(theta, &hm).0) / (2.0 * eps);
            assert!((fd - dx[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn scalar_fn_chains() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf_scalar(2.0).unwrap();
        let b = t.leaf_scalar(5.0).unwrap();
        let f = t.scalar_fn(10.0, vec![(a, 5.0), (b, 2.0)]).unwrap();
        let out = t.scale(f, 3.0).unwrap();
        let g = t.backward(out).unwrap();
        assert_eq!((g.wrt(a)[0], g.wrt(b)[0]), (15.0, 6.0));
    }

    #[test]
    fn capacity_is_enforced() {
        let mut t = Tape::<f64>::new().with_capacity(2);
        t.leaf_scalar(1.0).unwrap();
        t.leaf_scalar(1.0).unwrap();
        assert!(matches!(t.leaf_scalar(1.0), Err(Error::Capacity(_))));
    }
}
