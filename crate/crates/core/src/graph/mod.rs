//! Weighted undirected graphs in compressed sparse row form.

mod delaunay;
mod io;
mod mask;

pub use delaunay::{delaunay_edges, generate_delaunay_graph, DelaunayConfig, PlaneGraph};
pub use io::{
    load_edge_list, parse_edge_list, read_mask, read_node_vector, read_points_csv,
    write_edge_list, write_mask, write_node_vector, write_points_csv,
};
pub use mask::{generate_mask, nested_masks, ObservationMask};

use std::collections::VecDeque;

use sha2::{Digest, Sha256};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// Symmetric, positively weighted graph without self-loops.
///
/// Both directions of every edge are stored, and column indices are sorted
/// within each row. Degrees `d_i = sum_j A_ij` are cached together with
/// `ln d_i` and `d_i^{-1/2}`, which the layers and normalized adjacency use on
/// every application.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGraph<T> {
    n_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    weights: Vec<T>,
    degrees: Vec<T>,
    log_degrees: Vec<T>,
    inv_sqrt_degrees: Vec<T>,
}

impl<T: Scalar> SparseGraph<T> {
    /// Builds a graph from an undirected edge list.
    ///
    /// Self-loops are dropped. For duplicate edges (in either direction) the
    /// first occurrence wins. The result must be connected with all weights
    /// strictly positive.
    pub fn from_edges<I>(n_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        if n_nodes == 0 {
            return Err(Error::Validation("graph must have at least one node".into()));
        }
        let mut pairs: Vec<(usize, usize, usize, T)> = Vec::new();
        for (order, (u, v, w)) in edges.into_iter().enumerate() {
            for id in [u, v] {
                if id >= n_nodes {
                    return Err(Error::NodeOutOfBounds { id, n: n_nodes });
                }
            }
            if u == v {
                continue;
            }
            if !(w > T::zero()) || !w.is_finite() {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) has non-positive or non-finite weight {w}"
                )));
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            pairs.push((a, b, order, w));
        }
        // stable dedup: keep the earliest listed weight for each unordered pair
        pairs.sort_by(|x, y| (x.0, x.1, x.2).cmp(&(y.0, y.1, y.2)));
        pairs.dedup_by(|later, earlier| later.0 == earlier.0 && later.1 == earlier.1);

        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n_nodes];
        for &(a, b, _, w) in &pairs {
            rows[a].push((b, w));
            rows[b].push((a, w));
        }
        Self::from_rows(rows)
    }

    fn from_rows(mut rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        let n_nodes = rows.len();
        let mut row_offsets = Vec::with_capacity(n_nodes + 1);
        let mut col_indices = Vec::new();
        let mut weights = Vec::new();
        row_offsets.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            for &(j, w) in row.iter() {
                col_indices.push(j);
                weights.push(w);
            }
            row_offsets.push(col_indices.len());
        }
        let degrees: Vec<T> = (0..n_nodes)
            .map(|i| weights[row_offsets[i]..row_offsets[i + 1]].iter().copied().sum())
            .collect();
        if let Some(i) = degrees.iter().position(|&d| !(d > T::zero())) {
            return Err(Error::Validation(format!("node {i} is isolated")));
        }
        let g = SparseGraph {
            n_nodes,
            log_degrees: degrees.iter().map(|d| d.ln()).collect(),
            inv_sqrt_degrees: degrees.iter().map(|d| d.sqrt().recip()).collect(),
            row_offsets,
            col_indices,
            weights,
            degrees,
        };
        if !g.is_connected() {
            return Err(Error::Validation("graph is not connected".into()));
        }
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of stored (directed) entries, twice the undirected edge count.
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.nnz() / 2
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn degrees(&self) -> &[T] {
        &self.degrees
    }

    pub fn log_degrees(&self) -> &[T] {
        &self.log_degrees
    }

    pub fn sum_log_degrees(&self) -> T {
        self.log_degrees.iter().copied().sum()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_nodes).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| j > i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    /// `out = A v` for one node vector.
    pub fn adjacency_apply_into(&self, v: &[T], out: &mut [T]) {
        for i in 0..self.n_nodes {
            let mut acc = T::zero();
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.weights[k] * v[self.col_indices[k]];
            }
            out[i] = acc;
        }
    }

    /// `A v` applied independently to each length-`n` block of a batched vector.
    pub fn adjacency_apply_batched(&self, v: &[T]) -> Vec<T> {
        let n = self.n_nodes;
        debug_assert_eq!(v.len() % n, 0);
        let mut out = vec![T::zero(); v.len()];
        for (vb, ob) in v.chunks(n).zip(out.chunks_mut(n)) {
            self.adjacency_apply_into(vb, ob);
        }
        out
    }

    pub fn adjacency_apply(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.n_nodes, v.len())?;
        let mut out = vec![T::zero(); self.n_nodes];
        self.adjacency_apply_into(v, &mut out);
        Ok(out)
    }

    /// `Ã v` with `Ã = D^{-1/2} A D^{-1/2}`, in one pass over the stored entries.
    pub fn normalized_adjacency_apply(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.n_nodes, v.len())?;
        let mut out = vec![T::zero(); self.n_nodes];
        self.normalized_adjacency_apply_into(v, &mut out);
        Ok(out)
    }

    pub fn normalized_adjacency_apply_into(&self, v: &[T], out: &mut [T]) {
        let s = &self.inv_sqrt_degrees;
        for i in 0..self.n_nodes {
            let mut acc = T::zero();
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                let j = self.col_indices[k];
                acc += self.weights[k] * s[j] * v[j];
            }
            out[i] = s[i] * acc;
        }
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_distances(0, usize::MAX).iter().all(|d| d.is_some())
    }

    /// Unweighted hop distances from `source`, exploring at most `max_depth` hops.
    pub fn bfs_distances(&self, source: usize, max_depth: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_nodes];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            if du == max_depth {
                continue;
            }
            for k in self.row_offsets[u]..self.row_offsets[u + 1] {
                let v = self.col_indices[k];
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Graph connecting every pair at hop distance `<= k`, with unit weights.
    /// Edge weights of `self` are ignored.
    pub fn k_hop_graph(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation("k-hop graph requires k >= 1".into()));
        }
        let rows: Vec<Vec<(usize, T)>> = (0..self.n_nodes)
            .map(|i| {
                self.bfs_distances(i, k)
                    .into_iter()
                    .enumerate()
                    .filter(|&(j, d)| j != i && d.is_some())
                    .map(|(j, _)| (j, T::one()))
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Content hash over structure and weights, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_nodes as u64).to_le_bytes());
        for &o in &self.row_offsets {
            h.update((o as u64).to_le_bytes());
        }
        for &c in &self.col_indices {
            h.update((c as u64).to_le_bytes());
        }
        for &w in &self.weights {
            h.update(w.as_f64().to_bits().to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }

    /// Dense row-major adjacency matrix. Only meant for small graphs.
    pub fn to_dense_adjacency(&self) -> Vec<Vec<T>> {
        let mut a = vec![vec![T::zero(); self.n_nodes]; self.n_nodes];
        for i in 0..self.n_nodes {
            for (j, w) in self.neighbors(i) {
                a[i][j] = w;
            }
        }
        a
    }

    /// Converts the weights to another scalar type.
    pub fn cast<U: Scalar>(&self) -> SparseGraph<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
        SparseGraph {
            n_nodes: self.n_nodes,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            weights: conv(&self.weights),
            degrees: conv(&self.degrees),
            log_degrees: conv(&self.log_degrees),
            inv_sqrt_degrees: conv(&self.inv_sqrt_degrees),
        }
    }
}
