//! General sparse matrices and an envelope (profile) Cholesky factorization
//! under reverse Cuthill–McKee ordering. Used where a precision matrix is
//! needed explicitly: synthetic data generation, true posteriors, and the
//! IGMRF marginal likelihood.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;
use crate::scalar::Scalar;

/// Compressed sparse row matrix with sorted, unique column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Duplicate coordinates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut trips: Vec<(usize, usize, T)>) -> Self {
        trips.sort_by_key(|&(i, j, _)| (i, j));
        let mut offsets = vec![0; n_rows + 1];
        let mut cols = Vec::with_capacity(trips.len());
        let mut vals: Vec<T> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trips {
            assert!(i < n_rows && j < n_cols, "triplet out of range");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            offsets[i + 1] += offsets[i];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            offsets,
            cols,
            vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![T::one(); n])
    }

    pub fn diag(d: &[T]) -> Self {
        Self::from_triplets(d.len(), d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.offsets[i]..self.offsets[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(j, a)| a * v[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.n_cols, self.n_rows, self.triplets().map(|(i, j, v)| (j, i, v)).collect())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n_cols, other.n_rows);
        let mut acc = vec![T::zero(); other.n_cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.n_cols];
        let mut trips = Vec::new();
        for i in 0..self.n_rows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !mark[j] {
                        mark[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &touched {
                trips.push((i, j, acc[j]));
                acc[j] = T::zero();
                mark[j] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.n_rows, other.n_cols, trips)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        Self::from_triplets(self.n_rows, self.n_cols, self.triplets().chain(other.triplets()).collect())
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `self^T self`.
    pub fn gram(&self) -> Self {
        self.transpose().matmul(self)
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }
}

/// Reverse Cuthill–McKee ordering of a structurally symmetric pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee<T: Scalar>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.n_rows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut nbrs: Vec<usize> = Vec::new();

    let bfs_levels = |start: usize| -> (usize, usize) {
        // (depth, a minimum-degree node of the last level)
        let mut depth = vec![usize::MAX; n];
        depth[start] = 0;
        let mut q = VecDeque::from([start]);
        let mut last = start;
        while let Some(u) = q.pop_front() {
            if depth[u] > depth[last] || (depth[u] == depth[last] && degree[u] < degree[last]) {
                last = u;
            }
            for (v, _) in a.row(u) {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    q.push_back(v);
                }
            }
        }
        (depth[last], last)
    };

    while order.len() < n {
        let mut start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree[i])
            .unwrap();
        // pseudo-peripheral start node
        let (mut ecc, _) = bfs_levels(start);
        for _ in 0..4 {
            let (_, cand) = bfs_levels(start);
            let (e2, _) = bfs_levels(cand);
            if e2 > ecc {
                ecc = e2;
                start = cand;
            } else {
                break;
            }
        }
        visited[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            order.push(u);
            nbrs.clear();
            nbrs.extend(a.row(u).map(|(v, _)| v).filter(|&v| !visited[v]));
            nbrs.sort_by_key(|&v| degree[v]);
            for &v in &nbrs {
                visited[v] = true;
                q.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// `P A P^T = L L^T` with `L` stored row-wise over its envelope.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky<T> {
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    first: Vec<usize>,
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> EnvelopeCholesky<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.n_rows();
        if n != a.n_cols() {
            return Err(Error::Validation("Cholesky of a non-square matrix".into()));
        }
        let perm = reverse_cuthill_mckee(a);
        let mut inv_perm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in a.row(old) {
                let pj = inv_perm[j];
                if pj < first[new] {
                    first[new] = pj;
                }
            }
        }
        let mut rows: Vec<Vec<T>> = (0..n).map(|i| vec![T::zero(); i - first[i] + 1]).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in a.row(old) {
                let pj = inv_perm[j];
                if pj <= new {
                    rows[new][pj - first[new]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let start = fi.max(fj);
                let s: T = if start < j {
                    let ri = &rows[i][start - fi..j - fi];
                    let rj = &rows[j][start - fj..j - fj];
                    ri.iter().zip(rj).map(|(&x, &y)| x * y).sum()
                } else {
                    T::zero()
                };
                let v = rows[i][j - fi] - s;
                if j < i {
                    let ljj = rows[j][j - fj];
                    rows[i][j - fi] = v / ljj;
                } else {
                    if !(v > T::zero()) {
                        return Err(Error::Numeric(format!(
                            "matrix not positive definite (pivot {i} = {v})"
                        )));
                    }
                    rows[i][i - fi] = v.sqrt();
                }
            }
        }
        Ok(EnvelopeCholesky {
            perm,
            inv_perm,
            first,
            rows,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries of the factor.
    pub fn profile_size(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    fn diag(&self, i: usize) -> T {
        self.rows[i][i - self.first[i]]
    }

    pub fn log_det(&self) -> T {
        T::lit(2.0) * (0..self.dim()).map(|i| self.diag(i).ln()).sum::<T>()
    }

    /// Solves `L y = b` in permuted coordinates, in place.
    fn forward(&self, y: &mut [T], from: usize) {
        for i in from..self.dim() {
            let fi = self.first[i].max(from);
            let off = self.first[i];
            let s: T = self.rows[i][fi - off..i - off]
                .iter()
                .zip(&y[fi..i])
                .map(|(&a, &b)| a * b)
                .sum();
            y[i] = (y[i] - s) / self.diag(i);
        }
    }

    /// Solves `L^T x = y` in permuted coordinates, in place.
    fn backward(&self, x: &mut [T]) {
        for i in (0..self.dim()).rev() {
            x[i] /= self.diag(i);
            let xi = x[i];
            let fi = self.first[i];
            for (xk, &lik) in x[fi..i].iter_mut().zip(&self.rows[i][..i - fi]) {
                *xk -= lik * xi;
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        self.forward(&mut y, 0);
        self.backward(&mut y);
        (0..self.dim()).map(|old| y[self.inv_perm[old]]).collect()
    }

    /// Maps standard normal `z` to a draw with covariance `A^{-1}`.
    pub fn sample_with_precision(&self, z: &[T]) -> Vec<T> {
        let mut x = z.to_vec();
        self.backward(&mut x);
        (0..self.dim()).map(|old| x[self.inv_perm[old]]).collect()
    }

    /// Diagonal of `A^{-1}`.
    /// Diagonal of `A^{-1}` by the Takahashi recursion restricted to the
    /// envelope, `O(sum of squared column counts)`.
    pub fn inverse_diagonal(&self) -> Vec<T> {
        let n = self.dim();
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for k in 0..n {
            for j in self.first[k]..k {
                cols[j].push(k);
            }
        }
        // z[i][j - first[i]] holds Sigma_ij for j <= i
        let mut z: Vec<Vec<T>> = self.rows.iter().map(|r| vec![T::zero(); r.len()]).collect();
        let get = |z: &Vec<Vec<T>>, i: usize, k: usize| -> T {
            let (a, b) = if i >= k { (i, k) } else { (k, i) };
            z[a][b - self.first[a]]
        };
        for j in (0..n).rev() {
            let ljj = self.diag(j);
            let col = &cols[j];
            for &i in col.iter().rev() {
                let mut acc = T::zero();
                for &k in col {
                    acc += self.rows[k][j - self.first[k]] * get(&z, i, k);
                }
                z[i][j - self.first[i]] = -acc / ljj;
            }
            let mut acc = T::zero();
            for &k in col {
                acc += self.rows[k][j - self.first[k]] * z[k][j - self.first[k]];
            }
            z[j][j - self.first[j]] = (T::one() / ljj - acc) / ljj;
        }
        let mut out = vec![T::zero(); n];
        for i in 0..n {
            out[self.perm[i]] = z[i][i - self.first[i]];
        }
        out
    }
}
