//! Eigenvalues of dense symmetric matrices: Householder tridiagonalization
//! followed by implicit-shift QL iteration.

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::linalg::dense::DenseMatrix;
use crate::scalar::Scalar;

/// Default largest graph for which the dense eigendecomposition is attempted.
pub const DEFAULT_DENSE_EIGEN_CAP: usize = 20_000;

/// Reduces a symmetric matrix to tridiagonal form `(diag, offdiag)`, where
/// `offdiag[i]` couples rows `i` and `i + 1` and the last entry is zero.
pub fn tridiagonalize<T: Scalar>(a: &DenseMatrix<T>) -> (Vec<T>, Vec<T>) {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m: Vec<T> = a.as_slice().to_vec();
    let mut diag = vec![T::zero(); n];
    let mut off = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let half = T::lit(0.5);

    for k in 0..n.saturating_sub(2) {
        diag[k] = m[k * n + k];
        let lo = k + 1;
        let x = &m[k * n + lo..k * n + n];
        let xnorm = x.iter().map(|&t| t * t).sum::<T>().sqrt();
        let tail = x[1..].iter().map(|&t| t * t).sum::<T>();
        if tail == T::zero() {
            off[k] = x[0];
            continue;
        }
        let alpha = if x[0] >= T::zero() { -xnorm } else { xnorm };
        let len = n - lo;
        v[..len].copy_from_slice(x);
        v[0] -= alpha;
        let vnorm2: T = v[..len].iter().map(|&t| t * t).sum();
        let tau = T::lit(2.0) / vnorm2;
        off[k] = alpha;

        // p = tau * B v on the trailing block B = m[lo.., lo..]
        for i in 0..len {
            let row = &m[(lo + i) * n + lo..(lo + i) * n + n];
            p[i] = tau * row.iter().zip(&v[..len]).map(|(&a, &b)| a * b).sum::<T>();
        }
        let kfac = half * tau * p[..len].iter().zip(&v[..len]).map(|(&a, &b)| a * b).sum::<T>();
        for i in 0..len {
            p[i] -= kfac * v[i];
        }
        // B -= v p^T + p v^T
        for i in 0..len {
            let (vi, pi) = (v[i], p[i]);
            let row = &mut m[(lo + i) * n + lo..(lo + i) * n + n];
            for j in 0..len {
                row[j] -= vi * p[j] + pi * v[j];
            }
        }
    }
    if n >= 2 {
        diag[n - 2] = m[(n - 2) * n + n - 2];
        off[n - 2] = m[(n - 2) * n + n - 1];
    }
    if n >= 1 {
        diag[n - 1] = m[n * n - 1];
        off[n - 1] = T::zero();
    }
    (diag, off)
}

fn copysign<T: Scalar>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL, unsorted.
pub fn tridiagonal_eigenvalues<T: Scalar>(mut d: Vec<T>, mut e: Vec<T>) -> Result<Vec<T>> {
    let n = d.len();
    let eps = T::epsilon();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numeric("QL iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (T::lit(2.0) * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + copysign(r, g));
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + T::lit(2.0) * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(d)
}

/// All eigenvalues of a dense symmetric matrix, ascending.
pub fn symmetric_matrix_eigenvalues<T: Scalar>(a: &DenseMatrix<T>) -> Result<Vec<T>> {
    let (d, e) = tridiagonalize(a);
    let mut ev = tridiagonal_eigenvalues(d, e)?;
    ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(ev)
}

/// Dense `Ã = D^{-1/2} A D^{-1/2}`.
pub fn dense_normalized_adjacency<T: Scalar>(g: &SparseGraph<T>) -> DenseMatrix<T> {
    let n = g.n_nodes();
    let mut m = DenseMatrix::zeros(n, n);
    let d = g.degrees();
    for i in 0..n {
        for (j, w) in g.neighbors(i) {
            m[(i, j)] = w / (d[i] * d[j]).sqrt();
        }
    }
    m
}

/// Eigenvalues of `D^{-1} A`, obtained from the similar symmetric matrix
/// `Ã`, ascending and clamped to `[-1, 1]`.
pub fn symmetric_eigenvalues<T: Scalar>(g: &SparseGraph<T>, cap: usize) -> Result<Vec<T>> {
    if g.n_nodes() > cap {
        return Err(Error::Capacity(format!(
            "{} nodes exceed the dense eigendecomposition cap of {cap}; use the power-series backend",
            g.n_nodes()
        )));
    }
    let ev = symmetric_matrix_eigenvalues(&dense_normalized_adjacency(g))?;
    Ok(ev.into_iter().map(|x| x.max(-T::one()).min(T::one())).collect())
}
