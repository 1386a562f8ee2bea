use crate::error::{check_len, Error, Result};
use crate::scalar::{axpy, dot, norm2, Scalar};

/// Matrix-free square linear map.
pub trait LinearOperator<T: Scalar> {
    fn dim(&self) -> usize;

    fn apply_into(&self, v: &[T], out: &mut [T]);

    fn apply(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.apply_into(v, &mut out);
        out
    }
}

/// Wraps a closure `v -> A v` of a fixed dimension.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator { dim, f }
    }
}

impl<T: Scalar, F: Fn(&[T], &mut [T])> LinearOperator<T> for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, v: &[T], out: &mut [T]) {
        (self.f)(v, out)
    }
}

/// Preconditioner `M^{-1}` used by [`preconditioned_cg`].
#[derive(Clone, Debug, Default)]
pub enum Preconditioner<T> {
    #[default]
    Identity,
    /// Inverse diagonal of the operator.
    Jacobi(Vec<T>),
}

impl<T: Scalar> Preconditioner<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        match self {
            Preconditioner::Identity => z.copy_from_slice(r),
            Preconditioner::Jacobi(inv_diag) => {
                for ((zi, &ri), &m) in z.iter_mut().zip(r).zip(inv_diag) {
                    *zi = ri * m;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgConfig<T> {
    /// Relative residual target `||A x - b|| <= tol * ||b||`.
    pub tol: T,
    /// Defaults to twice the dimension.
    pub max_iter: Option<usize>,
}

impl<T: Scalar> Default for CgConfig<T> {
    fn default() -> Self {
        CgConfig {
            tol: T::lit(1e-7),
            max_iter: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgReport<T> {
    pub iterations: usize,
    /// Relative residual `||A x - b|| / ||b||` of the returned iterate.
    pub final_residual_norm: T,
    pub converged: bool,
}

pub fn conjugate_gradient<T: Scalar, A: LinearOperator<T> + ?Sized>(
    op: &A,
    rhs: &[T],
    config: &CgConfig<T>,
    x0: Option<&[T]>,
) -> Result<(Vec<T>, CgReport<T>)> {
    preconditioned_cg(op, rhs, config, x0, &Preconditioner::Identity)
}

/// Preconditioned conjugate gradients for symmetric positive definite `op`.
///
/// Non-convergence is not an error: the last iterate is returned with
/// `converged == false`. Non-finite iterates are.
pub fn preconditioned_cg<T: Scalar, A: LinearOperator<T> + ?Sized>(
    op: &A,
    rhs: &[T],
    config: &CgConfig<T>,
    x0: Option<&[T]>,
    precond: &Preconditioner<T>,
) -> Result<(Vec<T>, CgReport<T>)> {
    let n = op.dim();
    check_len(n, rhs.len())?;
    if !(config.tol > T::zero()) {
        return Err(Error::Validation("CG tolerance must be positive".into()));
    }
    let max_iter = config.max_iter.unwrap_or(2 * n).max(1);
    let b_norm = norm2(rhs);
    if b_norm == T::zero() {
        return Ok((
            vec![T::zero(); n],
            CgReport {
                iterations: 0,
                final_residual_norm: T::zero(),
                converged: true,
            },
        ));
    }
    let target = config.tol * b_norm;

    let mut x = match x0 {
        Some(x0) => {
            check_len(n, x0.len())?;
            x0.to_vec()
        }
        None => vec![T::zero(); n],
    };
    let mut r = rhs.to_vec();
    if x0.is_some() {
        let ax = op.apply(&x);
        for (ri, ai) in r.iter_mut().zip(&ax) {
            *ri -= *ai;
        }
    }
    let mut z = vec![T::zero(); n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    let mut iterations = 0;
    let mut r_norm = norm2(&r);

    while r_norm > target && iterations < max_iter {
        op.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= T::zero() {
            if !pap.is_finite() {
                return Err(Error::Numeric("non-finite value in CG iteration".into()));
            }
            return Err(Error::Numeric("operator is not positive definite".into()));
        }
        let step = rz / pap;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        iterations += 1;
        r_norm = norm2(&r);
        if !r_norm.is_finite() {
            return Err(Error::Numeric("non-finite residual in CG iteration".into()));
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }

    // report the true residual rather than the recursively updated one
    let ax = op.apply(&x);
    let true_res = ax
        .iter()
        .zip(rhs)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt();
    let rel = true_res / b_norm;
    Ok((
        x,
        CgReport {
            iterations,
            final_residual_norm: rel,
            converged: rel <= config.tol,
        },
    ))
}
