use crate::error::{check_len, Error, Result};
use crate::graph::{ObservationMask, SparseGraph};
use crate::linalg::{preconditioned_cg, CgConfig, CgReport, FnOperator, Preconditioner};
use crate::scalar::Scalar;

/// Harmonic interpolation: every unobserved value becomes the weighted mean
/// of its neighbours. Solves the unobserved block of the graph Laplacian,
/// `L_uu x_u = W_uo y_o`, by Jacobi-preconditioned CG; observed values pass
/// through unchanged.
pub fn label_propagation<T: Scalar>(
    g: &SparseGraph<T>,
    y: &[T],
    mask: &ObservationMask,
    cg: &CgConfig<T>,
) -> Result<(Vec<T>, CgReport<T>)> {
    let n = g.n_nodes();
    check_len(n, y.len())?;
    check_len(n, mask.len())?;
    if mask.m_count() == 0 {
        return Err(Error::Validation("label propagation needs an observed node".into()));
    }
    let unobserved: Vec<usize> = mask.unobserved_indices().collect();
    let mut pred = y.to_vec();
    if unobserved.is_empty() {
        let report = CgReport {
            iterations: 0,
            final_residual_norm: T::zero(),
            converged: true,
        };
        return Ok((pred, report));
    }
    let mut local = vec![usize::MAX; n];
    for (k, &i) in unobserved.iter().enumerate() {
        local[i] = k;
    }
    let mut rhs = vec![T::zero(); unobserved.len()];
    for (k, &i) in unobserved.iter().enumerate() {
        for (j, w) in g.neighbors(i) {
            if mask.is_observed(j) {
                rhs[k] += w * y[j];
            }
        }
    }
    let op = FnOperator::new(unobserved.len(), |v: &[T], out: &mut [T]| {
        for (k, &i) in unobserved.iter().enumerate() {
            let mut acc = g.degrees()[i] * v[k];
            for (j, w) in g.neighbors(i) {
                if local[j] != usize::MAX {
                    acc -= w * v[local[j]];
                }
            }
            out[k] = acc;
        }
    });
    let inv_diag = unobserved.iter().map(|&i| g.degrees()[i].recip()).collect();
    let (x, report) = preconditioned_cg(&op, &rhs, cg, None, &Preconditioner::Jacobi(inv_diag))?;
    for (k, &i) in unobserved.iter().enumerate() {
        pred[i] = x[k];
    }
    Ok((pred, report))
}
