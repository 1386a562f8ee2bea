//! Solvers, factorizations and random streams.

pub mod cg;
pub mod dense;
pub mod eigen;
pub mod rng;
pub mod sparse;

pub use cg::{conjugate_gradient, preconditioned_cg, CgConfig, CgReport, FnOperator, LinearOperator, Preconditioner};
pub use dense::{Cholesky, DenseMatrix};
pub use eigen::{symmetric_eigenvalues, symmetric_matrix_eigenvalues, DEFAULT_DENSE_EIGEN_CAP};
pub use rng::{rademacher, rng_rademacher, rng_standard_normal, standard_normal, Purpose, SeedStreams};
pub use sparse::{CsrMatrix, EnvelopeCholesky};
