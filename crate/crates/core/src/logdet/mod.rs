//! Log-determinants of the layer matrices.
//!
//! Every layer factors as `G_l = D^{gamma-1/2} (alpha I + beta Ã) D^{1/2}`, so
//! `log|det G_l| = gamma sum(log d) + N log alpha + log det(I + (beta/alpha) Ã)`.
//! The last term is evaluated either exactly from the spectrum of `Ã`
//! (eigen backend) or by a truncated power series in traces of `Ã^k`.

mod cache;

pub use cache::{cache_file_name, PREPROCESS_VERSION};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::linalg::{rademacher, symmetric_eigenvalues, Purpose, SeedStreams};
use crate::model::{LayerCoefficients, LayerParams};
use crate::scalar::{dot, sigmoid, Scalar};

/// Default number of series terms.
pub const DEFAULT_SERIES_TERMS: usize = 50;
/// Default number of Hutchinson probes.
pub const DEFAULT_TRACE_PROBES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LogdetBackend {
    Eigen,
    PowerSeries,
}

impl fmt::Display for LogdetBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogdetBackend::Eigen => "eigen",
            LogdetBackend::PowerSeries => "power_series",
        })
    }
}

impl FromStr for LogdetBackend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "eigen" => Ok(LogdetBackend::Eigen),
            "power_series" | "power-series" | "series" => Ok(LogdetBackend::PowerSeries),
            other => Err(Error::Validation(format!("unknown log-det backend '{other}'"))),
        }
    }
}

/// Eigenvalues of `D^{-1} A` for the exact backend.
#[derive(Clone, Debug, PartialEq)]
pub struct EigPreprocess<T> {
    pub lambda_prime: Vec<T>,
    pub sum_log_degrees: T,
    pub graph_hash: String,
}

/// Hutchinson estimates `t_k ≈ tr(Ã^k)`, `k = 1..=K`, with their standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct TracePreprocess<T> {
    pub traces: Vec<T>,
    pub std_errors: Vec<T>,
    pub n_nodes: usize,
    pub n_probes: usize,
    pub seed: u64,
    pub sum_log_degrees: T,
    pub graph_hash: String,
}

impl<T: Scalar> TracePreprocess<T> {
    pub fn k(&self) -> usize {
        self.traces.len()
    }

    /// Exact traces from a known spectrum (testing and tiny graphs).
    pub fn from_spectrum(pre: &EigPreprocess<T>, k: usize) -> Self {
        let traces = (1..=k as i32)
            .map(|p| pre.lambda_prime.iter().map(|&l| l.powi(p)).sum())
            .collect();
        TracePreprocess {
            traces,
            std_errors: vec![T::zero(); k],
            n_nodes: pre.lambda_prime.len(),
            n_probes: 0,
            seed: 0,
            sum_log_degrees: pre.sum_log_degrees,
            graph_hash: pre.graph_hash.clone(),
        }
    }
}

/// Pre-processed graph quantities for one of the two backends.
#[derive(Clone, Debug, PartialEq)]
pub enum Preprocess<T> {
    Eigen(EigPreprocess<T>),
    PowerSeries(TracePreprocess<T>),
}

impl<T: Scalar> Preprocess<T> {
    pub fn backend(&self) -> LogdetBackend {
        match self {
            Preprocess::Eigen(_) => LogdetBackend::Eigen,
            Preprocess::PowerSeries(_) => LogdetBackend::PowerSeries,
        }
    }

    pub fn graph_hash(&self) -> &str {
        match self {
            Preprocess::Eigen(p) => &p.graph_hash,
            Preprocess::PowerSeries(p) => &p.graph_hash,
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            Preprocess::Eigen(p) => p.lambda_prime.len(),
            Preprocess::PowerSeries(p) => p.n_nodes,
        }
    }

    /// Fails unless this pre-process was computed for `g`.
    pub fn check_graph(&self, g: &SparseGraph<T>) -> Result<()> {
        if self.n_nodes() != g.n_nodes() || self.graph_hash() != g.content_hash() {
            return Err(Error::BackendMismatch(format!(
                "pre-process for graph {} ({} nodes) used with graph {} ({} nodes)",
                self.graph_hash(),
                self.n_nodes(),
                g.content_hash(),
                g.n_nodes()
            )));
        }
        Ok(())
    }

    pub fn expect_backend(&self, backend: LogdetBackend) -> Result<()> {
        if self.backend() != backend {
            return Err(Error::BackendMismatch(format!(
                "requested {backend} but pre-process is {}",
                self.backend()
            )));
        }
        Ok(())
    }
}

pub fn precompute_eigen<T: Scalar>(g: &SparseGraph<T>, cap: usize) -> Result<EigPreprocess<T>> {
    Ok(EigPreprocess {
        lambda_prime: symmetric_eigenvalues(g, cap)?,
        sum_log_degrees: g.sum_log_degrees(),
        graph_hash: g.content_hash(),
    })
}

/// Hutchinson estimates of `tr(Ã^k)` from Rademacher probes; each probe is
/// pushed through `Ã` once per power.
pub fn precompute_traces<T: Scalar>(
    g: &SparseGraph<T>,
    k: usize,
    n_probes: usize,
    seed: u64,
) -> Result<TracePreprocess<T>> {
    if k == 0 || n_probes == 0 {
        return Err(Error::Validation("trace pre-process needs K >= 1 and at least one probe".into()));
    }
    let n = g.n_nodes();
    let streams = SeedStreams::new(seed);
    let mut sum = vec![0.0f64; k];
    let mut sum_sq = vec![0.0f64; k];
    let mut v = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    for p in 0..n_probes {
        let u: Vec<T> = rademacher(&mut streams.rng(Purpose::TraceProbes, p as u64), n);
        v.copy_from_slice(&u);
        for j in 0..k {
            g.normalized_adjacency_apply_into(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
            let s = dot(&u, &v).as_f64();
            sum[j] += s;
            sum_sq[j] += s * s;
        }
    }
    let np = n_probes as f64;
    let traces = sum.iter().map(|&s| T::lit(s / np)).collect();
    let std_errors = sum
        .iter()
        .zip(&sum_sq)
        .map(|(&s, &s2)| {
            if n_probes < 2 {
                return T::zero();
            }
            let mean = s / np;
            let var = ((s2 - np * mean * mean) / (np - 1.0)).max(0.0);
            T::lit((var / np).sqrt())
        })
        .collect();
    Ok(TracePreprocess {
        traces,
        std_errors,
        n_nodes: n,
        n_probes,
        seed,
        sum_log_degrees: g.sum_log_degrees(),
        graph_hash: g.content_hash(),
    })
}

/// A log-determinant together with its derivatives with respect to the free
/// layer parameters `(theta1, theta2, theta3)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogdetGrad<T> {
    pub value: T,
    pub d_theta: [T; 3],
}

fn check_ratio<T: Scalar>(alpha: T, beta: T) -> Result<T> {
    if !(alpha > T::zero()) || !(beta.abs() < alpha) {
        return Err(Error::Numeric(format!(
            "layer determinant needs alpha > 0 and |beta| < alpha (alpha={alpha}, beta={beta})"
        )));
    }
    Ok(beta / alpha)
}

/// `sum_i gamma log d_i + log|alpha + beta lambda'_i|`.
pub fn layer_logdet_eigen<T: Scalar>(pre: &EigPreprocess<T>, alpha: T, beta: T, gamma: T) -> Result<T> {
    check_ratio(alpha, beta)?;
    let mut acc = gamma * pre.sum_log_degrees;
    for &l in &pre.lambda_prime {
        let f = alpha + beta * l;
        if !(f > T::zero()) {
            return Err(Error::Numeric(format!("alpha + beta * lambda = {f} is not positive")));
        }
        acc += f.ln();
    }
    Ok(acc)
}

/// `N log alpha + gamma sum(log d) - sum_k (1/k) (-beta/alpha)^k t_k`.
pub fn layer_logdet_power_series<T: Scalar>(pre: &TracePreprocess<T>, alpha: T, beta: T, gamma: T) -> Result<T> {
    let r = check_ratio(alpha, beta)?;
    let neg_r = -r;
    let mut pow = T::one();
    let mut series = T::zero();
    for (k, &t) in pre.traces.iter().enumerate() {
        pow *= neg_r;
        series -= pow * t / T::from_count(k + 1);
    }
    Ok(T::from_count(pre.n_nodes) * alpha.ln() + gamma * pre.sum_log_degrees + series)
}

/// Upper bound on the error of truncating the series after `k` terms:
/// `N (-log(1 - |r|) - sum_{j<=K} |r|^j / j)` with `r = beta / alpha`.
pub fn truncation_bound<T: Scalar>(alpha: T, beta: T, n: usize, k: usize) -> Result<T> {
    let r = check_ratio(alpha, beta)?.abs();
    let mut partial = T::zero();
    let mut pow = T::one();
    for j in 1..=k {
        pow *= r;
        partial += pow / T::from_count(j);
    }
    let bound = -(-r).ln_1p() - partial;
    Ok(T::from_count(n) * bound.max(T::zero()))
}

/// Conservative standard error of the series value due to trace noise,
/// `sum_k |r|^k / k * se_k` (probes are shared across `k`, so errors are not
/// independent and are added linearly).
pub fn series_standard_error<T: Scalar>(pre: &TracePreprocess<T>, alpha: T, beta: T) -> Result<T> {
    let r = check_ratio(alpha, beta)?.abs();
    let mut pow = T::one();
    let mut acc = T::zero();
    for (k, &se) in pre.std_errors.iter().enumerate() {
        pow *= r;
        acc += pow * se / T::from_count(k + 1);
    }
    Ok(acc)
}

fn theta_grad<T: Scalar>(p: &LayerParams<T>, value: T, n: usize, d_ratio: T, sum_log_degrees: T) -> LogdetGrad<T> {
    // log det depends on theta1 only through N log alpha once written in
    // terms of r = tanh(theta2).
    let r = p.theta2.tanh();
    let gamma = sigmoid(p.theta3);
    LogdetGrad {
        value,
        d_theta: [
            T::from_count(n),
            (T::one() - r * r) * d_ratio,
            sum_log_degrees * gamma * (T::one() - gamma),
        ],
    }
}

/// Value and parameter gradient of one layer's log-determinant.
pub fn layer_logdet_grad<T: Scalar>(pre: &Preprocess<T>, p: &LayerParams<T>) -> Result<LogdetGrad<T>> {
    let LayerCoefficients { alpha, beta, gamma } = p.coefficients();
    match pre {
        Preprocess::Eigen(e) => {
            let value = layer_logdet_eigen(e, alpha, beta, gamma)?;
            let r = beta / alpha;
            let d_ratio = e.lambda_prime.iter().map(|&l| l / (T::one() + r * l)).sum();
            Ok(theta_grad(p, value, e.lambda_prime.len(), d_ratio, e.sum_log_degrees))
        }
        Preprocess::PowerSeries(s) => {
            let value = layer_logdet_power_series(s, alpha, beta, gamma)?;
            let neg_r = -(beta / alpha);
            let mut pow = T::one();
            let mut d_ratio = T::zero();
            for &t in &s.traces {
                d_ratio += pow * t;
                pow *= neg_r;
            }
            Ok(theta_grad(p, value, s.n_nodes, d_ratio, s.sum_log_degrees))
        }
    }
}

/// Log-determinant of one layer with either backend.
pub fn layer_logdet<T: Scalar>(pre: &Preprocess<T>, p: &LayerParams<T>) -> Result<T> {
    let LayerCoefficients { alpha, beta, gamma } = p.coefficients();
    match pre {
        Preprocess::Eigen(e) => layer_logdet_eigen(e, alpha, beta, gamma),
        Preprocess::PowerSeries(s) => layer_logdet_power_series(s, alpha, beta, gamma),
    }
}

/// `log|det G|` as the sum over layers. Applies equally to the model and to
/// the variational `G̃`.
pub fn total_logdet<T: Scalar>(layers: &[LayerParams<T>], backend: LogdetBackend, pre: &Preprocess<T>) -> Result<T> {
    pre.expect_backend(backend)?;
    layers.iter().map(|p| layer_logdet(pre, p)).sum()
}

/// Eigen when the graph fits under the dense cap, otherwise power series.
pub fn choose_backend(n_nodes: usize, cap: usize) -> LogdetBackend {
    if n_nodes <= cap {
        LogdetBackend::Eigen
    } else {
        LogdetBackend::PowerSeries
    }
}
