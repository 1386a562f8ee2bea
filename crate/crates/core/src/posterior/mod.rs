//! Conditional distribution `x | y_m` under a Gaussian prior with a
//! matrix-free precision: mean by CG, exact samples by perturbation, and
//! Monte Carlo marginal variances.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::graph::{ObservationMask, SparseGraph};
use crate::linalg::{conjugate_gradient, standard_normal, CgConfig, CgReport, FnOperator, Purpose, SeedStreams};
use crate::model::{DgmrfOperator, DgmrfParams};
use crate::scalar::Scalar;

/// Default number of samples for marginal variances.
pub const DEFAULT_VARIANCE_SAMPLES: usize = 100;

/// A Gaussian prior given through its precision `Q` and `Q mu`.
pub trait GaussianPrior<T: Scalar> {
    fn dim(&self) -> usize;

    fn precision_apply_into(&self, v: &[T], out: &mut [T]);

    /// `Q mu`.
    fn precision_times_mean(&self) -> Vec<T>;

    /// A draw with covariance `Q` (zero mean).
    fn precision_noise(&self, rng: &mut dyn rand::RngCore) -> Vec<T>;
}

impl<T: Scalar> GaussianPrior<T> for DgmrfOperator<'_, T> {
    fn dim(&self) -> usize {
        self.n_nodes()
    }

    fn precision_apply_into(&self, v: &[T], out: &mut [T]) {
        out.copy_from_slice(&self.precision_apply(v).expect("dimension checked by caller"));
    }

    fn precision_times_mean(&self) -> Vec<T> {
        DgmrfOperator::precision_times_mean(self)
    }

    /// `G^T z` with `z ~ N(0, I)`.
    fn precision_noise(&self, rng: &mut dyn rand::RngCore) -> Vec<T> {
        let z: Vec<T> = standard_normal(rng, self.n_nodes());
        self.g_transpose_apply(&z).expect("dimension matches")
    }
}

/// Posterior summary: mean, marginal standard deviations and solver logs.
#[derive(Clone, Debug)]
pub struct PosteriorSummary<T> {
    pub mean: Vec<T>,
    pub marginal_std: Vec<T>,
    pub n_samples_used: usize,
    pub cg_reports: Vec<CgReport<T>>,
    /// False when any solve stopped before reaching its tolerance.
    pub converged: bool,
}

/// `Q̃ = Q + sigma^{-2} I_m` and `Q̃ mu~ = Q mu + sigma^{-2} y_m` for a prior `P`.
pub struct GaussianPosterior<'a, T, P: ?Sized> {
    prior: &'a P,
    y: &'a [T],
    mask: &'a ObservationMask,
    sigma: T,
}

impl<'a, T: Scalar, P: GaussianPrior<T> + ?Sized> GaussianPosterior<'a, T, P> {
    pub fn new(prior: &'a P, y: &'a [T], mask: &'a ObservationMask, sigma: T) -> Result<Self> {
        check_len(prior.dim(), y.len())?;
        check_len(prior.dim(), mask.len())?;
        if !(sigma > T::zero()) {
            return Err(Error::Validation("noise standard deviation must be positive".into()));
        }
        if mask.observed_indices().any(|i| !y[i].is_finite()) {
            return Err(Error::Validation("observations must be finite on observed nodes".into()));
        }
        Ok(GaussianPosterior { prior, y, mask, sigma })
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn noise_precision(&self) -> T {
        (self.sigma * self.sigma).recip()
    }

    /// `Q̃ v`.
    pub fn apply_into(&self, v: &[T], out: &mut [T]) {
        self.prior.precision_apply_into(v, out);
        let p = self.noise_precision();
        for i in self.mask.observed_indices() {
            out[i] += p * v[i];
        }
    }

    fn mean_rhs(&self) -> Vec<T> {
        let mut rhs = self.prior.precision_times_mean();
        let p = self.noise_precision();
        for i in self.mask.observed_indices() {
            rhs[i] += p * self.y[i];
        }
        rhs
    }

    fn solve(&self, rhs: &[T], cg: &CgConfig<T>, x0: Option<&[T]>) -> Result<(Vec<T>, CgReport<T>)> {
        let op = FnOperator::new(self.dim(), |v: &[T], out: &mut [T]| self.apply_into(v, out));
        conjugate_gradient(&op, rhs, cg, x0)
    }

    /// Solves `Q̃ mu~ = Q mu + sigma^{-2} y_m`.
    pub fn mean(&self, cg: &CgConfig<T>) -> Result<(Vec<T>, CgReport<T>)> {
        self.solve(&self.mean_rhs(), cg, None)
    }

    /// Perturbation sample for given noise: `prior_noise` must have covariance
    /// `Q` and `z2` be standard normal. Zero noise returns the mean.
    pub fn sample_with_noise(
        &self,
        prior_noise: &[T],
        z2: &[T],
        cg: &CgConfig<T>,
        warm_start: Option<&[T]>,
    ) -> Result<(Vec<T>, CgReport<T>)> {
        check_len(self.dim(), prior_noise.len())?;
        check_len(self.dim(), z2.len())?;
        let mut rhs = self.mean_rhs();
        for (r, &e) in rhs.iter_mut().zip(prior_noise) {
            *r += e;
        }
        let inv_sigma = self.sigma.recip();
        for i in self.mask.observed_indices() {
            rhs[i] += inv_sigma * z2[i];
        }
        self.solve(&rhs, cg, warm_start)
    }

    /// One exact posterior sample using `rng`.
    pub fn sample_rng(
        &self,
        rng: &mut dyn rand::RngCore,
        cg: &CgConfig<T>,
        warm_start: Option<&[T]>,
    ) -> Result<(Vec<T>, CgReport<T>)> {
        let e = self.prior.precision_noise(rng);
        let z2: Vec<T> = standard_normal(rng, self.dim());
        self.sample_with_noise(&e, &z2, cg, warm_start)
    }

    /// Sample `index` of the posterior-sampling stream of `seed`.
    pub fn sample(&self, seed: u64, index: u64, cg: &CgConfig<T>, warm_start: Option<&[T]>) -> Result<(Vec<T>, CgReport<T>)> {
        let mut rng = SeedStreams::new(seed).rng(Purpose::PosteriorSampling, index);
        self.sample_rng(&mut rng, cg, warm_start)
    }

    /// Mean and unbiased per-node sample variance over `n_samples` draws,
    /// each solve warm-started from the mean.
    pub fn summarize(&self, n_samples: usize, seed: u64, cg: &CgConfig<T>) -> Result<PosteriorSummary<T>> {
        if n_samples < 2 {
            return Err(Error::Validation("marginal variances need at least 2 samples".into()));
        }
        let (mean, rep) = self.mean(cg)?;
        let mut reports = vec![rep];
        let n = self.dim();
        let mut s1 = vec![T::zero(); n];
        let mut s2 = vec![T::zero(); n];
        for k in 0..n_samples {
            let (x, rep) = self.sample(seed, k as u64, cg, Some(&mean))?;
            reports.push(rep);
            // accumulate deviations from the mean for numerical stability
            for i in 0..n {
                let d = x[i] - mean[i];
                s1[i] += d;
                s2[i] += d * d;
            }
        }
        let ns = T::from_count(n_samples);
        let marginal_std = s1
            .iter()
            .zip(&s2)
            .map(|(&a, &b)| ((b - a * a / ns) / (ns - T::one())).max(T::zero()).sqrt())
            .collect();
        let converged = reports.iter().all(|r| r.converged);
        Ok(PosteriorSummary {
            mean,
            marginal_std,
            n_samples_used: n_samples,
            cg_reports: reports,
            converged,
        })
    }
}

pub fn posterior_mean<T: Scalar>(
    g: &SparseGraph<T>,
    params: &DgmrfParams<T>,
    y: &[T],
    mask: &ObservationMask,
    cg: &CgConfig<T>,
) -> Result<(Vec<T>, CgReport<T>)> {
    let op = DgmrfOperator::new(g, params);
    GaussianPosterior::new(&op, y, mask, params.sigma())?.mean(cg)
}

pub fn posterior_sample<T: Scalar>(
    g: &SparseGraph<T>,
    params: &DgmrfParams<T>,
    y: &[T],
    mask: &ObservationMask,
    seed: u64,
    cg: &CgConfig<T>,
) -> Result<(Vec<T>, CgReport<T>)> {
    let op = DgmrfOperator::new(g, params);
    GaussianPosterior::new(&op, y, mask, params.sigma())?.sample(seed, 0, cg, None)
}

/// Unbiased MC estimate of the posterior marginal variances.
pub fn marginal_variances<T: Scalar>(
    g: &SparseGraph<T>,
    params: &DgmrfParams<T>,
    y: &[T],
    mask: &ObservationMask,
    n_samples: usize,
    seed: u64,
    cg: &CgConfig<T>,
) -> Result<PosteriorSummary<T>> {
    let op = DgmrfOperator::new(g, params);
    GaussianPosterior::new(&op, y, mask, params.sigma())?.summarize(n_samples, seed, cg)
}

/// Writes `node,mean,std,observed`.
pub fn write_posterior_csv<T: Scalar>(
    path: impl AsRef<Path>,
    summary: &PosteriorSummary<T>,
    mask: &ObservationMask,
) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("node,mean,std,observed\n");
    for i in 0..summary.mean.len() {
        let _ = writeln!(
            s,
            "{i},{},{},{}",
            summary.mean[i],
            summary.marginal_std[i],
            u8::from(mask.is_observed(i))
        );
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads `node,mean,std,observed` back as `(mean, std, mask)`.
pub fn read_posterior_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<(Vec<T>, Vec<T>, ObservationMask)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (mut mean, mut std, mut obs) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::parse(path, i + 1, "expected node,mean,std,observed");
        if f.len() != 4 || f[0].parse::<usize>().ok() != Some(mean.len()) {
            return Err(bad());
        }
        mean.push(f[1].parse().map_err(|_| bad())?);
        std.push(f[2].parse().map_err(|_| bad())?);
        obs.push(f[3] == "1");
    }
    Ok((mean, std, ObservationMask::new(obs)?))
}
