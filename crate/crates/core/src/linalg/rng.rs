//! Seeded random streams.
//!
//! Each consumer draws from its own ChaCha stream derived from a base seed, a
//! purpose tag and an index, so that sub-streams are reproducible regardless
//! of the order in which they are evaluated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    GraphPoints = 1,
    Mask = 2,
    TrainingMc = 3,
    PosteriorSampling = 4,
    TraceProbes = 5,
    SyntheticField = 6,
    SyntheticParams = 7,
    Evaluation = 8,
    Init = 9,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStreams {
    seed: u64,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        SeedStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self, purpose: Purpose, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((purpose as u64) << 48) ^ index);
        rng
    }
}

pub fn standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

pub fn rademacher<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| if rng.random::<bool>() { T::one() } else { -T::one() })
        .collect()
}

/// `n` standard normal draws from the stream `(seed, purpose)`.
pub fn rng_standard_normal<T: Scalar>(n: usize, seed: u64, purpose: Purpose) -> Vec<T> {
    standard_normal(&mut SeedStreams::new(seed).rng(purpose, 0), n)
}

/// `n` draws uniform on `{-1, +1}` from the stream `(seed, purpose)`.
pub fn rng_rademacher<T: Scalar>(n: usize, seed: u64, purpose: Purpose) -> Vec<T> {
    rademacher(&mut SeedStreams::new(seed).rng(purpose, 0), n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<f64> = rng_standard_normal(64, 7, Purpose::TrainingMc);
        let b: Vec<f64> = rng_standard_normal(64, 7, Purpose::TrainingMc);
        assert_eq!(a, b);
        let c: Vec<f64> = rng_standard_normal(64, 7, Purpose::PosteriorSampling);
        assert_ne!(a, c);
        let d: Vec<f64> = rng_standard_normal(64, 8, Purpose::TrainingMc);
        assert_ne!(a, d);
    }

    #[test]
    fn substreams_do_not_depend_on_order() {
        let s = SeedStreams::new(3);
        let mut r1 = s.rng(Purpose::TraceProbes, 1);
        let first: Vec<f64> = rademacher(&mut r1, 10);
        let _ = standard_normal::<f64, _>(&mut s.rng(Purpose::TraceProbes, 0), 1000);
        let again: Vec<f64> = rademacher(&mut s.rng(Purpose::TraceProbes, 1), 10);
        assert_eq!(first, again);
    }

    #[test]
    fn rademacher_mean_is_small() {
        let u: Vec<f64> = rng_rademacher(1_000_000, 11, Purpose::TraceProbes);
        assert!(u.iter().all(|&x| x == 1.0 || x == -1.0));
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn normal_variance_near_one() {
        let z: Vec<f64> = rng_standard_normal(1_000_000, 12, Purpose::TrainingMc);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }
}
