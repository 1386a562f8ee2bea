use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::rng::{Purpose, SeedStreams};
use crate::scalar::Scalar;

/// Which nodes carry an observation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationMask {
    observed: Vec<bool>,
    m_count: usize,
}

impl ObservationMask {
    pub fn new(observed: Vec<bool>) -> Result<Self> {
        let m_count = observed.iter().filter(|&&b| b).count();
        if m_count == 0 {
            return Err(Error::Validation("mask has no observed nodes".into()));
        }
        Ok(ObservationMask { observed, m_count })
    }

    pub fn all_observed(n: usize) -> Self {
        ObservationMask {
            observed: vec![true; n],
            m_count: n,
        }
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn m_count(&self) -> usize {
        self.m_count
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.observed[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.observed
    }

    /// 1 on observed nodes, 0 elsewhere.
    pub fn indicator<T: Scalar>(&self) -> Vec<T> {
        self.observed
            .iter()
            .map(|&b| if b { T::one() } else { T::zero() })
            .collect()
    }

    /// Complement; `None` when every node is observed.
    pub fn complement(&self) -> Option<Self> {
        ObservationMask::new(self.observed.iter().map(|b| !b).collect()).ok()
    }

    pub fn observed_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.observed.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn unobserved_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.observed.iter().enumerate().filter(|(_, &b)| !b).map(|(i, _)| i)
    }
}

fn node_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut SeedStreams::new(seed).rng(Purpose::Mask, 0));
    order
}

fn mask_from_order(order: &[usize], n_observed: usize) -> Result<ObservationMask> {
    let mut observed = vec![false; order.len()];
    for &i in &order[..n_observed] {
        observed[i] = true;
    }
    ObservationMask::new(observed)
}

/// Marks exactly `round(fraction_unobserved * n)` nodes, chosen uniformly
/// without replacement, as unobserved.
pub fn generate_mask(n: usize, fraction_unobserved: f64, seed: u64) -> Result<ObservationMask> {
    if !(fraction_unobserved > 0.0 && fraction_unobserved < 1.0) {
        return Err(Error::Validation(format!(
            "unobserved fraction {fraction_unobserved} outside (0, 1)"
        )));
    }
    let n_unobserved = (fraction_unobserved * n as f64).round() as usize;
    if n_unobserved >= n {
        return Err(Error::Validation(format!(
            "unobserved fraction {fraction_unobserved} leaves no observed node out of {n}"
        )));
    }
    mask_from_order(&node_order(n, seed), n - n_unobserved)
}

/// One mask per entry of `observed_fractions`; a larger observed fraction
/// always yields a superset of the observed nodes of a smaller one.
pub fn nested_masks(
    n: usize,
    observed_fractions: &[f64],
    seed: u64,
) -> Result<Vec<ObservationMask>> {
    let order = node_order(n, seed);
    observed_fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Validation(format!("observed fraction {f} outside (0, 1]")));
            }
            mask_from_order(&order, (f * n as f64).round() as usize)
        })
        .collect()
}
