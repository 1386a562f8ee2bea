use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

/// Free parameters of one layer. Every real value is admissible.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub theta1: T,
    pub theta2: T,
    pub theta3: T,
    pub bias: T,
}

/// Constrained layer coefficients: `alpha > 0`, `|beta| < alpha`, `gamma` in (0, 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerCoefficients<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
}

impl<T: Scalar> LayerParams<T> {
    /// `theta = 0, b = 0`: `alpha = 1`, `beta = 0`, `gamma = 1/2`.
    pub fn zeroed() -> Self {
        LayerParams {
            theta1: T::zero(),
            theta2: T::zero(),
            theta3: T::zero(),
            bias: T::zero(),
        }
    }

    /// Free parameters reproducing `alpha`, `beta` exactly and `gamma = sigmoid(theta3)`.
    pub fn from_coefficients(alpha: T, beta: T, theta3: T, bias: T) -> Result<Self> {
        if !(alpha > T::zero()) || !(beta.abs() < alpha) {
            return Err(Error::Validation(format!(
                "layer coefficients need alpha > 0 and |beta| < alpha (alpha={alpha}, beta={beta})"
            )));
        }
        Ok(LayerParams {
            theta1: alpha.ln(),
            theta2: (beta / alpha).atanh(),
            theta3,
            bias,
        })
    }

    pub fn coefficients(&self) -> LayerCoefficients<T> {
        reparametrize(self)
    }
}

/// `alpha = exp(theta1)`, `beta = alpha tanh(theta2)`, `gamma = sigmoid(theta3)`.
pub fn reparametrize<T: Scalar>(p: &LayerParams<T>) -> LayerCoefficients<T> {
    let alpha = p.theta1.exp();
    LayerCoefficients {
        alpha,
        beta: alpha * p.theta2.tanh(),
        gamma: sigmoid(p.theta3),
    }
}

/// Layers `g_1 .. g_L` (applied in that order) and the noise parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct DgmrfParams<T> {
    pub layers: Vec<LayerParams<T>>,
    /// `sigma = exp(theta_sigma)`.
    pub theta_sigma: T,
}

impl<T: Scalar> DgmrfParams<T> {
    pub fn new(layers: Vec<LayerParams<T>>, theta_sigma: T) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Validation("a DGMRF needs at least one layer".into()));
        }
        Ok(DgmrfParams { layers, theta_sigma })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn sigma(&self) -> T {
        self.theta_sigma.exp()
    }
}
