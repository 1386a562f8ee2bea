//! Layer parametrization, the composed affine map `g`, and precision operators.

mod operator;
mod params;

pub use operator::{
    g_apply, g_transpose_apply, layer_apply, posterior_precision_apply, precision_apply, DgmrfOperator,
    LayerOperator,
};
pub use params::{reparametrize, DgmrfParams, LayerCoefficients, LayerParams};
