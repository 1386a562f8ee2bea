use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

fn eval_count(eval: &[bool]) -> Result<usize> {
    let n = eval.iter().filter(|&&b| b).count();
    if n == 0 {
        return Err(Error::Validation("evaluation mask selects no node".into()));
    }
    Ok(n)
}

fn masked_errors<'a, T: Scalar>(
    pred: &'a [T],
    truth: &'a [T],
    eval: &'a [bool],
) -> Result<impl Iterator<Item = T> + 'a> {
    check_len(truth.len(), pred.len())?;
    check_len(truth.len(), eval.len())?;
    Ok(pred.iter().zip(truth).zip(eval).filter(|(_, &e)| e).map(|((&p, &t), _)| p - t))
}

/// Root-mean-square error over the nodes selected by `eval`.
pub fn rmse<T: Scalar>(pred: &[T], truth: &[T], eval: &[bool]) -> Result<T> {
    let n = eval_count(eval)?;
    let s: T = masked_errors(pred, truth, eval)?.map(|d| d * d).sum();
    Ok((s / T::from_count(n)).sqrt())
}

/// Mean absolute error over the nodes selected by `eval`.
pub fn mae<T: Scalar>(pred: &[T], truth: &[T], eval: &[bool]) -> Result<T> {
    let n = eval_count(eval)?;
    let s: T = masked_errors(pred, truth, eval)?.map(|d| d.abs()).sum();
    Ok(s / T::from_count(n))
}

/// Closed-form CRPS of `N(mu, sigma^2)` at `y`; lower is better.
pub fn crps_gaussian(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Validation(format!("CRPS needs sigma > 0, got {sigma}")));
    }
    let z = (y - mu) / sigma;
    let cdf = 0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    Ok(sigma * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / std::f64::consts::PI.sqrt()))
}

/// Average CRPS over the nodes selected by `eval`.
pub fn mean_crps<T: Scalar>(mean: &[T], std: &[T], y: &[T], eval: &[bool]) -> Result<T> {
    let n = eval_count(eval)?;
    check_len(y.len(), mean.len())?;
    check_len(y.len(), std.len())?;
    check_len(y.len(), eval.len())?;
    let mut s = 0.0;
    for i in (0..y.len()).filter(|&i| eval[i]) {
        s += crps_gaussian(mean[i].as_f64(), std[i].as_f64(), y[i].as_f64())?;
    }
    Ok(T::lit(s / n as f64))
}

/// One evaluation record, serialized as a flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub dataset: String,
    pub seed: u64,
    pub rmse: f64,
    pub mae: f64,
    pub crps: Option<f64>,
    pub n_eval: usize,
    /// MAE of the predicted mean against the true posterior mean (unobserved nodes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae_true_mean: Option<f64>,
    /// MAE of the predicted std against the true posterior std (unobserved nodes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae_true_std: Option<f64>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("bad metric report: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_arithmetic() {
        let pred = [3.0, 4.0, 9.0];
        let truth = [0.0, 0.0, 1.0];
        let eval = [true, true, false];
        assert!((rmse(&pred, &truth, &eval).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&pred, &truth, &eval).unwrap(), 3.5);
        assert_eq!(rmse(&truth, &truth, &[true; 3]).unwrap(), 0.0);
    }

    #[test]
    fn empty_mask_is_rejected() {
        assert!(rmse(&[1.0], &[1.0], &[false]).is_err());
        assert!(mae(&[1.0], &[1.0], &[false]).is_err());
    }

    #[test]
    fn crps_reference_values() {
        assert!((crps_gaussian(0.0, 1.0, 0.0).unwrap() - 0.233_695_4).abs() < 1e-6);
        let a = crps_gaussian(0.3, 0.7, -1.1).unwrap();
        let b = crps_gaussian(0.9, 2.1, -3.3).unwrap();
        assert!((3.0 * a - b).abs() < 1e-12);
        assert!(crps_gaussian(1.0, 1e-12, 1.0).unwrap().abs() < 1e-11);
        assert!(crps_gaussian(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn report_json_round_trip() {
        let r = MetricReport {
            model: "lp".into(),
            dataset: "mix".into(),
            seed: 3,
            rmse: 0.5,
            mae: 0.25,
            crps: None,
            n_eval: 10,
            mae_true_mean: Some(0.1),
            mae_true_std: None,
        };
        assert_eq!(MetricReport::from_json(&r.to_json()).unwrap(), r);
    }
}
