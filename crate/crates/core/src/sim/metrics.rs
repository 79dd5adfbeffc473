use std::fmt;

use serde::{Deserialize, Serialize};

use super::generate::ModelKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[serde(rename = "neg_pL1")]
    NegPL1,
    #[serde(rename = "neg_pR2")]
    NegPR2,
    ParamMse,
    ClassificationError,
    NegPredLoglik,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::NegPL1,
        Metric::NegPR2,
        Metric::ParamMse,
        Metric::ClassificationError,
        Metric::NegPredLoglik,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::NegPL1 => "neg_pL1",
            Metric::NegPR2 => "neg_pR2",
            Metric::ParamMse => "param_mse",
            Metric::ClassificationError => "classification_error",
            Metric::NegPredLoglik => "neg_pred_loglik",
        }
    }

    pub fn parse(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }

    /// The metrics reported for a data kind.
    pub fn for_kind(kind: ModelKind) -> [Metric; 3] {
        match kind {
            ModelKind::Linear => [Metric::NegPL1, Metric::NegPR2, Metric::ParamMse],
            ModelKind::Logistic => [
                Metric::ClassificationError,
                Metric::NegPredLoglik,
                Metric::ParamMse,
            ],
            ModelKind::Poisson => [Metric::NegPL1, Metric::NegPredLoglik, Metric::ParamMse],
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(())
}

/// `pL1 = 1 − Σ|y − ŷ| / Σ|y|`; `None` when `Σ|y| = 0`.
pub fn predictive_l1(y: &[f64], yhat: &[f64]) -> Result<Option<f64>> {
    check_lengths(y, yhat)?;
    let denom: f64 = y.iter().map(|v| v.abs()).sum();
    let num: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum();
    Ok((denom > 0.0).then(|| 1.0 - num / denom))
}

/// `pR2 = 1 − Σ(y − ŷ)² / Σy²`; `None` when `Σy² = 0`.
pub fn predictive_r2(y: &[f64], yhat: &[f64]) -> Result<Option<f64>> {
    check_lengths(y, yhat)?;
    let denom: f64 = y.iter().map(|v| v * v).sum();
    let num: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((denom > 0.0).then(|| 1.0 - num / denom))
}

/// `(1/d) Σ (ŵᵢ − wᵢ)²`.
pub fn param_mse(w_true: &[f64], w_hat: &[f64]) -> Result<f64> {
    check_lengths(w_true, w_hat)?;
    Ok(w_true
        .iter()
        .zip(w_hat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / w_true.len() as f64)
}

/// Fraction of predicted labels that differ from the truth.
pub fn classification_error(y: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(y, labels)?;
    Ok(y.iter().zip(labels).filter(|(a, b)| a != b).count() as f64 / y.len() as f64)
}

/// `−(1/n) Σ log p(yᵢ | xᵢ)`.
pub fn neg_pred_loglik(logps: &[f64]) -> Result<f64> {
    if logps.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(-logps.iter().sum::<f64>() / logps.len() as f64)
}

/// Inputs for scoring one fitted model on test data.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation<'a> {
    pub y: &'a [f64],
    /// Point predictions: means, or class labels for binary responses.
    pub yhat: &'a [f64],
    /// `log p(yᵢ | xᵢ)` under the fitted predictive.
    pub logps: &'a [f64],
    pub w_true: &'a [f64],
    pub w_hat: &'a [f64],
}

/// The kind's metrics with the negated forms `neg_pL1 = −pL1`,
/// `neg_pR2 = −pR2`; `None` marks an undefined metric.
pub fn compute_metrics(
    kind: ModelKind,
    eval: &Evaluation<'_>,
) -> Result<Vec<(Metric, Option<f64>)>> {
    Metric::for_kind(kind)
        .into_iter()
        .map(|metric| {
            let value = match metric {
                Metric::NegPL1 => predictive_l1(eval.y, eval.yhat)?.map(|v| -v),
                Metric::NegPR2 => predictive_r2(eval.y, eval.yhat)?.map(|v| -v),
                Metric::ParamMse => Some(param_mse(eval.w_true, eval.w_hat)?),
                Metric::ClassificationError => Some(classification_error(eval.y, eval.yhat)?),
                Metric::NegPredLoglik => {
                    check_lengths(eval.y, eval.logps)?;
                    Some(neg_pred_loglik(eval.logps)?)
                }
            };
            Ok((metric, value))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_examples() {
        let y = [1.0, 2.0];
        assert_eq!(predictive_l1(&y, &y).unwrap(), Some(1.0));
        assert_eq!(predictive_r2(&y, &y).unwrap(), Some(1.0));
        assert_eq!(predictive_l1(&y, &[0.0, 0.0]).unwrap(), Some(0.0));
        assert_eq!(predictive_r2(&y, &[0.0, 0.0]).unwrap(), Some(0.0));
        assert!((predictive_l1(&y, &[2.0, 2.0]).unwrap().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((predictive_r2(&y, &[2.0, 2.0]).unwrap().unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(predictive_l1(&[0.0, 0.0], &y).unwrap(), None);
        assert!(predictive_l1(&y, &[1.0]).is_err());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(Metric::parse(m.name()), Some(m));
            assert_eq!(
                serde_json::to_string(&m).unwrap(),
                format!("\"{}\"", m.name())
            );
        }
    }

    #[test]
    fn compute_metrics_negates_fractions() {
        let eval = Evaluation {
            y: &[1.0, 2.0],
            yhat: &[2.0, 2.0],
            logps: &[-1.0, -2.0],
            w_true: &[1.0, 0.0],
            w_hat: &[0.0, 0.0],
        };
        let linear = compute_metrics(ModelKind::Linear, &eval).unwrap();
        assert_eq!(linear[0].0, Metric::NegPL1);
        assert!((linear[0].1.unwrap() + 2.0 / 3.0).abs() < 1e-15);
        assert!((linear[1].1.unwrap() + 0.8).abs() < 1e-15);
        assert_eq!(linear[2].1, Some(0.5));
        let poisson = compute_metrics(ModelKind::Poisson, &eval).unwrap();
        assert_eq!(poisson[1], (Metric::NegPredLoglik, Some(1.5)));
    }

    fn paired(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1..max).prop_flat_map(|n| {
            (
                prop::collection::vec(-50.0..50.0f64, n),
                prop::collection::vec(-50.0..50.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn fractions_never_exceed_one((y, yhat) in paired(40)) {
            if let Some(v) = predictive_l1(&y, &yhat).unwrap() {
                prop_assert!(v <= 1.0);
            }
            if let Some(v) = predictive_r2(&y, &yhat).unwrap() {
                prop_assert!(v <= 1.0);
            }
        }

        #[test]
        fn mse_is_a_symmetric_discrepancy((a, b) in paired(20)) {
            prop_assert_eq!(param_mse(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(param_mse(&a, &b).unwrap(), param_mse(&b, &a).unwrap());
        }

        #[test]
        fn metrics_ignore_test_order((y, yhat) in paired(30), shift in 0usize..30) {
            let n = y.len();
            let rot = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| v[(i + shift) % n]).collect() };
            let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
                (a, b) => a == b,
            };
            prop_assert!(close(predictive_l1(&y, &yhat).unwrap(), predictive_l1(&rot(&y), &rot(&yhat)).unwrap()));
            prop_assert!(close(predictive_r2(&y, &yhat).unwrap(), predictive_r2(&rot(&y), &rot(&yhat)).unwrap()));
            prop_assert!(close(Some(neg_pred_loglik(&y).unwrap()), Some(neg_pred_loglik(&rot(&y)).unwrap())));
        }
    }
}
