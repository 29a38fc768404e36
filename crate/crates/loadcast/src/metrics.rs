//! Forecast accuracy metrics: MAE, MAPE and the per-point relative error.

use crate::error::MetricsError;

/// Accuracy over one evaluation horizon. `mape` is `None` when any truth
/// value is zero; the offending indices are listed in `undefined`, and the
/// relative-error series carries NaN at those points.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    /// Mean absolute error, in the units of the inputs.
    pub mae: f64,
    /// Mean absolute percentage error, in percent.
    pub mape: Option<f64>,
    /// Per-point relative error `|y - yhat| / y * 100`.
    pub relative_errors: Vec<f64>,
    /// Indices where the truth is zero and percentage errors are undefined.
    pub undefined: Vec<usize>,
    /// Number of points evaluated.
    pub n: usize,
}

/// Computes MAE, MAPE and the relative-error series.
pub fn metrics(truth: &[f64], predicted: &[f64]) -> Result<MetricsReport, MetricsError> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            pred: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }

    let n = truth.len();
    let mut abs_sum = 0.0;
    let mut pct_sum = 0.0;
    let mut undefined = Vec::new();
    let mut relative_errors = Vec::with_capacity(n);
    for (i, (&y, &p)) in truth.iter().zip(predicted).enumerate() {
        let abs = (y - p).abs();
        abs_sum += abs;
        if y == 0.0 {
            undefined.push(i);
            relative_errors.push(f64::NAN);
        } else {
            pct_sum += (abs / y).abs();
            relative_errors.push(abs / y * 100.0);
        }
    }

    let mape = if undefined.is_empty() {
        Some(pct_sum / n as f64 * 100.0)
    } else {
        None
    };
    Ok(MetricsReport {
        mae: abs_sum / n as f64,
        mape,
        relative_errors,
        undefined,
        n,
    })
}
