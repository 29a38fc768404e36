//! Transfer-learning error correction.
//!
//! The trained forecaster is cloned, its feature weighter frozen, and the
//! clone retrained to predict forecaster residuals from the same feature
//! windows, with the historical-target channel carrying past residuals
//! instead of past loads. Corrected output adds the predicted residual to
//! the forecast.

use crate::data::window::{DAY_LEN, FUTURE_LEN, HIST_LEN, WINDOW_LEN};
use crate::data::Prepared;
use crate::error::{NumError, TrainError};
use crate::model::ForecastModel;
use crate::params::ParamGroup;
use crate::scalar::Scalar;

/// One error-correction instance. The feature window is shared with the
/// underlying [`Prepared`] stream via `start`; residuals are standardized
/// target units.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSample {
    pub start: usize,
    /// Forecaster residuals over the historical steps.
    pub hist_residuals: Vec<f64>,
    /// Forecaster residuals over the future steps (the training target).
    pub future_residuals: Vec<f64>,
}

/// A forecaster clone with the feature weighter frozen.
pub struct CorrectionModel<S> {
    pub model: ForecastModel<S>,
}

impl<S: Scalar> CorrectionModel<S> {
    pub fn weighter_checksum(&self) -> u64 {
        self.model.params.group_checksum(ParamGroup::Weighter)
    }
}

/// Deep-copies the trained forecaster and freezes its feature-weighting
/// layer; every other group stays trainable.
pub fn transfer_init<S: Scalar>(forecaster: &ForecastModel<S>) -> Result<CorrectionModel<S>, NumError> {
    if !forecaster.trained {
        return Err(NumError::Usage(
            "transfer_init requires a trained forecaster".into(),
        ));
    }
    let mut model = forecaster.clone();
    model.params.set_group_trainable(ParamGroup::Weighter, false);
    model.trained = false;
    Ok(CorrectionModel { model })
}

/// Contiguous forecaster residuals covering a row range.
#[derive(Debug, Clone)]
pub struct ResidualSeries {
    /// Row index of the first residual.
    pub offset: usize,
    /// Standardized residuals `y_std - yhat_std`, one per row.
    pub values: Vec<f64>,
}

impl ResidualSeries {
    /// Residuals over `[start, start + len)` rows, if fully covered.
    pub fn slice(&self, start: usize, len: usize) -> Option<&[f64]> {
        let lo = start.checked_sub(self.offset)?;
        self.values.get(lo..lo + len)
    }
}

/// Runs the forecaster over stride-24 windows tiled so every row in
/// `[lo, hi)` receives exactly one residual. The tiling anchors one
/// historical window length before `lo`, so residuals are causal: each is
/// produced by a forecast issued from strictly earlier data.
pub fn residual_series(
    model: &ForecastModel<f64>,
    data: &Prepared,
    lo: usize,
    hi: usize,
) -> Result<ResidualSeries, TrainError> {
    if !model.trained {
        return Err(NumError::Usage("forecaster is not trained".into()).into());
    }
    if lo < HIST_LEN {
        return Err(NumError::Usage(format!(
            "residual history needs {HIST_LEN} rows before row {lo}"
        ))
        .into());
    }
    if hi <= lo || (hi - lo) % DAY_LEN != 0 {
        return Err(NumError::Usage(format!(
            "residual range [{lo}, {hi}) must be a positive whole number of days"
        ))
        .into());
    }
    if hi > data.rows() {
        return Err(NumError::Usage(format!(
            "residual range end {hi} exceeds the stream ({} rows)",
            data.rows()
        ))
        .into());
    }

    let mut values = Vec::with_capacity(hi - lo);
    let mut start = lo - HIST_LEN;
    while start + HIST_LEN < hi {
        let w = data.window(start);
        let yhat = model.forecast_std(w.features, w.history)?;
        for (t, &p) in yhat.iter().enumerate() {
            values.push(w.future[t] - p);
        }
        start += DAY_LEN;
    }
    debug_assert_eq!(values.len(), hi - lo);
    Ok(ResidualSeries { offset: lo, values })
}

/// Builds error samples for day-aligned window starts. Residuals come from
/// one contiguous tiling spanning all requested windows, so each sample's
/// future residuals are exactly the forecaster's errors on that window.
pub fn compute_residuals(
    model: &ForecastModel<f64>,
    data: &Prepared,
    starts: &[usize],
) -> Result<Vec<ErrorSample>, TrainError> {
    if starts.is_empty() {
        return Err(TrainError::EmptyDataset("error-correction windows"));
    }
    let lo = *starts.iter().min().unwrap();
    let hi = *starts.iter().max().unwrap() + WINDOW_LEN;
    for &s in starts {
        if (s - lo) % DAY_LEN != 0 {
            return Err(NumError::Usage(format!(
                "window start {s} is not day-aligned with {lo}"
            ))
            .into());
        }
    }

    let residuals = residual_series(model, data, lo, hi)?;
    Ok(starts
        .iter()
        .map(|&s| ErrorSample {
            start: s,
            hist_residuals: residuals.slice(s, HIST_LEN).unwrap().to_vec(),
            future_residuals: residuals.slice(s + HIST_LEN, FUTURE_LEN).unwrap().to_vec(),
        })
        .collect())
}

/// Final corrected forecast in target units: the forecaster's output plus
/// the predicted residual, scaled consistently.
pub fn corrected_forecast(
    forecaster: &ForecastModel<f64>,
    correction: &CorrectionModel<f64>,
    data: &Prepared,
    start: usize,
    hist_residuals: &[f64],
) -> Result<Vec<f64>, TrainError> {
    if hist_residuals.len() != HIST_LEN {
        return Err(NumError::Usage(format!(
            "missing residual history: expected {HIST_LEN} values, got {}",
            hist_residuals.len()
        ))
        .into());
    }
    let w = data.window(start);
    let yhat = forecaster.forecast_std(w.features, w.history)?;
    let ehat = correction.model.forecast_std(w.features, hist_residuals)?;
    Ok(yhat
        .iter()
        .zip(&ehat)
        .map(|(&y, &e)| data.stats.destandardize_target(y) + e * data.stats.target_std)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::embed::{compute_stats, embed_features, HolidaySet};
    use crate::data::schema::FeatureSchema;
    use crate::data::series::{parse_timestamp, RawSeries};
    use crate::model::{tiny_config, CellKind, ModelConfig, PenaltyMode};
    use chrono::Duration;

    fn pipeline_config(width: usize) -> ModelConfig {
        ModelConfig {
            cell: CellKind::Gru,
            input_width: width,
            hidden: 3,
            fw_hidden: 3,
            att_hidden: 3,
            out_hidden: 3,
            days: HIST_DAYS_CONST,
            day_len: DAY_LEN,
            weighter_bias: true,
            penalty: PenaltyMode::AlphaL1,
        }
    }

    const HIST_DAYS_CONST: usize = crate::data::window::HIST_DAYS;

    fn toy_prepared(hours: usize) -> Prepared {
        let start = parse_timestamp("2021-01-04T00:00:00").unwrap();
        let series = RawSeries {
            timestamps: (0..hours).map(|i| start + Duration::hours(i as i64)).collect(),
            target: (0..hours)
                .map(|i| Some(100.0 + 10.0 * ((i % 24) as f64 / 24.0 * std::f64::consts::TAU).sin()))
                .collect(),
            numeric: vec![
                ("temperature".into(), (0..hours).map(|i| Some((i as f64 * 0.01).sin())).collect()),
                ("noise".into(), (0..hours).map(|i| Some(((i * 7 % 13) as f64) / 13.0)).collect()),
            ],
            categorical: vec![],
        };
        let schema = FeatureSchema::synth();
        let stats = compute_stats(&series, &schema, 0..hours).unwrap();
        embed_features(&series, &schema, &stats, &HolidaySet::new()).unwrap()
    }

    fn trained_dummy(data: &Prepared) -> ForecastModel<f64> {
        let mut m = ForecastModel::new(pipeline_config(data.width()), 5).unwrap();
        m.trained = true;
        m
    }

    #[test]
    fn untrained_forecaster_is_a_usage_error() {
        let data = toy_prepared(24 * 40);
        let model = ForecastModel::new(pipeline_config(data.width()), 5).unwrap();
        let err = compute_residuals(&model, &data, &[HIST_LEN]).unwrap_err();
        assert!(matches!(err, TrainError::Num(NumError::Usage(_))));
    }

    #[test]
    fn residuals_match_per_window_subtraction() {
        let data = toy_prepared(24 * 40);
        let model = trained_dummy(&data);
        let starts = vec![HIST_LEN, HIST_LEN + 24, HIST_LEN + 48];
        let samples = compute_residuals(&model, &data, &starts).unwrap();
        for s in &samples {
            let w = data.window(s.start);
            let yhat = model.forecast_std(w.features, w.history).unwrap();
            for t in 0..FUTURE_LEN {
                let expect = w.future[t] - yhat[t];
                assert!((s.future_residuals[t] - expect).abs() < 1e-12);
            }
        }
    }

    fn manual_prepared(hours: usize, target_std_value: f64) -> Prepared {
        let schema = FeatureSchema::synth();
        let n = schema.width();
        let start = parse_timestamp("2021-01-04T00:00:00").unwrap();
        Prepared {
            features: crate::Tensor::from_vec(
                &[hours, n],
                (0..hours * n).map(|i| ((i * 31 % 17) as f64) / 17.0 - 0.5).collect(),
            ),
            target_std: vec![target_std_value; hours],
            timestamps: (0..hours).map(|i| start + Duration::hours(i as i64)).collect(),
            stats: crate::data::StandardStats {
                feature_mean: vec![0.0; n],
                feature_std: vec![1.0; n],
                target_mean: 100.0,
                target_std: 5.0,
            },
            schema,
        }
    }

    #[test]
    fn perfect_and_biased_forecasters() {
        // A zeroed model predicts 0 in standardized units. With the true
        // standardized target at 0 it is a perfect forecaster: residuals 0.
        // With the target at a constant c, the residuals are the constant c.
        for c in [0.0, 0.75] {
            let data = manual_prepared(24 * 20, c);
            let mut model = ForecastModel::zeroed(pipeline_config(data.width())).unwrap();
            model.trained = true;
            let samples = compute_residuals(&model, &data, &[HIST_LEN, HIST_LEN + 24]).unwrap();
            for s in &samples {
                for &r in s.hist_residuals.iter().chain(&s.future_residuals) {
                    assert_eq!(r, c);
                }
            }
        }
    }

    #[test]
    fn transfer_freezes_weighter_and_preserves_forward() {
        let cfg = tiny_config(CellKind::Lstm);
        let mut forecaster = ForecastModel::<f64>::new(cfg.clone(), 77).unwrap();
        forecaster.trained = true;
        let correction = transfer_init(&forecaster).unwrap();

        // Identical forward outputs right after transfer.
        let x: Vec<f64> = (0..cfg.window_len() * cfg.input_width)
            .map(|i| ((i * 37 % 11) as f64) / 11.0 - 0.5)
            .collect();
        let h: Vec<f64> = (0..cfg.hist_len()).map(|i| (i as f64 * 0.1).sin()).collect();
        let a = forecaster.forecast_std(&x, &h).unwrap();
        let b = correction.model.forecast_std(&x, &h).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.to_bits(), q.to_bits());
        }

        // Weighter is frozen, everything else trainable.
        for p in correction.model.params.iter() {
            if p.group == ParamGroup::Weighter {
                assert!(!p.trainable, "{} should be frozen", p.name);
            } else {
                assert!(p.trainable, "{} should be trainable", p.name);
            }
        }

        // Deep copy: mutating the clone leaves the forecaster untouched.
        let before = forecaster.params.checksum();
        let mut correction = correction;
        let head = correction.model.params.index("head.w").unwrap();
        correction.model.params.get_mut(head).tensor.data_mut()[0] += 1.0;
        assert_eq!(forecaster.params.checksum(), before);
    }

    #[test]
    fn corrected_forecast_is_elementwise_sum() {
        let data = toy_prepared(24 * 40);
        let forecaster = trained_dummy(&data);
        let correction = transfer_init(&forecaster).unwrap();
        let start = HIST_LEN;
        let hist = vec![0.01; HIST_LEN];
        let corrected = corrected_forecast(&forecaster, &correction, &data, start, &hist).unwrap();
        let w = data.window(start);
        let yhat = forecaster.forecast_std(w.features, w.history).unwrap();
        let ehat = correction.model.forecast_std(w.features, &hist).unwrap();
        for t in 0..FUTURE_LEN {
            let expect = data.stats.destandardize_target(yhat[t]) + ehat[t] * data.stats.target_std;
            assert!((corrected[t] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_residuals_recover_truth() {
        // If the predicted residual equals the true residual, the corrected
        // output equals the true load.
        let data = toy_prepared(24 * 40);
        let model = trained_dummy(&data);
        let w = data.window(HIST_LEN);
        let yhat = model.forecast_std(w.features, w.history).unwrap();
        for t in 0..FUTURE_LEN {
            let e = w.future[t] - yhat[t];
            let corrected = data.stats.destandardize_target(yhat[t]) + e * data.stats.target_std;
            let truth = data.stats.destandardize_target(w.future[t]);
            assert!((corrected - truth).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_history_is_a_usage_error() {
        let data = toy_prepared(24 * 40);
        let forecaster = trained_dummy(&data);
        let correction = transfer_init(&forecaster).unwrap();
        let err =
            corrected_forecast(&forecaster, &correction, &data, HIST_LEN, &[0.0; 10]).unwrap_err();
        assert!(matches!(err, TrainError::Num(NumError::Usage(_))));
    }
}
