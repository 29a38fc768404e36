//! Two-stage training: the forecaster on the fitting loss, then the error
//! corrector on plain squared residual error, with seeded shuffling, a
//! step-decay learning rate, gradient clipping, early stopping with
//! best-parameter restoration, and grid search.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::correction::{compute_residuals, transfer_init, CorrectionModel, ErrorSample};
use crate::data::window::{FUTURE_LEN, HIST_DAYS, HIST_LEN};
use crate::data::{DatasetSplit, Prepared};
use crate::error::{NumError, TrainError};
use crate::model::{ForecastModel as GenericModel, ModelConfig, PenaltyMode};
use crate::optim::{clip_grad_norm, Adam, LrSchedule};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::ForecastModel;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Maximum forecaster epochs.
    pub max_epochs: usize,
    /// Maximum error-correction epochs; defaults to `max_epochs`.
    pub ec_max_epochs: Option<usize>,
    pub batch_size: usize,
    /// Sparsity-penalty weight in the fitting loss.
    pub lambda: f64,
    /// Early-stopping patience in epochs.
    pub patience: usize,
    pub schedule: LrSchedule,
    /// Global-norm gradient clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Seed for parameter initialization and epoch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 300,
            ec_max_epochs: None,
            batch_size: 64,
            lambda: 0.001,
            patience: 30,
            schedule: LrSchedule::default(),
            clip_norm: Some(5.0),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.lambda < 0.0 {
            return Err(TrainError::BadConfig("lambda must be non-negative".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(TrainError::BadConfig(
                "batch size and epoch count must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_mape: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub stopped_early: bool,
}

/// Early-stopping counter: stops after `patience` consecutive
/// non-improving observations beyond the best.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Returns `(improved, should_stop)`.
    pub fn observe(&mut self, epoch: usize, value: f64) -> (bool, bool) {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best > self.patience)
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

/// Reference fitting loss: mean squared error over all target elements plus
/// `lambda` times the mean L1 norm of the per-step feature weights, exactly
/// as formulated. Softmax weights make the penalty the constant 1 per step.
pub fn loss_lf(
    y: &[f64],
    y_hat: &[f64],
    weights_per_step: &[Vec<f64>],
    lambda: f64,
) -> Result<f64, TrainError> {
    if lambda < 0.0 {
        return Err(TrainError::BadConfig("lambda must be non-negative".into()));
    }
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(TrainError::BadConfig(format!(
            "loss needs equal non-empty targets and predictions ({} vs {})",
            y.len(),
            y_hat.len()
        )));
    }
    let mse = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64;
    if lambda == 0.0 {
        return Ok(mse);
    }
    if weights_per_step.is_empty() {
        return Err(TrainError::BadConfig(
            "lambda > 0 requires the per-step feature weights".into(),
        ));
    }
    let l1 = weights_per_step
        .iter()
        .map(|w| w.iter().map(|v| v.abs()).sum::<f64>())
        .sum::<f64>()
        / weights_per_step.len() as f64;
    Ok(mse + lambda * l1)
}

/// Error-correction loss: plain mean squared residual error.
pub fn loss_ec(e: &[f64], e_hat: &[f64]) -> Result<f64, TrainError> {
    loss_lf(e, e_hat, &[], 0.0)
}

/// Loss and per-parameter gradients for one window, computed on the tape.
pub struct WindowLoss<S> {
    pub loss: S,
    /// Aligned with the parameter store; `None` where no gradient flows.
    pub grads: Vec<Option<Vec<S>>>,
}

/// Builds the forward pass for one window, attaches the loss node, and runs
/// the backward sweep when gradients are requested.
pub fn window_loss<S: Scalar>(
    model: &GenericModel<S>,
    features: &[S],
    history: &[S],
    targets: &[S],
    lambda: f64,
    with_grads: bool,
) -> Result<WindowLoss<S>, NumError> {
    if targets.len() != model.cfg.future_len() {
        return Err(NumError::ShapeMismatch {
            op: "window_loss",
            expected: format!("{} targets", model.cfg.future_len()),
            got: format!("{}", targets.len()),
        });
    }
    let mut art = model.forward(features, history, with_grads)?;
    let tape = &mut art.tape;
    let yhat = tape.concat(&art.predictions);
    let y = tape.leaf(targets.to_vec());
    let diff = tape.sub(yhat, y);
    let sq = tape.mul(diff, diff);
    let mse = tape.mean(sq);
    let loss = if lambda > 0.0 {
        let per_step: Vec<_> = match model.cfg.penalty {
            PenaltyMode::AlphaL1 => art
                .feature_weights
                .iter()
                .map(|&w| {
                    let a = tape.abs(w);
                    tape.sum(a)
                })
                .collect(),
            PenaltyMode::ScoreAbs => art
                .feature_scores
                .iter()
                .map(|&h| {
                    let a = tape.abs(h);
                    tape.mean(a)
                })
                .collect(),
        };
        let stacked = tape.concat(&per_step);
        let penalty = tape.mean(stacked);
        let scaled = tape.scale(penalty, S::from_f64(lambda));
        tape.add(mse, scaled)
    } else {
        mse
    };

    let loss_value = tape.value(loss)[0];
    let mut grads = vec![None; model.params.len()];
    if with_grads {
        let g = tape.backward(loss);
        for &(idx, node) in &art.param_nodes {
            grads[idx] = g.get(node).map(|s| s.to_vec());
        }
    }
    Ok(WindowLoss {
        loss: loss_value,
        grads,
    })
}

fn accumulate<S: Scalar>(params: &mut ParamStore<S>, grads: &[Option<Vec<S>>]) {
    for (idx, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            params.get_mut(idx).tensor.accumulate_grad(g, S::one());
        }
    }
}

/// De-standardized MAE and MAPE of the forecaster over the given windows,
/// evaluated in ascending window order (batch-size independent).
pub fn evaluate_forecaster(
    model: &ForecastModel,
    data: &Prepared,
    starts: &[usize],
) -> Result<(f64, f64), TrainError> {
    let mut abs = 0.0;
    let mut pct = 0.0;
    let mut n = 0usize;
    for &s in starts {
        let w = data.window(s);
        let yhat = model.forecast_std(w.features, w.history)?;
        for (t, &p) in yhat.iter().enumerate() {
            let truth = data.stats.destandardize_target(w.future[t]);
            let pred = data.stats.destandardize_target(p);
            abs += (truth - pred).abs();
            if truth != 0.0 {
                pct += ((truth - pred) / truth).abs();
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(TrainError::EmptyDataset("evaluation windows"));
    }
    Ok((abs / n as f64, pct / n as f64 * 100.0))
}

/// Corrected-output MAE over error samples: the forecaster output implied by
/// each sample plus the corrector's predicted residual, against the truth.
pub fn evaluate_correction(
    correction: &CorrectionModel<f64>,
    data: &Prepared,
    samples: &[ErrorSample],
) -> Result<f64, TrainError> {
    let mut abs = 0.0;
    let mut n = 0usize;
    for s in samples {
        let w = data.window(s.start);
        let ehat = correction.model.forecast_std(w.features, &s.hist_residuals)?;
        for t in 0..FUTURE_LEN {
            let truth = data.stats.destandardize_target(w.future[t]);
            let yhat_std = w.future[t] - s.future_residuals[t];
            let corrected =
                data.stats.destandardize_target(yhat_std) + ehat[t] * data.stats.target_std;
            abs += (truth - corrected).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(TrainError::EmptyDataset("error-correction validation"));
    }
    Ok(abs / n as f64)
}

struct EpochOutcome {
    train_loss: f64,
}

fn run_epoch<'a, F>(
    model: &mut ForecastModel,
    order: &[usize],
    cfg: &TrainConfig,
    opt: &mut Adam<f64>,
    epoch: usize,
    lambda: f64,
    mut load: F,
) -> Result<EpochOutcome, TrainError>
where
    F: FnMut(usize) -> (&'a [f64], &'a [f64], &'a [f64]),
{
    opt.set_lr(cfg.schedule.rate(epoch));
    let mut loss_sum = 0.0;
    for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
        model.params.zero_grads();
        for &item in chunk {
            let (features, history, targets) = load(item);
            let wl = window_loss(model, features, history, targets, lambda, true)?;
            if !wl.loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            loss_sum += wl.loss;
            accumulate(&mut model.params, &wl.grads);
        }
        model.params.scale_grads(1.0 / chunk.len() as f64);
        if let Some(max_norm) = cfg.clip_norm {
            clip_grad_norm(&mut model.params, max_norm);
        }
        opt.step(&mut model.params)?;
    }
    Ok(EpochOutcome {
        train_loss: loss_sum / order.len() as f64,
    })
}

/// Stage-one training. Shuffles seeded each epoch, applies the learning-rate
/// schedule, clips gradients, early-stops on validation MAE and restores the
/// best-validation parameters. With no validation windows it runs all epochs
/// and keeps the final parameters.
pub fn train_forecaster(
    model: &mut ForecastModel,
    data: &Prepared,
    train: &[usize],
    val: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset("forecaster training"));
    }
    check_pipeline_geometry(&model.cfg, data)?;

    let mut opt = Adam::new(&model.params, cfg.schedule.rate(0));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params: Option<ParamStore<f64>> = None;
    let mut history = Vec::new();
    let mut stopped_early = false;
    let started = Instant::now();

    for epoch in 0..cfg.max_epochs {
        let mut order = train.to_vec();
        order.shuffle(&mut rng);
        let outcome = run_epoch(model, &order, cfg, &mut opt, epoch, cfg.lambda, |s| {
            let w = data.window(s);
            (w.features, w.history, w.future)
        })?;

        let (val_mae, val_mape) = if val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            evaluate_forecaster(model, data, val)?
        };
        history.push(EpochRecord {
            epoch,
            lr: cfg.schedule.rate(epoch),
            train_loss: outcome.train_loss,
            val_mae,
            val_mape,
            elapsed_s: started.elapsed().as_secs_f64(),
        });

        if !val.is_empty() {
            let (improved, stop) = stopper.observe(epoch, val_mae);
            if improved {
                best_params = Some(model.params.clone());
            }
            if stop {
                stopped_early = true;
                break;
            }
        }
    }

    if let Some(best) = best_params {
        model.params = best;
    }
    model.trained = true;
    let (best_epoch, best_val) = stopper.best();
    Ok(TrainHistory {
        epochs: history,
        best_epoch,
        best_val_mae: best_val,
        stopped_early,
    })
}

/// Stage-two training of the corrector on residual samples, minimizing the
/// plain squared residual error with the same optimizer, schedule and
/// early-stopping machinery; the monitored quantity is corrected MAE on the
/// validation samples.
pub fn train_correction(
    correction: &mut CorrectionModel<f64>,
    data: &Prepared,
    train: &[ErrorSample],
    val: &[ErrorSample],
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::BadConfig(
            "error-correction training set is empty".into(),
        ));
    }
    check_pipeline_geometry(&correction.model.cfg, data)?;

    let max_epochs = cfg.ec_max_epochs.unwrap_or(cfg.max_epochs);
    let mut opt = Adam::new(&correction.model.params, cfg.schedule.rate(0));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params: Option<ParamStore<f64>> = None;
    let mut history = Vec::new();
    let mut stopped_early = false;
    let started = Instant::now();

    for epoch in 0..max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        // The penalty is dropped: the weighter is frozen, so the loss is MSE.
        let outcome = run_epoch(&mut correction.model, &order, cfg, &mut opt, epoch, 0.0, |i| {
            let s = &train[i];
            let w = data.window(s.start);
            (
                w.features,
                s.hist_residuals.as_slice(),
                s.future_residuals.as_slice(),
            )
        })?;

        let val_mae = if val.is_empty() {
            f64::NAN
        } else {
            evaluate_correction(correction, data, val)?
        };
        history.push(EpochRecord {
            epoch,
            lr: cfg.schedule.rate(epoch),
            train_loss: outcome.train_loss,
            val_mae,
            val_mape: f64::NAN,
            elapsed_s: started.elapsed().as_secs_f64(),
        });

        if !val.is_empty() {
            let (improved, stop) = stopper.observe(epoch, val_mae);
            if improved {
                best_params = Some(correction.model.params.clone());
            }
            if stop {
                stopped_early = true;
                break;
            }
        }
    }

    if let Some(best) = best_params {
        correction.model.params = best;
    }
    correction.model.trained = true;
    let (best_epoch, best_val) = stopper.best();
    Ok(TrainHistory {
        epochs: history,
        best_epoch,
        best_val_mae: best_val,
        stopped_early,
    })
}

fn check_pipeline_geometry(cfg: &ModelConfig, data: &Prepared) -> Result<(), TrainError> {
    if cfg.hist_len() != HIST_LEN || cfg.future_len() != FUTURE_LEN || cfg.days != HIST_DAYS {
        return Err(TrainError::BadConfig(format!(
            "model geometry {}x{} does not match the {HIST_LEN}/{FUTURE_LEN} pipeline windows",
            cfg.hist_len(),
            cfg.future_len()
        )));
    }
    if cfg.input_width != data.width() {
        return Err(TrainError::BadConfig(format!(
            "model input width {} does not match embedded width {}",
            cfg.input_width,
            data.width()
        )));
    }
    Ok(())
}

/// The trained framework: the shared feature weighter lives inside each
/// model's parameter set, bit-identical between the two after transfer.
pub struct Framework {
    pub forecaster: ForecastModel,
    pub correction: Option<CorrectionModel<f64>>,
    pub forecaster_history: TrainHistory,
    pub ec_history: Option<TrainHistory>,
}

/// Full two-stage procedure: stage one on the training windows, then
/// residual computation, transfer initialization and stage two. With
/// `with_ec` false only stage one runs.
pub fn train_framework(
    model_cfg: &ModelConfig,
    data: &Prepared,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    with_ec: bool,
) -> Result<Framework, TrainError> {
    let mut forecaster = ForecastModel::new(model_cfg.clone(), cfg.seed)?;
    let forecaster_history =
        train_forecaster(&mut forecaster, data, &split.train, &split.validation, cfg)?;

    if !with_ec {
        return Ok(Framework {
            forecaster,
            correction: None,
            forecaster_history,
            ec_history: None,
        });
    }

    if split.ec_train.is_empty() {
        return Err(TrainError::BadConfig(
            "error correction requested but the EC window set is empty".into(),
        ));
    }
    let train_samples = compute_residuals(&forecaster, data, &split.ec_train)?;
    let val_samples = if split.validation.is_empty() {
        Vec::new()
    } else {
        compute_residuals(&forecaster, data, &split.validation)?
    };
    let mut correction = transfer_init(&forecaster)?;
    let ec_history = train_correction(&mut correction, data, &train_samples, &val_samples, cfg)?;

    Ok(Framework {
        forecaster,
        correction: Some(correction),
        forecaster_history,
        ec_history: Some(ec_history),
    })
}

/// Hyperparameter axes swept by [`grid_search`].
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub batch_sizes: Vec<usize>,
    pub hidden_sizes: Vec<usize>,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub batch_size: usize,
    pub hidden_size: usize,
    pub lambda: f64,
    pub val_mae: Option<f64>,
    pub error: Option<String>,
    pub rank: Option<usize>,
}

/// Trains one forecaster per grid point with a shared seed and ranks the
/// points by validation MAE. Failing points are recorded and skipped.
pub fn grid_search(
    spec: &GridSpec,
    base_model: &ModelConfig,
    base_train: &TrainConfig,
    data: &Prepared,
    split: &DatasetSplit,
) -> Result<(Vec<GridResult>, Option<ForecastModel>), TrainError> {
    if spec.batch_sizes.is_empty() || spec.hidden_sizes.is_empty() || spec.lambdas.is_empty() {
        return Err(TrainError::BadConfig("grid axes must be non-empty".into()));
    }
    if split.validation.is_empty() {
        return Err(TrainError::BadConfig(
            "grid search needs a validation set".into(),
        ));
    }

    let mut results = Vec::new();
    let mut best: Option<(f64, ForecastModel)> = None;
    for &batch in &spec.batch_sizes {
        for &hidden in &spec.hidden_sizes {
            for &lambda in &spec.lambdas {
                let mut model_cfg = base_model.clone();
                model_cfg.hidden = hidden;
                let mut train_cfg = base_train.clone();
                train_cfg.batch_size = batch;
                train_cfg.lambda = lambda;

                let outcome = ForecastModel::new(model_cfg, train_cfg.seed)
                    .map_err(TrainError::from)
                    .and_then(|mut model| {
                        train_forecaster(&mut model, data, &split.train, &split.validation, &train_cfg)
                            .map(|h| (model, h))
                    });
                match outcome {
                    Ok((model, history)) => {
                        let mae = history.best_val_mae;
                        if best.as_ref().map_or(true, |(b, _)| mae < *b) {
                            best = Some((mae, model));
                        }
                        results.push(GridResult {
                            batch_size: batch,
                            hidden_size: hidden,
                            lambda,
                            val_mae: Some(mae),
                            error: None,
                            rank: None,
                        });
                    }
                    Err(e) => results.push(GridResult {
                        batch_size: batch,
                        hidden_size: hidden,
                        lambda,
                        val_mae: None,
                        error: Some(e.to_string()),
                        rank: None,
                    }),
                }
            }
        }
    }

    // Rank successful points by validation MAE, ascending.
    let mut order: Vec<usize> = (0..results.len())
        .filter(|&i| results[i].val_mae.is_some())
        .collect();
    order.sort_by(|&a, &b| {
        results[a]
            .val_mae
            .unwrap()
            .partial_cmp(&results[b].val_mae.unwrap())
            .unwrap()
    });
    for (rank, idx) in order.into_iter().enumerate() {
        results[idx].rank = Some(rank + 1);
    }

    Ok((results, best.map(|(_, m)| m)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit_loss_is_zero() {
        let y = vec![1.0, 2.0, 3.0];
        assert_eq!(loss_lf(&y, &y, &[], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_mse() {
        let loss = loss_lf(&[0.0, 0.0], &[1.0, 1.0], &[], 0.0).unwrap();
        assert_eq!(loss, 1.0);
    }

    #[test]
    fn softmax_weights_make_the_penalty_constant() {
        // Rows that sum to one (softmax output) add exactly lambda * 1.
        let rows = vec![vec![0.25, 0.75], vec![0.5, 0.5], vec![0.9, 0.1]];
        let base = loss_lf(&[1.0], &[0.5], &rows, 0.0).unwrap();
        let with = loss_lf(&[1.0], &[0.5], &rows, 0.01).unwrap();
        assert!((with - base - 0.01).abs() < 1e-15);
    }

    #[test]
    fn negative_lambda_is_rejected() {
        assert!(matches!(
            loss_lf(&[1.0], &[1.0], &[], -0.5),
            Err(TrainError::BadConfig(_))
        ));
    }

    #[test]
    fn ec_loss_equals_lf_without_penalty() {
        let e = vec![0.2, -0.4, 1.0];
        let e_hat = vec![0.1, -0.1, 0.4];
        assert_eq!(
            loss_ec(&e, &e_hat).unwrap(),
            loss_lf(&e, &e_hat, &[], 0.0).unwrap()
        );
        // Hand MSE on a 2-element batch.
        assert!((loss_ec(&[1.0, 3.0], &[0.0, 1.0]).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn early_stopping_counts_thirty_one_failures() {
        let mut es = EarlyStopping::new(30);
        assert_eq!(es.observe(0, 10.0), (true, false));
        for epoch in 1..=30 {
            assert_eq!(es.observe(epoch, 11.0), (false, false), "epoch {epoch}");
        }
        // The 31st consecutive non-improving epoch stops.
        assert_eq!(es.observe(31, 11.0), (false, true));
    }

    #[test]
    fn early_stopping_resets_on_improvement() {
        let mut es = EarlyStopping::new(2);
        es.observe(0, 10.0);
        es.observe(1, 12.0);
        es.observe(2, 11.0);
        assert_eq!(es.observe(3, 9.0), (true, false));
        assert_eq!(es.best(), (3, 9.0));
    }
}
