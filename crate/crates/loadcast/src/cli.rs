//! Command-line surface tying the pipeline together.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::checkpoint::{
    load_cache, load_checkpoint, save_cache, save_checkpoint, ModelBundle, PreparedCache,
};
use crate::correction::residual_series;
use crate::data::window::{HIST_LEN, WINDOW_LEN};
use crate::data::{self, DatasetSplit};
use crate::error::{CheckpointError, DataError, MetricsError, NumError, TrainError};
use crate::metrics::metrics;
use crate::synth::SynthConfig;
use crate::train::{train_correction, train_forecaster, TrainHistory};
use crate::{config::FileConfig, correction, train};
use crate::ForecastModel;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Msg(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "loadcast",
    version,
    about = "Attention-based short-term load forecasting with error correction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct RunDirArg {
    /// Output directory (falls back to $LF_RUN_DIR, then ./run).
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
}

impl RunDirArg {
    fn resolve(&self) -> Result<PathBuf, CliError> {
        let dir = self
            .run_dir
            .clone()
            .or_else(|| std::env::var_os("LF_RUN_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("run"));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(dir)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the seeded synthetic dataset as CSV.
    Synth {
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24 * 120)]
        hours: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// First timestamp (ISO-8601).
        #[arg(long, default_value = "2020-01-06T00:00:00")]
        start: String,
        /// AR(1) coefficient of the injected disturbance.
        #[arg(long, default_value_t = 0.0)]
        ar: f64,
        /// Innovation standard deviation of the AR(1) disturbance.
        #[arg(long, default_value_t = 0.0)]
        ar_sd: f64,
    },
    /// Ingest the raw CSV, repair gaps, embed and standardize features,
    /// build the splits, and cache everything for the other subcommands.
    Prepare {
        #[arg(long)]
        config: PathBuf,
        /// Reuse standardization statistics from an existing cache instead
        /// of fitting them on this file's training range.
        #[arg(long)]
        stats_from: Option<PathBuf>,
        /// Cache path (defaults to <run-dir>/prepared.bin).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunDirArg,
    },
    /// Stage one: train the forecaster.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Prepared cache (defaults to <run-dir>/prepared.bin).
        #[arg(long)]
        prepared: Option<PathBuf>,
        /// Checkpoint path (defaults to <run-dir>/checkpoint.lfck).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunDirArg,
    },
    /// Stage two: compute residuals, transfer-initialize and train the
    /// error-correction model.
    TrainEc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Forecaster checkpoint (defaults to <run-dir>/checkpoint.lfck).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        prepared: Option<PathBuf>,
        /// Framework checkpoint path (defaults to <run-dir>/framework.lfck).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunDirArg,
    },
    /// Train one forecaster per hyperparameter combination and rank them.
    Gridsearch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        prepared: Option<PathBuf>,
        #[command(flatten)]
        run: RunDirArg,
    },
    /// Forecast the cached windows of one split.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        prepared: Option<PathBuf>,
        /// Which split to forecast: test, validation, or ec-train.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunDirArg,
    },
    /// Compare a prediction series against a truth series.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Column holding predictions (default: y_hat, value, or the sole
        /// non-timestamp column).
        #[arg(long)]
        pred_col: Option<String>,
        /// Column holding the truth (default: y_true, load_mw, value, or
        /// the sole non-timestamp column).
        #[arg(long)]
        truth_col: Option<String>,
        #[command(flatten)]
        run: RunDirArg,
    },
    /// Emit the per-step feature-weight matrix of one window as CSV.
    DumpWeights {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        prepared: Option<PathBuf>,
        /// Index into the test windows.
        #[arg(long, default_value_t = 0)]
        window: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunDirArg,
    },
    /// Emit day and hour attention weights of one window as CSV.
    DumpAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        prepared: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        window: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunDirArg,
    },
}

/// Runs one parsed command. `main` maps errors to exit code 1; clap itself
/// exits with 2 on usage errors.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth {
            out,
            hours,
            seed,
            start,
            ar,
            ar_sd,
        } => cmd_synth(&out, hours, seed, &start, ar, ar_sd),
        Command::Prepare {
            config,
            stats_from,
            out,
            run,
        } => cmd_prepare(&config, stats_from.as_deref(), out, &run),
        Command::Train {
            config,
            seed,
            prepared,
            out,
            run,
        } => cmd_train(&config, seed, prepared, out, &run),
        Command::TrainEc {
            config,
            seed,
            checkpoint,
            prepared,
            out,
            run,
        } => cmd_train_ec(&config, seed, checkpoint, prepared, out, &run),
        Command::Gridsearch {
            config,
            prepared,
            run,
        } => cmd_gridsearch(&config, prepared, &run),
        Command::Predict {
            checkpoint,
            prepared,
            split,
            out,
            run,
        } => cmd_predict(&checkpoint, prepared, &split, out, &run),
        Command::Evaluate {
            pred,
            truth,
            pred_col,
            truth_col,
            run,
        } => cmd_evaluate(&pred, &truth, pred_col.as_deref(), truth_col.as_deref(), &run),
        Command::DumpWeights {
            checkpoint,
            prepared,
            window,
            out,
            run,
        } => cmd_dump_weights(&checkpoint, prepared, window, out, &run),
        Command::DumpAttention {
            checkpoint,
            prepared,
            window,
            out,
            run,
        } => cmd_dump_attention(&checkpoint, prepared, window, out, &run),
    }
}

fn cmd_synth(
    out: &Path,
    hours: usize,
    seed: u64,
    start: &str,
    ar: f64,
    ar_sd: f64,
) -> Result<(), CliError> {
    let start = data::parse_timestamp(start)
        .ok_or_else(|| CliError::Msg(format!("bad --start timestamp `{start}`")))?;
    let cfg = SynthConfig {
        hours,
        start,
        seed,
        ar_coeff: ar,
        ar_sd,
        ..SynthConfig::default()
    };
    let series = crate::synth::generate(&cfg);
    crate::synth::write_csv(&series, out)?;
    println!("wrote {} hourly rows to {}", hours, out.display());
    Ok(())
}

fn cmd_prepare(
    config: &Path,
    stats_from: Option<&Path>,
    out: Option<PathBuf>,
    run: &RunDirArg,
) -> Result<(), CliError> {
    let run_dir = run.resolve()?;
    let cfg = FileConfig::load(config)?;
    let schema = cfg.schema()?;
    let holidays = cfg.holidays()?;
    let spec = cfg.split_spec()?;

    let raw = data::load_csv(&cfg.data.csv, &schema)?;
    let repaired = data::interpolate_missing(&raw)?;

    let stats = match stats_from {
        Some(path) => load_cache(path)?.prepared.stats,
        None => {
            let probe = data::embed_features(
                &repaired,
                &schema,
                &identity_stats(schema.width()),
                &holidays,
            )?;
            let rows = probe.range_rows(spec.train.start, spec.train.end);
            data::compute_stats(&repaired, &schema, rows)?
        }
    };
    let prepared = data::embed_features(&repaired, &schema, &stats, &holidays)?;
    let split = data::make_splits(&prepared, &spec)?;
    for (label, starts) in [
        ("train", &split.train),
        ("ec-train", &split.ec_train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        if starts.is_empty() {
            eprintln!("warning: {label} split holds no windows");
        }
    }

    let cache = PreparedCache {
        config_toml: cfg.to_toml(),
        prepared,
        split,
    };
    let path = out.unwrap_or_else(|| run_dir.join("prepared.bin"));
    save_cache(&cache, &path)?;
    println!(
        "prepared {} rows x {} features -> {} (train {} / ec {} / val {} / test {} windows)",
        cache.prepared.rows(),
        cache.prepared.width(),
        path.display(),
        cache.split.train.len(),
        cache.split.ec_train.len(),
        cache.split.validation.len(),
        cache.split.test.len()
    );
    Ok(())
}

fn identity_stats(width: usize) -> data::StandardStats {
    data::StandardStats {
        feature_mean: vec![0.0; width],
        feature_std: vec![1.0; width],
        target_mean: 0.0,
        target_std: 1.0,
    }
}

fn load_prepared(prepared: Option<PathBuf>, run_dir: &Path) -> Result<PreparedCache, CliError> {
    let path = prepared.unwrap_or_else(|| run_dir.join("prepared.bin"));
    Ok(load_cache(&path)?)
}

fn write_history(history: &TrainHistory, path: &Path) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    writeln!(f, "epoch,lr,train_loss,val_mae,val_mape,elapsed_s").map_err(io_err(path))?;
    for r in &history.epochs {
        writeln!(
            f,
            "{},{},{},{},{},{:.3}",
            r.epoch, r.lr, r.train_loss, r.val_mae, r.val_mape, r.elapsed_s
        )
        .map_err(io_err(path))?;
    }
    Ok(())
}

fn cmd_train(
    config: &Path,
    seed: Option<u64>,
    prepared: Option<PathBuf>,
    out: Option<PathBuf>,
    run: &RunDirArg,
) -> Result<(), CliError> {
    let run_dir = run.resolve()?;
    let mut cfg = FileConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let cache = load_prepared(prepared, &run_dir)?;
    let model_cfg = cfg.model_config(cache.prepared.width())?;
    let train_cfg = cfg.train_config();

    let mut model = ForecastModel::new(model_cfg, train_cfg.seed).map_err(TrainError::from)?;
    let history = train_forecaster(
        &mut model,
        &cache.prepared,
        &cache.split.train,
        &cache.split.validation,
        &train_cfg,
    )?;
    write_history(&history, &run_dir.join("train_log.csv"))?;

    let bundle = ModelBundle {
        config_toml: cfg.to_toml(),
        stats: Some(cache.prepared.stats.clone()),
        forecaster: model,
        correction: None,
    };
    let path = out.unwrap_or_else(|| run_dir.join("checkpoint.lfck"));
    save_checkpoint(&bundle, &path)?;
    println!(
        "trained {} epochs (best val MAE {:.4} at epoch {}) -> {}",
        history.epochs.len(),
        history.best_val_mae,
        history.best_epoch,
        path.display()
    );
    Ok(())
}

fn cmd_train_ec(
    config: &Path,
    seed: Option<u64>,
    checkpoint: Option<PathBuf>,
    prepared: Option<PathBuf>,
    out: Option<PathBuf>,
    run: &RunDirArg,
) -> Result<(), CliError> {
    let run_dir = run.resolve()?;
    let mut cfg = FileConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let cache = load_prepared(prepared, &run_dir)?;
    let ckpt_path = checkpoint.unwrap_or_else(|| run_dir.join("checkpoint.lfck"));
    let bundle = load_checkpoint(&ckpt_path)?;
    let forecaster = bundle.forecaster;
    let train_cfg = cfg.train_config();

    if cache.split.ec_train.is_empty() {
        return Err(TrainError::BadConfig("EC window set is empty".into()).into());
    }
    let train_samples =
        correction::compute_residuals(&forecaster, &cache.prepared, &cache.split.ec_train)?;
    let val_samples = if cache.split.validation.is_empty() {
        Vec::new()
    } else {
        correction::compute_residuals(&forecaster, &cache.prepared, &cache.split.validation)?
    };
    let mut corr = correction::transfer_init(&forecaster).map_err(TrainError::from)?;
    let history = train_correction(&mut corr, &cache.prepared, &train_samples, &val_samples, &train_cfg)?;
    write_history(&history, &run_dir.join("ec_train_log.csv"))?;

    let out_bundle = ModelBundle {
        config_toml: cfg.to_toml(),
        stats: bundle.stats,
        forecaster,
        correction: Some(corr),
    };
    let path = out.unwrap_or_else(|| run_dir.join("framework.lfck"));
    save_checkpoint(&out_bundle, &path)?;
    println!(
        "error correction trained {} epochs (best corrected val MAE {:.4}) -> {}",
        history.epochs.len(),
        history.best_val_mae,
        path.display()
    );
    Ok(())
}

fn cmd_gridsearch(
    config: &Path,
    prepared: Option<PathBuf>,
    run: &RunDirArg,
) -> Result<(), CliError> {
    let run_dir = run.resolve()?;
    let cfg = FileConfig::load(config)?;
    let cache = load_prepared(prepared, &run_dir)?;
    let model_cfg = cfg.model_config(cache.prepared.width())?;
    let train_cfg = cfg.train_config();
    let spec = cfg.grid_spec();

    let (results, best) = train::grid_search(&spec, &model_cfg, &train_cfg, &cache.prepared, &cache.split)?;

    let path = run_dir.join("grid_results.csv");
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    writeln!(f, "batch_size,hidden_size,lambda,val_mae,rank,error").map_err(io_err(&path))?;
    for r in &results {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.batch_size,
            r.hidden_size,
            r.lambda,
            r.val_mae.map_or(String::new(), |v| v.to_string()),
            r.rank.map_or(String::new(), |v| v.to_string()),
            r.error.clone().unwrap_or_default()
        )
        .map_err(io_err(&path))?;
    }

    if let Some(model) = best {
        let bundle = ModelBundle {
            config_toml: cfg.to_toml(),
            stats: Some(cache.prepared.stats.clone()),
            forecaster: model,
            correction: None,
        };
        save_checkpoint(&bundle, &run_dir.join("checkpoint.lfck"))?;
    }
    println!(
        "grid search finished: {} combinations, results in {}",
        results.len(),
        path.display()
    );
    Ok(())
}

fn split_starts<'a>(split: &'a DatasetSplit, name: &str) -> Result<&'a [usize], CliError> {
    match name {
        "test" => Ok(&split.test),
        "validation" | "val" => Ok(&split.validation),
        "ec-train" => Ok(&split.ec_train),
        other => Err(CliError::Msg(format!(
            "unknown split `{other}` (expected test|validation|ec-train)"
        ))),
    }
}

fn cmd_predict(
    checkpoint: &Path,
    prepared: Option<PathBuf>,
    split: &str,
    out: Option<PathBuf>,
    run: &RunDirArg,
) -> Result<(), CliError> {
    let run_dir = run.resolve()?;
    let cache = load_prepared(prepared, &run_dir)?;
    let bundle = load_checkpoint(checkpoint)?;
    let data = &cache.prepared;
    let starts = split_starts(&cache.split, split)?;
    if starts.is_empty() {
        return Err(CliError::Msg(format!("split `{split}` holds no windows")));
    }

    // Teacher residual history for corrected output: the forecaster's own
    // residuals over the hours preceding each window, computed causally.
    let residuals = match &bundle.correction {
        Some(_) => {
            let lo = *starts.iter().min().unwrap();
            let hi = *starts.iter().max().unwrap() + WINDOW_LEN;
            Some(residual_series(&bundle.forecaster, data, lo, hi)?)
        }
        None => None,
    };

    let path = out.unwrap_or_else(|| run_dir.join("predictions.csv"));
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    if bundle.correction.is_some() {
        writeln!(f, "timestamp,y_true,y_hat,y_bar").map_err(io_err(&path))?;
    } else {
        writeln!(f, "timestamp,y_true,y_hat").map_err(io_err(&path))?;
    }

    for &s in starts {
        let w = data.window(s);
        let yhat = bundle.forecaster.forecast_std(w.features, w.history)?;
        let ybar = match (&bundle.correction, &residuals) {
            (Some(corr), Some(r)) => {
                let hist = r.slice(s, HIST_LEN).ok_or_else(|| {
                    CliError::Msg(format!("missing residual history for window at row {s}"))
                })?;
                Some(correction::corrected_forecast(
                    &bundle.forecaster,
                    corr,
                    data,
                    s,
                    hist,
                )?)
            }
            _ => None,
        };
        for t in 0..yhat.len() {
            let row = s + HIST_LEN + t;
            let truth = data.target_mw(row);
            let pred = data.stats.destandardize_target(yhat[t]);
            match &ybar {
                Some(b) => writeln!(
                    f,
                    "{},{},{},{}",
                    data.timestamps[row].format("%Y-%m-%dT%H:%M:%S"),
                    truth,
                    pred,
                    b[t]
                )
                .map_err(io_err(&path))?,
                None => writeln!(
                    f,
                    "{},{},{}",
                    data.timestamps[row].format("%Y-%m-%dT%H:%M:%S"),
                    truth,
                    pred
                )
                .map_err(io_err(&path))?,
            }
        }
    }
    println!(
        "wrote {} windows x 24 steps to {}",
        starts.len(),
        path.display()
    );
    Ok(())
}

/// Reads one numeric column from a CSV, preferring the given column names.
fn read_series_column(path: &Path, preferred: &[&str]) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Msg(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Msg(format!("{}: {e}", path.display())))?
        .clone();
    let idx = preferred
        .iter()
        .find_map(|name| headers.iter().position(|h| h == *name))
        .or_else(|| {
            let non_ts: Vec<usize> = (0..headers.len())
                .filter(|&i| headers.get(i) != Some("timestamp"))
                .collect();
            (non_ts.len() == 1).then(|| non_ts[0])
        })
        .ok_or_else(|| {
            CliError::Msg(format!(
                "{}: no column matching {:?}; use --pred-col/--truth-col",
                path.display(),
                preferred
            ))
        })?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Msg(format!("{}: {e}", path.display())))?;
        let raw = rec.get(idx).unwrap_or("");
        let v = raw.parse::<f64>().map_err(|_| {
            CliError::Msg(format!(
                "{} line {}: bad value `{raw}`",
                path.display(),
                i + 2
            ))
        })?;
        out.push(v);
    }
    Ok(out)
}

fn cmd_evaluate(
    pred: &Path,
    truth: &Path,
    pred_col: Option<&str>,
    truth_col: Option<&str>,
    run: &RunDirArg,
) -> Result<(), CliError> {
    let run_dir = run.resolve()?;
    let pred_names: Vec<&str> = match pred_col {
        Some(c) => vec![c],
        None => vec!["y_hat", "y_bar", "value"],
    };
    let truth_names: Vec<&str> = match truth_col {
        Some(c) => vec![c],
        None => vec!["y_true", "load_mw", "value"],
    };
    let p = read_series_column(pred, &pred_names)?;
    let t = read_series_column(truth, &truth_names)?;
    let report = metrics(&t, &p)?;

    let re_path = run_dir.join("re_series.csv");
    let mut f = fs::File::create(&re_path).map_err(io_err(&re_path))?;
    writeln!(f, "i,re_percent").map_err(io_err(&re_path))?;
    for (i, re) in report.relative_errors.iter().enumerate() {
        if re.is_nan() {
            writeln!(f, "{i},").map_err(io_err(&re_path))?;
        } else {
            writeln!(f, "{i},{re}").map_err(io_err(&re_path))?;
        }
    }

    let json = serde_json::json!({
        "mae": report.mae,
        "mape": report.mape,
        "n": report.n,
        "re_series_path": re_path.display().to_string(),
    });
    println!("{}", serde_json::to_string_pretty(&json).unwrap());
    Ok(())
}

fn test_window_start(cache: &PreparedCache, window: usize) -> Result<usize, CliError> {
    cache.split.test.get(window).copied().ok_or_else(|| {
        CliError::Msg(format!(
            "test window index {window} out of range ({} windows)",
            cache.split.test.len()
        ))
    })
}

fn cmd_dump_weights(
    checkpoint: &Path,
    prepared: Option<PathBuf>,
    window: usize,
    out: Option<PathBuf>,
    run: &RunDirArg,
) -> Result<(), CliError> {
    let run_dir = run.resolve()?;
    let cache = load_prepared(prepared, &run_dir)?;
    let bundle = load_checkpoint(checkpoint)?;
    let start = test_window_start(&cache, window)?;
    let w = cache.prepared.window(start);
    let trace = bundle.forecaster.weight_trace(w.features)?;

    let path = out.unwrap_or_else(|| run_dir.join("weights.csv"));
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    let n = cache.prepared.width();
    let header: Vec<String> = (1..=n).map(|k| format!("feature_{k}")).collect();
    writeln!(f, "t,{}", header.join(",")).map_err(io_err(&path))?;
    for (t, row) in trace.iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{},{}", t + 1, vals.join(",")).map_err(io_err(&path))?;
    }
    println!("wrote {} weight rows to {}", trace.len(), path.display());
    Ok(())
}

fn cmd_dump_attention(
    checkpoint: &Path,
    prepared: Option<PathBuf>,
    window: usize,
    out: Option<PathBuf>,
    run: &RunDirArg,
) -> Result<(), CliError> {
    let run_dir = run.resolve()?;
    let cache = load_prepared(prepared, &run_dir)?;
    let bundle = load_checkpoint(checkpoint)?;
    let start = test_window_start(&cache, window)?;
    let w = cache.prepared.window(start);
    let art = bundle.forecaster.forward(w.features, w.history, false)?;

    let day_len = bundle.forecaster.cfg.day_len;
    let path = out.unwrap_or_else(|| run_dir.join("attention.csv"));
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    writeln!(f, "t,i,j,gamma_i,beta_ijt").map_err(io_err(&path))?;
    let gammas = &art.day_weights.weights;
    for (t, row) in art.attention_rows().iter().enumerate() {
        for (flat, beta) in row.iter().enumerate() {
            let i = flat / day_len;
            let j = flat % day_len;
            writeln!(f, "{},{},{},{},{}", t + 1, i + 1, j + 1, gammas[i], beta)
                .map_err(io_err(&path))?;
        }
    }
    println!("wrote attention for window {window} to {}", path.display());
    Ok(())
}
