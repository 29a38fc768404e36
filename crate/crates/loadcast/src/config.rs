//! TOML run configuration for the CLI.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::window::ShortPolicy;
use crate::data::{FeatureSchema, HolidaySet, RangeSpec, SplitSpec};
use crate::error::DataError;
use crate::model::{CellKind, ModelConfig, PenaltyMode};
use crate::optim::LrSchedule;
use crate::train::{GridSpec, TrainConfig};

/// On-disk configuration. Every key has a default; see the README for the
/// full key reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    /// Seed for splits, initialization and shuffling.
    pub seed: u64,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub grid: GridSection,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            seed: 42,
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            grid: GridSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    /// Raw input CSV.
    pub csv: PathBuf,
    /// `iso-ne`, `nau`, `synth`, or `custom`.
    pub schema: String,
    /// Numeric columns for the custom schema.
    pub numeric_columns: Vec<String>,
    /// `(column, cardinality)` categorical columns for the custom schema.
    pub categorical_columns: Vec<(String, usize)>,
    /// Whether the custom schema appends the calendar block.
    pub include_calendar: bool,
    /// Optional file with one `YYYY-MM-DD` holiday per line.
    pub holiday_file: Option<PathBuf>,
    /// `[start, end)` timestamps per role.
    pub train_range: [String; 2],
    pub ec_range: [String; 2],
    pub test_range: [String; 2],
    /// `error` or `allow-empty` when a range is shorter than one window.
    pub on_short: String,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            csv: PathBuf::from("data.csv"),
            schema: "synth".into(),
            numeric_columns: Vec::new(),
            categorical_columns: Vec::new(),
            include_calendar: true,
            holiday_file: None,
            train_range: ["2020-01-06".into(), "2020-04-06".into()],
            ec_range: ["2020-04-06".into(), "2020-05-04".into()],
            test_range: ["2020-05-04".into(), "2020-06-01".into()],
            on_short: "error".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    /// `rnn`, `lstm`, or `gru`.
    pub cell: String,
    pub hidden_size: usize,
    /// Hidden widths of the weighter / attention / head; 0 means
    /// "use hidden_size".
    pub fw_hidden: usize,
    pub att_hidden: usize,
    pub out_hidden: usize,
    pub weighter_bias: bool,
    /// `l1-alpha` (as formulated) or `abs-score` (alternative mode).
    pub alpha_penalty: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            cell: "lstm".into(),
            hidden_size: 128,
            fw_hidden: 0,
            att_hidden: 0,
            out_hidden: 0,
            weighter_bias: true,
            alpha_penalty: "l1-alpha".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub max_epochs: usize,
    /// 0 means "same as max_epochs".
    pub ec_max_epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub patience: usize,
    pub initial_lr: f64,
    pub lr_decay: f64,
    pub lr_period: usize,
    /// Global-norm gradient clip; 0 disables.
    pub clip_norm: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            max_epochs: 300,
            ec_max_epochs: 0,
            batch_size: 64,
            lambda: 0.001,
            patience: 30,
            initial_lr: 1e-3,
            lr_decay: 0.1,
            lr_period: 30,
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSection {
    pub batch_size: Vec<usize>,
    pub hidden_size: Vec<usize>,
    pub lambda: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            batch_size: vec![64, 128],
            hidden_size: vec![128, 256, 512],
            lambda: vec![0.0, 0.001, 0.01],
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| DataError::BadConfig(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schema(&self) -> Result<FeatureSchema, DataError> {
        match self.data.schema.as_str() {
            "custom" => {
                if self.data.numeric_columns.is_empty() && self.data.categorical_columns.is_empty()
                {
                    return Err(DataError::BadConfig(
                        "custom schema needs numeric_columns or categorical_columns".into(),
                    ));
                }
                Ok(FeatureSchema::custom(
                    &self.data.numeric_columns,
                    &self.data.categorical_columns,
                    self.data.include_calendar,
                ))
            }
            name => FeatureSchema::by_name(name).ok_or_else(|| {
                DataError::BadConfig(format!(
                    "unknown schema `{name}` (expected iso-ne|nau|synth|custom)"
                ))
            }),
        }
    }

    pub fn split_spec(&self) -> Result<SplitSpec, DataError> {
        let parse_range = |pair: &[String; 2], label: &str| -> Result<RangeSpec, DataError> {
            let start = crate::data::parse_timestamp(&pair[0]).ok_or_else(|| {
                DataError::BadConfig(format!("bad {label} range start `{}`", pair[0]))
            })?;
            let end = crate::data::parse_timestamp(&pair[1]).ok_or_else(|| {
                DataError::BadConfig(format!("bad {label} range end `{}`", pair[1]))
            })?;
            if end <= start {
                return Err(DataError::BadConfig(format!(
                    "{label} range end must follow its start"
                )));
            }
            Ok(RangeSpec { start, end })
        };
        Ok(SplitSpec {
            train: parse_range(&self.data.train_range, "train")?,
            ec: parse_range(&self.data.ec_range, "ec")?,
            test: parse_range(&self.data.test_range, "test")?,
            seed: self.seed,
            short: match self.data.on_short.as_str() {
                "error" => ShortPolicy::Error,
                "allow-empty" => ShortPolicy::AllowEmpty,
                other => {
                    return Err(DataError::BadConfig(format!(
                        "on_short must be `error` or `allow-empty`, got `{other}`"
                    )))
                }
            },
        })
    }

    pub fn model_config(&self, input_width: usize) -> Result<ModelConfig, DataError> {
        let cell = CellKind::from_str(&self.model.cell).map_err(DataError::BadConfig)?;
        let or_hidden = |v: usize| if v == 0 { self.model.hidden_size } else { v };
        let penalty = match self.model.alpha_penalty.as_str() {
            "l1-alpha" => PenaltyMode::AlphaL1,
            "abs-score" => PenaltyMode::ScoreAbs,
            other => {
                return Err(DataError::BadConfig(format!(
                    "alpha_penalty must be `l1-alpha` or `abs-score`, got `{other}`"
                )))
            }
        };
        Ok(ModelConfig {
            cell,
            input_width,
            hidden: self.model.hidden_size,
            fw_hidden: or_hidden(self.model.fw_hidden),
            att_hidden: or_hidden(self.model.att_hidden),
            out_hidden: or_hidden(self.model.out_hidden),
            days: crate::data::HIST_DAYS,
            day_len: crate::data::DAY_LEN,
            weighter_bias: self.model.weighter_bias,
            penalty,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.train.max_epochs,
            ec_max_epochs: (self.train.ec_max_epochs > 0).then_some(self.train.ec_max_epochs),
            batch_size: self.train.batch_size,
            lambda: self.train.lambda,
            patience: self.train.patience,
            schedule: LrSchedule {
                initial: self.train.initial_lr,
                decay: self.train.lr_decay,
                period: self.train.lr_period.max(1),
            },
            clip_norm: (self.train.clip_norm > 0.0).then_some(self.train.clip_norm),
            seed: self.seed,
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            batch_sizes: self.grid.batch_size.clone(),
            hidden_sizes: self.grid.hidden_size.clone(),
            lambdas: self.grid.lambda.clone(),
        }
    }

    pub fn holidays(&self) -> Result<HolidaySet, DataError> {
        let mut set = BTreeSet::new();
        if let Some(path) = &self.data.holiday_file {
            let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let date = chrono::NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|_| {
                    DataError::Parse {
                        line: i + 1,
                        msg: format!("bad holiday date `{line}`"),
                    }
                })?;
                set.insert(date);
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = FileConfig::default();
        let text = cfg.to_toml();
        let back: FileConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.train.batch_size, cfg.train.batch_size);
        assert_eq!(back.grid.hidden_size, cfg.grid.hidden_size);
    }

    #[test]
    fn partial_files_use_defaults() {
        let cfg: FileConfig = toml::from_str("seed = 7\n[train]\nbatch_size = 16\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.train.patience, 30);
        assert_eq!(cfg.model.hidden_size, 128);
    }

    #[test]
    fn schedule_defaults_follow_the_protocol() {
        let cfg = FileConfig::default();
        let t = cfg.train_config();
        assert_eq!(t.schedule.rate(0), 1e-3);
        assert!((t.schedule.rate(30) - 1e-4).abs() < 1e-19);
        assert_eq!(t.patience, 30);
    }

    #[test]
    fn bad_cell_is_a_config_error() {
        let mut cfg = FileConfig::default();
        cfg.model.cell = "transformer".into();
        assert!(cfg.model_config(10).is_err());
    }

    #[test]
    fn backwards_range_is_rejected() {
        let mut cfg = FileConfig::default();
        cfg.data.train_range = ["2020-02-01".into(), "2020-01-01".into()];
        assert!(cfg.split_spec().is_err());
    }
}
