//! Feature embedding and standardization.

use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};

use crate::data::schema::{FeatureKind, FeatureSchema, FeatureSource};
use crate::data::series::RawSeries;
use crate::error::DataError;
use crate::Tensor;

/// Dates treated as holidays by the `HolidayFlag` source.
pub type HolidaySet = BTreeSet<NaiveDate>;

/// Per-column standardization statistics, aligned to the embedded width.
/// Columns that are not standardized carry the identity pair (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct StandardStats {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl StandardStats {
    pub fn destandardize_target(&self, v: f64) -> f64 {
        v * self.target_std + self.target_mean
    }

    pub fn standardize_target(&self, v: f64) -> f64 {
        (v - self.target_mean) / self.target_std
    }
}

/// The embedded, standardized stream plus everything needed to slice
/// windows out of it and undo the target scaling.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: FeatureSchema,
    /// Row-major `rows x width` matrix of embedded features.
    pub features: Tensor,
    /// Standardized target per row.
    pub target_std: Vec<f64>,
    pub timestamps: Vec<NaiveDateTime>,
    pub stats: StandardStats,
}

impl Prepared {
    pub fn rows(&self) -> usize {
        self.target_std.len()
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    pub fn feature_row(&self, row: usize) -> &[f64] {
        let n = self.width();
        &self.features.data()[row * n..(row + 1) * n]
    }

    /// Target value in original units.
    pub fn target_mw(&self, row: usize) -> f64 {
        self.stats.destandardize_target(self.target_std[row])
    }

    /// Half-open row range covered by `[start, end)` timestamps.
    pub fn range_rows(&self, start: NaiveDateTime, end: NaiveDateTime) -> std::ops::Range<usize> {
        let lo = self.timestamps.partition_point(|&t| t < start);
        let hi = self.timestamps.partition_point(|&t| t < end);
        lo..hi
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    let mean = sum / n as f64;
    let mut sq = 0.0;
    for v in values {
        let d = v - mean;
        sq += d * d;
    }
    (mean, (sq / n as f64).sqrt())
}

/// Computes standardization statistics from the given rows only (the
/// forecaster-training range), leaving identity entries for columns that
/// embed unstandardized.
pub fn compute_stats(
    series: &RawSeries,
    schema: &FeatureSchema,
    rows: std::ops::Range<usize>,
) -> Result<StandardStats, DataError> {
    if rows.is_empty() || rows.end > series.len() {
        return Err(DataError::BadConfig(format!(
            "statistics range {rows:?} is empty or out of bounds (series has {} rows)",
            series.len()
        )));
    }

    let width = schema.width();
    let mut feature_mean = vec![0.0; width];
    let mut feature_std = vec![1.0; width];

    let mut offset = 0usize;
    for def in &schema.defs {
        if let FeatureKind::Numeric { standardize: true } = def.kind {
            let col = match &def.source {
                FeatureSource::Column(c) => {
                    series
                        .numeric_by_name(c)
                        .ok_or_else(|| DataError::MissingColumn {
                            name: c.clone(),
                            path: "series".into(),
                        })?
                }
                other => {
                    return Err(DataError::BadConfig(format!(
                        "feature `{}` is standardized but has non-column source {other:?}",
                        def.name
                    )))
                }
            };
            let vals = col[rows.clone()]
                .iter()
                .map(|v| v.ok_or_else(|| DataError::LeadingGap { name: def.name.clone() }))
                .collect::<Result<Vec<f64>, _>>()?;
            let (m, s) = mean_std(vals.iter().cloned());
            if s == 0.0 {
                return Err(DataError::ConstantColumn {
                    name: def.name.clone(),
                });
            }
            feature_mean[offset] = m;
            feature_std[offset] = s;
        }
        offset += def.width();
    }

    let target_vals = series.target[rows]
        .iter()
        .map(|v| v.ok_or_else(|| DataError::LeadingGap { name: "load_mw".into() }))
        .collect::<Result<Vec<f64>, _>>()?;
    let (tm, ts) = mean_std(target_vals.iter().cloned());
    if ts == 0.0 {
        return Err(DataError::ConstantColumn {
            name: "load_mw".into(),
        });
    }

    Ok(StandardStats {
        feature_mean,
        feature_std,
        target_mean: tm,
        target_std: ts,
    })
}

fn season_of(month: u32) -> usize {
    match month {
        12 | 1 | 2 => 0,
        3..=5 => 1,
        6..=8 => 2,
        _ => 3,
    }
}

/// Embeds the repaired series with training-range statistics applied
/// everywhere. One-hot blocks get exactly one 1 per row.
pub fn embed_features(
    series: &RawSeries,
    schema: &FeatureSchema,
    stats: &StandardStats,
    holidays: &HolidaySet,
) -> Result<Prepared, DataError> {
    let width = schema.width();
    let rows = series.len();
    if stats.feature_mean.len() != width || stats.feature_std.len() != width {
        return Err(DataError::BadConfig(format!(
            "statistics width {} does not match schema width {width}",
            stats.feature_mean.len()
        )));
    }

    let mut data = vec![0.0f64; rows * width];
    let mut target_std = Vec::with_capacity(rows);

    for row in 0..rows {
        let ts = series.timestamps[row];
        let out = &mut data[row * width..(row + 1) * width];
        let mut offset = 0usize;
        for def in &schema.defs {
            match (&def.kind, &def.source) {
                (FeatureKind::Numeric { standardize }, src) => {
                    let raw = match src {
                        FeatureSource::Column(c) => series
                            .numeric_by_name(c)
                            .and_then(|col| col[row])
                            .ok_or_else(|| DataError::Parse {
                                line: row + 1,
                                msg: format!("missing value in column `{c}` after repair"),
                            })?,
                        FeatureSource::WeekdayFlag => {
                            let wd = ts.weekday().num_days_from_monday();
                            if wd < 5 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        FeatureSource::HolidayFlag => {
                            if holidays.contains(&ts.date()) {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        other => {
                            return Err(DataError::BadConfig(format!(
                                "numeric feature `{}` has unsupported source {other:?}",
                                def.name
                            )))
                        }
                    };
                    out[offset] = if *standardize {
                        (raw - stats.feature_mean[offset]) / stats.feature_std[offset]
                    } else {
                        raw
                    };
                }
                (FeatureKind::OneHot(card), src) => {
                    let code = match src {
                        FeatureSource::Hour => ts.hour() as usize,
                        FeatureSource::DayOfWeek => ts.weekday().num_days_from_monday() as usize,
                        FeatureSource::MonthOfYear => ts.month0() as usize,
                        FeatureSource::Season => season_of(ts.month()),
                        FeatureSource::CatColumn(c) => {
                            let v = series
                                .categorical_by_name(c)
                                .and_then(|col| col[row])
                                .ok_or_else(|| DataError::Parse {
                                    line: row + 1,
                                    msg: format!("missing value in column `{c}` after repair"),
                                })?;
                            if v < 0 {
                                return Err(DataError::Parse {
                                    line: row + 1,
                                    msg: format!("negative category `{v}` in `{c}`"),
                                });
                            }
                            v as usize
                        }
                        other => {
                            return Err(DataError::BadConfig(format!(
                                "one-hot feature `{}` has unsupported source {other:?}",
                                def.name
                            )))
                        }
                    };
                    if code >= *card {
                        return Err(DataError::Parse {
                            line: row + 1,
                            msg: format!(
                                "category {code} out of range for `{}` (cardinality {card})",
                                def.name
                            ),
                        });
                    }
                    out[offset + code] = 1.0;
                }
            }
            offset += def.width();
        }

        let load = series.target[row].ok_or_else(|| DataError::Parse {
            line: row + 1,
            msg: "missing load after repair".into(),
        })?;
        target_std.push(stats.standardize_target(load));
    }

    Ok(Prepared {
        schema: schema.clone(),
        features: Tensor::from_vec(&[rows, width], data),
        target_std,
        timestamps: series.timestamps.clone(),
        stats: stats.clone(),
    })
}
