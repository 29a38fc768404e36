//! Raw CSV ingestion and gap repair.

use std::path::Path;

use chrono::{Duration, NaiveDateTime};

use crate::data::schema::FeatureSchema;
use crate::error::DataError;

/// Parsed hourly records before embedding. Values are `None` where the file
/// had a gap; [`interpolate_missing`] removes every `None`.
#[derive(Debug, Clone)]
pub struct RawSeries {
    pub timestamps: Vec<NaiveDateTime>,
    /// Target load in MW.
    pub target: Vec<Option<f64>>,
    /// Named numeric feature columns.
    pub numeric: Vec<(String, Vec<Option<f64>>)>,
    /// Named integer-coded categorical columns.
    pub categorical: Vec<(String, Vec<Option<i64>>)>,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn numeric_by_name(&self, name: &str) -> Option<&[Option<f64>]> {
        self.numeric
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn categorical_by_name(&self, name: &str) -> Option<&[Option<i64>]> {
        self.categorical
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

const TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
];

/// Parses a timestamp in any of the accepted ISO-8601 layouts; a bare date
/// means midnight.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    for fmt in TIMESTAMP_FORMATS {
        if let Ok(ts) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(ts);
        }
    }
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

fn parse_opt_f64(raw: &str, line: usize, col: &str) -> Result<Option<f64>, DataError> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("null") {
        return Ok(None);
    }
    t.parse::<f64>().map(Some).map_err(|_| DataError::Parse {
        line,
        msg: format!("column `{col}`: unparseable value `{t}`"),
    })
}

fn parse_opt_i64(raw: &str, line: usize, col: &str) -> Result<Option<i64>, DataError> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("null") {
        return Ok(None);
    }
    t.parse::<i64>().map(Some).map_err(|_| DataError::Parse {
        line,
        msg: format!("column `{col}`: unparseable integer `{t}`"),
    })
}

/// Loads the raw series for a schema: `timestamp`, `load_mw` and every
/// schema-declared column must be present in the header. Rows are sorted by
/// timestamp; duplicates are rejected.
pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<RawSeries, DataError> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Parse {
            line: 0,
            msg: format!("{display}: {e}"),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| DataError::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn {
                name: name.to_string(),
                path: display.clone(),
            })
    };

    let ts_idx = col("timestamp")?;
    let load_idx = col("load_mw")?;
    let numeric_cols: Vec<(String, usize)> = schema
        .csv_numeric_columns()
        .into_iter()
        .map(|c| Ok((c.to_string(), col(c)?)))
        .collect::<Result<_, DataError>>()?;
    let cat_cols: Vec<(String, usize)> = schema
        .csv_categorical_columns()
        .into_iter()
        .map(|c| Ok((c.to_string(), col(c)?)))
        .collect::<Result<_, DataError>>()?;

    struct Row {
        ts: NaiveDateTime,
        load: Option<f64>,
        numeric: Vec<Option<f64>>,
        categorical: Vec<Option<i64>>,
    }

    let mut rows: Vec<Row> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record.map_err(|e| DataError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let raw_ts = record.get(ts_idx).unwrap_or("");
        let ts = parse_timestamp(raw_ts).ok_or_else(|| DataError::Parse {
            line,
            msg: format!("bad timestamp `{raw_ts}`"),
        })?;
        let load = parse_opt_f64(record.get(load_idx).unwrap_or(""), line, "load_mw")?;
        let mut numeric = Vec::with_capacity(numeric_cols.len());
        for (name, idx) in &numeric_cols {
            numeric.push(parse_opt_f64(record.get(*idx).unwrap_or(""), line, name)?);
        }
        let mut categorical = Vec::with_capacity(cat_cols.len());
        for (name, idx) in &cat_cols {
            categorical.push(parse_opt_i64(record.get(*idx).unwrap_or(""), line, name)?);
        }
        rows.push(Row {
            ts,
            load,
            numeric,
            categorical,
        });
    }

    rows.sort_by_key(|r| r.ts);
    for pair in rows.windows(2) {
        if pair[0].ts == pair[1].ts {
            return Err(DataError::DuplicateTimestamp {
                ts: pair[0].ts.to_string(),
            });
        }
    }

    let mut series = RawSeries {
        timestamps: rows.iter().map(|r| r.ts).collect(),
        target: rows.iter().map(|r| r.load).collect(),
        numeric: numeric_cols
            .iter()
            .enumerate()
            .map(|(k, (name, _))| (name.clone(), rows.iter().map(|r| r.numeric[k]).collect()))
            .collect(),
        categorical: cat_cols
            .iter()
            .enumerate()
            .map(|(k, (name, _))| (name.clone(), rows.iter().map(|r| r.categorical[k]).collect()))
            .collect(),
    };
    // Drop duplicate allocation of row storage early.
    rows.clear();
    series.timestamps.shrink_to_fit();
    Ok(series)
}

/// Repairs the series onto a strict hourly grid.
///
/// Missing rows are inserted, then every interior gap in a numeric column
/// (including the target) is filled linearly in time; categorical gaps take
/// the nearest previous value. Leading or trailing gaps are errors.
pub fn interpolate_missing(series: &RawSeries) -> Result<RawSeries, DataError> {
    if series.is_empty() {
        return Err(DataError::TooShort { len: 0, need: 1 });
    }
    let first = series.timestamps[0];
    let last = *series.timestamps.last().unwrap();
    for &ts in &series.timestamps {
        let secs = (ts - first).num_seconds();
        if secs % 3600 != 0 {
            return Err(DataError::Parse {
                line: 0,
                msg: format!("timestamp {ts} is not on the hourly grid starting {first}"),
            });
        }
    }

    let total = ((last - first).num_seconds() / 3600) as usize + 1;
    let mut timestamps = Vec::with_capacity(total);
    let mut target: Vec<Option<f64>> = vec![None; total];
    let mut numeric: Vec<(String, Vec<Option<f64>>)> = series
        .numeric
        .iter()
        .map(|(n, _)| (n.clone(), vec![None; total]))
        .collect();
    let mut categorical: Vec<(String, Vec<Option<i64>>)> = series
        .categorical
        .iter()
        .map(|(n, _)| (n.clone(), vec![None; total]))
        .collect();
    for i in 0..total {
        timestamps.push(first + Duration::hours(i as i64));
    }
    for (row, &ts) in series.timestamps.iter().enumerate() {
        let slot = ((ts - first).num_seconds() / 3600) as usize;
        target[slot] = series.target[row];
        for (k, (_, vals)) in series.numeric.iter().enumerate() {
            numeric[k].1[slot] = vals[row];
        }
        for (k, (_, vals)) in series.categorical.iter().enumerate() {
            categorical[k].1[slot] = vals[row];
        }
    }

    fill_linear(&mut target, "load_mw")?;
    for (name, vals) in numeric.iter_mut() {
        fill_linear(vals, name)?;
    }
    for (name, vals) in categorical.iter_mut() {
        fill_previous(vals, name)?;
    }

    Ok(RawSeries {
        timestamps,
        target,
        numeric,
        categorical,
    })
}

fn fill_linear(vals: &mut [Option<f64>], name: &str) -> Result<(), DataError> {
    if vals.first().map_or(true, Option::is_none) {
        return Err(DataError::LeadingGap { name: name.into() });
    }
    if vals.last().map_or(true, Option::is_none) {
        return Err(DataError::TrailingGap { name: name.into() });
    }
    let mut i = 0;
    while i < vals.len() {
        if vals[i].is_some() {
            i += 1;
            continue;
        }
        let lo = i - 1;
        let mut hi = i;
        while vals[hi].is_none() {
            hi += 1;
        }
        let a = vals[lo].unwrap();
        let b = vals[hi].unwrap();
        let span = (hi - lo) as f64;
        for j in (lo + 1)..hi {
            let t = (j - lo) as f64 / span;
            vals[j] = Some(a + (b - a) * t);
        }
        i = hi + 1;
    }
    Ok(())
}

fn fill_previous(vals: &mut [Option<i64>], name: &str) -> Result<(), DataError> {
    if vals.first().map_or(true, Option::is_none) {
        return Err(DataError::LeadingGap { name: name.into() });
    }
    for i in 1..vals.len() {
        if vals[i].is_none() {
            vals[i] = vals[i - 1];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    fn simple_series(values: &[Option<f64>]) -> RawSeries {
        let start = ts("2020-01-01T00:00:00");
        RawSeries {
            timestamps: (0..values.len())
                .map(|i| start + Duration::hours(i as i64))
                .collect(),
            target: values.to_vec(),
            numeric: vec![],
            categorical: vec![],
        }
    }

    #[test]
    fn midpoint_interpolation() {
        let s = simple_series(&[Some(10.0), None, Some(30.0)]);
        let fixed = interpolate_missing(&s).unwrap();
        assert_eq!(fixed.target, vec![Some(10.0), Some(20.0), Some(30.0)]);
    }

    #[test]
    fn multi_gap_follows_the_line() {
        let s = simple_series(&[Some(0.0), None, None, Some(9.0)]);
        let fixed = interpolate_missing(&s).unwrap();
        assert_eq!(
            fixed.target,
            vec![Some(0.0), Some(3.0), Some(6.0), Some(9.0)]
        );
    }

    #[test]
    fn gapless_series_is_unchanged() {
        let s = simple_series(&[Some(1.0), Some(2.0), Some(3.0)]);
        let fixed = interpolate_missing(&s).unwrap();
        assert_eq!(fixed.target, s.target);
        assert_eq!(fixed.timestamps, s.timestamps);
    }

    #[test]
    fn leading_and_trailing_gaps_are_errors() {
        let s = simple_series(&[None, Some(2.0)]);
        assert!(matches!(
            interpolate_missing(&s),
            Err(DataError::LeadingGap { .. })
        ));
        let s = simple_series(&[Some(2.0), None]);
        assert!(matches!(
            interpolate_missing(&s),
            Err(DataError::TrailingGap { .. })
        ));
    }

    #[test]
    fn missing_rows_are_inserted_and_filled() {
        let start = ts("2020-01-01T00:00:00");
        let s = RawSeries {
            timestamps: vec![start, start + Duration::hours(2)],
            target: vec![Some(10.0), Some(30.0)],
            numeric: vec![],
            categorical: vec![],
        };
        let fixed = interpolate_missing(&s).unwrap();
        assert_eq!(fixed.len(), 3);
        assert_eq!(fixed.target[1], Some(20.0));
    }

    #[test]
    fn categorical_gaps_take_previous_value() {
        let start = ts("2020-01-01T00:00:00");
        let s = RawSeries {
            timestamps: (0..3).map(|i| start + Duration::hours(i)).collect(),
            target: vec![Some(1.0), Some(1.0), Some(1.0)],
            numeric: vec![],
            categorical: vec![("mode".into(), vec![Some(2), None, Some(4)])],
        };
        let fixed = interpolate_missing(&s).unwrap();
        assert_eq!(fixed.categorical[0].1, vec![Some(2), Some(2), Some(4)]);
    }

    mod csv_loading {
        use super::*;
        use std::io::Write;

        fn write_csv(content: &str) -> tempfile::NamedTempFile {
            let mut f = tempfile::NamedTempFile::new().unwrap();
            f.write_all(content.as_bytes()).unwrap();
            f
        }

        #[test]
        fn well_formed_rows_load_in_order() {
            let f = write_csv(
                "timestamp,load_mw,temperature,noise\n\
                 2020-01-01T00:00:00,100.0,5.0,0.1\n\
                 2020-01-01T01:00:00,110.0,6.0,0.2\n\
                 2020-01-01T02:00:00,120.0,7.0,0.3\n",
            );
            let s = load_csv(f.path(), &FeatureSchema::synth()).unwrap();
            assert_eq!(s.len(), 3);
            assert_eq!(s.target[2], Some(120.0));
            assert_eq!(s.numeric_by_name("temperature").unwrap()[1], Some(6.0));
        }

        #[test]
        fn out_of_order_rows_are_sorted() {
            let f = write_csv(
                "timestamp,load_mw,temperature,noise\n\
                 2020-01-01T02:00:00,120.0,7.0,0.3\n\
                 2020-01-01T00:00:00,100.0,5.0,0.1\n\
                 2020-01-01T01:00:00,110.0,6.0,0.2\n",
            );
            let s = load_csv(f.path(), &FeatureSchema::synth()).unwrap();
            assert_eq!(s.target, vec![Some(100.0), Some(110.0), Some(120.0)]);
        }

        #[test]
        fn unknown_header_is_named_in_the_error() {
            let f = write_csv("timestamp,load_mw,temperature\n2020-01-01T00:00,1.0,2.0\n");
            let err = load_csv(f.path(), &FeatureSchema::synth()).unwrap_err();
            match err {
                DataError::MissingColumn { name, .. } => assert_eq!(name, "noise"),
                other => panic!("unexpected error {other}"),
            }
        }

        #[test]
        fn duplicate_timestamps_are_rejected() {
            let f = write_csv(
                "timestamp,load_mw,temperature,noise\n\
                 2020-01-01T00:00:00,100.0,5.0,0.1\n\
                 2020-01-01T00:00:00,101.0,5.0,0.1\n",
            );
            assert!(matches!(
                load_csv(f.path(), &FeatureSchema::synth()),
                Err(DataError::DuplicateTimestamp { .. })
            ));
        }

        #[test]
        fn garbage_values_name_the_line() {
            let f = write_csv(
                "timestamp,load_mw,temperature,noise\n\
                 2020-01-01T00:00:00,abc,5.0,0.1\n",
            );
            match load_csv(f.path(), &FeatureSchema::synth()).unwrap_err() {
                DataError::Parse { line, .. } => assert_eq!(line, 2),
                other => panic!("unexpected error {other}"),
            }
        }
    }
}
