//! Train / error-correction / validation / test window splits.

use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::embed::Prepared;
use crate::data::window::{window_starts, ShortPolicy, DAY_LEN};
use crate::error::DataError;

/// Half-open timestamp range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangeSpec {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

impl RangeSpec {
    fn overlaps(&self, other: &RangeSpec) -> bool {
        self.start < other.end && other.start < self.end
    }

    fn label(&self) -> String {
        format!("{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone)]
pub struct SplitSpec {
    /// Forecaster training years.
    pub train: RangeSpec,
    /// Error-correction year, partitioned 80/20 into EC-train and validation.
    pub ec: RangeSpec,
    /// Test year.
    pub test: RangeSpec,
    pub seed: u64,
    pub short: ShortPolicy,
}

/// Window start offsets per role. Forecaster training slides by one hour;
/// the error-correction pool and the test set slide by one day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub ec_train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Builds the split deterministically from the seed. The EC year's stride-24
/// windows are shuffled once and partitioned 80/20 into disjoint EC-train
/// and validation sets.
pub fn make_splits(prepared: &Prepared, spec: &SplitSpec) -> Result<DatasetSplit, DataError> {
    let ranges = [&spec.train, &spec.ec, &spec.test];
    for i in 0..ranges.len() {
        for j in i + 1..ranges.len() {
            if ranges[i].overlaps(ranges[j]) {
                return Err(DataError::RangeOverlap {
                    a: ranges[i].label(),
                    b: ranges[j].label(),
                });
            }
        }
    }

    let train_rows = prepared.range_rows(spec.train.start, spec.train.end);
    let ec_rows = prepared.range_rows(spec.ec.start, spec.ec.end);
    let test_rows = prepared.range_rows(spec.test.start, spec.test.end);

    let train = window_starts(train_rows, 1, spec.short)?;
    let pool = window_starts(ec_rows, DAY_LEN, spec.short)?;
    let test = window_starts(test_rows, DAY_LEN, spec.short)?;

    let mut shuffled = pool.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    shuffled.shuffle(&mut rng);
    let n_train = ((shuffled.len() as f64) * 0.8).round() as usize;
    let mut ec_train: Vec<usize> = shuffled[..n_train].to_vec();
    let mut validation: Vec<usize> = shuffled[n_train..].to_vec();
    ec_train.sort_unstable();
    validation.sort_unstable();

    Ok(DatasetSplit {
        train,
        ec_train,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::embed::{compute_stats, embed_features, HolidaySet};
    use crate::data::schema::FeatureSchema;
    use crate::data::series::{parse_timestamp, RawSeries};
    use chrono::Duration;

    fn prepared_hours(hours: usize) -> Prepared {
        let start = parse_timestamp("2020-01-01T00:00:00").unwrap();
        let series = RawSeries {
            timestamps: (0..hours).map(|i| start + Duration::hours(i as i64)).collect(),
            target: (0..hours).map(|i| Some(50.0 + (i as f64).sin())).collect(),
            numeric: vec![
                ("temperature".into(), (0..hours).map(|i| Some((i as f64 * 0.1).cos())).collect()),
                ("noise".into(), (0..hours).map(|i| Some((i as f64 * 0.7).sin())).collect()),
            ],
            categorical: vec![],
        };
        let schema = FeatureSchema::synth();
        let stats = compute_stats(&series, &schema, 0..hours / 2).unwrap();
        embed_features(&series, &schema, &stats, &HolidaySet::new()).unwrap()
    }

    fn spec(seed: u64) -> SplitSpec {
        let t = |s: &str| parse_timestamp(s).unwrap();
        SplitSpec {
            train: RangeSpec { start: t("2020-01-01T00:00"), end: t("2020-02-01T00:00") },
            ec: RangeSpec { start: t("2020-02-01T00:00"), end: t("2020-03-01T00:00") },
            test: RangeSpec { start: t("2020-03-01T00:00"), end: t("2020-03-20T00:00") },
            seed,
            short: ShortPolicy::Error,
        }
    }

    #[test]
    fn partition_is_disjoint_and_80_20() {
        let prep = prepared_hours(24 * 80);
        let split = make_splits(&prep, &spec(7)).unwrap();
        // February has 29 days in 2020: floor((696-192)/24)+1 = 22 windows.
        let pool = split.ec_train.len() + split.validation.len();
        assert_eq!(pool, 22);
        assert_eq!(split.ec_train.len(), 18); // round(0.8 * 22)
        for s in &split.ec_train {
            assert!(!split.validation.contains(s));
        }
    }

    #[test]
    fn same_seed_same_split() {
        let prep = prepared_hours(24 * 80);
        let a = make_splits(&prep, &spec(42)).unwrap();
        let b = make_splits(&prep, &spec(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn most_seeds_differ() {
        // Enumeration over 100 seeds: the vast majority of partitions must
        // be distinct from seed 0's.
        let prep = prepared_hours(24 * 80);
        let base = make_splits(&prep, &spec(0)).unwrap();
        let mut distinct = 0;
        for seed in 1..=100 {
            if make_splits(&prep, &spec(seed)).unwrap().ec_train != base.ec_train {
                distinct += 1;
            }
        }
        assert!(distinct >= 95, "only {distinct} distinct partitions");
    }

    #[test]
    fn overlapping_ranges_are_rejected() {
        let prep = prepared_hours(24 * 80);
        let mut s = spec(1);
        s.ec.start = s.train.start;
        assert!(matches!(
            make_splits(&prep, &s),
            Err(DataError::RangeOverlap { .. })
        ));
    }

    #[test]
    fn train_windows_never_touch_the_test_range() {
        let prep = prepared_hours(24 * 80);
        let split = make_splits(&prep, &spec(3)).unwrap();
        let test_lo = *split.test.first().unwrap();
        for &s in &split.train {
            assert!(s + crate::data::window::WINDOW_LEN <= test_lo);
        }
    }

    #[test]
    fn adjacent_stride1_windows_share_all_but_one_row() {
        let prep = prepared_hours(24 * 80);
        let split = make_splits(&prep, &spec(3)).unwrap();
        let n = prep.width();
        let a = prep.window(split.train[0]);
        let b = prep.window(split.train[1]);
        // Window b's first 191 rows equal window a's rows 1..192.
        assert_eq!(
            &a.features[n..],
            &b.features[..(crate::data::window::WINDOW_LEN - 1) * n]
        );
    }
}
