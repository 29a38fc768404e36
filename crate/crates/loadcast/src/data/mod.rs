//! Data pipeline: CSV ingestion, gap repair, feature embedding,
//! standardization, sliding windows and dataset splits.

pub mod embed;
pub mod schema;
pub mod series;
pub mod split;
pub mod window;

pub use embed::{compute_stats, embed_features, HolidaySet, Prepared, StandardStats};
pub use schema::{FeatureDef, FeatureKind, FeatureSchema, FeatureSource};
pub use series::{interpolate_missing, load_csv, parse_timestamp, RawSeries};
pub use split::{make_splits, DatasetSplit, RangeSpec, SplitSpec};
pub use window::{
    window_starts, ShortPolicy, WindowSample, DAY_LEN, FUTURE_LEN, HIST_DAYS, HIST_LEN, WINDOW_LEN,
};
