//! Sliding-window construction over the embedded stream.

use crate::data::embed::Prepared;
use crate::error::DataError;

/// Historical steps per window (seven days of hourly data).
pub const HIST_LEN: usize = 168;
/// Forecast horizon per window.
pub const FUTURE_LEN: usize = 24;
/// Total rows per window.
pub const WINDOW_LEN: usize = HIST_LEN + FUTURE_LEN;
/// Points per day.
pub const DAY_LEN: usize = 24;
/// Historical days per window.
pub const HIST_DAYS: usize = 7;

/// What to do when a range is too short to hold a single window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShortPolicy {
    Error,
    AllowEmpty,
}

/// One training instance: the feature window, the historical targets and the
/// future targets, all borrowed from the prepared stream.
#[derive(Debug, Clone, Copy)]
pub struct WindowSample<'a> {
    /// Row-major `WINDOW_LEN x width` feature block.
    pub features: &'a [f64],
    /// Standardized targets over the historical steps.
    pub history: &'a [f64],
    /// Standardized targets over the future steps.
    pub future: &'a [f64],
    /// Row offset of the window start in the stream.
    pub start: usize,
}

impl Prepared {
    /// The window starting at the given row.
    pub fn window(&self, start: usize) -> WindowSample<'_> {
        let n = self.width();
        assert!(
            start + WINDOW_LEN <= self.rows(),
            "window at {start} exceeds {} rows",
            self.rows()
        );
        WindowSample {
            features: &self.features.data()[start * n..(start + WINDOW_LEN) * n],
            history: &self.target_std[start..start + HIST_LEN],
            future: &self.target_std[start + HIST_LEN..start + WINDOW_LEN],
            start,
        }
    }
}

/// Window start offsets inside `rows`, beginning at `rows.start` and
/// advancing by `stride`. The count is `floor((len - WINDOW_LEN)/stride) + 1`
/// for ranges long enough to hold one window.
pub fn window_starts(
    rows: std::ops::Range<usize>,
    stride: usize,
    policy: ShortPolicy,
) -> Result<Vec<usize>, DataError> {
    if stride == 0 {
        return Err(DataError::BadConfig("stride must be positive".into()));
    }
    let len = rows.end.saturating_sub(rows.start);
    if len < WINDOW_LEN {
        return match policy {
            ShortPolicy::Error => Err(DataError::TooShort {
                len,
                need: WINDOW_LEN,
            }),
            ShortPolicy::AllowEmpty => Ok(Vec::new()),
        };
    }
    Ok((rows.start..=rows.end - WINDOW_LEN).step_by(stride).collect())
}
