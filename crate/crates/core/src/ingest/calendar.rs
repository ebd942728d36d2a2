//! Weekly analysis windows, Monday 00:00:00 to Sunday 23:59:59 UTC.

use std::ops::Range;

use chrono::{DateTime, Datelike, NaiveDate, Utc, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_WINDOW: i64 = 7 * 24 * 60;

const SECONDS_PER_DAY: i64 = 86_400;

/// Contiguous, non-overlapping weekly windows. All windows are full weeks
/// except the last, which runs from its Monday to the calendar end.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowCalendar {
    /// Unix seconds of the first window's Monday 00:00:00.
    start: i64,
    window_count: usize,
    /// Unix seconds of the final covered instant (inclusive).
    end: i64,
}

impl WindowCalendar {
    pub fn new(start: i64, window_count: usize, end: i64) -> Result<Self> {
        if !is_monday_midnight(start) {
            return Err(Error::InvalidInput(format!(
                "calendar start {} is not a Monday 00:00:00 UTC",
                format_timestamp(start)
            )));
        }
        if window_count == 0 {
            return Err(Error::InvalidInput("calendar needs at least one window".into()));
        }
        let last_start = start + (window_count as i64 - 1) * MINUTES_PER_WINDOW * 60;
        if end < last_start {
            return Err(Error::InvalidInput(format!(
                "calendar end {} precedes the start of window {}",
                format_timestamp(end),
                window_count - 1
            )));
        }
        Ok(WindowCalendar {
            start,
            window_count,
            end,
        })
    }

    /// Calendar from a Monday date and a window count, ending at `end`.
    pub fn from_date(start: NaiveDate, window_count: usize, end: i64) -> Result<Self> {
        let ts = start
            .and_hms_opt(0, 0, 0)
            .expect("midnight is valid")
            .and_utc()
            .timestamp();
        Self::new(ts, window_count, end)
    }

    /// Calendar covering data whose first price bar is at `first_minute` and
    /// whose last bar is at `last_minute` (inclusive minute indices).
    ///
    /// Windows start at the first Monday strictly after the first bar, so
    /// every window's leading return has a preceding price. The trailing
    /// partial week becomes a short last window.
    pub fn covering(first_minute: i64, last_minute: i64) -> Result<Self> {
        let start_minute = next_monday_after(first_minute);
        if start_minute > last_minute {
            return Err(Error::InvalidInput(
                "data do not reach a Monday after the first bar".into(),
            ));
        }
        let span = last_minute + 1 - start_minute;
        let window_count = ((span + MINUTES_PER_WINDOW - 1) / MINUTES_PER_WINDOW) as usize;
        Self::new(start_minute * 60, window_count, last_minute * 60 + 59)
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.end
    }

    pub fn window_count(&self) -> usize {
        self.window_count
    }

    pub fn minutes_per_window(&self) -> i64 {
        MINUTES_PER_WINDOW
    }

    /// Minute indices covered by window `w`, half-open.
    pub fn window_minutes(&self, w: usize) -> Range<i64> {
        assert!(w < self.window_count, "window {w} out of range");
        let first = self.start / 60 + w as i64 * MINUTES_PER_WINDOW;
        let last = if w + 1 == self.window_count {
            self.end.div_euclid(60) + 1
        } else {
            first + MINUTES_PER_WINDOW
        };
        first..last
    }

    pub fn window_start(&self, w: usize) -> i64 {
        self.window_minutes(w).start * 60
    }

    pub fn window_len(&self, w: usize) -> usize {
        let r = self.window_minutes(w);
        (r.end - r.start) as usize
    }

    pub fn total_minutes(&self) -> i64 {
        self.end.div_euclid(60) + 1 - self.start / 60
    }

    pub fn windows(&self) -> impl Iterator<Item = Range<i64>> + '_ {
        (0..self.window_count).map(|w| self.window_minutes(w))
    }
}

pub fn is_monday_midnight(ts: i64) -> bool {
    ts.rem_euclid(SECONDS_PER_DAY) == 0
        && DateTime::<Utc>::from_timestamp(ts, 0).is_some_and(|d| d.weekday() == Weekday::Mon)
}

/// First Monday 00:00 minute strictly after `minute`.
fn next_monday_after(minute: i64) -> i64 {
    let day = minute.div_euclid(24 * 60);
    // 1970-01-01 was a Thursday, so day 4 is a Monday.
    let days_since_monday = (day - 4).rem_euclid(7);
    let monday = (day - days_since_monday) * 24 * 60;
    monday + MINUTES_PER_WINDOW
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|d| d.format("%Y-%m-%d %H:%M:%S").to_string())
        .unwrap_or_else(|| ts.to_string())
}

pub fn format_date(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|d| d.format("%Y-%m-%d").to_string())
        .unwrap_or_else(|| ts.to_string())
}
