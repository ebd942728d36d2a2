//! Per-window return panels.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ingest::bars::{log_returns, MinuteBar};
use crate::ingest::calendar::WindowCalendar;
use crate::ingest::registry::Registry;

/// Aligned log returns of one window. Column `j` is asset `labels[j]`;
/// inactive columns hold NaN and are ignored downstream.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnPanel {
    pub window_id: usize,
    /// Unix seconds of the minute of the first row.
    pub start: i64,
    pub labels: Vec<String>,
    /// `T × n`, column-major.
    pub values: DMatrix<f64>,
    pub active: Vec<bool>,
    /// Unix seconds of each asset's first trade, when known.
    pub first_trade: Vec<Option<i64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExclusionReason {
    ZeroVariance,
    NonFinite,
}

/// An active column left out of the analysis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exclusion {
    pub label: String,
    pub reason: ExclusionReason,
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let why = match self.reason {
            ExclusionReason::ZeroVariance => "zero variance",
            ExclusionReason::NonFinite => "non-finite values",
        };
        write!(f, "{} ({why})", self.label)
    }
}

impl ReturnPanel {
    pub fn new(
        window_id: usize,
        start: i64,
        labels: Vec<String>,
        values: DMatrix<f64>,
        active: Vec<bool>,
        first_trade: Vec<Option<i64>>,
    ) -> Result<Self> {
        let n = labels.len();
        if values.ncols() != n || active.len() != n || first_trade.len() != n {
            return Err(Error::InvalidInput(format!(
                "panel shape mismatch: {} labels, {} columns, {} flags, {} first trades",
                n,
                values.ncols(),
                active.len(),
                first_trade.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::InvalidInput(format!("duplicate panel label `{dup}`")));
        }
        Ok(ReturnPanel {
            window_id,
            start,
            labels,
            values,
            active,
            first_trade,
        })
    }

    /// A panel in which every column is active.
    pub fn from_columns(
        window_id: usize,
        start: i64,
        labels: Vec<String>,
        columns: &[Vec<f64>],
    ) -> Result<Self> {
        let t = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != t) {
            return Err(Error::InvalidInput("panel columns differ in length".into()));
        }
        let values = DMatrix::from_fn(t, columns.len(), |i, j| columns[j][i]);
        let n = columns.len();
        Self::new(window_id, start, labels, values, vec![true; n], vec![None; n])
    }

    /// Number of rows (returns per column).
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.labels.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let t = self.len();
        &self.values.as_slice()[j * t..(j + 1) * t]
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Active columns fit for estimation, plus the active ones rejected as
    /// degenerate (constant or non-finite).
    pub fn usable_columns(&self) -> (Vec<usize>, Vec<Exclusion>) {
        let mut usable = Vec::new();
        let mut excluded = Vec::new();
        for j in 0..self.width() {
            if !self.active[j] {
                continue;
            }
            let col = self.column(j);
            let reason = if col.iter().any(|v| !v.is_finite()) {
                Some(ExclusionReason::NonFinite)
            } else if col.len() < 2 || col.iter().all(|&v| v == col[0]) {
                Some(ExclusionReason::ZeroVariance)
            } else {
                None
            };
            match reason {
                Some(reason) => excluded.push(Exclusion {
                    label: self.labels[j].clone(),
                    reason,
                }),
                None => usable.push(j),
            }
        }
        (usable, excluded)
    }
}

/// Continuous minute log returns of one asset.
#[derive(Clone, Debug, PartialEq)]
pub struct AssetReturns {
    pub ticker: String,
    /// Unix seconds of the first trade.
    pub first_trade: i64,
    /// Minute of the first price bar.
    pub first_bar_minute: i64,
    /// `returns[k]` is the return over minute `first_bar_minute + k + 1`.
    pub returns: Vec<f64>,
}

impl AssetReturns {
    pub fn from_bars(ticker: impl Into<String>, first_trade: i64, bars: &[MinuteBar]) -> Result<Self> {
        let ticker = ticker.into();
        let returns = log_returns(bars)
            .map_err(|e| Error::InvalidInput(format!("`{ticker}`: {e}")))?;
        Ok(AssetReturns {
            ticker,
            first_trade,
            first_bar_minute: bars[0].minute,
            returns,
        })
    }

    /// Minutes `[first, end)` over which returns exist.
    fn return_minutes(&self) -> std::ops::Range<i64> {
        let first = self.first_bar_minute + 1;
        first..first + self.returns.len() as i64
    }
}

#[derive(Clone, Debug, Default)]
pub struct SlicedWindows {
    pub panels: Vec<ReturnPanel>,
    /// Assets never active in any window.
    pub excluded: Vec<String>,
    pub diagnostics: Vec<String>,
}

/// Cuts continuous return series into one panel per calendar window.
///
/// An asset is active in a window when its first price bar is at or before
/// the window start and its returns cover the whole window. If an active
/// asset's first bar is exactly the window start (no earlier price), the
/// window's leading row is dropped for every column.
pub fn slice_windows(series: &[AssetReturns], cal: &WindowCalendar, meta: &Registry) -> SlicedWindows {
    let mut out = SlicedWindows::default();
    let mut order: Vec<&AssetReturns> = series.iter().collect();
    order.sort_by(|a, b| a.ticker.cmp(&b.ticker));

    let is_active = |s: &AssetReturns, w: usize| {
        let window = cal.window_minutes(w);
        let have = s.return_minutes();
        s.first_bar_minute <= window.start && have.end >= window.end
    };

    let kept: Vec<&AssetReturns> = order
        .into_iter()
        .filter(|s| {
            let any = (0..cal.window_count()).any(|w| is_active(s, w));
            if !any {
                out.diagnostics
                    .push(format!("{}: not active in any window, excluded", s.ticker));
                out.excluded.push(s.ticker.clone());
            }
            any
        })
        .collect();
    for s in &kept {
        if !meta.is_empty() && meta.get(&s.ticker).is_none() {
            out.diagnostics
                .push(format!("{}: missing from the asset registry", s.ticker));
        }
    }

    let labels: Vec<String> = kept.iter().map(|s| s.ticker.clone()).collect();
    let first_trade: Vec<Option<i64>> = kept.iter().map(|s| Some(s.first_trade)).collect();
    for w in 0..cal.window_count() {
        let window = cal.window_minutes(w);
        let active: Vec<bool> = kept.iter().map(|s| is_active(s, w)).collect();
        let row_start = kept
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(s, _)| s.return_minutes().start.max(window.start))
            .max()
            .unwrap_or(window.start);
        if row_start > window.start {
            out.diagnostics.push(format!(
                "window {w}: no price before the window start, leading return dropped"
            ));
        }
        let t = (window.end - row_start).max(0) as usize;
        let values = DMatrix::from_fn(t, kept.len(), |i, j| {
            if !active[j] {
                return f64::NAN;
            }
            let s = kept[j];
            let minute = row_start + i as i64;
            s.returns[(minute - s.return_minutes().start) as usize]
        });
        let panel = ReturnPanel::new(
            w,
            row_start * 60,
            labels.clone(),
            values,
            active,
            first_trade.clone(),
        )
        .expect("labels are unique tickers");
        out.panels.push(panel);
    }
    out
}

/// Traded value per window, `Σ volume × price` over assets and minutes.
pub fn window_traded_value(bars: &[&[MinuteBar]], cal: &WindowCalendar) -> Vec<f64> {
    let mut totals = vec![0.0; cal.window_count()];
    let first = cal.start() / 60;
    let end = cal.end().div_euclid(60) + 1;
    for series in bars {
        for b in series.iter() {
            if b.minute < first || b.minute >= end || b.volume == 0.0 {
                continue;
            }
            let w = (((b.minute - first) / crate::ingest::calendar::MINUTES_PER_WINDOW) as usize)
                .min(cal.window_count() - 1);
            totals[w] += b.volume * b.price;
        }
    }
    totals
}
