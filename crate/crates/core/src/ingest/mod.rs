//! From raw trade tapes to weekly return panels.

pub mod bars;
pub mod calendar;
pub mod panel;
pub mod registry;
pub mod trades;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use bars::{aggregate_minutes, log_returns, minute_of, Aggregated, MinuteBar, MinuteSpan};
pub use calendar::{WindowCalendar, MINUTES_PER_WINDOW};
pub use panel::{
    slice_windows, window_traded_value, AssetReturns, Exclusion, ExclusionReason, ReturnPanel,
    SlicedWindows,
};
pub use registry::{AssetClass, AssetMeta, Registry};
pub use trades::{parse_trades, read_trades, LineDiagnostic, ParsedTrades, TradeRecord};

use crate::error::{Error, Result};

/// Everything derived from one market's trade files.
#[derive(Clone, Debug)]
pub struct MarketData {
    pub calendar: WindowCalendar,
    pub panels: Vec<ReturnPanel>,
    /// `Σ volume × price` per window.
    pub traded_value: Vec<f64>,
    pub diagnostics: Vec<String>,
}

/// Trade files `<TICKER><quote>.csv` in `dir`, sorted by ticker.
pub fn market_files(dir: &Path, quote: &str) -> Result<Vec<(String, PathBuf)>> {
    let suffix = format!("{quote}.csv");
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(ticker) = name.strip_suffix(&suffix) {
            if !ticker.is_empty() && path.is_file() {
                out.push((ticker.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Parses, aggregates and slices every trade file of one quote currency.
///
/// With no explicit calendar the windows are derived from the data with
/// [`WindowCalendar::covering`].
pub fn load_market(
    dir: &Path,
    quote: &str,
    registry: &Registry,
    calendar: Option<WindowCalendar>,
) -> Result<MarketData> {
    let files = market_files(dir, quote)?;
    if files.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no `*{quote}.csv` trade files in {}",
            dir.display()
        )));
    }
    let parsed: Vec<(String, ParsedTrades)> = files
        .par_iter()
        .map(|(ticker, path)| Ok((ticker.clone(), read_trades(path)?)))
        .collect::<Result<_>>()?;

    let mut diagnostics = Vec::new();
    for (ticker, p) in &parsed {
        for d in &p.rejected {
            diagnostics.push(format!("{ticker}{quote}.csv line {}: {}", d.line, d.reason));
        }
        if p.resorted {
            diagnostics.push(format!("{ticker}{quote}.csv: records were not in timestamp order"));
        }
    }
    let parsed: Vec<(String, ParsedTrades)> = parsed
        .into_iter()
        .filter(|(ticker, p)| {
            if p.trades.is_empty() {
                diagnostics.push(format!("{ticker}{quote}.csv: no valid trades"));
            }
            !p.trades.is_empty()
        })
        .collect();
    let last_minute = parsed
        .iter()
        .filter_map(|(_, p)| p.trades.last().map(|t| minute_of(t.timestamp)))
        .max()
        .ok_or_else(|| Error::InvalidInput("no valid trades in any file".into()))?;
    let last_minute = match calendar {
        Some(cal) => cal.end().div_euclid(60),
        None => last_minute,
    };

    let aggregated: Vec<(String, i64, Aggregated)> = parsed
        .par_iter()
        .map(|(ticker, p)| {
            let first = minute_of(p.trades[0].timestamp);
            let agg = aggregate_minutes(&p.trades, MinuteSpan::new(first, last_minute));
            (ticker.clone(), p.trades[0].timestamp, agg)
        })
        .collect();
    for (ticker, _, agg) in &aggregated {
        for m in &agg.zero_volume_minutes {
            diagnostics.push(format!("{ticker}: minute {m} traded with zero volume"));
        }
    }

    let calendar = match calendar {
        Some(c) => c,
        None => {
            let first_bar = aggregated
                .iter()
                .filter_map(|(_, _, a)| a.bars.first().map(|b| b.minute))
                .min()
                .ok_or_else(|| Error::InvalidInput("no price bars".into()))?;
            WindowCalendar::covering(first_bar, last_minute)?
        }
    };

    let mut series = Vec::new();
    for (ticker, first_trade, agg) in &aggregated {
        if agg.bars.len() < 2 {
            diagnostics.push(format!("{ticker}: fewer than two price bars, skipped"));
            continue;
        }
        series.push(AssetReturns::from_bars(ticker.clone(), *first_trade, &agg.bars)?);
    }
    let bar_refs: Vec<&[MinuteBar]> = aggregated.iter().map(|(_, _, a)| a.bars.as_slice()).collect();
    let traded_value = window_traded_value(&bar_refs, &calendar);

    let sliced = slice_windows(&series, &calendar, registry);
    diagnostics.extend(sliced.diagnostics);
    Ok(MarketData {
        calendar,
        panels: sliced.panels,
        traded_value,
        diagnostics,
    })
}
