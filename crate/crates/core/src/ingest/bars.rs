//! Minute aggregation (volume-weighted price, forward fill) and log returns.

use crate::error::{Error, Result};
use crate::ingest::trades::TradeRecord;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinuteBar {
    /// Minutes since the Unix epoch.
    pub minute: i64,
    pub price: f64,
    pub volume: f64,
    /// No trade in this minute; price carried from the previous bar.
    pub synthetic: bool,
}

/// Inclusive range of minute indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MinuteSpan {
    pub first: i64,
    pub last: i64,
}

impl MinuteSpan {
    pub fn new(first: i64, last: i64) -> Self {
        MinuteSpan { first, last }
    }
}

pub fn minute_of(timestamp: i64) -> i64 {
    timestamp.div_euclid(60)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Aggregated {
    pub bars: Vec<MinuteBar>,
    /// Minutes whose trades all had zero volume (priced by unweighted mean).
    pub zero_volume_minutes: Vec<i64>,
    /// Trades after the end of the span.
    pub dropped_after_span: usize,
}

/// Aggregates sorted trades into a gap-free bar sequence over `span`.
///
/// Bars start at the first traded minute (or at `span.first` when trades
/// precede the span, carrying the last price seen before it).
pub fn aggregate_minutes(trades: &[TradeRecord], span: MinuteSpan) -> Aggregated {
    let mut out = Aggregated::default();
    let mut carried: Option<f64> = None;
    let mut traded: Vec<(i64, f64, f64)> = Vec::new();

    let mut i = 0;
    while i < trades.len() {
        let minute = minute_of(trades[i].timestamp);
        let mut j = i;
        let (mut pv, mut vol, mut psum) = (0.0, 0.0, 0.0);
        while j < trades.len() && minute_of(trades[j].timestamp) == minute {
            pv += trades[j].price * trades[j].volume;
            vol += trades[j].volume;
            psum += trades[j].price;
            j += 1;
        }
        let price = if vol > 0.0 {
            pv / vol
        } else {
            log::warn!("minute {minute}: all trades have zero volume, using unweighted mean price");
            out.zero_volume_minutes.push(minute);
            psum / (j - i) as f64
        };
        if minute < span.first {
            carried = Some(price);
        } else if minute > span.last {
            out.dropped_after_span += j - i;
        } else {
            traded.push((minute, price, vol));
        }
        i = j;
    }

    let start = match (carried, traded.first()) {
        (Some(_), _) => span.first,
        (None, Some(&(m, _, _))) => m,
        (None, None) => return out,
    };
    let mut next = traded.iter().peekable();
    let mut last_price = carried.unwrap_or(f64::NAN);
    out.bars.reserve((span.last - start + 1).max(0) as usize);
    for minute in start..=span.last {
        match next.peek() {
            Some(&&(m, price, volume)) if m == minute => {
                out.bars.push(MinuteBar {
                    minute,
                    price,
                    volume,
                    synthetic: false,
                });
                last_price = price;
                next.next();
            }
            _ => out.bars.push(MinuteBar {
                minute,
                price: last_price,
                volume: 0.0,
                synthetic: true,
            }),
        }
    }
    out
}

/// `r_t = ln p_t − ln p_{t−1}`.
pub fn log_returns(bars: &[MinuteBar]) -> Result<Vec<f64>> {
    if bars.len() < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            got: bars.len(),
        });
    }
    if let Some(bad) = bars.iter().find(|b| !(b.price > 0.0 && b.price.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "non-positive price {} at minute {}",
            bad.price, bad.minute
        )));
    }
    Ok(bars
        .windows(2)
        .map(|w| w[1].price.ln() - w[0].price.ln())
        .collect())
}
