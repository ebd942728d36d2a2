//! Raw trade tapes: one `timestamp,price,volume` record per line, no header.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TradeRecord {
    /// Unix seconds, UTC.
    pub timestamp: i64,
    /// Quote-currency units per asset unit.
    pub price: f64,
    /// Asset units.
    pub volume: f64,
}

/// A rejected input line (1-based line number).
#[derive(Clone, Debug, PartialEq)]
pub struct LineDiagnostic {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedTrades {
    pub trades: Vec<TradeRecord>,
    pub rejected: Vec<LineDiagnostic>,
    /// The input was not in timestamp order and had to be sorted.
    pub resorted: bool,
}

impl ParsedTrades {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }
}

/// Parses a trade tape. Malformed lines are collected in
/// [`ParsedTrades::rejected`]; records with equal timestamps are all kept.
pub fn parse_trades(text: &str) -> ParsedTrades {
    let mut out = ParsedTrades::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(t) => out.trades.push(t),
            Err(reason) => out.rejected.push(LineDiagnostic { line: i + 1, reason }),
        }
    }
    if out.trades.is_empty() {
        log::warn!("trade tape holds no valid records");
    }
    if out.trades.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        log::warn!("trade tape is out of timestamp order; sorting");
        out.trades.sort_by_key(|t| t.timestamp);
        out.resorted = true;
    }
    if !out.rejected.is_empty() {
        log::warn!("{} malformed trade line(s) rejected", out.rejected.len());
    }
    out
}

pub fn read_trades(path: &Path) -> Result<ParsedTrades> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_trades(&text))
}

fn parse_line(line: &str) -> std::result::Result<TradeRecord, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 fields, found {}", fields.len()));
    }
    let timestamp = parse_timestamp(fields[0])?;
    let price: f64 = fields[1]
        .parse()
        .map_err(|_| format!("price `{}` is not a number", fields[1]))?;
    let volume: f64 = fields[2]
        .parse()
        .map_err(|_| format!("volume `{}` is not a number", fields[2]))?;
    if !price.is_finite() || price <= 0.0 {
        return Err(format!("price {price} is not positive"));
    }
    if !volume.is_finite() || volume < 0.0 {
        return Err(format!("volume {volume} is negative or not finite"));
    }
    Ok(TradeRecord {
        timestamp,
        price,
        volume,
    })
}

/// Integer seconds; fractional seconds are truncated toward the past.
fn parse_timestamp(field: &str) -> std::result::Result<i64, String> {
    if let Ok(ts) = field.parse::<i64>() {
        return Ok(ts);
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() && v.abs() < 1e15 => Ok(v.floor() as i64),
        _ => Err(format!("timestamp `{field}` is not a number")),
    }
}
