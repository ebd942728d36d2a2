//! Asset metadata registry: `ticker,class,first_day` CSV with a header.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetClass {
    /// Has its own blockchain.
    Coin,
    /// Built on another chain.
    Token,
    /// Pegged to another asset's price.
    Stablecoin,
    Fiat,
}

impl AssetClass {
    pub const ALL: [AssetClass; 4] = [
        AssetClass::Coin,
        AssetClass::Token,
        AssetClass::Stablecoin,
        AssetClass::Fiat,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AssetClass::Coin => "coin",
            AssetClass::Token => "token",
            AssetClass::Stablecoin => "stablecoin",
            AssetClass::Fiat => "fiat",
        }
    }
}

impl fmt::Display for AssetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssetClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coin" => Ok(AssetClass::Coin),
            "token" => Ok(AssetClass::Token),
            "stablecoin" | "stable-coin" | "stable" => Ok(AssetClass::Stablecoin),
            "fiat" => Ok(AssetClass::Fiat),
            other => Err(Error::InvalidInput(format!("unknown asset class `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssetMeta {
    pub ticker: String,
    pub class: AssetClass,
    pub first_day: NaiveDate,
}

#[derive(Deserialize)]
struct Row {
    ticker: String,
    class: String,
    first_day: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Registry {
    assets: BTreeMap<String, AssetMeta>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, meta: AssetMeta) -> Result<()> {
        if self.assets.contains_key(&meta.ticker) {
            return Err(Error::InvalidInput(format!(
                "ticker `{}` listed twice in registry",
                meta.ticker
            )));
        }
        self.assets.insert(meta.ticker.clone(), meta);
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut reg = Registry::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            let first_day = NaiveDate::parse_from_str(&row.first_day, "%Y%m%d").map_err(|e| {
                Error::InvalidInput(format!(
                    "registry row {}: first_day `{}`: {e}",
                    i + 2,
                    row.first_day
                ))
            })?;
            reg.insert(AssetMeta {
                ticker: row.ticker,
                class: row.class.parse()?,
                first_day,
            })?;
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn get(&self, ticker: &str) -> Option<&AssetMeta> {
        self.assets.get(ticker)
    }

    pub fn class_of(&self, ticker: &str) -> Option<AssetClass> {
        self.get(ticker).map(|m| m.class)
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AssetMeta> {
        self.assets.values()
    }

    pub fn write<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["ticker", "class", "first_day"])?;
        for m in self.iter() {
            w.write_record([
                m.ticker.as_str(),
                m.class.as_str(),
                &m.first_day.format("%Y%m%d").to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("registry", e))?;
        Ok(())
    }
}
