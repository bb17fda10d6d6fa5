//! CSV ingest, schema harmonisation, imputation, and label-encoding
//! vocabularies.
//!
//! Region feeds arrive with their own headers; a [`SchemaProfile`] maps
//! raw names onto the shared catalogue. The harmonised output keeps
//! categorical tokens raw (encoding happens at chain-export time so a
//! foreign vocabulary can be applied for transfer runs) and converts
//! timestamps to integer minutes since the Unix epoch.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Auxiliary US-only column, excluded from the shared schema.
pub const WEATHER_DELAY: &str = "weather_delay";

/// Columns that are label-encoded rather than parsed as numbers.
pub const CATEGORICAL_COLUMNS: &[&str] =
    &["tail_number", "airline", "depart_from_iata", "arrive_at_iata"];

/// Columns holding wall-clock timestamps, normalised to minutes since
/// the Unix epoch at ingest.
pub const TIMESTAMP_COLUMNS: &[&str] =
    &["scheduled_departure_utc", "actual_departure_utc", "scheduled_arrival_utc"];

pub const FLIGHT_DATE: &str = "flight_date";
pub const TAIL_NUMBER: &str = "tail_number";
pub const ARRIVAL_DELAY: &str = "arrival_delay_minutes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Us,
    Eu,
}

impl std::str::FromStr for Region {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "us" => Ok(Region::Us),
            "eu" => Ok(Region::Eu),
            other => Err(DataError::Config(format!("unknown region {other:?}"))),
        }
    }
}

/// Mapping from a raw feed's headers to harmonised column names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaProfile {
    pub region: Region,
    /// raw header -> harmonised name
    pub columns: BTreeMap<String, String>,
}

impl SchemaProfile {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| DataError::Config(format!("schema profile: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| DataError::Config(format!("schema profile: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn harmonised_columns(&self) -> Vec<String> {
        self.columns.values().cloned().collect()
    }

    /// Identity profile over the given harmonised names.
    pub fn identity(region: Region, columns: &[&str]) -> Self {
        SchemaProfile {
            region,
            columns: columns.iter().map(|c| (c.to_string(), c.to_string())).collect(),
        }
    }
}

/// Sorted intersection of two schemas, with the one-sided weather
/// column excluded even when present in a feed.
pub fn intersect_schemas(us_cols: &[String], eu_cols: &[String]) -> Result<Vec<String>, DataError> {
    if us_cols.is_empty() || eu_cols.is_empty() {
        return Err(DataError::Schema("cannot intersect an empty schema".into()));
    }
    let eu: HashSet<&str> = eu_cols.iter().map(|s| s.as_str()).collect();
    let mut out: Vec<String> = us_cols
        .iter()
        .filter(|c| eu.contains(c.as_str()) && c.as_str() != WEATHER_DELAY)
        .cloned()
        .collect();
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(DataError::Schema("schema intersection is empty".into()));
    }
    Ok(out)
}

/// Per-column token table. Id 0 is the reserved UNK sentinel; known
/// tokens get ids 1.. in first-appearance order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Vocabulary {
    pub columns: BTreeMap<String, Vec<String>>,
}

impl Vocabulary {
    pub fn fit(column_tokens: &[(String, Vec<String>)]) -> Self {
        let mut columns = BTreeMap::new();
        for (col, tokens) in column_tokens {
            let mut seen = HashSet::new();
            let mut ordered = Vec::new();
            for t in tokens {
                if t.is_empty() {
                    continue; // missing value, stays UNK
                }
                if seen.insert(t.clone()) {
                    ordered.push(t.clone());
                }
            }
            columns.insert(col.clone(), ordered);
        }
        Vocabulary { columns }
    }

    pub fn encode(&self, column: &str, token: &str) -> Result<u32, DataError> {
        let tokens = self
            .columns
            .get(column)
            .ok_or_else(|| DataError::Config(format!("column {column:?} not in vocabulary")))?;
        Ok(tokens.iter().position(|t| t == token).map(|i| i as u32 + 1).unwrap_or(0))
    }

    /// Lookup table for bulk encoding of one column.
    pub fn encoder(&self, column: &str) -> Result<HashMap<&str, u32>, DataError> {
        let tokens = self
            .columns
            .get(column)
            .ok_or_else(|| DataError::Config(format!("column {column:?} not in vocabulary")))?;
        Ok(tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32 + 1)).collect())
    }

    pub fn decode(&self, column: &str, id: u32) -> Option<&str> {
        if id == 0 {
            return None;
        }
        self.columns.get(column)?.get(id as usize - 1).map(|s| s.as_str())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| DataError::Config(format!("vocabulary: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| DataError::Config(format!("vocabulary: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// A harmonised table: fixed column order, all cells as strings with
/// timestamps already converted and gaps imputed.
#[derive(Debug, Clone)]
pub struct HarmonisedTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl HarmonisedTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, DataError> {
        let mut r = csv::Reader::from_path(path)?;
        let columns: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            rows.push(rec.iter().map(|s| s.to_string()).collect());
        }
        Ok(HarmonisedTable { columns, rows })
    }
}

/// Days since 1970-01-01 for a proleptic Gregorian date.
pub fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp as i64 + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

pub fn parse_date_days(s: &str) -> Result<i64, DataError> {
    let parts: Vec<&str> = s.split('-').collect();
    if parts.len() != 3 {
        return Err(DataError::Data(format!("bad date {s:?}")));
    }
    let y: i64 = parts[0].parse().map_err(|_| DataError::Data(format!("bad date {s:?}")))?;
    let m: u32 = parts[1].parse().map_err(|_| DataError::Data(format!("bad date {s:?}")))?;
    let d: u32 = parts[2].parse().map_err(|_| DataError::Data(format!("bad date {s:?}")))?;
    Ok(days_from_civil(y, m, d))
}

/// Minutes since the Unix epoch. Accepts an integer minute count or a
/// `YYYY-MM-DD HH:MM[:SS]` / `YYYY-MM-DDTHH:MM[:SS]` timestamp.
pub fn parse_timestamp_minutes(s: &str) -> Result<i64, DataError> {
    if let Ok(v) = s.parse::<i64>() {
        return Ok(v);
    }
    let s = s.trim();
    let (date, time) = s
        .split_once(' ')
        .or_else(|| s.split_once('T'))
        .ok_or_else(|| DataError::Data(format!("bad timestamp {s:?}")))?;
    let days = parse_date_days(date)?;
    let hm: Vec<&str> = time.split(':').collect();
    if hm.len() < 2 {
        return Err(DataError::Data(format!("bad timestamp {s:?}")));
    }
    let h: i64 = hm[0].parse().map_err(|_| DataError::Data(format!("bad timestamp {s:?}")))?;
    let m: i64 = hm[1].parse().map_err(|_| DataError::Data(format!("bad timestamp {s:?}")))?;
    Ok(days * 24 * 60 + h * 60 + m)
}

fn is_categorical(name: &str) -> bool {
    CATEGORICAL_COLUMNS.contains(&name)
}

fn is_timestamp(name: &str) -> bool {
    TIMESTAMP_COLUMNS.contains(&name)
}

/// Harmonise a raw region CSV: rename columns per profile, fix the
/// column order (sorted harmonised names, weather last when kept),
/// normalise timestamps, and impute gaps (0 for continuous, the UNK
/// sentinel for categoricals). No rows are dropped.
pub fn harmonise_csv(
    raw_path: &Path,
    profile: &SchemaProfile,
    keep_weather: bool,
) -> Result<HarmonisedTable, DataError> {
    let mut reader = csv::Reader::from_path(raw_path)?;
    let raw_headers: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();

    // Profile columns must all be present in the feed.
    let mut raw_index = HashMap::new();
    for (raw, harm) in &profile.columns {
        match raw_headers.iter().position(|h| h == raw) {
            Some(i) => {
                raw_index.insert(harm.clone(), i);
            }
            None => {
                return Err(DataError::Schema(format!(
                    "profile column {raw:?} not found in {raw_path:?}"
                )))
            }
        }
    }

    let mut columns: Vec<String> = profile
        .harmonised_columns()
        .into_iter()
        .filter(|c| c != WEATHER_DELAY)
        .collect();
    columns.sort();
    columns.dedup();
    if keep_weather {
        if !raw_index.contains_key(WEATHER_DELAY) {
            return Err(DataError::Schema(format!(
                "--keep-weather requested but the profile has no {WEATHER_DELAY} column"
            )));
        }
        columns.push(WEATHER_DELAY.to_string());
    }

    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let mut row = Vec::with_capacity(columns.len());
        for col in &columns {
            let cell = rec.get(raw_index[col]).unwrap_or("").trim();
            row.push(harmonise_cell(col, cell)?);
        }
        rows.push(row);
    }
    Ok(HarmonisedTable { columns, rows })
}

fn harmonise_cell(col: &str, cell: &str) -> Result<String, DataError> {
    if is_categorical(col) {
        // Missing categoricals stay the empty UNK sentinel.
        return Ok(cell.to_string());
    }
    if cell.is_empty() {
        return Ok(if col == FLIGHT_DATE { String::new() } else { "0".to_string() });
    }
    if col == FLIGHT_DATE {
        parse_date_days(cell)?; // validate only; keep the readable form
        return Ok(cell.to_string());
    }
    if is_timestamp(col) {
        return Ok(parse_timestamp_minutes(cell)?.to_string());
    }
    match cell.parse::<f64>() {
        Ok(_) => Ok(cell.to_string()),
        Err(_) => Ok("0".to_string()), // unparseable continuous cell imputed
    }
}

/// Fit a vocabulary over the categorical columns of a harmonised table.
/// Ids follow first-appearance order in row order, starting at 1.
pub fn fit_vocabulary(table: &HarmonisedTable) -> Vocabulary {
    let mut column_tokens = Vec::new();
    for (ci, col) in table.columns.iter().enumerate() {
        if is_categorical(col) {
            let tokens: Vec<String> = table.rows.iter().map(|r| r[ci].clone()).collect();
            column_tokens.push((col.clone(), tokens));
        }
    }
    Vocabulary::fit(&column_tokens)
}
