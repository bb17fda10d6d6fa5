//! Flight-chain extraction: per-aircraft daily schedules become
//! fixed-length windows with ordinal labels, filtered by turnaround
//! feasibility, then split into train/val/test partitions.

use crate::data::{
    parse_date_days, DataError, HarmonisedTable, Vocabulary, ARRIVAL_DELAY, CATEGORICAL_COLUMNS,
    FLIGHT_DATE, TAIL_NUMBER,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_TAU_MIN: i64 = 15;
pub const DEFAULT_TAU_MAX: i64 = 720;

/// Delay-class boundaries in minutes (upper bound of classes 0..=3).
pub const LABEL_BINS: [f64; 4] = [15.0, 60.0, 120.0, 240.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    Stratified,
    TailDayDisjoint,
    /// Emit a single partition, used for transfer-target sets.
    None,
}

impl std::str::FromStr for SplitMode {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stratified" => Ok(SplitMode::Stratified),
            "tail-day" | "tail-day-disjoint" => Ok(SplitMode::TailDayDisjoint),
            "none" => Ok(SplitMode::None),
            other => Err(DataError::Config(format!("unknown split mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainConfig {
    pub window: usize,
    pub tau_min: i64,
    pub tau_max: i64,
    pub ratios: (u32, u32, u32),
    pub split: SplitMode,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            window: DEFAULT_WINDOW,
            tau_min: DEFAULT_TAU_MIN,
            tau_max: DEFAULT_TAU_MAX,
            ratios: (70, 15, 15),
            split: SplitMode::Stratified,
            seed: 42,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.window < 2 {
            return Err(DataError::Config("window length must be >= 2".into()));
        }
        if !(0 < self.tau_min && self.tau_min < self.tau_max) {
            return Err(DataError::Config("require 0 < tau_min < tau_max".into()));
        }
        if self.ratios.0 + self.ratios.1 + self.ratios.2 != 100 {
            return Err(DataError::Config("split ratios must sum to 100".into()));
        }
        Ok(())
    }
}

/// One harmonised leg with the timing fields needed for feasibility
/// plus its full encoded feature vector.
#[derive(Debug, Clone)]
pub struct FlightLeg {
    pub tail: String,
    pub date: String,
    pub sched_dep: i64,
    pub actual_dep: i64, // 0 = missing
    pub sched_arr: i64,
    pub arr_delay: f64,
    pub features: Vec<f32>,
    pub input_order: usize,
}

impl FlightLeg {
    /// Departure time used by the feasibility filter: actual when
    /// present, scheduled otherwise.
    pub fn dep_time(&self) -> i64 {
        if self.actual_dep != 0 {
            self.actual_dep
        } else {
            self.sched_dep
        }
    }

    /// Arrival time used by the feasibility filter: scheduled arrival
    /// shifted by the observed delay.
    pub fn arr_time(&self) -> i64 {
        self.sched_arr + self.arr_delay.round() as i64
    }
}

/// A feasible window: L stacked feature rows and the ordinal label of
/// the final leg.
#[derive(Debug, Clone)]
pub struct FlightChain {
    /// Row-major L x p matrix.
    pub x: Vec<f32>,
    pub y: u8,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Provenance {
    pub tail: String,
    pub date: String,
    pub start: usize,
}

/// Ordinal label from the final leg's arrival delay. Bins are
/// left-open/right-closed except the first; early arrivals fall in the
/// lowest class.
pub fn bin_label(arrival_delay_minutes: f64) -> u8 {
    let t = arrival_delay_minutes;
    if t <= LABEL_BINS[0] {
        0
    } else if t <= LABEL_BINS[1] {
        1
    } else if t <= LABEL_BINS[2] {
        2
    } else if t <= LABEL_BINS[3] {
        3
    } else {
        4
    }
}

/// Decode a harmonised table into legs, label-encoding categoricals
/// with the given vocabulary (unseen tokens become UNK id 0).
///
/// The feature vector follows the table's column order with
/// `flight_date` as days-since-epoch. The target column stays in place
/// here; [`extract_chains`] zeroes it on the final leg of each window.
pub fn decode_legs(table: &HarmonisedTable, vocab: &Vocabulary) -> Result<Vec<FlightLeg>, DataError> {
    let need = |name: &str| {
        table
            .column_index(name)
            .ok_or_else(|| DataError::Schema(format!("harmonised table lacks column {name:?}")))
    };
    let tail_ci = need(TAIL_NUMBER)?;
    let date_ci = need(FLIGHT_DATE)?;
    let sched_dep_ci = need("scheduled_departure_utc")?;
    let actual_dep_ci = need("actual_departure_utc")?;
    let sched_arr_ci = need("scheduled_arrival_utc")?;
    let arr_delay_ci = need(ARRIVAL_DELAY)?;

    let mut encoders = BTreeMap::new();
    for col in &table.columns {
        if CATEGORICAL_COLUMNS.contains(&col.as_str()) {
            encoders.insert(col.clone(), vocab.encoder(col)?);
        }
    }

    let parse_num = |cell: &str, col: &str| -> Result<f64, DataError> {
        cell.parse::<f64>().map_err(|_| DataError::Data(format!("bad number {cell:?} in {col}")))
    };

    let mut legs = Vec::with_capacity(table.rows.len());
    for (ri, row) in table.rows.iter().enumerate() {
        let mut features = Vec::with_capacity(table.columns.len());
        for (ci, col) in table.columns.iter().enumerate() {
            let cell = row[ci].as_str();
            let v = if let Some(enc) = encoders.get(col) {
                enc.get(cell).copied().unwrap_or(0) as f32
            } else if col == FLIGHT_DATE {
                if cell.is_empty() { 0.0 } else { parse_date_days(cell)? as f32 }
            } else {
                parse_num(cell, col)? as f32
            };
            features.push(v);
        }
        legs.push(FlightLeg {
            tail: row[tail_ci].clone(),
            date: row[date_ci].clone(),
            sched_dep: parse_num(&row[sched_dep_ci], "scheduled_departure_utc")? as i64,
            actual_dep: parse_num(&row[actual_dep_ci], "actual_departure_utc")? as i64,
            sched_arr: parse_num(&row[sched_arr_ci], "scheduled_arrival_utc")? as i64,
            arr_delay: parse_num(&row[arr_delay_ci], ARRIVAL_DELAY)?,
            features,
            input_order: ri,
        });
    }
    Ok(legs)
}

/// Group legs by (tail, date) and order each block by scheduled
/// departure, tie-broken by actual departure then stable input order.
/// Blocks come back sorted by key for a deterministic merge.
pub fn group_sort(legs: Vec<FlightLeg>) -> Vec<((String, String), Vec<FlightLeg>)> {
    let mut blocks: BTreeMap<(String, String), Vec<FlightLeg>> = BTreeMap::new();
    for leg in legs {
        blocks.entry((leg.tail.clone(), leg.date.clone())).or_default().push(leg);
    }
    let mut out: Vec<_> = blocks.into_iter().collect();
    for (_, block) in out.iter_mut() {
        block.sort_by(|a, b| {
            a.sched_dep
                .cmp(&b.sched_dep)
                .then(a.actual_dep.cmp(&b.actual_dep))
                .then(a.input_order.cmp(&b.input_order))
        });
    }
    out
}

/// All feasible length-L windows of a sorted block. Infeasible windows
/// are skipped, never truncated; blocks shorter than L yield nothing.
pub fn extract_chains(
    key: &(String, String),
    block: &[FlightLeg],
    cfg: &ChainConfig,
    arr_delay_feature: Option<usize>,
) -> Vec<FlightChain> {
    let l = cfg.window;
    if block.len() < l {
        return Vec::new();
    }
    let mut chains = Vec::new();
    for j in 0..=block.len() - l {
        let window = &block[j..j + l];
        let feasible = window.windows(2).all(|pair| {
            let gap = pair[1].dep_time() - pair[0].arr_time();
            gap >= cfg.tau_min && gap <= cfg.tau_max
        });
        if !feasible {
            continue;
        }
        let p = window[0].features.len();
        let mut x = Vec::with_capacity(l * p);
        for (li, leg) in window.iter().enumerate() {
            let mut row = leg.features.clone();
            // The final leg's arrival delay is the prediction target;
            // it must not leak into the input.
            if li == l - 1 {
                if let Some(adi) = arr_delay_feature {
                    row[adi] = 0.0;
                }
            }
            x.extend_from_slice(&row);
        }
        chains.push(FlightChain {
            x,
            y: bin_label(window[l - 1].arr_delay),
            provenance: Provenance { tail: key.0.clone(), date: key.1.clone(), start: j },
        });
    }
    chains
}

/// Deterministic three-way split. Returns the partitions plus any
/// warnings (classes too small to stratify are kept whole in train).
pub fn split(
    chains: Vec<FlightChain>,
    cfg: &ChainConfig,
) -> Result<(Vec<FlightChain>, Vec<FlightChain>, Vec<FlightChain>, Vec<String>), DataError> {
    cfg.validate()?;
    if chains.is_empty() {
        return Err(DataError::Data("no chains to split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut warnings = Vec::new();
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    match cfg.split {
        SplitMode::None => {
            return Ok((chains, Vec::new(), Vec::new(), warnings));
        }
        SplitMode::Stratified => {
            let mut by_label: BTreeMap<u8, Vec<FlightChain>> = BTreeMap::new();
            for c in chains {
                by_label.entry(c.y).or_default().push(c);
            }
            for (label, mut group) in by_label {
                if group.len() < 3 {
                    warnings.push(format!(
                        "class {label} has only {} chains; kept whole in train",
                        group.len()
                    ));
                    train.append(&mut group);
                    continue;
                }
                group.shuffle(&mut rng);
                let n = group.len();
                let n_train = n * cfg.ratios.0 as usize / 100;
                let n_val = n * cfg.ratios.1 as usize / 100;
                for (i, c) in group.into_iter().enumerate() {
                    if i < n_train {
                        train.push(c);
                    } else if i < n_train + n_val {
                        val.push(c);
                    } else {
                        test.push(c);
                    }
                }
            }
        }
        SplitMode::TailDayDisjoint => {
            let mut by_key: BTreeMap<(String, String), Vec<FlightChain>> = BTreeMap::new();
            for c in chains {
                by_key
                    .entry((c.provenance.tail.clone(), c.provenance.date.clone()))
                    .or_default()
                    .push(c);
            }
            let mut keys: Vec<_> = by_key.keys().cloned().collect();
            keys.shuffle(&mut rng);
            let total: usize = by_key.values().map(|v| v.len()).sum();
            let t_train = total * cfg.ratios.0 as usize / 100;
            let t_val = total * (cfg.ratios.0 + cfg.ratios.1) as usize / 100;
            let mut placed = 0usize;
            for key in keys {
                let mut group = by_key.remove(&key).unwrap();
                let n = group.len();
                if placed < t_train {
                    train.append(&mut group);
                } else if placed < t_val {
                    val.append(&mut group);
                } else {
                    test.append(&mut group);
                }
                placed += n;
            }
        }
    }
    // Deterministic order inside each partition.
    for part in [&mut train, &mut val, &mut test] {
        part.sort_by(|a, b| a.provenance.cmp(&b.provenance));
    }
    Ok((train, val, test, warnings))
}

/// Full pipeline from a harmonised table to partitions.
pub fn build_chains(
    table: &HarmonisedTable,
    vocab: &Vocabulary,
    cfg: &ChainConfig,
) -> Result<(Vec<FlightChain>, Vec<String>), DataError> {
    let arr_delay_feature = table.column_index(ARRIVAL_DELAY);
    let legs = decode_legs(table, vocab)?;
    let blocks = group_sort(legs);
    let mut chains = Vec::new();
    for (key, block) in &blocks {
        chains.extend(extract_chains(key, block, cfg, arr_delay_feature));
    }
    Ok((chains, table.columns.clone()))
}

// ---------------------------------------------------------------------------
// Chain-dataset file format (QTCHAIN1)
// ---------------------------------------------------------------------------

const CHAIN_MAGIC: &str = "QTCHAIN1";

#[derive(Debug, Serialize, Deserialize)]
struct ChainHeader {
    magic: String,
    n_chains: usize,
    seq_len: usize,
    n_features: usize,
    feature_names: Vec<String>,
    label_bins: Vec<f64>,
}

/// In-memory chain dataset as stored in a `.qtc` file.
#[derive(Debug, Clone)]
pub struct ChainDataset {
    pub seq_len: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    /// n_chains * seq_len * n_features, row-major.
    pub x: Vec<f32>,
    pub y: Vec<u8>,
}

impl ChainDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn from_chains(chains: &[FlightChain], seq_len: usize, feature_names: Vec<String>) -> Self {
        let n_features = feature_names.len();
        let mut x = Vec::with_capacity(chains.len() * seq_len * n_features);
        let mut y = Vec::with_capacity(chains.len());
        for c in chains {
            debug_assert_eq!(c.x.len(), seq_len * n_features);
            x.extend_from_slice(&c.x);
            y.push(c.y);
        }
        ChainDataset { seq_len, n_features, feature_names, x, y }
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        let header = ChainHeader {
            magic: CHAIN_MAGIC.to_string(),
            n_chains: self.y.len(),
            seq_len: self.seq_len,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
            label_bins: LABEL_BINS.to_vec(),
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut f, &header)
            .map_err(|e| DataError::Data(format!("chain header: {e}")))?;
        f.write_all(b"\n")?;
        for v in &self.x {
            f.write_all(&v.to_le_bytes())?;
        }
        f.write_all(&self.y)?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: ChainHeader = serde_json::from_str(line.trim_end())
            .map_err(|e| DataError::Data(format!("chain header: {e}")))?;
        if header.magic != CHAIN_MAGIC {
            return Err(DataError::Data(format!("bad chain magic {:?}", header.magic)));
        }
        let n_floats = header.n_chains * header.seq_len * header.n_features;
        let mut payload = vec![0u8; n_floats * 4];
        r.read_exact(&mut payload)?;
        let x: Vec<f32> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let mut y = vec![0u8; header.n_chains];
        r.read_exact(&mut y)?;
        Ok(ChainDataset {
            seq_len: header.seq_len,
            n_features: header.n_features,
            feature_names: header.feature_names,
            x,
            y,
        })
    }
}
