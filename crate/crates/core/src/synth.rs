//! Deterministic synthetic schedule generator.
//!
//! Emits raw per-flight CSV already using the harmonised column names,
//! so an identity schema profile feeds it straight into the pipeline.
//! Arrival delays are driven by a per-leg congestion level; in
//! "separable" mode the arrival delay is sampled inside the same
//! ordinal bin as the departure delay, so a shallow rule on the
//! departure delay predicts the label almost perfectly. Region B uses
//! disjoint carrier/airport/tail tokens and a delay distribution
//! shifted toward the higher classes.

use crate::chains::bin_label;
use crate::data::{DataError, Region, SchemaProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::str::FromStr;

/// Output column order; the 12 shared features plus the auxiliary
/// weather column.
pub const SYNTH_COLUMNS: &[&str] = &[
    "flight_date",
    "tail_number",
    "airline",
    "depart_from_iata",
    "arrive_at_iata",
    "scheduled_departure_utc",
    "actual_departure_utc",
    "scheduled_arrival_utc",
    "departure_delay_minutes",
    "arrival_delay_minutes",
    "scheduled_estimated_time",
    "distance",
    "weather_delay",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difficulty {
    /// Arrival delay stays inside the departure delay's ordinal bin.
    Separable,
    /// Arrival delay adds enroute noise that may cross bin boundaries.
    Noisy,
}

impl FromStr for Difficulty {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "separable" => Ok(Difficulty::Separable),
            "noisy" => Ok(Difficulty::Noisy),
            other => Err(DataError::Config(format!(
                "unknown difficulty {other:?}; expected separable or noisy"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_aircraft: usize,
    pub days: usize,
    pub seed: u64,
    pub difficulty: Difficulty,
    pub region: Region,
    /// Fraction of chain windows that should fail the turnaround
    /// filter; applied per ground gap so two-gap windows reject at
    /// roughly this rate.
    pub violation_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_aircraft: 50,
            days: 4,
            seed: 7,
            difficulty: Difficulty::Separable,
            region: Region::Us,
            violation_rate: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_aircraft == 0 || self.days == 0 {
            return Err(DataError::Config("aircraft and days must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.violation_rate) {
            return Err(DataError::Config("violation_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

struct RegionPools {
    airports: &'static [&'static str],
    airlines: &'static [&'static str],
    tail_prefix: &'static str,
    /// Congestion-class weights, summing to 1.
    class_weights: [f64; 5],
}

fn pools(region: Region) -> RegionPools {
    match region {
        Region::Us => RegionPools {
            airports: &["ATL", "ORD", "DFW", "DEN", "LAX", "JFK", "SFO", "SEA", "MIA", "BOS"],
            airlines: &["AA", "DL", "UA", "WN", "AS", "B6"],
            tail_prefix: "N",
            class_weights: [0.38, 0.25, 0.17, 0.12, 0.08],
        },
        Region::Eu => RegionPools {
            airports: &["LHR", "CDG", "AMS", "FRA", "MAD", "BCN", "FCO", "MUC", "DUB", "LIS"],
            airlines: &["BA", "AF", "KL", "LH", "IB", "FR"],
            tail_prefix: "G-",
            class_weights: [0.26, 0.22, 0.20, 0.17, 0.15],
        },
    }
}

/// Departure-delay band per congestion class, kept strictly inside the
/// matching ordinal bin.
const DEP_BANDS: [(i64, i64); 5] = [(-5, 8), (25, 55), (70, 115), (135, 225), (255, 350)];
/// Arrival-delay bin interiors used in separable mode.
const ARR_BANDS: [(i64, i64); 5] = [(-10, 14), (17, 59), (62, 119), (122, 239), (242, 360)];

const MINUTES_PER_DAY: i64 = 24 * 60;
/// Day number of the first generated date (2022-03-01).
const START_DAY: i64 = 19052;

fn weighted_class(rng: &mut ChaCha8Rng, weights: &[f64; 5]) -> usize {
    let roll: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if roll < acc {
            return k;
        }
    }
    4
}

fn date_string(day: i64) -> String {
    // Inverse of the civil-day conversion, valid for the generated range.
    let z = day + 719468;
    let era = z.div_euclid(146097);
    let doe = z.rem_euclid(146097);
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = if m <= 2 { y + 1 } else { y };
    format!("{y:04}-{m:02}-{d:02}")
}

/// Generate the full schedule and write it as CSV. Byte-identical for
/// identical configs.
pub fn generate_csv(cfg: &SynthConfig, path: &Path) -> Result<(), DataError> {
    cfg.validate()?;
    let p = pools(cfg.region);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Per-gap rejection odds so a two-gap window fails at ~violation_rate.
    let gap_violation = 1.0 - (1.0 - cfg.violation_rate).sqrt();

    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SYNTH_COLUMNS)?;
    for aircraft in 0..cfg.n_aircraft {
        let tail = format!("{}{:03}QT", p.tail_prefix, 100 + aircraft);
        let airline = p.airlines[aircraft % p.airlines.len()];
        for day in 0..cfg.days {
            let day_number = START_DAY + day as i64;
            let date = date_string(day_number);
            let n_legs = rng.gen_range(3..=8);
            let mut origin = rng.gen_range(0..p.airports.len());
            // Leg timestamps are absolute minutes since the epoch.
            let first_sched_dep =
                day_number * MINUTES_PER_DAY + rng.gen_range(5 * 60..9 * 60);
            let mut prev_arr_delay: i64 = 0;
            // Actual departure fixed by the previous leg's ground gap.
            let mut pending_actual_dep: Option<i64> = None;
            for leg in 0..n_legs {
                let mut class = weighted_class(&mut rng, &p.class_weights);
                // Congestion propagates: a badly delayed inbound leg
                // pushes the next leg's class up.
                if leg > 0 && prev_arr_delay > 120 && rng.gen_range(0.0..1.0) < 0.5 {
                    class = (class + 1).min(4);
                }
                let (dl, dh) = DEP_BANDS[class];
                let dep_delay = rng.gen_range(dl..=dh);
                let arr_delay = match cfg.difficulty {
                    Difficulty::Separable => {
                        let (al, ah) = ARR_BANDS[bin_label(dep_delay as f64) as usize];
                        rng.gen_range(al..=ah)
                    }
                    Difficulty::Noisy => dep_delay + rng.gen_range(-30..=30),
                };

                let dest = {
                    let mut d = rng.gen_range(0..p.airports.len());
                    if d == origin {
                        d = (d + 1) % p.airports.len();
                    }
                    d
                };
                let distance = rng.gen_range(300..=2500);
                let est_time = distance / 8 + 30 + rng.gen_range(-10..=10);
                // Back-compute the schedule from the sampled actual gap
                // so the feasibility filter sees exactly that gap.
                let sched_dep = match pending_actual_dep {
                    Some(actual) => actual - dep_delay,
                    None => first_sched_dep,
                };
                let actual_dep = sched_dep + dep_delay;
                let sched_arr = sched_dep + est_time;
                let actual_arr = sched_arr + arr_delay;
                let weather = if class >= 2 && rng.gen_range(0.0..1.0) < 0.6 {
                    rng.gen_range(5..=20 * class as i64)
                } else {
                    0
                };

                w.write_record(&[
                    date.clone(),
                    tail.clone(),
                    airline.to_string(),
                    p.airports[origin].to_string(),
                    p.airports[dest].to_string(),
                    sched_dep.to_string(),
                    actual_dep.to_string(),
                    sched_arr.to_string(),
                    dep_delay.to_string(),
                    arr_delay.to_string(),
                    est_time.to_string(),
                    distance.to_string(),
                    weather.to_string(),
                ])?;

                origin = dest;
                prev_arr_delay = arr_delay;
                if leg + 1 < n_legs {
                    let gap = if rng.gen_range(0.0..1.0) < gap_violation {
                        if rng.gen_range(0.0..1.0) < 0.7 {
                            rng.gen_range(0..15) // too tight
                        } else {
                            rng.gen_range(721..=900) // too long
                        }
                    } else {
                        rng.gen_range(30..=240)
                    };
                    pending_actual_dep = Some(actual_arr + gap);
                }
            }
        }
    }
    w.flush().map_err(|e| DataError::Data(format!("csv flush: {e}")))?;
    Ok(())
}

/// Identity profile matching the generated headers.
pub fn identity_profile(region: Region) -> SchemaProfile {
    SchemaProfile::identity(region, SYNTH_COLUMNS)
}
