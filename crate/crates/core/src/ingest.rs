//! Historical price loading and scenario construction.
//!
//! Prices arrive as a CSV table (ISO-8601 date column plus one column per
//! ticker). From a cleaned table the module estimates per-asset price bounds
//! with a safety margin and manufactures an ambiguity set of scenario paths,
//! either by sliding historical windows rebased to the latest spot or by a
//! block bootstrap of historical returns with one independent random stream
//! per measure. Generated paths are clipped into the market bounds (with the
//! clip count reported) so they always validate against the market spec.

use crate::market::{validate_path, AmbiguitySet, MarketError, MarketSpec, PricePath, ScenarioSet};
use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: cannot parse date {value:?} (expected YYYY-MM-DD)")]
    BadDate { row: usize, value: String },
    #[error("row {row}: cannot parse price {value:?} for {ticker}")]
    BadPrice { row: usize, ticker: String, value: String },
    #[error("row {row}: date {curr} does not increase over {prev}")]
    NonMonotoneDates { row: usize, prev: NaiveDate, curr: NaiveDate },
    #[error("row {row}: non-positive price {value} for {ticker}")]
    NonPositivePrice { row: usize, ticker: String, value: f64 },
    #[error("price table is empty after cleaning")]
    Empty,
    #[error("need {need} rows of history, have {have}")]
    InsufficientHistory { need: usize, have: usize },
    #[error("degenerate bounds for {ticker}: constant price needs a positive margin")]
    DegenerateBounds { ticker: String },
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Cleaned historical price table, row-major over dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// `values[t][j]` is the adjusted close of `tickers[j]` on `dates[t]`.
    pub values: Vec<Vec<f64>>,
    /// Rows discarded during cleaning because a cell was missing.
    pub dropped_rows: usize,
}

impl PriceTable {
    pub fn num_rows(&self) -> usize {
        self.values.len()
    }

    pub fn num_assets(&self) -> usize {
        self.tickers.len()
    }

    /// Most recent price row; the common spot for generated scenarios.
    pub fn spot(&self) -> Result<&[f64], IngestError> {
        self.values.last().map(Vec::as_slice).ok_or(IngestError::Empty)
    }
}

/// How scenario paths are manufactured from history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleScheme {
    /// Consecutive historical windows, multiplicatively rebased to the spot.
    SlidingWindow,
    /// Paths grown from resampled blocks of historical returns.
    BlockBootstrap,
}

/// Scenario-generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Steps per path (the spot row is extra).
    pub horizon: usize,
    /// Window start spacing for the sliding scheme.
    pub stride: usize,
    pub method: ResampleScheme,
    pub num_measures: usize,
    /// Paths per measure for the bootstrap scheme (the sliding scheme is
    /// determined by history length and stride).
    pub paths_per_measure: usize,
    pub block_length: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.horizon == 0 {
            return Err(IngestError::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.num_measures == 0 {
            return Err(IngestError::InvalidConfig("need at least one measure".into()));
        }
        if self.stride == 0 {
            return Err(IngestError::InvalidConfig("stride must be at least 1".into()));
        }
        if self.method == ResampleScheme::BlockBootstrap {
            if self.paths_per_measure == 0 {
                return Err(IngestError::InvalidConfig("need at least one path per measure".into()));
            }
            if self.block_length == 0 {
                return Err(IngestError::InvalidConfig("block length must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Tallies from scenario generation, reported alongside the ambiguity set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ScenarioStats {
    /// Individual prices moved onto a bound.
    pub clipped_prices: usize,
    pub total_prices: usize,
}

impl ScenarioStats {
    pub fn clip_rate(&self) -> f64 {
        if self.total_prices == 0 {
            0.0
        } else {
            self.clipped_prices as f64 / self.total_prices as f64
        }
    }
}

/// Portable cache of a generated ambiguity set with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCache {
    pub config: ScenarioConfig,
    pub spec: MarketSpec,
    pub measures: Vec<ScenarioSet>,
    pub stats: ScenarioStats,
    /// Hex SHA-256 of the source CSV, for reproducibility audits.
    pub data_sha256: String,
}

/// Parse a price CSV: header row, ISO-8601 dates in the first column, one
/// ticker column each after. Rows with any empty cell are dropped and
/// counted; malformed values and date-order violations are hard errors.
/// Row numbers in errors refer to lines of the file (header is line 1).
pub fn load_prices(path: &Path) -> Result<PriceTable, IngestError> {
    let file = std::fs::File::open(path)?;
    load_prices_from_reader(file)
}

pub fn load_prices_from_reader<R: Read>(reader: R) -> Result<PriceTable, IngestError> {
    let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(IngestError::InvalidConfig(
            "CSV needs a date column and at least one ticker column".into(),
        ));
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();

    let mut dates = Vec::new();
    let mut values = Vec::new();
    let mut dropped_rows = 0usize;
    for (index, record) in csv_reader.records().enumerate() {
        let row = index + 2;
        let record = record?;
        if record.iter().any(str::is_empty) || record.len() != headers.len() {
            dropped_rows += 1;
            continue;
        }
        let raw_date = &record[0];
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|_| IngestError::BadDate { row, value: raw_date.to_owned() })?;
        if let Some(&prev) = dates.last() {
            if date <= prev {
                return Err(IngestError::NonMonotoneDates { row, prev, curr: date });
            }
        }
        let mut prices = Vec::with_capacity(tickers.len());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let value: f64 = cell.parse().map_err(|_| IngestError::BadPrice {
                row,
                ticker: tickers[j].clone(),
                value: cell.to_owned(),
            })?;
            if !(value.is_finite() && value > 0.0) {
                return Err(IngestError::NonPositivePrice { row, ticker: tickers[j].clone(), value });
            }
            prices.push(value);
        }
        dates.push(date);
        values.push(prices);
    }
    if values.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(PriceTable { dates, tickers, values, dropped_rows })
}

/// Per-asset price bounds: historical min and max widened by `margin`
/// (a fraction; the default used by the pipeline is 0.25).
pub fn estimate_bounds(
    table: &PriceTable,
    margin: f64,
) -> Result<(Vec<f64>, Vec<f64>), IngestError> {
    if table.values.is_empty() {
        return Err(IngestError::Empty);
    }
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(IngestError::InvalidConfig(format!("margin must be non-negative, got {margin}")));
    }
    let a = table.num_assets();
    let mut lower = vec![f64::INFINITY; a];
    let mut upper = vec![f64::NEG_INFINITY; a];
    for row in &table.values {
        for j in 0..a {
            lower[j] = lower[j].min(row[j]);
            upper[j] = upper[j].max(row[j]);
        }
    }
    for j in 0..a {
        lower[j] *= 1.0 - margin;
        upper[j] *= 1.0 + margin;
        if lower[j] >= upper[j] {
            return Err(IngestError::DegenerateBounds { ticker: table.tickers[j].clone() });
        }
    }
    Ok((lower, upper))
}

/// Market spec implied by a table: latest row as spot, margin-widened
/// historical bounds.
pub fn spec_from_table(
    table: &PriceTable,
    horizon: usize,
    margin: f64,
) -> Result<MarketSpec, IngestError> {
    let (lower, upper) = estimate_bounds(table, margin)?;
    Ok(MarketSpec::new(horizon, lower, upper, table.spot()?.to_vec())?)
}

/// Manufacture the ambiguity set. Every returned path validates against
/// `spec`; prices that would escape the bounds are clipped and counted.
pub fn build_scenarios(
    table: &PriceTable,
    config: &ScenarioConfig,
    spec: &MarketSpec,
) -> Result<(AmbiguitySet, ScenarioStats), IngestError> {
    config.validate()?;
    if spec.num_times != config.horizon {
        return Err(IngestError::InvalidConfig(format!(
            "spec has {} trading dates but the horizon is {}",
            spec.num_times, config.horizon
        )));
    }
    if table.num_assets() != spec.num_assets {
        return Err(IngestError::InvalidConfig(format!(
            "table has {} tickers but the spec has {} assets",
            table.num_assets(),
            spec.num_assets
        )));
    }
    let spot = table.spot()?;
    for (j, (&s, &expected)) in spot.iter().zip(&spec.spot).enumerate() {
        if s != expected {
            return Err(IngestError::InvalidConfig(format!(
                "spec spot for asset {j} is {expected} but the table's latest price is {s}"
            )));
        }
    }

    let raw_measures = match config.method {
        ResampleScheme::SlidingWindow => sliding_windows(table, config)?,
        ResampleScheme::BlockBootstrap => bootstrap(table, config)?,
    };

    let mut stats = ScenarioStats::default();
    let mut measures = Vec::with_capacity(raw_measures.len());
    for paths in raw_measures {
        let clipped: Vec<PricePath> = paths
            .into_iter()
            .map(|mut path| {
                stats.total_prices += spec.num_times * spec.num_assets;
                stats.clipped_prices +=
                    clip_path(&mut path, &spec.lower_bounds, &spec.upper_bounds);
                path
            })
            .collect();
        measures.push(ScenarioSet::uniform(clipped)?);
    }
    let ambiguity = AmbiguitySet::new(measures)?;
    for measure in &ambiguity.measures {
        for path in &measure.paths {
            validate_path(spec, path)?;
        }
    }
    Ok((ambiguity, stats))
}

/// Every consecutive length-(horizon+1) window of the table, spaced by
/// `stride` and multiplicatively rebased so that row 0 equals `spot`
/// exactly. Exposed separately so held-out data can be rolled against a
/// previously trained market's spot.
pub fn sliding_paths(
    table: &PriceTable,
    horizon: usize,
    stride: usize,
    spot: &[f64],
) -> Result<Vec<PricePath>, IngestError> {
    if horizon == 0 || stride == 0 {
        return Err(IngestError::InvalidConfig("horizon and stride must be at least 1".into()));
    }
    if spot.len() != table.num_assets() {
        return Err(IngestError::InvalidConfig(format!(
            "spot has {} assets but the table has {}",
            spot.len(),
            table.num_assets()
        )));
    }
    if table.num_rows() < horizon + 1 {
        return Err(IngestError::InsufficientHistory {
            need: horizon + 1,
            have: table.num_rows(),
        });
    }
    let paths = (0..=table.num_rows() - (horizon + 1))
        .step_by(stride)
        .map(|start| {
            let base = &table.values[start];
            let prices = (0..=horizon)
                .map(|i| {
                    let row = &table.values[start + i];
                    (0..table.num_assets()).map(|j| spot[j] * (row[j] / base[j])).collect()
                })
                .collect();
            PricePath::new(prices)
        })
        .collect();
    Ok(paths)
}

/// Clamp every non-spot price into `[lower, upper]`; returns how many
/// prices moved.
pub fn clip_path(path: &mut PricePath, lower: &[f64], upper: &[f64]) -> usize {
    let mut clipped = 0;
    for row in path.prices.iter_mut().skip(1) {
        for (j, price) in row.iter_mut().enumerate() {
            let bounded = price.clamp(lower[j], upper[j]);
            if bounded != *price {
                clipped += 1;
                *price = bounded;
            }
        }
    }
    clipped
}

/// Sliding windows rebased to the table's own latest spot, dealt
/// round-robin across measures.
fn sliding_windows(
    table: &PriceTable,
    config: &ScenarioConfig,
) -> Result<Vec<Vec<PricePath>>, IngestError> {
    let paths = sliding_paths(table, config.horizon, config.stride, table.spot()?)?;
    if paths.len() < config.num_measures {
        return Err(IngestError::InsufficientHistory {
            need: config.num_measures * config.stride + config.horizon,
            have: table.num_rows(),
        });
    }
    let mut measures = vec![Vec::new(); config.num_measures];
    for (w, path) in paths.into_iter().enumerate() {
        measures[w % config.num_measures].push(path);
    }
    Ok(measures)
}

/// Paths grown from the spot by multiplying resampled blocks of historical
/// returns; measure `m` draws from stream `m` of the seeded generator.
fn bootstrap(
    table: &PriceTable,
    config: &ScenarioConfig,
) -> Result<Vec<Vec<PricePath>>, IngestError> {
    let rows = table.num_rows();
    if rows < 2 || rows - 1 < config.block_length {
        return Err(IngestError::InsufficientHistory {
            need: config.block_length + 1,
            have: rows,
        });
    }
    let a = table.num_assets();
    let returns: Vec<Vec<f64>> = (0..rows - 1)
        .map(|t| (0..a).map(|j| table.values[t + 1][j] / table.values[t][j]).collect())
        .collect();
    let spot = table.spot()?.to_vec();
    let measures: Vec<Vec<PricePath>> = (0..config.num_measures)
        .into_par_iter()
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(m as u64);
            (0..config.paths_per_measure)
                .map(|_| {
                    let mut prices = Vec::with_capacity(config.horizon + 1);
                    prices.push(spot.clone());
                    let mut step = 0;
                    while step < config.horizon {
                        let start = rng.gen_range(0..=(returns.len() - config.block_length));
                        for r in &returns[start..start + config.block_length] {
                            if step == config.horizon {
                                break;
                            }
                            let prev = prices.last().expect("seeded with the spot");
                            prices.push((0..a).map(|j| prev[j] * r[j]).collect());
                            step += 1;
                        }
                    }
                    PricePath::new(prices)
                })
                .collect()
        })
        .collect();
    Ok(measures)
}
