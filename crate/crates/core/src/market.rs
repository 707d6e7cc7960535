//! Bounded multi-asset discrete-time market: spec, paths, measures and the
//! gross trading-gain formula.
//!
//! A market has `a` assets observed at a deterministic spot date plus `n`
//! future trading dates. Each asset price is confined to a known finite range,
//! so the set of admissible paths is a product of intervals. Probability
//! measures over paths are represented as finitely supported empirical
//! measures (weighted path sets), and model ambiguity as a finite collection
//! of such measures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by market-geometry validation and path algebra.
#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("asset {asset}: bounds must satisfy lower < upper (got {lower} >= {upper})")]
    InvalidBounds { asset: usize, lower: f64, upper: f64 },
    #[error("asset {asset}: spot {spot} outside bounds [{lower}, {upper}]")]
    SpotOutOfBounds { asset: usize, spot: f64, lower: f64, upper: f64 },
    #[error("price {value} at (time {time}, asset {asset}) outside bounds [{lower}, {upper}]")]
    BoundViolation { time: usize, asset: usize, value: f64, lower: f64, upper: f64 },
    #[error("path row 0 disagrees with the spot at asset {asset} ({found} != {expected})")]
    SpotMismatch { asset: usize, found: f64, expected: f64 },
    #[error("weights must be non-negative and sum to 1 (sum = {0})")]
    BadWeights(f64),
    #[error("a scenario set needs at least one path")]
    EmptyScenarioSet,
    #[error("an ambiguity set needs at least one measure")]
    EmptyAmbiguitySet,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("terminal price {value} of path {path}, asset {asset} outside bounds [{lower}, {upper}]")]
    TerminalOutOfBounds { path: usize, asset: usize, value: f64, lower: f64, upper: f64 },
}

/// Bounded market geometry: asset count, time grid, per-asset price ranges
/// and the observed spot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    /// Number of assets.
    pub num_assets: usize,
    /// Number of future trading dates (the spot date is extra).
    pub num_times: usize,
    /// Per-asset lower price bound.
    pub lower_bounds: Vec<f64>,
    /// Per-asset upper price bound.
    pub upper_bounds: Vec<f64>,
    /// Observed spot prices at the initial date.
    pub spot: Vec<f64>,
}

impl MarketSpec {
    /// Build a spec, validating that bounds are ordered and contain the spot.
    pub fn new(
        num_times: usize,
        lower_bounds: Vec<f64>,
        upper_bounds: Vec<f64>,
        spot: Vec<f64>,
    ) -> Result<Self, MarketError> {
        let a = spot.len();
        if a == 0 || num_times == 0 {
            return Err(MarketError::ShapeMismatch(
                "need at least one asset and one trading date".into(),
            ));
        }
        if lower_bounds.len() != a || upper_bounds.len() != a {
            return Err(MarketError::ShapeMismatch(format!(
                "bounds length {}/{} != asset count {}",
                lower_bounds.len(),
                upper_bounds.len(),
                a
            )));
        }
        for j in 0..a {
            if !(lower_bounds[j].is_finite() && upper_bounds[j].is_finite() && spot[j].is_finite())
            {
                return Err(MarketError::NonFinite(format!("asset {j} bounds/spot")));
            }
            if lower_bounds[j] >= upper_bounds[j] {
                return Err(MarketError::InvalidBounds {
                    asset: j,
                    lower: lower_bounds[j],
                    upper: upper_bounds[j],
                });
            }
            if spot[j] < lower_bounds[j] || spot[j] > upper_bounds[j] {
                return Err(MarketError::SpotOutOfBounds {
                    asset: j,
                    spot: spot[j],
                    lower: lower_bounds[j],
                    upper: upper_bounds[j],
                });
            }
        }
        Ok(Self { num_assets: a, num_times, lower_bounds, upper_bounds, spot })
    }

    /// Spec with the same bounds for every asset.
    pub fn uniform_bounds(
        num_times: usize,
        lower: f64,
        upper: f64,
        spot: Vec<f64>,
    ) -> Result<Self, MarketError> {
        let a = spot.len();
        Self::new(num_times, vec![lower; a], vec![upper; a], spot)
    }
}

/// One realized price path. Row 0 is the spot vector, row `i` holds the
/// prices at the i-th trading date, so there are `n + 1` rows of `a` prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    pub prices: Vec<Vec<f64>>,
}

impl PricePath {
    pub fn new(prices: Vec<Vec<f64>>) -> Self {
        Self { prices }
    }

    /// Number of trading dates (rows minus the spot row).
    pub fn num_steps(&self) -> usize {
        self.prices.len().saturating_sub(1)
    }

    pub fn num_assets(&self) -> usize {
        self.prices.first().map_or(0, Vec::len)
    }

    /// Price of asset `j` at time index `i` (0 = spot).
    pub fn price(&self, i: usize, j: usize) -> f64 {
        self.prices[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.prices[i]
    }

    /// Terminal price vector.
    pub fn terminal(&self) -> &[f64] {
        self.prices.last().expect("path has at least the spot row")
    }

    /// Observed prefix `(S_1, .., S_i)` flattened time-major, excluding the
    /// spot row. This is the input seen by the position network for date `i`.
    pub fn prefix_flat(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(i * self.num_assets());
        for row in &self.prices[1..=i] {
            out.extend_from_slice(row);
        }
        out
    }
}

/// Trading positions: row `i` holds the per-asset position taken at the i-th
/// trading date, for `i = 0..n-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSchedule {
    pub positions: Vec<Vec<f64>>,
}

impl PositionSchedule {
    pub fn new(positions: Vec<Vec<f64>>) -> Self {
        Self { positions }
    }

    pub fn zeros(num_times: usize, num_assets: usize) -> Self {
        Self { positions: vec![vec![0.0; num_assets]; num_times] }
    }

    pub fn num_times(&self) -> usize {
        self.positions.len()
    }

    pub fn num_assets(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// Largest absolute position in the schedule.
    pub fn max_abs(&self) -> f64 {
        self.positions
            .iter()
            .flat_map(|row| row.iter())
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// A finitely supported empirical measure: weighted price paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub paths: Vec<PricePath>,
    pub weights: Vec<f64>,
}

impl ScenarioSet {
    const WEIGHT_TOL: f64 = 1e-12;

    /// Build a measure from paths and explicit weights. Weights must be
    /// non-negative and sum to 1 within 1e-12.
    pub fn new(paths: Vec<PricePath>, weights: Vec<f64>) -> Result<Self, MarketError> {
        if paths.is_empty() {
            return Err(MarketError::EmptyScenarioSet);
        }
        if paths.len() != weights.len() {
            return Err(MarketError::ShapeMismatch(format!(
                "{} paths vs {} weights",
                paths.len(),
                weights.len()
            )));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite())
            || (sum - 1.0).abs() > Self::WEIGHT_TOL
        {
            return Err(MarketError::BadWeights(sum));
        }
        Ok(Self { paths, weights })
    }

    /// Uniformly weighted measure over the given paths.
    pub fn uniform(paths: Vec<PricePath>) -> Result<Self, MarketError> {
        let n = paths.len();
        if n == 0 {
            return Err(MarketError::EmptyScenarioSet);
        }
        let w = 1.0 / n as f64;
        // Exact renormalization keeps the sum at 1 even when 1/n is inexact.
        let mut weights = vec![w; n];
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::WEIGHT_TOL {
            for v in &mut weights {
                *v /= sum;
            }
        }
        Self::new(paths, weights)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// The finite ambiguity set: a non-empty collection of scenario measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySet {
    pub measures: Vec<ScenarioSet>,
}

impl AmbiguitySet {
    pub fn new(measures: Vec<ScenarioSet>) -> Result<Self, MarketError> {
        if measures.is_empty() {
            return Err(MarketError::EmptyAmbiguitySet);
        }
        Ok(Self { measures })
    }

    /// Single-measure ambiguity set.
    pub fn single(measure: ScenarioSet) -> Self {
        Self { measures: vec![measure] }
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    /// Iterate over every path in every measure.
    pub fn all_paths(&self) -> impl Iterator<Item = &PricePath> {
        self.measures.iter().flat_map(|m| m.paths.iter())
    }

    /// Validate every path in every measure against the spec.
    pub fn validate(&self, spec: &MarketSpec) -> Result<(), MarketError> {
        for path in self.all_paths() {
            validate_path(spec, path)?;
        }
        Ok(())
    }
}

/// Check a path against the spec: shapes, the spot row, and per-entry bounds.
/// Reports the first violating (time, asset) pair.
pub fn validate_path(spec: &MarketSpec, path: &PricePath) -> Result<(), MarketError> {
    if path.prices.len() != spec.num_times + 1 {
        return Err(MarketError::ShapeMismatch(format!(
            "path has {} rows, expected {}",
            path.prices.len(),
            spec.num_times + 1
        )));
    }
    for (i, row) in path.prices.iter().enumerate() {
        if row.len() != spec.num_assets {
            return Err(MarketError::ShapeMismatch(format!(
                "row {} has {} assets, expected {}",
                i,
                row.len(),
                spec.num_assets
            )));
        }
    }
    for j in 0..spec.num_assets {
        if path.prices[0][j] != spec.spot[j] {
            return Err(MarketError::SpotMismatch {
                asset: j,
                found: path.prices[0][j],
                expected: spec.spot[j],
            });
        }
    }
    for i in 1..=spec.num_times {
        for j in 0..spec.num_assets {
            let v = path.prices[i][j];
            if !v.is_finite() {
                return Err(MarketError::NonFinite(format!("price at ({i}, {j})")));
            }
            if v < spec.lower_bounds[j] || v > spec.upper_bounds[j] {
                return Err(MarketError::BoundViolation {
                    time: i,
                    asset: j,
                    value: v,
                    lower: spec.lower_bounds[j],
                    upper: spec.upper_bounds[j],
                });
            }
        }
    }
    Ok(())
}

/// Gross trading gain of a schedule along a path: the sum over assets and
/// dates of position times subsequent price increment. Linear in the schedule.
pub fn gross_profit(schedule: &PositionSchedule, path: &PricePath) -> Result<f64, MarketError> {
    let n = schedule.num_times();
    let a = schedule.num_assets();
    if path.prices.len() != n + 1 {
        return Err(MarketError::ShapeMismatch(format!(
            "schedule has {} rows but path has {} rows (expected {})",
            n,
            path.prices.len(),
            n + 1
        )));
    }
    if path.num_assets() != a {
        return Err(MarketError::ShapeMismatch(format!(
            "schedule has {} assets but path has {}",
            a,
            path.num_assets()
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        let now = &path.prices[i];
        let next = &path.prices[i + 1];
        let pos = &schedule.positions[i];
        for j in 0..a {
            total += pos[j] * (next[j] - now[j]);
        }
    }
    Ok(total)
}
