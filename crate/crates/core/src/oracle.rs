//! Brute-force ground truth for tiny markets.
//!
//! On a market small enough to enumerate, the minimal robust
//! super-replication constant can be computed exactly over a gridded
//! strategy class: positions live on the grid `{-B, -B+step, .., B}`, one
//! free position vector per information set (distinct observed price prefix)
//! per trading date. Since the capital enters the feasibility constraints
//! affinely, the cheapest feasible capital for a fixed position assignment is
//! simply the worst cell-conditional mean of `Φ - (gross profit - costs)`
//! across measures; the oracle returns the minimum of that quantity over all
//! grid strategies. This stands in for an LP solver as the reference the
//! trained strategies are judged against, with the grid resolution bounding
//! the gap to the continuous optimum.

use crate::cost::{total_cost, CostParams};
use crate::market::{
    gross_profit, validate_path, AmbiguitySet, MarketError, MarketSpec, PositionSchedule,
    ScenarioSet,
};
use crate::partition::{assign_cells, Partition};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Hard limits keeping enumeration meaningfully "tiny".
const MAX_ASSETS: usize = 2;
const MAX_TIMES: usize = 3;
const MAX_TOTAL_PATHS: usize = 32;

/// Default cap on the number of grid strategies evaluated in one call.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 20_000_000;

/// A fully enumerable market: explicit paths per measure, costs and a
/// per-path payoff table. Serializable as a JSON test fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyMarket {
    pub spec: MarketSpec,
    pub measures: Vec<ScenarioSet>,
    pub costs: CostParams,
    /// Φ values, indexed `[measure][path]`. All zeros detects arbitrage.
    pub payoff: Vec<Vec<f64>>,
}

impl TinyMarket {
    pub fn validate(&self) -> Result<(), MarketError> {
        if self.spec.num_assets > MAX_ASSETS || self.spec.num_times > MAX_TIMES {
            return Err(MarketError::InvalidConfig(format!(
                "oracle market limited to {MAX_ASSETS} assets and {MAX_TIMES} dates \
                 (got {} and {})",
                self.spec.num_assets, self.spec.num_times
            )));
        }
        if self.measures.is_empty() {
            return Err(MarketError::EmptyAmbiguitySet);
        }
        let total: usize = self.measures.iter().map(|m| m.paths.len()).sum();
        if total > MAX_TOTAL_PATHS {
            return Err(MarketError::InvalidConfig(format!(
                "oracle market limited to {MAX_TOTAL_PATHS} paths (got {total})"
            )));
        }
        if self.payoff.len() != self.measures.len() {
            return Err(MarketError::ShapeMismatch(format!(
                "payoff table covers {} measures, market has {}",
                self.payoff.len(),
                self.measures.len()
            )));
        }
        for (m, (measure, phi)) in self.measures.iter().zip(&self.payoff).enumerate() {
            if phi.len() != measure.paths.len() {
                return Err(MarketError::ShapeMismatch(format!(
                    "measure {m}: {} payoff entries for {} paths",
                    phi.len(),
                    measure.paths.len()
                )));
            }
            if phi.iter().any(|v| !v.is_finite()) {
                return Err(MarketError::NonFinite(format!("payoff table, measure {m}")));
            }
            for path in &measure.paths {
                validate_path(&self.spec, path)?;
            }
        }
        Ok(())
    }

    pub fn ambiguity(&self) -> Result<AmbiguitySet, MarketError> {
        AmbiguitySet::new(self.measures.clone())
    }
}

/// Outcome of the enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Minimal feasible capital over the gridded strategy class.
    pub c_min: f64,
    /// Positions of the minimizer, indexed `[date][info_set][asset]`.
    pub argmin_positions: Vec<Vec<Vec<f64>>>,
    /// Information sets per trading date.
    pub info_set_counts: Vec<usize>,
    pub enumeration_count: u64,
    pub grid_step: f64,
    pub budget: f64,
}

/// Comparison of a trained objective value against the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub trained_value: f64,
    pub c_min: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

/// Gap between a trained value and the oracle minimum (two-sided: the
/// penalized optimum may sit slightly below the gridded constant).
pub fn oracle_gap(trained_value: f64, oracle: &OracleResult, tolerance: f64) -> GapReport {
    let gap = trained_value - oracle.c_min;
    GapReport {
        trained_value,
        c_min: oracle.c_min,
        gap,
        tolerance,
        within_tolerance: gap.abs() <= tolerance,
    }
}

/// Occupied positive-weight cell of one measure, with member paths indexed
/// into that measure's path list.
struct OracleCell {
    paths: Vec<usize>,
    weight: f64,
}

/// Exhaustively minimize the feasible capital over grid strategies.
///
/// `budget` is the position bound B of the grid; `max_enumerations` guards
/// against combinatorial blow-up. Strategies are functions of the observed
/// price prefix: paths sharing an exact prefix share the position chosen at
/// that date, across all measures.
pub fn enumerate_min_cost(
    market: &TinyMarket,
    partition: &Partition,
    grid_step: f64,
    budget: f64,
    max_enumerations: u64,
) -> Result<OracleResult, MarketError> {
    market.validate()?;
    if !(budget.is_finite() && budget > 0.0) {
        return Err(MarketError::InvalidConfig(format!("budget must be positive (got {budget})")));
    }
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(MarketError::InvalidConfig(format!(
            "grid step must be positive (got {grid_step})"
        )));
    }
    let steps = 2.0 * budget / grid_step;
    if (steps - steps.round()).abs() > 1e-9 {
        return Err(MarketError::InvalidConfig(format!(
            "grid step {grid_step} must divide the grid width {}",
            2.0 * budget
        )));
    }
    let grid: Vec<f64> = (0..=steps.round() as usize).map(|l| -budget + l as f64 * grid_step).collect();
    let g = grid.len();

    let n = market.spec.num_times;
    let a = market.spec.num_assets;
    let all_paths: Vec<(usize, usize)> = market
        .measures
        .iter()
        .enumerate()
        .flat_map(|(m, measure)| (0..measure.paths.len()).map(move |p| (m, p)))
        .collect();

    // Information sets: distinct exact prefixes per date, shared across
    // measures. Date 0 sees only the common spot, hence one set.
    let mut info_of: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut info_set_counts = Vec::with_capacity(n);
    for date in 0..n {
        let mut keys: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        let mut assignment = Vec::with_capacity(all_paths.len());
        for &(m, p) in &all_paths {
            let prefix = market.measures[m].paths[p].prefix_flat(date);
            let key: Vec<u64> = prefix.iter().map(|x| x.to_bits()).collect();
            let next = keys.len();
            let idx = *keys.entry(key).or_insert(next);
            assignment.push(idx);
        }
        info_set_counts.push(keys.len());
        info_of.push(assignment);
    }

    // One grid slot per (date, info set, asset).
    let mut slot_base = Vec::with_capacity(n);
    let mut dof = 0usize;
    for date in 0..n {
        slot_base.push(dof);
        dof += info_set_counts[date] * a;
    }
    let total = (g as u128).checked_pow(dof as u32);
    match total {
        Some(t) if t <= max_enumerations as u128 => {}
        _ => {
            return Err(MarketError::InvalidConfig(format!(
                "enumeration budget exceeded: {g}^{dof} grid strategies > {max_enumerations}"
            )));
        }
    }
    let total = total.unwrap() as u64;

    // Positive-weight cells per measure, fixed across strategies.
    let mut cells_per_measure: Vec<Vec<OracleCell>> = Vec::with_capacity(market.measures.len());
    for measure in &market.measures {
        let terminals: Vec<Vec<f64>> =
            measure.paths.iter().map(|p| p.terminal().to_vec()).collect();
        let assignment = assign_cells(partition, &terminals, &measure.weights)?;
        cells_per_measure.push(
            assignment
                .cells
                .values()
                .filter(|cell| cell.weight > 0.0)
                .map(|cell| OracleCell { paths: cell.paths.clone(), weight: cell.weight })
                .collect(),
        );
    }

    // Cheapest feasible capital for one position assignment: the worst
    // cell-conditional mean of Φ - net profit, across measures.
    let eval = |slots: &[usize]| -> f64 {
        let position = |date: usize, global_path: usize, asset: usize| -> f64 {
            grid[slots[slot_base[date] + info_of[date][global_path] * a + asset]]
        };
        let mut worst = f64::NEG_INFINITY;
        let mut global = 0usize;
        for (m, measure) in market.measures.iter().enumerate() {
            let profits: Vec<f64> = (0..measure.paths.len())
                .map(|p| {
                    let gp = global + p;
                    let schedule = PositionSchedule::new(
                        (0..n)
                            .map(|date| (0..a).map(|j| position(date, gp, j)).collect())
                            .collect(),
                    );
                    let path = &measure.paths[p];
                    let gross = gross_profit(&schedule, path).expect("validated shapes");
                    let cost =
                        total_cost(&market.costs, &schedule, path).expect("validated shapes");
                    gross - cost.total
                })
                .collect();
            for cell in &cells_per_measure[m] {
                let num: f64 = cell
                    .paths
                    .iter()
                    .map(|&p| measure.weights[p] * (market.payoff[m][p] - profits[p]))
                    .sum();
                worst = worst.max(num / cell.weight);
            }
            global += measure.paths.len();
        }
        worst
    };

    // Parallelize over the first slot's grid value; combine in grid order so
    // ties resolve to the earliest strategy deterministically.
    let per_outer = total / g as u64;
    let candidates: Vec<(f64, Vec<usize>)> = (0..g)
        .into_par_iter()
        .map(|outer| {
            let mut slots = vec![0usize; dof];
            slots[0] = outer;
            let mut best_value = f64::INFINITY;
            let mut best_slots = slots.clone();
            for _ in 0..per_outer {
                let value = eval(&slots);
                if value < best_value {
                    best_value = value;
                    best_slots = slots.clone();
                }
                // Odometer over slots 1..dof.
                for s in (1..dof).rev() {
                    slots[s] += 1;
                    if slots[s] < g {
                        break;
                    }
                    slots[s] = 0;
                }
            }
            (best_value, best_slots)
        })
        .collect();
    let (c_min, best_slots) = candidates
        .into_iter()
        .reduce(|best, cand| if cand.0 < best.0 { cand } else { best })
        .expect("grid is non-empty");

    let argmin_positions = (0..n)
        .map(|date| {
            (0..info_set_counts[date])
                .map(|set| {
                    (0..a)
                        .map(|j| grid[best_slots[slot_base[date] + set * a + j]])
                        .collect()
                })
                .collect()
        })
        .collect();

    Ok(OracleResult {
        c_min,
        argmin_positions,
        info_set_counts,
        enumeration_count: total,
        grid_step,
        budget,
    })
}
