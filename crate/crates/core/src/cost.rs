//! Trading-cost families and the total execution cost of a schedule.
//!
//! Three cost families apply along a path:
//! - transaction costs, charged per trade increment, either per share
//!   (`rate * |trade|`) or proportional (`rate * price * |trade|`);
//! - liquidity costs from the bid-ask spread, `0.5 * spread * |trade|`;
//! - borrowing costs while short, `rate * max(-position, 0) * price`.
//!
//! Transaction and liquidity costs act on trade increments with the
//! convention that the position is zero before the first date and forced to
//! zero after the last, so entering at the spot date and liquidating at the
//! final date are both charged. Borrowing is charged on each held position at
//! the price of the date it is held from.

use crate::market::{MarketError, PositionSchedule, PricePath};
use serde::{Deserialize, Serialize};

/// Transaction-cost family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransactionKind {
    /// No transaction costs.
    None,
    /// Fixed cost per unit traded.
    PerShare,
    /// Cost proportional to traded notional.
    Proportional,
}

/// A cost rate: one scalar broadcast over all assets and dates, or an
/// explicit per-date-per-asset matrix (rows = time indices 0..=n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rate {
    Scalar(f64),
    PerAssetTime(Vec<Vec<f64>>),
}

impl Rate {
    pub fn get(&self, time: usize, asset: usize) -> f64 {
        match self {
            Rate::Scalar(v) => *v,
            Rate::PerAssetTime(m) => m[time][asset],
        }
    }

    fn is_non_negative(&self) -> bool {
        match self {
            Rate::Scalar(v) => *v >= 0.0 && v.is_finite(),
            Rate::PerAssetTime(m) => {
                m.iter().flat_map(|r| r.iter()).all(|v| *v >= 0.0 && v.is_finite())
            }
        }
    }
}

impl From<f64> for Rate {
    fn from(v: f64) -> Self {
        Rate::Scalar(v)
    }
}

/// Cost parameters for one market: transaction kind and the three rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub transaction_kind: TransactionKind,
    pub lambda_t: Rate,
    pub lambda_l: Rate,
    pub lambda_b: Rate,
}

impl CostParams {
    /// Scalar rates shared across assets and dates.
    pub fn new(
        transaction_kind: TransactionKind,
        lambda_t: f64,
        lambda_l: f64,
        lambda_b: f64,
    ) -> Result<Self, MarketError> {
        Self::with_rates(transaction_kind, lambda_t.into(), lambda_l.into(), lambda_b.into())
    }

    /// Full constructor accepting per-asset-per-time rate matrices.
    pub fn with_rates(
        transaction_kind: TransactionKind,
        lambda_t: Rate,
        lambda_l: Rate,
        lambda_b: Rate,
    ) -> Result<Self, MarketError> {
        for (name, r) in [("lambda_t", &lambda_t), ("lambda_l", &lambda_l), ("lambda_b", &lambda_b)]
        {
            if !r.is_non_negative() {
                return Err(MarketError::NonFinite(format!(
                    "cost rate {name} must be finite and non-negative"
                )));
            }
        }
        Ok(Self { transaction_kind, lambda_t, lambda_l, lambda_b })
    }

    /// Frictionless market: zero costs everywhere.
    pub fn zero() -> Self {
        Self {
            transaction_kind: TransactionKind::None,
            lambda_t: Rate::Scalar(0.0),
            lambda_l: Rate::Scalar(0.0),
            lambda_b: Rate::Scalar(0.0),
        }
    }
}

/// Itemized cost totals for one schedule on one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub transaction: f64,
    pub liquidity: f64,
    pub borrowing: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn zero() -> Self {
        Self { transaction: 0.0, liquidity: 0.0, borrowing: 0.0, total: 0.0 }
    }
}

/// Transaction cost for a single trade at a single price.
pub fn transaction_cost(kind: TransactionKind, lambda_t: f64, price: f64, trade: f64) -> f64 {
    match kind {
        TransactionKind::None => 0.0,
        TransactionKind::PerShare => lambda_t * trade.abs(),
        TransactionKind::Proportional => lambda_t * price * trade.abs(),
    }
}

/// Liquidity cost of crossing half the bid-ask spread on a trade.
pub fn liquidity_cost(lambda_l: f64, trade: f64) -> f64 {
    0.5 * lambda_l * trade.abs()
}

/// Borrowing cost of holding a (possibly short) position for one period.
pub fn borrowing_cost(lambda_b: f64, price: f64, position: f64) -> f64 {
    lambda_b * (-position).max(0.0) * price
}

/// Total execution cost of a schedule along a path, itemized by family.
///
/// Trades are the increments between consecutive positions, with the
/// implicit zero position before the first date and after liquidation at the
/// last date. Borrowing is charged per held position row.
pub fn total_cost(
    params: &CostParams,
    schedule: &PositionSchedule,
    path: &PricePath,
) -> Result<CostBreakdown, MarketError> {
    let n = schedule.num_times();
    let a = schedule.num_assets();
    if path.prices.len() != n + 1 || path.num_assets() != a {
        return Err(MarketError::ShapeMismatch(format!(
            "schedule {}x{} vs path {}x{}",
            n,
            a,
            path.prices.len(),
            path.num_assets()
        )));
    }
    let mut out = CostBreakdown::zero();
    for i in 0..=n {
        let price_row = path.row(i);
        for j in 0..a {
            let prev = if i == 0 { 0.0 } else { schedule.positions[i - 1][j] };
            let curr = if i == n { 0.0 } else { schedule.positions[i][j] };
            let trade = curr - prev;
            out.transaction += transaction_cost(
                params.transaction_kind,
                params.lambda_t.get(i, j),
                price_row[j],
                trade,
            );
            out.liquidity += liquidity_cost(params.lambda_l.get(i, j), trade);
            if i < n {
                out.borrowing += borrowing_cost(params.lambda_b.get(i, j), price_row[j], curr);
            }
        }
    }
    out.total = out.transaction + out.liquidity + out.borrowing;
    Ok(out)
}

/// Subgradient of the total cost with respect to every position entry,
/// returned as an n x a matrix. The absolute-value kinks use subgradient 0
/// at zero, and `max(-x, 0)` uses 0 at zero.
pub fn total_cost_gradient(
    params: &CostParams,
    schedule: &PositionSchedule,
    path: &PricePath,
) -> Result<Vec<Vec<f64>>, MarketError> {
    let n = schedule.num_times();
    let a = schedule.num_assets();
    if path.prices.len() != n + 1 || path.num_assets() != a {
        return Err(MarketError::ShapeMismatch(format!(
            "schedule {}x{} vs path {}x{}",
            n,
            a,
            path.prices.len(),
            path.num_assets()
        )));
    }
    let sign = |x: f64| {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    // Marginal trade cost factor at date i for asset j.
    let factor = |i: usize, j: usize| -> f64 {
        let t = match params.transaction_kind {
            TransactionKind::None => 0.0,
            TransactionKind::PerShare => params.lambda_t.get(i, j),
            TransactionKind::Proportional => params.lambda_t.get(i, j) * path.price(i, j),
        };
        t + 0.5 * params.lambda_l.get(i, j)
    };
    let mut grad = vec![vec![0.0; a]; n];
    for i in 0..n {
        for j in 0..a {
            let prev = if i == 0 { 0.0 } else { schedule.positions[i - 1][j] };
            let curr = schedule.positions[i][j];
            let next = if i + 1 == n { 0.0 } else { schedule.positions[i + 1][j] };
            let trade_in = curr - prev;
            let trade_out = next - curr;
            let mut g = factor(i, j) * sign(trade_in) - factor(i + 1, j) * sign(trade_out);
            if curr < 0.0 {
                g -= params.lambda_b.get(i, j) * path.price(i, j);
            }
            grad[i][j] = g;
        }
    }
    Ok(grad)
}
