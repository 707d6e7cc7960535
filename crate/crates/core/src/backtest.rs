//! Out-of-sample evaluation and performance metrics.
//!
//! A trained strategy is rolled over held-out paths to produce one trade
//! record per path: the realized net profit (gross trading profit minus all
//! costs, with the model's capital constant deliberately excluded — it is a
//! price, not realized PnL) plus the positions that produced it. Records
//! aggregate into a report with the usual profit statistics, Sharpe and
//! Sortino ratios over per-path profits (zero risk-free rate, no
//! annualization), and optional regression metrics. A one-unit-per-asset
//! buy-and-hold baseline runs under the same cost model for comparison.

use crate::cost::{total_cost, CostParams};
use crate::market::{gross_profit, validate_path, MarketError, MarketSpec, PricePath};
use crate::strategy::RidgeletStrategy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    /// A ratio or score whose denominator is a variance-like quantity was
    /// requested on data where that quantity is zero.
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("length mismatch: predicted has {predicted}, target has {target}")]
    LengthMismatch { predicted: usize, target: usize },
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Realized outcome of running one strategy over one test path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub path_id: usize,
    /// Gross profit minus total costs; excludes the capital constant.
    pub net_profit: f64,
    /// Positions taken at each trading date.
    pub positions: Vec<Vec<f64>>,
}

/// Regression-quality scores for a predicted-vs-realized comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

/// Aggregate performance table. Ratio fields are absent when their
/// denominator degenerates (all profits equal, or no losses), so a report
/// can still be emitted for e.g. the zero strategy on a flat market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub num_trades: usize,
    pub overall_profit: f64,
    pub average_profit: f64,
    /// Percentage (0..=100) of trades with strictly positive net profit.
    pub pct_profitable: f64,
    pub max_profit: f64,
    pub min_profit: f64,
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    pub regression: Option<RegressionMetrics>,
}

/// Evaluate the strategy on each test path under the given cost model.
pub fn run_backtest(
    strategy: &RidgeletStrategy,
    spec: &MarketSpec,
    test_paths: &[PricePath],
    costs: &CostParams,
) -> Result<Vec<TradeRecord>, MarketError> {
    for path in test_paths {
        validate_path(spec, path)?;
    }
    test_paths
        .par_iter()
        .enumerate()
        .map(|(path_id, path)| {
            let schedule = strategy.eval_positions(path)?;
            let gross = gross_profit(&schedule, path)?;
            let cost = total_cost(costs, &schedule, path)?;
            Ok(TradeRecord { path_id, net_profit: gross - cost.total, positions: schedule.positions })
        })
        .collect()
}

/// Baseline: one unit of each asset bought at the start, liquidated at the
/// end, charged under the same cost model.
pub fn buy_and_hold(
    test_paths: &[PricePath],
    costs: &CostParams,
) -> Result<Vec<TradeRecord>, MarketError> {
    hold_constant(test_paths, costs, |_spot| 1.0)
}

/// Equal-dollar variant of the baseline: one currency unit of each asset,
/// i.e. 1/spot shares.
pub fn buy_and_hold_equal_dollar(
    test_paths: &[PricePath],
    costs: &CostParams,
) -> Result<Vec<TradeRecord>, MarketError> {
    hold_constant(test_paths, costs, |spot| 1.0 / spot)
}

fn hold_constant(
    test_paths: &[PricePath],
    costs: &CostParams,
    units: impl Fn(f64) -> f64 + Sync,
) -> Result<Vec<TradeRecord>, MarketError> {
    test_paths
        .par_iter()
        .enumerate()
        .map(|(path_id, path)| {
            let n = path.num_steps();
            let row: Vec<f64> = path.row(0).iter().map(|&s| units(s)).collect();
            let schedule = crate::market::PositionSchedule::new(vec![row; n]);
            let gross = gross_profit(&schedule, path)?;
            let cost = total_cost(costs, &schedule, path)?;
            Ok(TradeRecord { path_id, net_profit: gross - cost.total, positions: schedule.positions })
        })
        .collect()
}

/// Mean profit over its sample standard deviation (divisor n-1), zero
/// risk-free rate.
pub fn sharpe(profits: &[f64]) -> Result<f64, MetricsError> {
    if profits.len() < 2 {
        return Err(MetricsError::TooFewSamples { need: 2, got: profits.len() });
    }
    let n = profits.len() as f64;
    let mean = profits.iter().sum::<f64>() / n;
    let var = profits.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return Err(MetricsError::DegenerateVariance("all profits equal".into()));
    }
    Ok(mean / var.sqrt())
}

/// Mean profit over downside deviation: the root mean square of losses
/// against a zero target.
pub fn sortino(profits: &[f64]) -> Result<f64, MetricsError> {
    if profits.is_empty() {
        return Err(MetricsError::TooFewSamples { need: 1, got: 0 });
    }
    let n = profits.len() as f64;
    let mean = profits.iter().sum::<f64>() / n;
    let downside = (profits.iter().map(|p| p.min(0.0).powi(2)).sum::<f64>() / n).sqrt();
    if downside <= 0.0 {
        return Err(MetricsError::DegenerateVariance("no losing trades".into()));
    }
    Ok(mean / downside)
}

/// RMSE, MAE and the R² score of `predicted` against `target`.
pub fn regression_metrics(predicted: &[f64], target: &[f64]) -> Result<RegressionMetrics, MetricsError> {
    if predicted.len() != target.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            target: target.len(),
        });
    }
    if predicted.len() < 2 {
        return Err(MetricsError::TooFewSamples { need: 2, got: predicted.len() });
    }
    let n = predicted.len() as f64;
    let ss_res: f64 = predicted.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum();
    let mae = predicted.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let target_mean = target.iter().sum::<f64>() / n;
    let ss_tot: f64 = target.iter().map(|t| (t - target_mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(MetricsError::DegenerateVariance("target is constant".into()));
    }
    Ok(RegressionMetrics { rmse: (ss_res / n).sqrt(), mae, r2: 1.0 - ss_res / ss_tot })
}

/// Tabulate trade records into the aggregate report. Ratios degenerate to
/// `None` rather than failing the report.
pub fn build_report(
    records: &[TradeRecord],
    regression: Option<RegressionMetrics>,
) -> Result<BacktestReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::TooFewSamples { need: 1, got: 0 });
    }
    let profits: Vec<f64> = records.iter().map(|r| r.net_profit).collect();
    let n = profits.len() as f64;
    let overall: f64 = profits.iter().sum();
    let wins = profits.iter().filter(|&&p| p > 0.0).count();
    Ok(BacktestReport {
        num_trades: records.len(),
        overall_profit: overall,
        average_profit: overall / n,
        pct_profitable: 100.0 * wins as f64 / n,
        max_profit: profits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_profit: profits.iter().copied().fold(f64::INFINITY, f64::min),
        sharpe: sharpe(&profits).ok(),
        sortino: sortino(&profits).ok(),
        regression,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::TransactionKind;
    use crate::strategy::StrategyConfig;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_long_strategy(spec: &MarketSpec) -> RidgeletStrategy {
        let config = StrategyConfig::new(spec.num_assets, spec.num_times, 1.5, 10.0);
        let mut strategy = RidgeletStrategy::init(&config, 7).unwrap();
        strategy.delta0 = vec![1.0; spec.num_assets];
        strategy
    }

    #[test]
    fn zero_strategy_earns_nothing() {
        let spec = MarketSpec::new(2, vec![1.0], vec![30.0], vec![10.0]).unwrap();
        let config = StrategyConfig::new(1, 2, 1.0, 10.0);
        let mut strategy = RidgeletStrategy::init(&config, 3).unwrap();
        let zeros = vec![0.0; strategy.param_count()];
        strategy.set_params(&zeros).unwrap();
        let paths = vec![PricePath::new(vec![vec![10.0], vec![12.0], vec![9.0]])];
        let costs = CostParams::new(TransactionKind::PerShare, 0.01, 0.0002, 0.1 / 252.0).unwrap();
        let records = run_backtest(&strategy, &spec, &paths, &costs).unwrap();
        assert_eq!(records[0].net_profit, 0.0);
        let report = build_report(&records, None).unwrap();
        assert_eq!(report.pct_profitable, 0.0);
    }

    #[test]
    fn unit_long_on_a_rise_collects_the_move() {
        let spec = MarketSpec::new(1, vec![1.0], vec![30.0], vec![10.0]).unwrap();
        let strategy = unit_long_strategy(&spec);
        let paths = vec![PricePath::new(vec![vec![10.0], vec![12.0]])];

        let records = run_backtest(&strategy, &spec, &paths, &CostParams::zero()).unwrap();
        assert_eq!(records[0].net_profit, 2.0);

        // Per-share costs at entry and exit plus the liquidity charge.
        let costs = CostParams::new(TransactionKind::PerShare, 0.01, 0.0002, 0.0).unwrap();
        let records = run_backtest(&strategy, &spec, &paths, &costs).unwrap();
        let expected = 2.0 - (0.01 + 0.01) - 0.5 * 0.0002 * 2.0;
        assert!((records[0].net_profit - expected).abs() < 1e-12);
    }

    #[test]
    fn buy_and_hold_matches_summed_increments() {
        let paths = vec![PricePath::new(vec![vec![10.0, 20.0], vec![11.0, 18.0], vec![12.0, 15.0]])];
        let records = buy_and_hold(&paths, &CostParams::zero()).unwrap();
        assert_eq!(records[0].net_profit, -3.0);

        let flat = vec![PricePath::new(vec![vec![10.0]; 4])];
        let records = buy_and_hold(&flat, &CostParams::zero()).unwrap();
        assert_eq!(records[0].net_profit, 0.0);

        let single = vec![PricePath::new(vec![vec![10.0], vec![12.0]])];
        let records = buy_and_hold(&single, &CostParams::zero()).unwrap();
        assert_eq!(records[0].net_profit, 2.0);
    }

    #[test]
    fn equal_dollar_baseline_scales_by_spot() {
        let paths = vec![PricePath::new(vec![vec![10.0, 20.0], vec![12.0, 15.0]])];
        let records = buy_and_hold_equal_dollar(&paths, &CostParams::zero()).unwrap();
        // One dollar per asset: 2/10 - 5/20.
        assert!((records[0].net_profit - (0.2 - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn sharpe_hand_values() {
        assert_eq!(sharpe(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert!(matches!(
            sharpe(&[5.0, 5.0, 5.0]),
            Err(MetricsError::DegenerateVariance(_))
        ));
        assert!(matches!(sharpe(&[1.0]), Err(MetricsError::TooFewSamples { .. })));
    }

    #[test]
    fn sortino_hand_values() {
        assert_eq!(sortino(&[1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(sortino(&[2.0, -1.0, -1.0]).unwrap(), 0.0);
        let v = sortino(&[3.0, -1.0]).unwrap();
        assert!((v - std::f64::consts::SQRT_2).abs() < 1e-12, "{v}");
        assert!(matches!(
            sortino(&[1.0, 2.0]),
            Err(MetricsError::DegenerateVariance(_))
        ));
    }

    #[test]
    fn ratios_are_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let profits: Vec<f64> = (0..12).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let scale = rng.gen_range(1e-3..1e3);
            let scaled: Vec<f64> = profits.iter().map(|p| p * scale).collect();
            if let (Ok(a), Ok(b)) = (sharpe(&profits), sharpe(&scaled)) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "sharpe {a} vs {b}");
            }
            if let (Ok(a), Ok(b)) = (sortino(&profits), sortino(&scaled)) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "sortino {a} vs {b}");
            }
        }
    }

    #[test]
    fn regression_hand_values() {
        let m = regression_metrics(&[1.0, 3.0], &[1.0, 3.0]).unwrap();
        assert_eq!((m.rmse, m.mae, m.r2), (0.0, 0.0, 1.0));

        let m = regression_metrics(&[1.0, 3.0], &[0.0, 2.0]).unwrap();
        assert_eq!((m.rmse, m.mae, m.r2), (1.0, 1.0, 0.0));

        assert!(matches!(
            regression_metrics(&[1.0, 2.0], &[4.0, 4.0]),
            Err(MetricsError::DegenerateVariance(_))
        ));
        assert!(matches!(
            regression_metrics(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn report_orders_extremes_and_counts_wins() {
        let records: Vec<TradeRecord> = [1.5, -0.5, 0.0, 2.5]
            .iter()
            .enumerate()
            .map(|(path_id, &net_profit)| TradeRecord {
                path_id,
                net_profit,
                positions: vec![],
            })
            .collect();
        let report = build_report(&records, None).unwrap();
        assert_eq!(report.num_trades, 4);
        assert_eq!(report.overall_profit, 3.5);
        assert_eq!(report.average_profit, 0.875);
        assert_eq!(report.pct_profitable, 50.0);
        assert_eq!(report.max_profit, 2.5);
        assert_eq!(report.min_profit, -0.5);
        assert!(report.min_profit <= report.average_profit);
        assert!(report.average_profit <= report.max_profit);
        assert!(report.sharpe.is_some());
        assert!(report.sortino.is_some());
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..40)
        ) {
            let predicted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let target: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(m) = regression_metrics(&predicted, &target) {
                prop_assert!(m.rmse >= m.mae - 1e-12);
                prop_assert!(m.mae >= 0.0);
            }
        }
    }
}
