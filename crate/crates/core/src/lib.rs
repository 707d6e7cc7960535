//! Robust statistical arbitrage detection with ridgelet-parameterized
//! trading strategies.
//!
//! The crate is organized around a pipeline:
//!
//! 1. [`market`] defines price paths, position schedules, scenario sets, and
//!    the ambiguity set of candidate measures.
//! 2. [`cost`] prices the frictions of executing a schedule.
//! 3. [`strategy`] parameterizes non-anticipative schedules with per-date
//!    shallow networks built on [`activation`] functions.
//! 4. [`partition`] generates the random coarse partitions that discretize
//!    conditional information.
//! 5. [`objective`] assembles the penalized super-replication functional and
//!    its gradient; [`trainer`] minimizes it over a penalty ladder.
//! 6. [`oracle`] brute-forces tiny markets for ground truth; [`backtest`]
//!    scores trained strategies out of sample; [`ingest`] turns CSV price
//!    history into scenario sets; [`checkpoint`] round-trips trained state.

pub mod activation;
pub mod backtest;
pub mod checkpoint;
pub mod cost;
pub mod ingest;
pub mod market;
pub mod objective;
pub mod oracle;
pub mod partition;
pub mod strategy;
pub mod trainer;

pub use activation::{Activation, BaseActivation};
pub use backtest::{build_report, buy_and_hold, buy_and_hold_equal_dollar, regression_metrics, run_backtest, sharpe, sortino, BacktestReport, MetricsError, RegressionMetrics, TradeRecord};
pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use cost::{CostBreakdown, CostParams, Rate, TransactionKind};
pub use ingest::{build_scenarios, clip_path, estimate_bounds, load_prices, load_prices_from_reader, sliding_paths, spec_from_table, IngestError, PriceTable, ResampleScheme, ScenarioCache, ScenarioConfig, ScenarioStats};
pub use market::{
    gross_profit, validate_path, AmbiguitySet, MarketError, MarketSpec, PositionSchedule,
    PricePath, ScenarioSet,
};
pub use objective::{
    detect_arbitrage, penalized_gradient, penalized_value, strategy_payoff, verify_arbitrage,
    BetaKind, EvalOptions, ObjectiveReport, Payoff, PenaltyConfig, VerificationReport, Verdict,
};
pub use oracle::{enumerate_min_cost, oracle_gap, GapReport, OracleResult, TinyMarket};
pub use partition::{
    assign_cells, conditional_expectation, generate_partition, Cell, CellAssignment, Partition,
};
pub use strategy::{
    ConstraintReport, GradientBundle, InputNorm, RidgeletLayer, RidgeletStrategy,
    StrategyConfig, StrategyNet,
};
pub use trainer::{adam_step, train, AdamState, ProjectionBounds, TrainConfig, TrainError, TrainResult};
