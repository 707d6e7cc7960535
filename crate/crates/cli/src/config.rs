//! Run configuration: JSON schema, defaults, and flag overrides.
//!
//! Precedence is fixed: built-in defaults are overridden by the config file
//! (unknown keys rejected), which is overridden by command-line flags. The
//! single master seed fans out to per-stage seeds (training, scenario
//! generation, partition sampling) unless a stage pins its own; passing
//! `--seed` re-derives all three so one flag controls the whole run.

use anyhow::{bail, Context, Result};
use ridgearb::{ResampleScheme, ScenarioConfig, TransactionKind};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Schema version accepted by this build.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub config_version: u32,
    /// Master seed; stage seeds derive from it unless pinned below.
    pub seed: u64,
    /// Rayon worker threads; absent means the library default.
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    pub market: MarketSection,
    pub costs: CostSection,
    pub detection: DetectionSection,
    pub strategy: StrategySection,
    pub train: TrainSection,
    pub scenario: ScenarioSection,
    pub partition: PartitionSection,
    pub oracle: OracleSection,
    pub backtest: BacktestSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            config_version: CONFIG_VERSION,
            seed: 0,
            workers: None,
            output_dir: PathBuf::from("out"),
            market: MarketSection::default(),
            costs: CostSection::default(),
            detection: DetectionSection::default(),
            strategy: StrategySection::default(),
            train: TrainSection::default(),
            scenario: ScenarioSection::default(),
            partition: PartitionSection::default(),
            oracle: OracleSection::default(),
            backtest: BacktestSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketSection {
    /// Fractional widening of historical min/max into price bounds.
    pub bounds_margin: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        Self { bounds_margin: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub transaction_kind: TransactionKind,
    pub lambda_t: f64,
    pub lambda_l: f64,
    pub lambda_b: f64,
}

impl Default for CostSection {
    fn default() -> Self {
        Self { transaction_kind: TransactionKind::None, lambda_t: 0.0, lambda_l: 0.0, lambda_b: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    /// A final objective value below minus this threshold is called an
    /// arbitrage.
    pub tolerance: f64,
}

impl Default for DetectionSection {
    fn default() -> Self {
        Self { tolerance: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategySection {
    pub budget: f64,
    pub lipschitz: f64,
    /// Hidden widths of every per-date net; absent uses the asset-scaled
    /// library default.
    pub hidden_widths: Option<Vec<usize>>,
    /// relu, silu, gelu, mish, tanh, sigmoid or hybrid.
    pub activation: String,
}

impl Default for StrategySection {
    fn default() -> Self {
        Self { budget: 1.0, lipschitz: 10.0, hidden_widths: None, activation: "hybrid".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub k_schedule: Vec<f64>,
    pub steps_per_k: usize,
    pub batch: Option<usize>,
    pub grad_clip: Option<f64>,
    pub capital_bound: Option<f64>,
    pub deterministic_reduce: bool,
    /// Pinned training seed; absent derives from the master seed.
    pub seed: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: None,
            k_schedule: vec![10.0, 100.0, 1000.0],
            steps_per_k: 2000,
            batch: None,
            grad_clip: None,
            capital_bound: None,
            deterministic_reduce: true,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub horizon: usize,
    pub stride: usize,
    pub method: ResampleScheme,
    pub num_measures: usize,
    pub paths_per_measure: usize,
    pub block_length: usize,
    /// Pinned scenario seed; absent derives from the master seed.
    pub seed: Option<u64>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            horizon: 2,
            stride: 1,
            method: ResampleScheme::SlidingWindow,
            num_measures: 1,
            paths_per_measure: 64,
            block_length: 5,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSection {
    /// Random box corners discretizing the terminal state space.
    pub num_corners: usize,
    /// Pinned partition seed; absent derives from the master seed.
    pub seed: Option<u64>,
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self { num_corners: 8, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub grid_step: f64,
    pub max_enumerations: u64,
    /// Two-sided tolerance when comparing a trained value to the oracle.
    pub gap_tolerance: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            grid_step: 0.5,
            max_enumerations: ridgearb::oracle::DEFAULT_ENUMERATION_BUDGET,
            gap_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestSection {
    /// Report the one-dollar-per-asset baseline instead of one unit.
    pub equal_dollar: bool,
    /// Window spacing over the test table; absent reuses the scenario
    /// stride.
    pub stride: Option<usize>,
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self { equal_dollar: false, stride: None }
    }
}

/// Stage seeds after resolution, recorded in every manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSeeds {
    pub master: u64,
    pub train: u64,
    pub scenario: u64,
    pub partition: u64,
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub deterministic_reduce: bool,
    pub activation: Option<String>,
}

impl RunConfig {
    /// Defaults, file, flags — in that order.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str::<RunConfig>(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
            config.train.seed = None;
            config.scenario.seed = None;
            config.partition.seed = None;
        }
        if let Some(out) = &overrides.out {
            config.output_dir = out.clone();
        }
        if overrides.deterministic_reduce {
            config.train.deterministic_reduce = true;
        }
        if let Some(activation) = &overrides.activation {
            config.strategy.activation = activation.clone();
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.config_version != CONFIG_VERSION {
            bail!(
                "config_version {} is not supported (this build reads {CONFIG_VERSION})",
                self.config_version
            );
        }
        if !(self.strategy.budget.is_finite() && self.strategy.budget > 0.0) {
            bail!("strategy.budget must be positive, got {}", self.strategy.budget);
        }
        if !(self.market.bounds_margin.is_finite() && self.market.bounds_margin >= 0.0) {
            bail!("market.bounds_margin must be non-negative, got {}", self.market.bounds_margin);
        }
        if !(self.detection.tolerance.is_finite() && self.detection.tolerance >= 0.0) {
            bail!("detection.tolerance must be non-negative, got {}", self.detection.tolerance);
        }
        Ok(())
    }

    pub fn seeds(&self) -> ResolvedSeeds {
        ResolvedSeeds {
            master: self.seed,
            train: self.train.seed.unwrap_or(self.seed),
            scenario: self.scenario.seed.unwrap_or(self.seed.wrapping_add(1)),
            partition: self.partition.seed.unwrap_or(self.seed.wrapping_add(2)),
        }
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            horizon: self.scenario.horizon,
            stride: self.scenario.stride,
            method: self.scenario.method,
            num_measures: self.scenario.num_measures,
            paths_per_measure: self.scenario.paths_per_measure,
            block_length: self.scenario.block_length,
            seed: self.seeds().scenario,
        }
    }

    pub fn cost_params(&self) -> Result<ridgearb::CostParams> {
        ridgearb::CostParams::new(
            self.costs.transaction_kind,
            self.costs.lambda_t,
            self.costs.lambda_l,
            self.costs.lambda_b,
        )
        .context("costs section")
    }

    pub fn train_config(&self) -> ridgearb::TrainConfig {
        let mut tc = ridgearb::TrainConfig::new(self.seeds().train);
        tc.learning_rate = self.train.learning_rate;
        tc.k_schedule = self.train.k_schedule.clone();
        tc.steps_per_k = self.train.steps_per_k;
        tc.batch = self.train.batch;
        tc.grad_clip = self.train.grad_clip;
        tc.capital_bound = self.train.capital_bound;
        tc.deterministic_reduce = self.train.deterministic_reduce;
        tc
    }

    pub fn strategy_config(&self, num_assets: usize, num_times: usize) -> ridgearb::StrategyConfig {
        let mut sc = ridgearb::StrategyConfig::new(
            num_assets,
            num_times,
            self.strategy.budget,
            self.strategy.lipschitz,
        );
        if let Some(widths) = &self.strategy.hidden_widths {
            sc = sc.with_hidden_widths(widths.clone());
        }
        sc.with_activation(&self.strategy.activation)
    }
}
