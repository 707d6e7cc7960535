//! Versioned on-disk snapshots of trained strategies.
//!
//! A checkpoint captures everything needed to re-instantiate a strategy
//! exactly: the market spec it was trained against, the budget and advisory
//! Lipschitz constant, the capital constant, the static first-date
//! positions, and every per-date network including its frozen input
//! normalization. The format is JSON with exact float round-tripping, so a
//! reloaded strategy is bitwise identical to the saved one; unknown fields
//! and version mismatches are rejected rather than guessed at.

use crate::market::{MarketError, MarketSpec};
use crate::strategy::{RidgeletStrategy, StrategyNet};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Current checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Serializable snapshot of a strategy and the market it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub spec: MarketSpec,
    pub budget: f64,
    pub lipschitz: f64,
    pub c: f64,
    pub delta0: Vec<f64>,
    pub nets: Vec<StrategyNet>,
}

impl Checkpoint {
    pub fn from_strategy(spec: &MarketSpec, strategy: &RidgeletStrategy) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            spec: spec.clone(),
            budget: strategy.budget,
            lipschitz: strategy.lipschitz,
            c: strategy.c,
            delta0: strategy.delta0.clone(),
            nets: strategy.nets.clone(),
        }
    }

    /// Validate and unpack into a live strategy.
    pub fn into_strategy(self) -> Result<(MarketSpec, RidgeletStrategy), CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: self.version,
                supported: CHECKPOINT_VERSION,
            });
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(MarketError::InvalidConfig(format!(
                "checkpoint budget must be positive, got {}",
                self.budget
            ))
            .into());
        }
        if self.delta0.len() != self.spec.num_assets {
            return Err(MarketError::ShapeMismatch(format!(
                "checkpoint has {} initial positions for {} assets",
                self.delta0.len(),
                self.spec.num_assets
            ))
            .into());
        }
        if self.nets.len() + 1 != self.spec.num_times {
            return Err(MarketError::ShapeMismatch(format!(
                "checkpoint has {} networks for {} trading dates",
                self.nets.len(),
                self.spec.num_times
            ))
            .into());
        }
        for (i, net) in self.nets.iter().enumerate() {
            net.validate()?;
            let expected = (i + 1) * self.spec.num_assets;
            if net.input_dim != expected {
                return Err(MarketError::ShapeMismatch(format!(
                    "network {i} reads {} inputs, expected {expected}",
                    net.input_dim
                ))
                .into());
            }
        }
        let strategy = RidgeletStrategy {
            c: self.c,
            delta0: self.delta0,
            nets: self.nets,
            budget: self.budget,
            lipschitz: self.lipschitz,
        };
        Ok((self.spec, strategy))
    }

    pub fn to_json(&self) -> Result<String, CheckpointError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self, CheckpointError> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut json = self.to_json()?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::StrategyConfig;

    fn sample() -> (MarketSpec, RidgeletStrategy) {
        let spec = MarketSpec::new(3, vec![1.0, 2.0], vec![30.0, 40.0], vec![10.0, 20.0]).unwrap();
        let config = StrategyConfig::new(2, 3, 1.0, 10.0).with_hidden_widths(vec![10, 6]);
        let mut strategy = RidgeletStrategy::init(&config, 123).unwrap();
        strategy.c = -0.3125;
        strategy.delta0 = vec![0.7071067811865476, -0.1];
        (spec, strategy)
    }

    #[test]
    fn round_trip_is_bitwise_exact() {
        let (spec, strategy) = sample();
        let checkpoint = Checkpoint::from_strategy(&spec, &strategy);
        let json = checkpoint.to_json().unwrap();
        let (spec_back, strategy_back) = Checkpoint::from_json(&json).unwrap().into_strategy().unwrap();
        assert_eq!(spec, spec_back);
        assert_eq!(strategy, strategy_back);
        assert_eq!(strategy.to_param_vector(), strategy_back.to_param_vector());
    }

    #[test]
    fn file_round_trip() {
        let (spec, strategy) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        Checkpoint::from_strategy(&spec, &strategy).save(&path).unwrap();
        let (_, back) = Checkpoint::load(&path).unwrap().into_strategy().unwrap();
        assert_eq!(strategy, back);
    }

    #[test]
    fn future_versions_are_rejected() {
        let (spec, strategy) = sample();
        let mut checkpoint = Checkpoint::from_strategy(&spec, &strategy);
        checkpoint.version = CHECKPOINT_VERSION + 1;
        let json = checkpoint.to_json().unwrap();
        let err = Checkpoint::from_json(&json).unwrap().into_strategy().unwrap_err();
        assert!(matches!(err, CheckpointError::Version { .. }));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let (spec, strategy) = sample();
        let json = Checkpoint::from_strategy(&spec, &strategy).to_json().unwrap();
        let tampered = json.replacen("\"version\"", "\"surprise\": 1, \"version\"", 1);
        assert!(Checkpoint::from_json(&tampered).is_err());
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let (spec, strategy) = sample();
        let mut checkpoint = Checkpoint::from_strategy(&spec, &strategy);
        checkpoint.delta0.push(0.0);
        assert!(checkpoint.clone().into_strategy().is_err());

        let mut checkpoint = Checkpoint::from_strategy(&spec, &strategy);
        checkpoint.nets.pop();
        assert!(checkpoint.into_strategy().is_err());
    }

    #[test]
    fn truncated_json_is_an_error() {
        let (spec, strategy) = sample();
        let json = Checkpoint::from_strategy(&spec, &strategy).to_json().unwrap();
        assert!(Checkpoint::from_json(&json[..json.len() / 2]).is_err());
    }
}
