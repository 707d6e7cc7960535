//! Minimization of the penalized objective over strategy parameters.
//!
//! Training runs an adaptive-moment (Adam) optimizer over the canonical flat
//! parameter vector, escalating the penalization constant through a ladder
//! (default 10 → 100 → 1000) with warm starts, so the minimizer tracks the
//! `k → ∞` limit that recovers the robust super-replication value. After each
//! step the capital is projected onto its closed bound and the spot-date
//! position onto a band strictly inside the budget, keeping every emitted
//! position inside the open budget band.
//!
//! Input-normalization statistics are fitted once from the pooled training
//! paths before the first step and frozen; the objective is then a fixed
//! deterministic function of the parameters (up to optional minibatching).

use crate::cost::CostParams;
use crate::market::{AmbiguitySet, MarketError, ScenarioSet};
use crate::objective::{
    penalized_gradient, penalized_value, EvalOptions, ObjectiveReport, Payoff, PenaltyConfig,
};
use crate::partition::Partition;
use crate::strategy::{RidgeletStrategy, StrategyConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Margin keeping the projected spot-date position strictly inside the
/// budget band, matching the strict bound on squashed positions.
const DELTA0_MARGIN: f64 = 1.0 - 1e-9;

/// Relative objective change over the trailing window below which a run
/// counts as converged.
const CONVERGENCE_TOL: f64 = 1e-5;
const CONVERGENCE_WINDOW: usize = 100;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("objective diverged to a non-finite value at step {step}")]
    Diverged { step: usize, trace: Vec<f64> },
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Step size; `None` picks 1e-4 for ten or more assets, 1e-3 otherwise.
    pub learning_rate: Option<f64>,
    /// Strictly increasing penalization ladder.
    pub k_schedule: Vec<f64>,
    pub steps_per_k: usize,
    /// Paths per step per measure; `None` uses every path.
    pub batch: Option<usize>,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Optional max-norm clip applied to the gradient before each step.
    pub grad_clip: Option<f64>,
    /// Projection bound for the capital; `None` uses the budget.
    pub capital_bound: Option<f64>,
    pub deterministic_reduce: bool,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            learning_rate: None,
            k_schedule: vec![10.0, 100.0, 1000.0],
            steps_per_k: 2000,
            batch: None,
            seed,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: None,
            capital_bound: None,
            deterministic_reduce: true,
        }
    }

    pub fn resolved_learning_rate(&self, num_assets: usize) -> f64 {
        self.learning_rate.unwrap_or(if num_assets >= 10 { 1e-4 } else { 1e-3 })
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.k_schedule.is_empty() {
            return Err(MarketError::InvalidConfig("k schedule must be non-empty".into()));
        }
        if self.k_schedule.windows(2).any(|w| w[1] <= w[0])
            || self.k_schedule.iter().any(|k| !(k.is_finite() && *k > 0.0))
        {
            return Err(MarketError::InvalidConfig(
                "k schedule must be positive and strictly increasing".into(),
            ));
        }
        if self.steps_per_k == 0 {
            return Err(MarketError::InvalidConfig("steps_per_k must be positive".into()));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(MarketError::InvalidConfig(format!(
                    "learning rate must be positive (got {lr})"
                )));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(MarketError::InvalidConfig(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(MarketError::InvalidConfig("eps must be positive".into()));
        }
        if self.batch == Some(0) {
            return Err(MarketError::InvalidConfig("batch must be positive".into()));
        }
        if let Some(clip) = self.grad_clip {
            if !(clip.is_finite() && clip > 0.0) {
                return Err(MarketError::InvalidConfig("grad_clip must be positive".into()));
            }
        }
        if let Some(cb) = self.capital_bound {
            if !(cb.is_finite() && cb > 0.0) {
                return Err(MarketError::InvalidConfig("capital_bound must be positive".into()));
            }
        }
        Ok(())
    }
}

/// First and second moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// Projection bounds applied after each optimizer step: capital onto its
/// closed interval, spot-date positions strictly inside the budget band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionBounds {
    pub capital: f64,
    pub budget: f64,
    pub num_assets: usize,
}

/// One bias-corrected adaptive-moment update followed by the projection.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bounds: &ProjectionBounds,
) -> Result<(), MarketError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(MarketError::ShapeMismatch(format!(
            "adam: {} params vs {} grads vs {} state",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(MarketError::NonFinite("gradient passed to the optimizer".into()));
    }
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    params[RidgeletStrategy::C_INDEX] =
        params[RidgeletStrategy::C_INDEX].clamp(-bounds.capital, bounds.capital);
    let band = bounds.budget * DELTA0_MARGIN;
    for j in 0..bounds.num_assets {
        let idx = RidgeletStrategy::delta0_index(j);
        params[idx] = params[idx].clamp(-band, band);
    }
    Ok(())
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub strategy: RidgeletStrategy,
    /// Objective value at the evaluation point of every step, over all
    /// stages (length = stages × steps_per_k).
    pub trace: Vec<f64>,
    /// Full-batch evaluation of the stage-final strategy, one per k.
    pub stage_reports: Vec<ObjectiveReport>,
    pub wall_time_secs: f64,
    pub converged: bool,
}

fn subsample(measure: &ScenarioSet, batch: usize, rng: &mut ChaCha8Rng) -> ScenarioSet {
    if batch >= measure.paths.len() {
        return measure.clone();
    }
    let picked = rand::seq::index::sample(rng, measure.paths.len(), batch);
    let paths: Vec<_> = picked.iter().map(|i| measure.paths[i].clone()).collect();
    let mut weights: Vec<f64> = picked.iter().map(|i| measure.weights[i]).collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in &mut weights {
            *w /= total;
        }
    } else {
        weights = vec![1.0 / batch as f64; batch];
    }
    ScenarioSet::new(paths, weights).expect("subsampled measure is well-formed")
}

/// Train a fresh strategy against the ambiguity set.
///
/// Builds the strategy from `strategy_config` with the config seed, fits the
/// input normalization from the pooled paths of all measures, then runs the
/// k ladder with warm starts. The trace records the objective at each step's
/// evaluation point (before the update).
pub fn train(
    strategy_config: &StrategyConfig,
    ambiguity: &AmbiguitySet,
    partition: &Partition,
    phi: &Payoff,
    costs: &CostParams,
    config: &TrainConfig,
) -> Result<TrainResult, TrainError> {
    config.validate()?;
    let start = std::time::Instant::now();
    let mut strategy = RidgeletStrategy::init(strategy_config, config.seed)?;
    let pooled: Vec<_> =
        ambiguity.measures.iter().flat_map(|m| m.paths.iter().cloned()).collect();
    if strategy.num_times() > 1 {
        strategy.fit_input_norm(&pooled)?;
    }

    let lr = config.resolved_learning_rate(strategy.num_assets());
    let options = EvalOptions { deterministic_reduce: config.deterministic_reduce };
    let bounds = ProjectionBounds {
        capital: config.capital_bound.unwrap_or(strategy.budget),
        budget: strategy.budget,
        num_assets: strategy.num_assets(),
    };
    let mut params = strategy.to_param_vector();
    let mut adam = AdamState::new(params.len());
    let mut batch_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut trace = Vec::with_capacity(config.k_schedule.len() * config.steps_per_k);
    let mut stage_reports = Vec::with_capacity(config.k_schedule.len());

    for &k in &config.k_schedule {
        let penalty = PenaltyConfig::new(k)?;
        for _ in 0..config.steps_per_k {
            let step_ambiguity; // holds the minibatch for this step if any
            let eval_ambiguity = match config.batch {
                Some(b) => {
                    let measures = ambiguity
                        .measures
                        .iter()
                        .map(|m| subsample(m, b, &mut batch_rng))
                        .collect();
                    step_ambiguity = AmbiguitySet::new(measures)?;
                    &step_ambiguity
                }
                None => ambiguity,
            };
            let (report, mut grad) = penalized_gradient(
                &strategy, eval_ambiguity, partition, &penalty, phi, costs, &options,
            )?;
            if !report.value.is_finite() {
                return Err(TrainError::Diverged { step: trace.len(), trace });
            }
            trace.push(report.value);
            if let Some(clip) = config.grad_clip {
                let norm: f64 = grad.values.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    grad.scale(clip / norm);
                }
            }
            adam_step(
                &mut params,
                &grad.values,
                &mut adam,
                lr,
                config.beta1,
                config.beta2,
                config.eps,
                &bounds,
            )?;
            strategy.set_params(&params)?;
        }
        let report = penalized_value(&strategy, ambiguity, partition, &penalty, phi, costs)?;
        if !report.value.is_finite() {
            return Err(TrainError::Diverged { step: trace.len(), trace });
        }
        stage_reports.push(report);
    }

    let converged = match trace.len() {
        0..=1 => false,
        len => {
            let window = CONVERGENCE_WINDOW.min(len - 1);
            let anchor = trace[len - 1 - window];
            (trace[len - 1] - anchor).abs() / anchor.abs().max(1.0) < CONVERGENCE_TOL
        }
    };

    Ok(TrainResult {
        strategy,
        trace,
        stage_reports,
        wall_time_secs: start.elapsed().as_secs_f64(),
        converged,
    })
}
