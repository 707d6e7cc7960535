//! The penalized robust super-replication objective and arbitrage verdicts.
//!
//! For a strategy with capital `c` and payoff target Φ, each candidate
//! measure P contributes a penalty integral
//! `∫ β(E_P[Φ - w | cells]) dP`, where `w = c + gross profit - costs` is the
//! strategy's terminal payoff, the conditional expectation runs over the
//! partition cells of the terminal state, and `β(x) = max(x, 0)²` punishes
//! positive shortfall convexly while leaving feasible (non-positive) residual
//! means free. The objective is
//!
//! `value = c + k · Σ_P ∫ β(E_P[Φ - w | cells]) dP`
//!
//! with penalization constant `k`; as `k` grows the minimizer approaches the
//! cheapest robust super-replication of Φ. Minimizing with Φ = 0 detects
//! statistical arbitrage: a trained value below `-tolerance` exhibits a
//! strategy that starts with negative capital yet stays conditionally
//! acceptable under every measure.

use crate::cost::{total_cost, total_cost_gradient, CostParams};
use crate::market::{gross_profit, AmbiguitySet, MarketError, PricePath, ScenarioSet};
use crate::partition::{assign_cells, conditional_expectation, signature_string, Partition};
use crate::strategy::{GradientBundle, RidgeletStrategy};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Penalty shape. Only the squared hinge is implemented: it is convex
/// (required by the refinement argument), zero on the feasible half-line and
/// smooth at the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaKind {
    SquaredHinge,
}

impl BetaKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            BetaKind::SquaredHinge => {
                let h = x.max(0.0);
                h * h
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            BetaKind::SquaredHinge => 2.0 * x.max(0.0),
        }
    }
}

/// Penalization constant and penalty shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub k: f64,
    pub beta_kind: BetaKind,
}

impl PenaltyConfig {
    pub fn new(k: f64) -> Result<Self, MarketError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(MarketError::InvalidConfig(format!(
                "penalization constant must be positive (got {k})"
            )));
        }
        Ok(Self { k, beta_kind: BetaKind::SquaredHinge })
    }
}

/// The payoff target Φ: identically zero (arbitrage detection) or a custom
/// per-path functional (super-replication pricing).
#[derive(Clone)]
pub enum Payoff {
    Zero,
    Custom(Arc<dyn Fn(&PricePath) -> f64 + Send + Sync>),
}

impl Payoff {
    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(&PricePath) -> f64 + Send + Sync + 'static,
    {
        Payoff::Custom(Arc::new(f))
    }

    pub fn evaluate(&self, path: &PricePath) -> f64 {
        match self {
            Payoff::Zero => 0.0,
            Payoff::Custom(f) => f(path),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Payoff::Zero)
    }
}

impl std::fmt::Debug for Payoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Payoff::Zero => f.write_str("Payoff::Zero"),
            Payoff::Custom(_) => f.write_str("Payoff::Custom(..)"),
        }
    }
}

/// Evaluation options threaded from the run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Reduce per-path gradient contributions in a fixed order for
    /// bit-identical reruns; unordered reduction is faster but only
    /// reproducible up to floating-point reassociation.
    pub deterministic_reduce: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { deterministic_reduce: true }
    }
}

/// Full evaluation of the penalized objective at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub value: f64,
    pub c: f64,
    pub k: f64,
    /// Σ over measures of the per-measure penalty integrals.
    pub penalty_term: f64,
    pub per_measure_penalty: Vec<f64>,
    /// Per measure: occupied-cell signature → conditional mean residual.
    pub per_cell_means: Vec<BTreeMap<String, f64>>,
}

/// Arbitrage verdict from a trained objective value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    ArbitrageFound,
    NoneFound,
}

/// Direct check of the two defining conditions of a robust statistical
/// arbitrage for a concrete strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Every occupied cell's conditional mean net profit ≥ -tolerance under
    /// every measure.
    pub conditionally_acceptable: bool,
    /// Some measure's unconditional mean net profit > tolerance.
    pub profitable_somewhere: bool,
    pub is_arbitrage: bool,
    /// (measure index, cell signature, mean) of the worst conditional mean.
    pub worst_cell: Option<(usize, String, f64)>,
    /// Best unconditional mean net profit across measures.
    pub best_measure_mean: f64,
}

/// Terminal payoff of the strategy on one path: capital plus gross trading
/// profit minus execution costs.
pub fn strategy_payoff(
    strategy: &RidgeletStrategy,
    path: &PricePath,
    costs: &CostParams,
) -> Result<f64, MarketError> {
    let schedule = strategy.eval_positions(path)?;
    let gross = gross_profit(&schedule, path)?;
    let cost = total_cost(costs, &schedule, path)?.total;
    Ok(strategy.c + gross - cost)
}

/// Per-measure intermediates shared by value and gradient evaluation.
struct MeasureEval {
    residuals: Vec<f64>,
    cond: Vec<f64>,
    penalty: f64,
    cell_means: BTreeMap<String, f64>,
}

fn eval_measure(
    strategy: &RidgeletStrategy,
    measure: &ScenarioSet,
    partition: &Partition,
    config: &PenaltyConfig,
    phi: &Payoff,
    costs: &CostParams,
) -> Result<MeasureEval, MarketError> {
    let budget = strategy.budget;
    let residuals: Vec<f64> = measure
        .paths
        .par_iter()
        .map(|path| {
            let phi_val = phi.evaluate(path);
            if !phi_val.is_finite() || phi_val.abs() > budget {
                return Err(MarketError::InvalidConfig(format!(
                    "payoff value {phi_val} exceeds the budget bound {budget}"
                )));
            }
            Ok(phi_val - strategy_payoff(strategy, path, costs)?)
        })
        .collect::<Result<_, _>>()?;
    let terminals: Vec<Vec<f64>> =
        measure.paths.iter().map(|p| p.terminal().to_vec()).collect();
    let assignment = assign_cells(partition, &terminals, &measure.weights)?;
    let cond = conditional_expectation(&residuals, &assignment, &measure.weights)?;
    let penalty: f64 = cond
        .iter()
        .zip(&measure.weights)
        .map(|(m, w)| w * config.beta_kind.apply(*m))
        .sum();
    let cell_means = assignment
        .cells
        .iter()
        .map(|(sig, cell)| (signature_string(sig), cond[cell.paths[0]]))
        .collect();
    Ok(MeasureEval { residuals, cond, penalty, cell_means })
}

/// Evaluate the penalized objective. Deterministic: per-path work runs in
/// parallel but is combined in input order.
pub fn penalized_value(
    strategy: &RidgeletStrategy,
    ambiguity: &AmbiguitySet,
    partition: &Partition,
    config: &PenaltyConfig,
    phi: &Payoff,
    costs: &CostParams,
) -> Result<ObjectiveReport, MarketError> {
    let mut per_measure_penalty = Vec::with_capacity(ambiguity.measures.len());
    let mut per_cell_means = Vec::with_capacity(ambiguity.measures.len());
    for measure in &ambiguity.measures {
        let eval = eval_measure(strategy, measure, partition, config, phi, costs)?;
        per_measure_penalty.push(eval.penalty);
        per_cell_means.push(eval.cell_means);
    }
    let penalty_term: f64 = per_measure_penalty.iter().sum();
    let value = strategy.c + config.k * penalty_term;
    if !value.is_finite() {
        return Err(MarketError::NonFinite(format!("objective value {value}")));
    }
    Ok(ObjectiveReport {
        value,
        c: strategy.c,
        k: config.k,
        penalty_term,
        per_measure_penalty,
        per_cell_means,
    })
}

/// Paths per chunk in the ordered gradient reduction.
const GRAD_CHUNK: usize = 64;

/// Evaluate the objective and its exact parameter gradient.
///
/// Cost kinks (`|x|` and the short indicator) use subgradient 0 at zero; the
/// cell-averaging operator is the fixed linear map induced by the partition.
pub fn penalized_gradient(
    strategy: &RidgeletStrategy,
    ambiguity: &AmbiguitySet,
    partition: &Partition,
    config: &PenaltyConfig,
    phi: &Payoff,
    costs: &CostParams,
    options: &EvalOptions,
) -> Result<(ObjectiveReport, GradientBundle), MarketError> {
    let n = strategy.num_times();
    let a = strategy.num_assets();
    let mut grad = GradientBundle::zeros(strategy.param_count());
    let mut per_measure_penalty = Vec::with_capacity(ambiguity.measures.len());
    let mut per_cell_means = Vec::with_capacity(ambiguity.measures.len());

    for measure in &ambiguity.measures {
        let eval = eval_measure(strategy, measure, partition, config, phi, costs)?;
        per_measure_penalty.push(eval.penalty);

        // d(value)/d(payoff of path q) = -k * weight_q * β'(cell mean of q).
        let sensitivities: Vec<f64> = eval
            .cond
            .iter()
            .zip(&measure.weights)
            .map(|(m, w)| -config.k * w * config.beta_kind.derivative(*m))
            .collect();

        let path_bundle = |q: usize| -> Result<Option<GradientBundle>, MarketError> {
            let s_q = sensitivities[q];
            if s_q == 0.0 {
                return Ok(None);
            }
            let path = &measure.paths[q];
            let schedule = strategy.eval_positions(path)?;
            let cost_grad = total_cost_gradient(costs, &schedule, path)?;
            let upstream: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..a)
                        .map(|j| {
                            let price_move = path.price(i + 1, j) - path.price(i, j);
                            s_q * (price_move - cost_grad[i][j])
                        })
                        .collect()
                })
                .collect();
            let mut bundle = strategy.eval_with_gradients(path, &upstream)?;
            bundle.values[RidgeletStrategy::C_INDEX] = s_q;
            Ok(Some(bundle))
        };

        if options.deterministic_reduce {
            // Chunks evaluated in parallel, folded in chunk order.
            let indices: Vec<usize> = (0..measure.paths.len()).collect();
            let chunk_bundles: Vec<Option<GradientBundle>> = indices
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut acc: Option<GradientBundle> = None;
                    for &q in chunk {
                        if let Some(b) = path_bundle(q)? {
                            match &mut acc {
                                Some(acc) => acc.axpy(1.0, &b),
                                None => acc = Some(b),
                            }
                        }
                    }
                    Ok(acc)
                })
                .collect::<Result<_, MarketError>>()?;
            for bundle in chunk_bundles.into_iter().flatten() {
                grad.axpy(1.0, &bundle);
            }
        } else {
            let merged = (0..measure.paths.len())
                .into_par_iter()
                .try_fold(
                    || None::<GradientBundle>,
                    |mut acc, q| {
                        if let Some(b) = path_bundle(q)? {
                            match &mut acc {
                                Some(acc) => acc.axpy(1.0, &b),
                                None => acc = Some(b),
                            }
                        }
                        Ok(acc)
                    },
                )
                .try_reduce(
                    || None,
                    |a, b| {
                        Ok(match (a, b) {
                            (Some(mut a), Some(b)) => {
                                a.axpy(1.0, &b);
                                Some(a)
                            }
                            (a, None) => a,
                            (None, b) => b,
                        })
                    },
                )?;
            if let Some(bundle) = merged {
                grad.axpy(1.0, &bundle);
            }
        }
        per_cell_means.push(eval.cell_means);
        drop(eval.residuals);
    }

    // Direct dependence of the objective on c.
    grad.values[RidgeletStrategy::C_INDEX] += 1.0;

    if grad.values.iter().any(|g| !g.is_finite()) {
        return Err(MarketError::NonFinite("objective gradient".into()));
    }
    let penalty_term: f64 = per_measure_penalty.iter().sum();
    let value = strategy.c + config.k * penalty_term;
    if !value.is_finite() {
        return Err(MarketError::NonFinite(format!("objective value {value}")));
    }
    let report = ObjectiveReport {
        value,
        c: strategy.c,
        k: config.k,
        penalty_term,
        per_measure_penalty,
        per_cell_means,
    };
    Ok((report, grad))
}

/// Threshold the trained objective value: arbitrage iff value < -tolerance.
pub fn detect_arbitrage(report: &ObjectiveReport, tolerance: f64) -> Verdict {
    if report.value < -tolerance {
        Verdict::ArbitrageFound
    } else {
        Verdict::NoneFound
    }
}

/// Check the two defining arbitrage conditions for a concrete strategy:
/// conditional acceptability under every measure, and strict unconditional
/// profitability under some measure. Capital does not enter either condition.
pub fn verify_arbitrage(
    strategy: &RidgeletStrategy,
    ambiguity: &AmbiguitySet,
    partition: &Partition,
    costs: &CostParams,
    tolerance: f64,
) -> Result<VerificationReport, MarketError> {
    let mut conditionally_acceptable = true;
    let mut worst_cell: Option<(usize, String, f64)> = None;
    let mut best_measure_mean = f64::NEG_INFINITY;
    for (m_idx, measure) in ambiguity.measures.iter().enumerate() {
        let profits: Vec<f64> = measure
            .paths
            .par_iter()
            .map(|path| {
                let schedule = strategy.eval_positions(path)?;
                let gross = gross_profit(&schedule, path)?;
                let cost = total_cost(costs, &schedule, path)?.total;
                Ok(gross - cost)
            })
            .collect::<Result<_, MarketError>>()?;
        let terminals: Vec<Vec<f64>> =
            measure.paths.iter().map(|p| p.terminal().to_vec()).collect();
        let assignment = assign_cells(partition, &terminals, &measure.weights)?;
        let cond = conditional_expectation(&profits, &assignment, &measure.weights)?;
        for (sig, cell) in &assignment.cells {
            let mean = cond[cell.paths[0]];
            if worst_cell.as_ref().map_or(true, |(_, _, w)| mean < *w) {
                worst_cell = Some((m_idx, signature_string(sig), mean));
            }
            if mean < -tolerance {
                conditionally_acceptable = false;
            }
        }
        let unconditional: f64 =
            profits.iter().zip(&measure.weights).map(|(p, w)| p * w).sum();
        best_measure_mean = best_measure_mean.max(unconditional);
    }
    let profitable_somewhere = best_measure_mean > tolerance;
    Ok(VerificationReport {
        conditionally_acceptable,
        profitable_somewhere,
        is_arbitrage: conditionally_acceptable && profitable_somewhere,
        worst_cell,
        best_measure_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::TransactionKind;
    use crate::market::{MarketSpec, PositionSchedule};
    use crate::partition::generate_partition;
    use crate::strategy::StrategyConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zeroed(config: &StrategyConfig) -> RidgeletStrategy {
        let mut s = RidgeletStrategy::init(config, 0).unwrap();
        let zeros = vec![0.0; s.param_count()];
        s.set_params(&zeros).unwrap();
        s
    }

    /// One-asset, two-date market with paths rising to 11 or 13.
    fn rising_market() -> (MarketSpec, AmbiguitySet, Partition) {
        let spec = MarketSpec::new(2, vec![5.0], vec![20.0], vec![10.0]).unwrap();
        let paths = vec![
            PricePath::new(vec![vec![10.0], vec![11.0], vec![13.0]]),
            PricePath::new(vec![vec![10.0], vec![12.0], vec![14.0]]),
        ];
        let measure = ScenarioSet::uniform(paths).unwrap();
        let partition = generate_partition(&spec, 4, 99);
        (spec, AmbiguitySet::single(measure), partition)
    }

    #[test]
    fn beta_squared_hinge_values() {
        let b = BetaKind::SquaredHinge;
        assert_eq!(b.apply(-1.0), 0.0);
        assert_eq!(b.apply(0.0), 0.0);
        assert_eq!(b.apply(2.0), 4.0);
        assert_eq!(b.derivative(-1.0), 0.0);
        assert_eq!(b.derivative(0.0), 0.0);
        assert_eq!(b.derivative(2.0), 4.0);
    }

    #[test]
    fn penalty_constant_must_be_positive() {
        assert!(PenaltyConfig::new(10.0).is_ok());
        assert!(PenaltyConfig::new(0.0).is_err());
        assert!(PenaltyConfig::new(-1.0).is_err());
        assert!(PenaltyConfig::new(f64::INFINITY).is_err());
    }

    #[test]
    fn strategy_payoff_hand_examples() {
        let cfg = StrategyConfig::new(1, 2, 5.0, 10.0).with_hidden_widths(vec![3]);
        let path = PricePath::new(vec![vec![10.0], vec![11.0], vec![13.0]]);
        let costs = CostParams::zero();

        let s = zeroed(&cfg);
        assert_eq!(strategy_payoff(&s, &path, &costs).unwrap(), 0.0);

        let mut s = zeroed(&cfg);
        s.c = 3.0;
        assert_eq!(strategy_payoff(&s, &path, &costs).unwrap(), 3.0);

        // Constant long position of 1 unit captures terminal - spot = 3.
        let mut s = zeroed(&cfg);
        s.delta0 = vec![1.0];
        for net in &mut s.nets {
            // Raw output bias drives the squashed position; solve
            // B*tanh(raw/B) = 1 for raw.
            let raw = s.budget * (1.0f64 / s.budget).atanh();
            net.output_bias = vec![raw];
        }
        let w = strategy_payoff(&s, &path, &costs).unwrap();
        assert!((w - 3.0).abs() < 1e-9, "payoff {w}");
    }

    #[test]
    fn penalized_value_hand_examples() {
        let (_, ambiguity, partition) = rising_market();
        let cfg = StrategyConfig::new(1, 2, 5.0, 10.0).with_hidden_widths(vec![3]);
        let costs = CostParams::zero();
        let k10 = PenaltyConfig::new(10.0).unwrap();

        // Zero strategy, c = 0: residuals 0, value 0.
        let s = zeroed(&cfg);
        let report =
            penalized_value(&s, &ambiguity, &partition, &k10, &Payoff::Zero, &costs).unwrap();
        assert_eq!(report.value, 0.0);
        assert_eq!(report.penalty_term, 0.0);

        // c = 1, zero positions: residuals -1, β inactive, value = c = 1.
        let mut s = zeroed(&cfg);
        s.c = 1.0;
        let report =
            penalized_value(&s, &ambiguity, &partition, &k10, &Payoff::Zero, &costs).unwrap();
        assert_eq!(report.value, 1.0);

        // c = -1, zero positions: residuals +1, β = 1, value = -1 + 10 = 9.
        let mut s = zeroed(&cfg);
        s.c = -1.0;
        let report =
            penalized_value(&s, &ambiguity, &partition, &k10, &Payoff::Zero, &costs).unwrap();
        assert!((report.value - 9.0).abs() < 1e-12);
        assert!((report.penalty_term - 1.0).abs() < 1e-12);
        assert_eq!(report.per_measure_penalty.len(), 1);
    }

    #[test]
    fn report_invariants_hold() {
        let (_, ambiguity, partition) = rising_market();
        let cfg = StrategyConfig::new(1, 2, 5.0, 10.0).with_hidden_widths(vec![3]);
        let costs = CostParams::new(TransactionKind::PerShare, 0.01, 0.0002, 0.1 / 252.0).unwrap();
        let config = PenaltyConfig::new(100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for seed in 0..10 {
            let mut s = RidgeletStrategy::init(&cfg, seed).unwrap();
            let v: Vec<f64> =
                s.to_param_vector().iter().map(|p| p + rng.gen_range(-0.5..0.5)).collect();
            s.set_params(&v).unwrap();
            s.c = rng.gen_range(-2.0..2.0);
            let report =
                penalized_value(&s, &ambiguity, &partition, &config, &Payoff::Zero, &costs)
                    .unwrap();
            assert!(report.penalty_term >= 0.0);
            assert!(
                (report.value - (report.c + report.k * report.penalty_term)).abs() <= 1e-10
            );
        }
    }

    #[test]
    fn monotone_in_k_exactly() {
        let (_, ambiguity, partition) = rising_market();
        let cfg = StrategyConfig::new(1, 2, 5.0, 10.0).with_hidden_widths(vec![3]);
        let costs = CostParams::zero();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for seed in 0..20 {
            let mut s = RidgeletStrategy::init(&cfg, seed).unwrap();
            s.c = rng.gen_range(-2.0..0.5);
            let mut previous = f64::NEG_INFINITY;
            for k in [10.0, 100.0, 1000.0] {
                let config = PenaltyConfig::new(k).unwrap();
                let v = penalized_value(&s, &ambiguity, &partition, &config, &Payoff::Zero, &costs)
                    .unwrap()
                    .value;
                assert!(v >= previous, "k ladder not monotone: {v} < {previous}");
                previous = v;
            }
        }
    }

    #[test]
    fn feasible_collapse_and_lower_bound() {
        let (_, ambiguity, partition) = rising_market();
        let cfg = StrategyConfig::new(1, 2, 5.0, 10.0).with_hidden_widths(vec![3]);
        let costs = CostParams::zero();
        let config = PenaltyConfig::new(1000.0).unwrap();
        // Long position, Φ = 0: residual = -(c + profit) < 0 on every path
        // when c ≥ 0, so the value collapses to c exactly.
        let mut s = zeroed(&cfg);
        s.delta0 = vec![1.0];
        s.c = 0.25;
        let report =
            penalized_value(&s, &ambiguity, &partition, &config, &Payoff::Zero, &costs).unwrap();
        assert_eq!(report.value, 0.25);
        // And the value can never undercut -budget while |c| ≤ budget.
        for c in [-5.0, -1.0, 0.0, 3.0] {
            s.c = c;
            let report =
                penalized_value(&s, &ambiguity, &partition, &config, &Payoff::Zero, &costs)
                    .unwrap();
            assert!(report.value >= -s.budget);
        }
    }

    #[test]
    fn one_cell_one_measure_reduction() {
        let (_, ambiguity, _) = rising_market();
        let spec = MarketSpec::new(2, vec![5.0], vec![20.0], vec![10.0]).unwrap();
        let trivial = generate_partition(&spec, 0, 0);
        let cfg = StrategyConfig::new(1, 2, 5.0, 10.0).with_hidden_widths(vec![3]);
        let costs = CostParams::zero();
        let config = PenaltyConfig::new(50.0).unwrap();
        let mut s = zeroed(&cfg);
        s.c = -2.0;
        s.delta0 = vec![0.5];
        // Only the spot-date position trades (zeroed nets hold 0 afterward):
        // profits are 0.5*(11-10) and 0.5*(12-10), so the one-cell mean
        // residual is -(c + mean profit).
        let mean_residual = -(-2.0 + 0.5 * 1.5);
        let expected = s.c + 50.0 * BetaKind::SquaredHinge.apply(mean_residual);
        let report =
            penalized_value(&s, &ambiguity, &trivial, &config, &Payoff::Zero, &costs).unwrap();
        assert!((report.value - expected).abs() < 1e-10, "{} vs {expected}", report.value);
    }

    #[test]
    fn refinement_increases_penalty_integrals() {
        let spec =
            MarketSpec::new(3, vec![1.0, 1.0], vec![30.0, 30.0], vec![10.0, 12.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let paths: Vec<PricePath> = (0..40)
            .map(|_| {
                PricePath::new(
                    std::iter::once(vec![10.0, 12.0])
                        .chain((0..3).map(|_| {
                            vec![rng.gen_range(2.0..28.0), rng.gen_range(2.0..28.0)]
                        }))
                        .collect(),
                )
            })
            .collect();
        let ambiguity = AmbiguitySet::single(ScenarioSet::uniform(paths).unwrap());
        let partition = generate_partition(&spec, 10, 7);
        let cfg = StrategyConfig::new(2, 3, 5.0, 10.0).with_hidden_widths(vec![4]);
        let costs = CostParams::zero();
        let config = PenaltyConfig::new(10.0).unwrap();
        for seed in 0..20 {
            let mut s = RidgeletStrategy::init(&cfg, seed).unwrap();
            s.c = rng.gen_range(-2.0..1.0);
            let v: Vec<f64> =
                s.to_param_vector().iter().map(|p| p + rng.gen_range(-0.4..0.4)).collect();
            let c_keep = s.c;
            s.set_params(&v).unwrap();
            s.c = c_keep;
            let mut previous = -1e-12;
            for level in 0..=10 {
                let coarse = partition.prefix(level);
                let report =
                    penalized_value(&s, &ambiguity, &coarse, &config, &Payoff::Zero, &costs)
                        .unwrap();
                assert!(
                    report.per_measure_penalty[0] >= previous - 1e-12,
                    "refinement decreased penalty at level {level}"
                );
                previous = report.per_measure_penalty[0];
            }
        }
    }

    #[test]
    fn gradient_of_c_at_feasible_point_is_one() {
        let (_, ambiguity, partition) = rising_market();
        let cfg = StrategyConfig::new(1, 2, 5.0, 10.0).with_hidden_widths(vec![3]);
        let costs = CostParams::zero();
        let config = PenaltyConfig::new(100.0).unwrap();
        let mut s = zeroed(&cfg);
        s.delta0 = vec![1.0];
        s.c = 0.5; // strictly feasible: all residual means < 0
        let (report, grad) = penalized_gradient(
            &s,
            &ambiguity,
            &partition,
            &config,
            &Payoff::Zero,
            &costs,
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(report.value, 0.5);
        assert_eq!(grad.values[RidgeletStrategy::C_INDEX], 1.0);
        // Penalty inactive: every other slot is zero.
        assert!(grad.values[1..].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = MarketSpec::new(2, vec![1.0], vec![30.0], vec![10.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let make_measure = |rng: &mut ChaCha8Rng, count: usize| {
            let paths: Vec<PricePath> = (0..count)
                .map(|_| {
                    PricePath::new(
                        std::iter::once(vec![10.0])
                            .chain((0..2).map(|_| vec![rng.gen_range(4.0..25.0)]))
                            .collect(),
                    )
                })
                .collect();
            ScenarioSet::uniform(paths).unwrap()
        };
        let ambiguity = AmbiguitySet::new(vec![
            make_measure(&mut rng, 6),
            make_measure(&mut rng, 5),
        ])
        .unwrap();
        let partition = generate_partition(&spec, 3, 5);
        let costs =
            CostParams::new(TransactionKind::Proportional, 0.001, 0.0002, 0.1 / 252.0).unwrap();
        let config = PenaltyConfig::new(10.0).unwrap();
        let phis = [Payoff::Zero, Payoff::custom(|p: &PricePath| 0.1 * p.terminal()[0])];
        for (pi, phi) in phis.iter().enumerate() {
            for act in ["silu", "relu", "hybrid"] {
                let cfg = StrategyConfig::new(1, 2, 8.0, 10.0)
                    .with_hidden_widths(vec![4])
                    .with_activation(act);
                let mut s = RidgeletStrategy::init(&cfg, 3 + pi as u64).unwrap();
                let v: Vec<f64> =
                    s.to_param_vector().iter().map(|p| p + rng.gen_range(-0.3..0.3)).collect();
                s.set_params(&v).unwrap();
                s.c = -0.7; // make the penalty active
                let (_, grad) = penalized_gradient(
                    &s,
                    &ambiguity,
                    &partition,
                    &config,
                    phi,
                    &costs,
                    &EvalOptions::default(),
                )
                .unwrap();
                let base = s.to_param_vector();
                let step = 1e-5;
                for idx in 0..base.len() {
                    let mut plus = base.clone();
                    plus[idx] += step;
                    let mut minus = base.clone();
                    minus[idx] -= step;
                    let mut sp = s.clone();
                    sp.set_params(&plus).unwrap();
                    let mut sm = s.clone();
                    sm.set_params(&minus).unwrap();
                    let fp = penalized_value(&sp, &ambiguity, &partition, &config, phi, &costs)
                        .unwrap()
                        .value;
                    let fm = penalized_value(&sm, &ambiguity, &partition, &config, phi, &costs)
                        .unwrap()
                        .value;
                    let fd = (fp - fm) / (2.0 * step);
                    let ad = grad.values[idx];
                    let denom = ad.abs().max(fd.abs()).max(1.0);
                    assert!(
                        (ad - fd).abs() / denom <= 1e-4,
                        "{act} phi{pi} param {idx}: ad {ad} vs fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn deterministic_and_unordered_reduce_agree() {
        let (_, ambiguity, partition) = rising_market();
        let cfg = StrategyConfig::new(1, 2, 5.0, 10.0).with_hidden_widths(vec![3]);
        let costs = CostParams::zero();
        let config = PenaltyConfig::new(10.0).unwrap();
        let mut s = RidgeletStrategy::init(&cfg, 55).unwrap();
        s.c = -1.0;
        let det = EvalOptions { deterministic_reduce: true };
        let fast = EvalOptions { deterministic_reduce: false };
        let (r1, g1) =
            penalized_gradient(&s, &ambiguity, &partition, &config, &Payoff::Zero, &costs, &det)
                .unwrap();
        let (r2, g2) =
            penalized_gradient(&s, &ambiguity, &partition, &config, &Payoff::Zero, &costs, &fast)
                .unwrap();
        assert_eq!(r1.value, r2.value);
        for (a, b) in g1.values.iter().zip(&g2.values) {
            assert!((a - b).abs() <= 1e-9);
        }
        // Two deterministic runs are bit-identical.
        let (_, g3) =
            penalized_gradient(&s, &ambiguity, &partition, &config, &Payoff::Zero, &costs, &det)
                .unwrap();
        assert_eq!(g1.values, g3.values);
    }

    #[test]
    fn detect_thresholds_strictly() {
        let report = ObjectiveReport {
            value: -0.5,
            c: -0.5,
            k: 1000.0,
            penalty_term: 0.0,
            per_measure_penalty: vec![0.0],
            per_cell_means: vec![BTreeMap::new()],
        };
        assert_eq!(detect_arbitrage(&report, 0.05), Verdict::ArbitrageFound);
        let mut r = report.clone();
        r.value = 0.01;
        assert_eq!(detect_arbitrage(&r, 0.05), Verdict::NoneFound);
        r.value = -0.05;
        assert_eq!(detect_arbitrage(&r, 0.05), Verdict::NoneFound);
    }

    #[test]
    fn verify_zero_strategy_is_not_arbitrage() {
        let (_, ambiguity, partition) = rising_market();
        let cfg = StrategyConfig::new(1, 2, 5.0, 10.0).with_hidden_widths(vec![3]);
        let s = zeroed(&cfg);
        let report =
            verify_arbitrage(&s, &ambiguity, &partition, &CostParams::zero(), 0.05).unwrap();
        assert!(report.conditionally_acceptable);
        assert!(!report.profitable_somewhere);
        assert!(!report.is_arbitrage);
    }

    #[test]
    fn verify_long_strategy_in_rising_market() {
        let (_, ambiguity, partition) = rising_market();
        let cfg = StrategyConfig::new(1, 2, 5.0, 10.0).with_hidden_widths(vec![3]);
        let costs = CostParams::new(TransactionKind::PerShare, 0.01, 0.0002, 0.1 / 252.0).unwrap();
        let mut s = zeroed(&cfg);
        s.delta0 = vec![1.0];
        let raw = s.budget * (1.0f64 / s.budget).atanh();
        for net in &mut s.nets {
            net.output_bias = vec![raw];
        }
        let report = verify_arbitrage(&s, &ambiguity, &partition, &costs, 0.05).unwrap();
        assert!(report.conditionally_acceptable);
        assert!(report.profitable_somewhere);
        assert!(report.is_arbitrage);
        assert!(report.best_measure_mean > 3.0);
    }

    #[test]
    fn verify_flags_worst_cell() {
        // One falling path isolated in its own cell drags its conditional
        // mean below -tolerance.
        let spec = MarketSpec::new(1, vec![1.0], vec![20.0], vec![10.0]).unwrap();
        let paths = vec![
            PricePath::new(vec![vec![10.0], vec![15.0]]),
            PricePath::new(vec![vec![10.0], vec![5.0]]),
        ];
        let ambiguity = AmbiguitySet::single(ScenarioSet::uniform(paths).unwrap());
        let partition = crate::partition::Partition {
            corners: vec![vec![9.0]],
            lower_bounds: vec![1.0],
            upper_bounds: vec![20.0],
            rng_seed: 0,
        };
        let cfg = StrategyConfig::new(1, 1, 5.0, 10.0);
        let mut s = RidgeletStrategy::init(&cfg, 0).unwrap();
        s.delta0 = vec![1.0];
        let _ = spec;
        let report =
            verify_arbitrage(&s, &ambiguity, &partition, &CostParams::zero(), 0.05).unwrap();
        assert!(!report.conditionally_acceptable);
        let (m, sig, mean) = report.worst_cell.unwrap();
        assert_eq!(m, 0);
        assert_eq!(sig, "0");
        assert!((mean - (-5.0)).abs() < 1e-12);
        assert!(!report.is_arbitrage);
    }

    #[test]
    fn payoff_exceeding_budget_is_rejected() {
        let (_, ambiguity, partition) = rising_market();
        let cfg = StrategyConfig::new(1, 2, 5.0, 10.0).with_hidden_widths(vec![3]);
        let s = zeroed(&cfg);
        let config = PenaltyConfig::new(10.0).unwrap();
        let phi = Payoff::custom(|_: &PricePath| 100.0);
        let err = penalized_value(&s, &ambiguity, &partition, &config, &phi, &CostParams::zero());
        assert!(err.is_err());
    }

    #[test]
    fn schedule_shapes_checked() {
        let (_, ambiguity, partition) = rising_market();
        // Strategy over the wrong number of dates.
        let cfg = StrategyConfig::new(1, 3, 5.0, 10.0).with_hidden_widths(vec![3]);
        let s = zeroed(&cfg);
        let config = PenaltyConfig::new(10.0).unwrap();
        let err =
            penalized_value(&s, &ambiguity, &partition, &config, &Payoff::Zero, &CostParams::zero());
        assert!(err.is_err());
        let _ = PositionSchedule::zeros(1, 1);
    }
}
