//! Random partitions of the terminal state space and the empirical
//! conditional-expectation estimator.
//!
//! A partition is a list of `i` random "lower corners" in the price box; box
//! `l` is the product of half-open intervals `(corner[l][j], upper[j]]`. Each
//! terminal price vector receives a bit signature (bit `l` set iff it lies in
//! box `l`), and the signature classes are exactly the atoms of the σ-algebra
//! generated by the boxes. Conditioning on the partition means replacing each
//! path's value by the weighted mean of its cell. As `i` grows the partition
//! refines, approximating conditioning on the full terminal price.

use crate::market::{MarketError, MarketSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A drawn partition: corner matrix plus the bounds and seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// `i x a` lower corners, one row per box.
    pub corners: Vec<Vec<f64>>,
    pub lower_bounds: Vec<f64>,
    pub upper_bounds: Vec<f64>,
    /// Seed recording the draw, for manifest reproducibility.
    pub rng_seed: u64,
}

/// One occupied signature class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Member path indices, in input order.
    pub paths: Vec<usize>,
    /// Total weight of the members.
    pub weight: f64,
}

/// Result of classifying a sample of terminal prices by signature.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAssignment {
    /// Per-path signature, one bit per box.
    pub signatures: Vec<Vec<bool>>,
    /// Occupied cells in deterministic (lexicographic) signature order.
    pub cells: BTreeMap<Vec<bool>, Cell>,
}

/// Render a cell signature as a bit string for reports and manifests.
pub fn signature_string(signature: &[bool]) -> String {
    signature.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

impl Partition {
    /// Number of boxes.
    pub fn num_boxes(&self) -> usize {
        self.corners.len()
    }

    /// The coarser partition formed by the first `count` corners. Cell
    /// signatures of the original are extensions of the prefix signatures, so
    /// this realizes the refinement chain used by the convergence argument.
    pub fn prefix(&self, count: usize) -> Partition {
        Partition {
            corners: self.corners[..count.min(self.corners.len())].to_vec(),
            lower_bounds: self.lower_bounds.clone(),
            upper_bounds: self.upper_bounds.clone(),
            rng_seed: self.rng_seed,
        }
    }
}

/// Draw `count` box corners, each coordinate independently uniform over the
/// spec's per-asset price range, from a seeded deterministic generator.
pub fn generate_partition(spec: &MarketSpec, count: usize, seed: u64) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corners = (0..count)
        .map(|_| {
            (0..spec.num_assets)
                .map(|j| rng.gen_range(spec.lower_bounds[j]..spec.upper_bounds[j]))
                .collect()
        })
        .collect();
    Partition {
        corners,
        lower_bounds: spec.lower_bounds.clone(),
        upper_bounds: spec.upper_bounds.clone(),
        rng_seed: seed,
    }
}

/// Classify terminal price vectors into signature cells and accumulate cell
/// weights. Terminal prices must lie within the partition's bounds.
pub fn assign_cells(
    partition: &Partition,
    terminal_prices: &[Vec<f64>],
    weights: &[f64],
) -> Result<CellAssignment, MarketError> {
    if terminal_prices.len() != weights.len() {
        return Err(MarketError::ShapeMismatch(format!(
            "{} terminal prices vs {} weights",
            terminal_prices.len(),
            weights.len()
        )));
    }
    let a = partition.lower_bounds.len();
    let mut signatures = Vec::with_capacity(terminal_prices.len());
    let mut cells: BTreeMap<Vec<bool>, Cell> = BTreeMap::new();
    for (p, terminal) in terminal_prices.iter().enumerate() {
        if terminal.len() != a {
            return Err(MarketError::ShapeMismatch(format!(
                "terminal price {p} has {} assets, expected {a}",
                terminal.len()
            )));
        }
        for (j, v) in terminal.iter().enumerate() {
            if !(*v >= partition.lower_bounds[j] && *v <= partition.upper_bounds[j]) {
                return Err(MarketError::TerminalOutOfBounds {
                    path: p,
                    asset: j,
                    value: *v,
                    lower: partition.lower_bounds[j],
                    upper: partition.upper_bounds[j],
                });
            }
        }
        let signature: Vec<bool> = partition
            .corners
            .iter()
            .map(|corner| corner.iter().zip(terminal).all(|(c, t)| t > c))
            .collect();
        let cell = cells
            .entry(signature.clone())
            .or_insert_with(|| Cell { paths: Vec::new(), weight: 0.0 });
        cell.paths.push(p);
        cell.weight += weights[p];
        signatures.push(signature);
    }
    Ok(CellAssignment { signatures, cells })
}

/// Replace each path's value by the weighted mean of its cell.
///
/// Cells whose members all carry the identical value short-circuit to that
/// value, which makes repeated conditioning exactly idempotent. Zero-weight
/// cells get mean 0; they carry no mass in any downstream integral.
pub fn conditional_expectation(
    values: &[f64],
    assignment: &CellAssignment,
    weights: &[f64],
) -> Result<Vec<f64>, MarketError> {
    if values.is_empty() {
        return Err(MarketError::InvalidConfig(
            "conditional_expectation needs at least one value".into(),
        ));
    }
    if values.len() != assignment.signatures.len() || values.len() != weights.len() {
        return Err(MarketError::ShapeMismatch(format!(
            "{} values vs {} assigned paths vs {} weights",
            values.len(),
            assignment.signatures.len(),
            weights.len()
        )));
    }
    let mut out = vec![0.0; values.len()];
    for cell in assignment.cells.values() {
        let first = values[cell.paths[0]];
        let mean = if cell.paths.iter().all(|&p| values[p].to_bits() == first.to_bits()) {
            first
        } else if cell.weight > 0.0 {
            let num: f64 = cell.paths.iter().map(|&p| weights[p] * values[p]).sum();
            num / cell.weight
        } else {
            0.0
        };
        for &p in &cell.paths {
            out[p] = mean;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_1d() -> MarketSpec {
        MarketSpec::new(2, vec![0.0], vec![10.0], vec![5.0]).unwrap()
    }

    fn uniform_weights(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    #[test]
    fn zero_boxes_is_trivial_partition() {
        let part = generate_partition(&spec_1d(), 0, 3);
        assert!(part.corners.is_empty());
        let terminals = vec![vec![2.0], vec![7.0], vec![9.0]];
        let asg = assign_cells(&part, &terminals, &uniform_weights(3)).unwrap();
        assert_eq!(asg.cells.len(), 1);
        let cell = asg.cells.get(&Vec::new()).unwrap();
        assert_eq!(cell.paths, vec![0, 1, 2]);
        assert!((cell.weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_partition() {
        let spec = MarketSpec::new(2, vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![2.0, 3.0, 4.0])
            .unwrap();
        let a = generate_partition(&spec, 16, 77);
        let b = generate_partition(&spec, 16, 77);
        assert_eq!(a, b);
        let c = generate_partition(&spec, 16, 78);
        assert_ne!(a.corners, c.corners);
    }

    #[test]
    fn corners_respect_bounds() {
        let spec =
            MarketSpec::new(2, vec![10.0, -5.0], vec![20.0, 5.0], vec![15.0, 0.0]).unwrap();
        let part = generate_partition(&spec, 10_000, 123);
        for corner in &part.corners {
            for (j, v) in corner.iter().enumerate() {
                assert!(*v >= spec.lower_bounds[j] && *v <= spec.upper_bounds[j]);
            }
        }
    }

    #[test]
    fn single_box_membership() {
        let part = Partition {
            corners: vec![vec![5.0]],
            lower_bounds: vec![0.0],
            upper_bounds: vec![10.0],
            rng_seed: 0,
        };
        let asg = assign_cells(&part, &[vec![7.0], vec![3.0]], &uniform_weights(2)).unwrap();
        assert_eq!(asg.signatures, vec![vec![true], vec![false]]);
        // Boundary: the box is half-open below, so the corner itself is out.
        let asg = assign_cells(&part, &[vec![5.0]], &[1.0]).unwrap();
        assert_eq!(asg.signatures, vec![vec![false]]);
    }

    #[test]
    fn two_boxes_three_cells() {
        let part = Partition {
            corners: vec![vec![3.0], vec![6.0]],
            lower_bounds: vec![0.0],
            upper_bounds: vec![10.0],
            rng_seed: 0,
        };
        let terminals = vec![vec![2.0], vec![4.0], vec![7.0]];
        let asg = assign_cells(&part, &terminals, &uniform_weights(3)).unwrap();
        assert_eq!(
            asg.signatures,
            vec![vec![false, false], vec![true, false], vec![true, true]]
        );
        assert_eq!(asg.cells.len(), 3);
    }

    #[test]
    fn out_of_bounds_terminal_rejected() {
        let part = generate_partition(&spec_1d(), 4, 1);
        let err = assign_cells(&part, &[vec![11.0]], &[1.0]).unwrap_err();
        assert!(matches!(err, MarketError::TerminalOutOfBounds { path: 0, asset: 0, .. }));
    }

    #[test]
    fn single_cell_mean_and_hand_example() {
        let part = generate_partition(&spec_1d(), 0, 1);
        let terminals = vec![vec![1.0], vec![2.0], vec![3.0]];
        let w = uniform_weights(3);
        let asg = assign_cells(&part, &terminals, &w).unwrap();
        let out = conditional_expectation(&[1.0, 3.0, 5.0], &asg, &w).unwrap();
        for v in &out {
            assert!((v - 3.0).abs() < 1e-12);
        }

        // Two cells {0,1} and {2}: values (1,3,5) -> (2,2,5).
        let part = Partition {
            corners: vec![vec![5.0]],
            lower_bounds: vec![0.0],
            upper_bounds: vec![10.0],
            rng_seed: 0,
        };
        let terminals = vec![vec![1.0], vec![2.0], vec![8.0]];
        let asg = assign_cells(&part, &terminals, &w).unwrap();
        let out = conditional_expectation(&[1.0, 3.0, 5.0], &asg, &w).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-12);
        assert!((out[1] - 2.0).abs() < 1e-12);
        assert!((out[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn empty_values_rejected() {
        let part = generate_partition(&spec_1d(), 2, 9);
        let asg = assign_cells(&part, &[], &[]).unwrap();
        assert!(conditional_expectation(&[], &asg, &[]).is_err());
    }

    fn random_sample(
        seed: u64,
        n: usize,
        boxes: usize,
    ) -> (Partition, Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let spec =
            MarketSpec::new(2, vec![0.0, 0.0], vec![10.0, 10.0], vec![5.0, 5.0]).unwrap();
        let part = generate_partition(&spec, boxes, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let terminals: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| rng.gen_range(0.0..10.0)).collect())
            .collect();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        (part, terminals, values, weights)
    }

    #[test]
    fn refinement_signature_prefix_property() {
        // Every cell of the finer partition sits inside exactly one cell of
        // the prefix partition, for every refinement level up to 32 boxes.
        let (part, terminals, _, weights) = random_sample(5, 1000, 32);
        let full = assign_cells(&part, &terminals, &weights).unwrap();
        for level in 0..32 {
            let coarse = assign_cells(&part.prefix(level), &terminals, &weights).unwrap();
            for (sig, cell) in &full.cells {
                let prefix: Vec<bool> = sig[..level].to_vec();
                for &p in &cell.paths {
                    assert_eq!(coarse.signatures[p], prefix);
                }
            }
        }
    }

    #[test]
    fn tower_property_mean_preserved() {
        for seed in 0..5 {
            let (part, terminals, values, weights) = random_sample(seed, 1000, 32);
            let asg = assign_cells(&part, &terminals, &weights).unwrap();
            let cond = conditional_expectation(&values, &asg, &weights).unwrap();
            let before: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
            let after: f64 = cond.iter().zip(&weights).map(|(v, w)| v * w).sum();
            assert!((before - after).abs() <= 1e-12, "tower violated: {before} vs {after}");
        }
    }

    #[test]
    fn weighted_l1_contraction() {
        for seed in 0..5 {
            let (part, terminals, values, weights) = random_sample(seed + 10, 500, 16);
            let asg = assign_cells(&part, &terminals, &weights).unwrap();
            let cond = conditional_expectation(&values, &asg, &weights).unwrap();
            let before: f64 = values.iter().zip(&weights).map(|(v, w)| v.abs() * w).sum();
            let after: f64 = cond.iter().zip(&weights).map(|(v, w)| v.abs() * w).sum();
            assert!(after <= before + 1e-12);
        }
    }

    #[test]
    fn conditioning_is_exactly_idempotent() {
        for seed in 0..5 {
            let (part, terminals, values, weights) = random_sample(seed + 20, 500, 16);
            let asg = assign_cells(&part, &terminals, &weights).unwrap();
            let once = conditional_expectation(&values, &asg, &weights).unwrap();
            let twice = conditional_expectation(&once, &asg, &weights).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn zero_weight_cell_contributes_zero_mean() {
        let part = Partition {
            corners: vec![vec![5.0]],
            lower_bounds: vec![0.0],
            upper_bounds: vec![10.0],
            rng_seed: 0,
        };
        // Path 1 is alone in the upper cell with weight 0.
        let terminals = vec![vec![1.0], vec![8.0]];
        let weights = vec![1.0, 0.0];
        let asg = assign_cells(&part, &terminals, &weights).unwrap();
        let out = conditional_expectation(&[2.0, 7.0], &asg, &weights).unwrap();
        assert_eq!(out[0], 2.0);
        // Constant-cell short-circuit applies before the zero-weight rule.
        assert_eq!(out[1], 7.0);
    }

    #[test]
    fn cells_partition_the_sample() {
        let (part, terminals, _, weights) = random_sample(42, 777, 8);
        let asg = assign_cells(&part, &terminals, &weights).unwrap();
        let mut seen = vec![false; 777];
        let mut total = 0.0;
        for cell in asg.cells.values() {
            for &p in &cell.paths {
                assert!(!seen[p], "path {p} in two cells");
                seen[p] = true;
            }
            total += cell.weight;
        }
        assert!(seen.iter().all(|s| *s));
        assert!((total - 1.0).abs() < 1e-9);
    }
}
