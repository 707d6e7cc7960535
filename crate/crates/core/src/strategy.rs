//! Ridgelet-network trading strategies.
//!
//! A strategy consists of an initial capital `c`, a free position vector for
//! the spot date, and one independent shallow network per later trading date.
//! The network for date `i` maps the flattened, normalized price prefix
//! (S_{t_1} .. S_{t_i}) to one raw output per asset; raw outputs are squashed
//! through `B * tanh(raw / B)` so every emitted position is strictly inside
//! the budget band (-B, B). Networks have independent parameters because
//! their input dimensions differ across dates.
//!
//! All parameters live in one canonical flat vector:
//! `[c, delta0 (a entries), net_1 params, .., net_{n-1} params]`, where each
//! net contributes its hidden layers (weights row-major, then biases) followed
//! by the output weights (row-major) and output bias. [`GradientBundle`]
//! mirrors this layout, and [`RidgeletStrategy::eval_with_gradients`] fills it
//! by reverse-mode differentiation with analytic activation derivatives.
//!
//! Input normalization is an affine standardization with frozen statistics:
//! `(x - mean) / sqrt(var + 1e-5)`. The statistics are fitted once from
//! training paths and are treated as constants, never differentiated through.

use crate::activation::Activation;
use crate::market::{MarketError, PositionSchedule, PricePath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Epsilon in the normalization variance denominator.
pub const NORM_EPS: f64 = 1e-5;

/// The squashed tanh factor is clamped to this magnitude so emitted positions
/// stay strictly inside the budget band even when `tanh` rounds to 1.
const TANH_CAP: f64 = 1.0 - 1e-12;

/// Frozen per-feature normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl InputNorm {
    /// Pass-through statistics (mean 0, variance 1) used before fitting.
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim] }
    }

    /// Population mean and variance over feature rows.
    pub fn fit(samples: &[Vec<f64>]) -> Result<Self, MarketError> {
        let first = samples
            .first()
            .ok_or_else(|| MarketError::InvalidConfig("input_norm fit needs samples".into()))?;
        let dim = first.len();
        let n = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in samples {
            if s.len() != dim {
                return Err(MarketError::ShapeMismatch(format!(
                    "input_norm fit: row of length {} among rows of length {dim}",
                    s.len()
                )));
            }
            for (m, x) in mean.iter_mut().zip(s) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for s in samples {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(s) {
                let d = x - m;
                *v += d * d;
            }
        }
        for v in &mut var {
            *v /= n;
        }
        Ok(Self { mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            input
                .iter()
                .zip(&self.mean)
                .zip(&self.var)
                .map(|((x, m), v)| (x - m) / (v + NORM_EPS).sqrt()),
        );
    }

    fn validate(&self) -> Result<(), MarketError> {
        if self.mean.len() != self.var.len() {
            return Err(MarketError::ShapeMismatch("input_norm mean/var lengths differ".into()));
        }
        if self.var.iter().any(|v| !v.is_finite() || *v < 0.0)
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(MarketError::NonFinite("input_norm statistics".into()));
        }
        Ok(())
    }
}

/// One hidden layer: an affine map followed by a per-unit nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeletLayer {
    /// Row-major `out x in` weights.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl RidgeletLayer {
    pub fn out_dim(&self) -> usize {
        self.biases.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn param_count(&self) -> usize {
        self.out_dim() * self.in_dim() + self.out_dim()
    }

    /// Apply the layer nonlinearity per unit, optionally recording analytic
    /// derivatives for the backward pass.
    fn activate(&self, pre: &[f64], post: &mut [f64], mut deriv: Option<&mut [f64]>) {
        match &self.activation {
            Activation::Base(kind) => {
                for (u, z) in pre.iter().enumerate() {
                    post[u] = kind.value(*z);
                    if let Some(d) = deriv.as_deref_mut() {
                        d[u] = kind.derivative(*z);
                    }
                }
            }
            Activation::Hybrid(groups) => {
                let mut u = 0;
                for &(kind, count) in groups {
                    for _ in 0..count {
                        post[u] = kind.value(pre[u]);
                        if let Some(d) = deriv.as_deref_mut() {
                            d[u] = kind.derivative(pre[u]);
                        }
                        u += 1;
                    }
                }
            }
        }
    }
}

/// The per-date network: hidden ridgelet layers plus a linear read-out to one
/// raw output per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyNet {
    pub input_dim: usize,
    pub layers: Vec<RidgeletLayer>,
    /// Row-major `a x last_width` read-out weights.
    pub output_weights: Vec<Vec<f64>>,
    pub output_bias: Vec<f64>,
    pub input_norm: InputNorm,
}

/// Forward-pass intermediates retained for reverse-mode differentiation.
struct NetCache {
    normalized: Vec<f64>,
    post: Vec<Vec<f64>>,
    deriv: Vec<Vec<f64>>,
    raw: Vec<f64>,
}

impl StrategyNet {
    pub fn num_outputs(&self) -> usize {
        self.output_bias.len()
    }

    pub fn param_count(&self) -> usize {
        let hidden: usize = self.layers.iter().map(RidgeletLayer::param_count).sum();
        hidden + self.num_outputs() * self.last_width() + self.num_outputs()
    }

    fn last_width(&self) -> usize {
        self.layers.last().map_or(self.input_dim, RidgeletLayer::out_dim)
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        self.input_norm.validate()?;
        if self.input_norm.dim() != self.input_dim {
            return Err(MarketError::ShapeMismatch(format!(
                "input_norm dim {} vs input_dim {}",
                self.input_norm.dim(),
                self.input_dim
            )));
        }
        let mut width = self.input_dim;
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != layer.biases.len()
                || layer.weights.iter().any(|row| row.len() != width)
            {
                return Err(MarketError::ShapeMismatch(format!(
                    "layer {l}: expected {}x{width} weights",
                    layer.biases.len()
                )));
            }
            let finite = layer.weights.iter().flatten().all(|w| w.is_finite())
                && layer.biases.iter().all(|b| b.is_finite());
            if !finite {
                return Err(MarketError::NonFinite(format!("layer {l} parameters")));
            }
            // Reject inconsistent hybrid splits up front.
            layer.activation.unit_kinds(layer.out_dim())?;
            width = layer.out_dim();
        }
        if self.output_weights.len() != self.num_outputs()
            || self.output_weights.iter().any(|row| row.len() != width)
        {
            return Err(MarketError::ShapeMismatch(format!(
                "output weights: expected {}x{width}",
                self.num_outputs()
            )));
        }
        if self.output_weights.iter().flatten().any(|w| !w.is_finite())
            || self.output_bias.iter().any(|b| !b.is_finite())
        {
            return Err(MarketError::NonFinite("output parameters".into()));
        }
        Ok(())
    }

    fn forward_impl(&self, input: &[f64], cache: bool) -> Result<(Vec<f64>, Option<NetCache>), MarketError> {
        if input.len() != self.input_dim {
            return Err(MarketError::ShapeMismatch(format!(
                "net expects input of length {}, got {}",
                self.input_dim,
                input.len()
            )));
        }
        let mut normalized = Vec::with_capacity(self.input_dim);
        self.input_norm.normalize_into(input, &mut normalized);
        let mut post_layers = Vec::new();
        let mut deriv_layers = Vec::new();
        let mut h = normalized.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let out = layer.out_dim();
            let mut pre = vec![0.0; out];
            for (o, row) in layer.weights.iter().enumerate() {
                let mut z = layer.biases[o];
                for (w, x) in row.iter().zip(&h) {
                    z += w * x;
                }
                pre[o] = z;
            }
            let mut post = vec![0.0; out];
            let mut deriv = if cache { vec![0.0; out] } else { Vec::new() };
            layer.activate(&pre, &mut post, if cache { Some(&mut deriv) } else { None });
            if post.iter().any(|v| !v.is_finite()) {
                return Err(MarketError::NonFinite(format!("layer {l} output")));
            }
            if cache {
                post_layers.push(post.clone());
                deriv_layers.push(deriv);
            }
            h = post;
        }
        let mut raw = self.output_bias.clone();
        for (o, row) in self.output_weights.iter().enumerate() {
            for (w, x) in row.iter().zip(&h) {
                raw[o] += w * x;
            }
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(MarketError::NonFinite("output layer".into()));
        }
        let cache = cache.then(|| NetCache {
            normalized,
            post: post_layers,
            deriv: deriv_layers,
            raw: raw.clone(),
        });
        Ok((raw, cache))
    }

    /// Raw (pre-squash) outputs for a flattened price prefix.
    pub fn forward_raw(&self, input: &[f64]) -> Result<Vec<f64>, MarketError> {
        self.forward_impl(input, false).map(|(raw, _)| raw)
    }

    /// Backward pass: accumulate d(loss)/d(params) into `grad`, given
    /// d(loss)/d(raw outputs). `grad` must span this net's canonical slice.
    fn backward(&self, cache: &NetCache, draw: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.param_count());
        let last = if let Some(p) = cache.post.last() { p } else { &cache.normalized };
        // Output read-out parameters live at the tail of the slice.
        let out_w_start = grad.len() - self.num_outputs() * self.last_width() - self.num_outputs();
        let out_b_start = grad.len() - self.num_outputs();
        let mut dh = vec![0.0; self.last_width()];
        for (o, d) in draw.iter().enumerate() {
            let row = out_w_start + o * self.last_width();
            for (h, x) in last.iter().enumerate() {
                grad[row + h] += d * x;
                dh[h] += self.output_weights[o][h] * d;
            }
            grad[out_b_start + o] += d;
        }
        // Hidden layers, last to first.
        let mut offset_of_layer = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offset_of_layer.push(off);
            off += layer.param_count();
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let inputs = if l == 0 { &cache.normalized } else { &cache.post[l - 1] };
            let out = layer.out_dim();
            let in_dim = layer.in_dim();
            let w_start = offset_of_layer[l];
            let b_start = w_start + out * in_dim;
            let mut dprev = vec![0.0; in_dim];
            for o in 0..out {
                let dz = dh[o] * cache.deriv[l][o];
                if dz == 0.0 {
                    continue;
                }
                let row = w_start + o * in_dim;
                let wrow = &layer.weights[o];
                for i in 0..in_dim {
                    grad[row + i] += dz * inputs[i];
                    dprev[i] += wrow[i] * dz;
                }
                grad[b_start + o] += dz;
            }
            dh = dprev;
        }
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            for row in &layer.weights {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&layer.biases);
        }
        for row in &self.output_weights {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.output_bias);
    }

    fn read_params(&mut self, mut v: &[f64]) {
        for layer in &mut self.layers {
            for row in &mut layer.weights {
                let len = row.len();
                row.copy_from_slice(&v[..len]);
                v = &v[len..];
            }
            let len = layer.biases.len();
            layer.biases.copy_from_slice(&v[..len]);
            v = &v[len..];
        }
        for row in &mut self.output_weights {
            let len = row.len();
            row.copy_from_slice(&v[..len]);
            v = &v[len..];
        }
        let len = self.output_bias.len();
        self.output_bias.copy_from_slice(&v[..len]);
    }
}

/// Construction parameters for a fresh strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub num_assets: usize,
    /// Number of trading dates n (the spot date is extra).
    pub num_times: usize,
    /// Budget bound B on capital and positions.
    pub budget: f64,
    /// Advisory Lipschitz constant L (reported, not enforced).
    pub lipschitz: f64,
    /// Hidden widths shared by every per-date net.
    pub hidden_widths: Vec<usize>,
    /// Activation selector: relu, silu, gelu, mish, tanh, sigmoid or hybrid.
    pub activation: String,
}

impl StrategyConfig {
    /// Defaults: hidden widths 32a, 64a, 128a and the hybrid activation.
    pub fn new(num_assets: usize, num_times: usize, budget: f64, lipschitz: f64) -> Self {
        Self {
            num_assets,
            num_times,
            budget,
            lipschitz,
            hidden_widths: vec![32 * num_assets, 64 * num_assets, 128 * num_assets],
            activation: "hybrid".to_string(),
        }
    }

    pub fn with_hidden_widths(mut self, widths: Vec<usize>) -> Self {
        self.hidden_widths = widths;
        self
    }

    pub fn with_activation(mut self, name: &str) -> Self {
        self.activation = name.to_string();
        self
    }

    fn validate(&self) -> Result<(), MarketError> {
        if self.num_assets == 0 || self.num_times == 0 {
            return Err(MarketError::InvalidConfig(
                "strategy needs at least one asset and one trading date".into(),
            ));
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(MarketError::InvalidConfig(format!(
                "budget must be positive (got {})",
                self.budget
            )));
        }
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return Err(MarketError::InvalidConfig(format!(
                "lipschitz must be positive (got {})",
                self.lipschitz
            )));
        }
        if self.hidden_widths.iter().any(|w| *w == 0) {
            return Err(MarketError::InvalidConfig("hidden widths must be positive".into()));
        }
        Activation::from_name(&self.activation, 4)?;
        Ok(())
    }
}

/// Flat parameter gradient aligned with the canonical parameter ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub values: Vec<f64>,
}

impl GradientBundle {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &GradientBundle) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }
}

/// Constraint-audit report for a trained strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub capital_ok: bool,
    pub delta0_ok: bool,
    pub max_abs_position: f64,
    pub positions_ok: bool,
    /// Max pairwise slope of each per-date position map over the samples.
    pub empirical_lipschitz: Vec<f64>,
    pub lipschitz_advisory: f64,
    pub lipschitz_within_advisory: bool,
}

/// A full trading strategy: capital, spot-date position and per-date nets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeletStrategy {
    pub c: f64,
    pub delta0: Vec<f64>,
    pub nets: Vec<StrategyNet>,
    pub budget: f64,
    pub lipschitz: f64,
}

impl RidgeletStrategy {
    /// Slot of `c` in the canonical parameter vector.
    pub const C_INDEX: usize = 0;

    /// Slot of `delta0[j]` in the canonical parameter vector.
    pub fn delta0_index(j: usize) -> usize {
        1 + j
    }

    /// Initialize with seeded Glorot-uniform hidden weights, zero biases, and
    /// output weights shrunk by 0.01 so initial positions start near zero.
    pub fn init(config: &StrategyConfig, seed: u64) -> Result<Self, MarketError> {
        config.validate()?;
        let a = config.num_assets;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nets = Vec::with_capacity(config.num_times - 1);
        for i in 1..config.num_times {
            let input_dim = i * a;
            let mut layers = Vec::with_capacity(config.hidden_widths.len());
            let mut fan_in = input_dim;
            for &width in &config.hidden_widths {
                let bound = (6.0 / (fan_in + width) as f64).sqrt();
                let weights = (0..width)
                    .map(|_| (0..fan_in).map(|_| rng.gen_range(-bound..bound)).collect())
                    .collect();
                layers.push(RidgeletLayer {
                    weights,
                    biases: vec![0.0; width],
                    activation: Activation::from_name(&config.activation, width)?,
                });
                fan_in = width;
            }
            let bound = 0.01 * (6.0 / (fan_in + a) as f64).sqrt();
            let output_weights = (0..a)
                .map(|_| (0..fan_in).map(|_| rng.gen_range(-bound..bound)).collect())
                .collect();
            let net = StrategyNet {
                input_dim,
                layers,
                output_weights,
                output_bias: vec![0.0; a],
                input_norm: InputNorm::identity(input_dim),
            };
            net.validate()?;
            nets.push(net);
        }
        Ok(Self {
            c: 0.0,
            delta0: vec![0.0; a],
            nets,
            budget: config.budget,
            lipschitz: config.lipschitz,
        })
    }

    pub fn num_assets(&self) -> usize {
        self.delta0.len()
    }

    pub fn num_times(&self) -> usize {
        self.nets.len() + 1
    }

    pub fn param_count(&self) -> usize {
        1 + self.num_assets() + self.nets.iter().map(StrategyNet::param_count).sum::<usize>()
    }

    /// Start offset of each net's slice in the canonical vector.
    fn net_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.nets.len());
        let mut off = 1 + self.num_assets();
        for net in &self.nets {
            offsets.push(off);
            off += net.param_count();
        }
        offsets
    }

    pub fn to_param_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.push(self.c);
        out.extend_from_slice(&self.delta0);
        for net in &self.nets {
            net.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, v: &[f64]) -> Result<(), MarketError> {
        if v.len() != self.param_count() {
            return Err(MarketError::ShapeMismatch(format!(
                "parameter vector length {} vs expected {}",
                v.len(),
                self.param_count()
            )));
        }
        self.c = v[0];
        let a = self.num_assets();
        self.delta0.copy_from_slice(&v[1..=a]);
        let offsets = self.net_offsets();
        for (net, off) in self.nets.iter_mut().zip(offsets) {
            let count = net.param_count();
            net.read_params(&v[off..off + count]);
        }
        Ok(())
    }

    /// Squash a raw output into the open budget band.
    fn squash(&self, raw: f64) -> f64 {
        self.budget * (raw / self.budget).tanh().clamp(-TANH_CAP, TANH_CAP)
    }

    /// Position schedule for one path: row 0 is `delta0`, later rows come
    /// from the per-date nets squashed into (-B, B).
    pub fn eval_positions(&self, path: &PricePath) -> Result<PositionSchedule, MarketError> {
        let n = self.num_times();
        let a = self.num_assets();
        if path.num_steps() != n || path.num_assets() != a {
            return Err(MarketError::ShapeMismatch(format!(
                "path {}x{} vs strategy {}x{}",
                path.num_steps(),
                path.num_assets(),
                n,
                a
            )));
        }
        let mut rows = Vec::with_capacity(n);
        rows.push(self.delta0.clone());
        for (idx, net) in self.nets.iter().enumerate() {
            let prefix = path.prefix_flat(idx + 1);
            let raw = net.forward_raw(&prefix).map_err(|e| prefix_net_err(idx, e))?;
            rows.push(raw.into_iter().map(|r| self.squash(r)).collect());
        }
        Ok(PositionSchedule::new(rows))
    }

    /// Gradient of `sum_ij upstream[i][j] * position[i][j]` with respect to
    /// every parameter. The `c` slot is zero: capital does not enter the
    /// position maps.
    pub fn eval_with_gradients(
        &self,
        path: &PricePath,
        upstream: &[Vec<f64>],
    ) -> Result<GradientBundle, MarketError> {
        let n = self.num_times();
        let a = self.num_assets();
        if upstream.len() != n || upstream.iter().any(|row| row.len() != a) {
            return Err(MarketError::ShapeMismatch(format!(
                "upstream must be {n}x{a}"
            )));
        }
        if path.num_steps() != n || path.num_assets() != a {
            return Err(MarketError::ShapeMismatch(format!(
                "path {}x{} vs strategy {}x{}",
                path.num_steps(),
                path.num_assets(),
                n,
                a
            )));
        }
        let mut bundle = GradientBundle::zeros(self.param_count());
        for (j, u) in upstream[0].iter().enumerate() {
            bundle.values[Self::delta0_index(j)] = *u;
        }
        let offsets = self.net_offsets();
        for (idx, net) in self.nets.iter().enumerate() {
            let prefix = path.prefix_flat(idx + 1);
            let (_, cache) =
                net.forward_impl(&prefix, true).map_err(|e| prefix_net_err(idx, e))?;
            let cache = cache.expect("cache requested");
            // Chain through the squash: d(B*tanh(r/B))/dr = 1 - t^2.
            let draw: Vec<f64> = cache
                .raw
                .iter()
                .zip(&upstream[idx + 1])
                .map(|(r, u)| {
                    let t = (r / self.budget).tanh().clamp(-TANH_CAP, TANH_CAP);
                    u * (1.0 - t * t)
                })
                .collect();
            let off = offsets[idx];
            let count = net.param_count();
            net.backward(&cache, &draw, &mut bundle.values[off..off + count]);
        }
        Ok(bundle)
    }

    /// Audit the budget constraints and estimate per-net Lipschitz constants
    /// as the max pairwise slope of the position maps over sample paths.
    pub fn check_constraints(
        &self,
        sample_paths: &[PricePath],
    ) -> Result<ConstraintReport, MarketError> {
        let capital_ok = self.c.abs() <= self.budget;
        let delta0_ok = self.delta0.iter().all(|d| d.abs() <= self.budget);
        let schedules: Vec<PositionSchedule> =
            sample_paths.iter().map(|p| self.eval_positions(p)).collect::<Result<_, _>>()?;
        let max_abs_position = schedules
            .iter()
            .map(PositionSchedule::max_abs)
            .fold(self.delta0.iter().fold(0.0, |m: f64, d| m.max(d.abs())), f64::max);
        let mut empirical = vec![0.0; self.nets.len()];
        for (k, slope) in empirical.iter_mut().enumerate() {
            let date = k + 1;
            for p in 0..sample_paths.len() {
                for q in (p + 1)..sample_paths.len() {
                    let xp = sample_paths[p].prefix_flat(date);
                    let xq = sample_paths[q].prefix_flat(date);
                    let dx: f64 =
                        xp.iter().zip(&xq).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    if dx < 1e-12 {
                        continue;
                    }
                    let dy: f64 = schedules[p].positions[date]
                        .iter()
                        .zip(&schedules[q].positions[date])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    *slope = f64::max(*slope, dy / dx);
                }
            }
        }
        let lipschitz_within_advisory = empirical.iter().all(|s| *s <= self.lipschitz);
        Ok(ConstraintReport {
            capital_ok,
            delta0_ok,
            max_abs_position,
            positions_ok: max_abs_position <= self.budget,
            empirical_lipschitz: empirical,
            lipschitz_advisory: self.lipschitz,
            lipschitz_within_advisory,
        })
    }

    /// Fit every net's input normalization from the given paths and freeze it.
    pub fn fit_input_norm(&mut self, paths: &[PricePath]) -> Result<(), MarketError> {
        if paths.is_empty() {
            return Err(MarketError::InvalidConfig("input_norm fit needs paths".into()));
        }
        for (idx, net) in self.nets.iter_mut().enumerate() {
            let date = idx + 1;
            let samples: Vec<Vec<f64>> = paths.iter().map(|p| p.prefix_flat(date)).collect();
            net.input_norm = InputNorm::fit(&samples)?;
        }
        Ok(())
    }
}

fn prefix_net_err(net_idx: usize, e: MarketError) -> MarketError {
    match e {
        MarketError::NonFinite(s) => MarketError::NonFinite(format!("net {net_idx}: {s}")),
        MarketError::ShapeMismatch(s) => {
            MarketError::ShapeMismatch(format!("net {net_idx}: {s}"))
        }
        other => other,
    }
}
