//! From-scratch MLP classifier: ReLU hidden layers, softmax output, mean NLL in nats,
//! Adam, and early stopping on dev NLL.
//!
//! Layer `l` stores its weights as a `(fan_in, fan_out)` row-major matrix, so the
//! weights leaving one input unit are contiguous. That layout lets the first layer
//! consume sparse hashed inputs by touching only the rows of non-zero features.
//!
//! With sparse inputs the first layer is updated lazily: Adam moments and weights of
//! rows absent from a minibatch are left untouched for that step. All other parameters
//! follow textbook Adam.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::seed::{self, derive_seed};

#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    /// Row-major `n x dim`.
    Dense { dim: usize, data: Vec<f64> },
    Sparse { dim: usize, rows: Vec<SparseVector> },
}

#[derive(Debug, Clone, Copy)]
pub enum InputRow<'a> {
    Dense(&'a [f64]),
    Sparse(&'a SparseVector),
}

impl InputRow<'_> {
    fn is_finite(&self) -> bool {
        match self {
            InputRow::Dense(x) => x.iter().all(|v| v.is_finite()),
            InputRow::Sparse(x) => x.values().iter().all(|v| v.is_finite()),
        }
    }
}

/// Inputs with class labels in `0..num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Examples {
    inputs: Inputs,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Examples {
    pub fn dense(dim: usize, data: Vec<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if dim == 0 || data.len() != dim * labels.len() {
            return Err(Error::invalid(format!(
                "dense inputs: {} values do not form {} rows of width {dim}",
                data.len(),
                labels.len()
            )));
        }
        Examples::checked(Inputs::Dense { dim, data }, labels, num_classes)
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("dense rows have unequal widths"));
        }
        Examples::dense(dim, rows.concat(), labels, num_classes)
    }

    pub fn sparse(dim: usize, rows: Vec<SparseVector>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::invalid("sparse rows and labels differ in length"));
        }
        if rows.iter().any(|r| r.indices().last().is_some_and(|&i| i as usize >= dim)) {
            return Err(Error::invalid(format!("sparse index out of range for dim {dim}")));
        }
        Examples::checked(Inputs::Sparse { dim, rows }, labels, num_classes)
    }

    fn checked(inputs: Inputs, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(format!("label {bad} out of range for {num_classes} classes")));
        }
        Ok(Examples {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        match &self.inputs {
            Inputs::Dense { dim, .. } | Inputs::Sparse { dim, .. } => *dim,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.inputs, Inputs::Sparse { .. })
    }

    pub fn row(&self, i: usize) -> InputRow<'_> {
        match &self.inputs {
            Inputs::Dense { dim, data } => InputRow::Dense(&data[i * dim..(i + 1) * dim]),
            Inputs::Sparse { rows, .. } => InputRow::Sparse(&rows[i]),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Examples {
        let inputs = match &self.inputs {
            Inputs::Dense { dim, data } => Inputs::Dense {
                dim: *dim,
                data: indices
                    .iter()
                    .flat_map(|&i| data[i * dim..(i + 1) * dim].iter().copied())
                    .collect(),
            },
            Inputs::Sparse { dim, rows } => Inputs::Sparse {
                dim: *dim,
                rows: indices.iter().map(|&i| rows[i].clone()).collect(),
            },
        };
        Examples {
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// The same examples repeated `times` times.
    pub fn repeated(&self, times: usize) -> Examples {
        let idx: Vec<usize> = (0..times).flat_map(|_| 0..self.len()).collect();
        self.subset(&idx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl MlpParams {
    /// All-zero parameters of the given shape.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::invalid(format!("bad layer sizes {layer_sizes:?}")));
        }
        let pairs = layer_sizes.windows(2);
        Ok(MlpParams {
            sizes: layer_sizes.to_vec(),
            weights: pairs.clone().map(|w| vec![0.0; w[0] * w[1]]).collect(),
            biases: pairs.map(|w| vec![0.0; w[1]]).collect(),
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Weight matrix of layer `l`, row-major `(fan_in, fan_out)`.
    pub fn weights(&self, l: usize) -> &[f64] {
        &self.weights[l]
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.weights[l]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.biases[l]
    }

    pub fn biases_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.biases[l]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Every parameter in layer order: weights of layer 0, biases of layer 0, ...
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_params());
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&values[at..at + nw]);
            at += nw;
            b.copy_from_slice(&values[at..at + nb]);
            at += nb;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|v| v.is_finite())
    }
}

/// Glorot-uniform weights (bound `sqrt(6 / (fan_in + fan_out))`) and zero biases.
pub fn init(layer_sizes: &[usize], seed: u64) -> Result<MlpParams> {
    use rand::Rng;
    let mut params = MlpParams::zeros(layer_sizes)?;
    let mut rng = seed::rng(seed);
    for (l, w) in params.weights.iter_mut().enumerate() {
        let bound = (6.0 / (layer_sizes[l] + layer_sizes[l + 1]) as f64).sqrt();
        for v in w.iter_mut() {
            *v = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-layer outputs of one forward pass; the last entry holds logits.
struct Activations {
    layers: Vec<Vec<f64>>,
}

impl Activations {
    fn new(params: &MlpParams) -> Self {
        Activations {
            layers: params.sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn logits(&self) -> &[f64] {
        self.layers.last().unwrap()
    }
}

fn forward_into(params: &MlpParams, x: InputRow<'_>, acts: &mut Activations) {
    let last = params.num_layers() - 1;
    for l in 0..=last {
        let (before, rest) = acts.layers.split_at_mut(l);
        let out = &mut rest[0];
        let fan_out = params.sizes[l + 1];
        let w = &params.weights[l];
        out.copy_from_slice(&params.biases[l]);
        if l == 0 {
            match x {
                InputRow::Dense(x) => {
                    for (i, &xi) in x.iter().enumerate() {
                        if xi != 0.0 {
                            axpy(xi, &w[i * fan_out..(i + 1) * fan_out], out);
                        }
                    }
                }
                InputRow::Sparse(x) => {
                    for (i, xi) in x.iter() {
                        axpy(xi, &w[i * fan_out..(i + 1) * fan_out], out);
                    }
                }
            }
        } else {
            for (i, &ai) in before[l - 1].iter().enumerate() {
                if ai != 0.0 {
                    axpy(ai, &w[i * fan_out..(i + 1) * fan_out], out);
                }
            }
        }
        if l < last {
            for v in out.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn logits(params: &MlpParams, x: InputRow<'_>) -> Result<Vec<f64>> {
    let dim = match x {
        InputRow::Dense(v) => v.len(),
        InputRow::Sparse(v) => v.indices().last().map_or(0, |&i| i as usize + 1),
    };
    let ok = match x {
        InputRow::Dense(_) => dim == params.input_dim(),
        InputRow::Sparse(_) => dim <= params.input_dim(),
    };
    if !ok {
        return Err(Error::invalid(format!(
            "input of width {dim} does not fit a network with input size {}",
            params.input_dim()
        )));
    }
    if !x.is_finite() {
        return Err(Error::invalid("non-finite input"));
    }
    let mut acts = Activations::new(params);
    forward_into(params, x, &mut acts);
    Ok(acts.logits().to_vec())
}

/// Class probabilities. Probabilities of classes whose logit trails the maximum by more
/// than about 745 underflow to zero; use [`nll_of`] for losses in that regime.
pub fn forward(params: &MlpParams, x: InputRow<'_>) -> Result<Vec<f64>> {
    Ok(softmax(&logits(params, x)?))
}

/// Natural-log negative log-likelihood of `label` under `probs`.
pub fn nll_loss(probs: &[f64], label: usize) -> f64 {
    -probs[label].ln()
}

/// Loss computed from logits through log-sum-exp; finite for any finite logits.
pub fn nll_of(params: &MlpParams, x: InputRow<'_>, label: usize) -> Result<f64> {
    let z = logits(params, x)?;
    Ok(log_sum_exp(&z) - z[label])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(params: &MlpParams) -> Self {
        Gradients {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Rows of the first weight matrix that received gradient since the last step.
struct TouchedRows {
    marked: Vec<bool>,
    rows: Vec<usize>,
}

impl TouchedRows {
    fn new(n: usize) -> Self {
        TouchedRows {
            marked: vec![false; n],
            rows: Vec::new(),
        }
    }

    fn mark(&mut self, i: usize) {
        if !self.marked[i] {
            self.marked[i] = true;
            self.rows.push(i);
        }
    }

    fn clear(&mut self) {
        for &i in &self.rows {
            self.marked[i] = false;
        }
        self.rows.clear();
    }
}

struct Backprop {
    acts: Activations,
    deltas: Vec<Vec<f64>>,
}

impl Backprop {
    fn new(params: &MlpParams) -> Self {
        Backprop {
            acts: Activations::new(params),
            deltas: params.sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Adds the gradient of one sample's NLL (not yet averaged) and returns that NLL.
    fn accumulate(
        &mut self,
        params: &MlpParams,
        x: InputRow<'_>,
        label: usize,
        grads: &mut Gradients,
        mut touched: Option<&mut TouchedRows>,
    ) -> f64 {
        forward_into(params, x, &mut self.acts);
        let last = params.num_layers() - 1;
        let logits = self.acts.logits();
        let lse = log_sum_exp(logits);
        let loss = lse - logits[label];
        for (d, z) in self.deltas[last].iter_mut().zip(logits) {
            *d = (z - lse).exp();
        }
        self.deltas[last][label] -= 1.0;

        for l in (0..=last).rev() {
            let fan_out = params.sizes[l + 1];
            let (lower, upper) = self.deltas.split_at_mut(l);
            let delta = &upper[0];
            axpy(1.0, delta, &mut grads.biases[l]);
            let gw = &mut grads.weights[l];
            if l == 0 {
                match x {
                    InputRow::Dense(x) => {
                        for (i, &xi) in x.iter().enumerate() {
                            if xi != 0.0 {
                                axpy(xi, delta, &mut gw[i * fan_out..(i + 1) * fan_out]);
                            }
                        }
                    }
                    InputRow::Sparse(x) => {
                        for (i, xi) in x.iter() {
                            axpy(xi, delta, &mut gw[i * fan_out..(i + 1) * fan_out]);
                            if let Some(t) = touched.as_deref_mut() {
                                t.mark(i);
                            }
                        }
                    }
                }
            } else {
                let prev = &self.acts.layers[l - 1];
                let w = &params.weights[l];
                let prev_delta = &mut lower[l - 1];
                for (i, &ai) in prev.iter().enumerate() {
                    if ai > 0.0 {
                        let row = i * fan_out..(i + 1) * fan_out;
                        axpy(ai, delta, &mut gw[row.clone()]);
                        prev_delta[i] = dot(&w[row], delta);
                    } else {
                        prev_delta[i] = 0.0;
                    }
                }
            }
        }
        loss
    }
}

/// Exact gradient of the mean NLL over `indices` of `batch`.
pub fn grad(params: &MlpParams, batch: &Examples, indices: &[usize]) -> Result<Gradients> {
    if indices.is_empty() {
        return Err(Error::invalid("gradient of an empty batch"));
    }
    check_compatible(params, batch)?;
    let mut grads = Gradients::zeros_like(params);
    let mut bp = Backprop::new(params);
    for &i in indices {
        bp.accumulate(params, batch.row(i), batch.labels[i], &mut grads, None);
    }
    let scale = 1.0 / indices.len() as f64;
    for v in grads.weights.iter_mut().chain(grads.biases.iter_mut()).flatten() {
        *v *= scale;
    }
    Ok(grads)
}

/// Gradient over every example of `batch`.
pub fn grad_all(params: &MlpParams, batch: &Examples) -> Result<Gradients> {
    let idx: Vec<usize> = (0..batch.len()).collect();
    grad(params, batch, &idx)
}

fn check_compatible(params: &MlpParams, data: &Examples) -> Result<()> {
    if params.input_dim() != data.input_dim() || params.num_classes() != data.num_classes {
        return Err(Error::invalid(format!(
            "network {:?} does not match data with input dim {} and {} classes",
            params.sizes,
            data.input_dim(),
            data.num_classes
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Epochs without a dev improvement larger than `min_delta` before stopping.
    pub early_stop_patience: usize,
    pub min_delta: f64,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 200,
            batch_size: 32,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            early_stop_patience: 5,
            min_delta: 0.0,
            hidden: vec![30],
        }
    }
}

impl TrainConfig {
    /// Defaults for dense shortcut or toy inputs (batch 32).
    pub fn dense() -> Self {
        TrainConfig::default()
    }

    /// Defaults for sparse hashed inputs (batch 64).
    pub fn sparse() -> Self {
        TrainConfig {
            batch_size: 64,
            hidden: vec![32],
            ..TrainConfig::default()
        }
    }

    pub fn with_hidden(&self, hidden: &[usize]) -> Self {
        TrainConfig {
            hidden: hidden.to_vec(),
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self, train_size: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive".into());
        }
        if self.batch_size == 0 || self.batch_size > train_size {
            return bad(format!(
                "batch size {} must lie in 1..={train_size}",
                self.batch_size
            ));
        }
        for (name, b) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("adam {name} = {b} must lie in (0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) || self.min_delta < 0.0 {
            return bad("adam eps must be positive and min_delta non-negative".into());
        }
        if self.hidden.contains(&0) {
            return bad(format!("hidden sizes {:?} must be positive", self.hidden));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub nll_nats: f64,
    pub accuracy: f64,
    pub n: usize,
    /// Fingerprint of the labeled set this was measured on, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
}

impl EvalResult {
    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.fingerprint = Some(fingerprint.into());
        self
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Per-sample NLL and predicted class (ties toward the lowest index).
pub fn predict_all(params: &MlpParams, data: &Examples) -> Result<Vec<(f64, usize)>> {
    check_compatible(params, data)?;
    let mut acts = Activations::new(params);
    let mut out = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let x = data.row(i);
        if !x.is_finite() {
            return Err(Error::invalid(format!("non-finite input in row {i}")));
        }
        forward_into(params, x, &mut acts);
        let z = acts.logits();
        out.push((log_sum_exp(z) - z[data.labels[i]], argmax(z)));
    }
    Ok(out)
}

pub fn evaluate(params: &MlpParams, data: &Examples) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(Error::invalid("evaluation on an empty set"));
    }
    let scored = predict_all(params, data)?;
    Ok(summarize(&scored, data.labels()))
}

fn summarize(scored: &[(f64, usize)], labels: &[usize]) -> EvalResult {
    let n = scored.len();
    let nll = scored.iter().map(|(l, _)| l).sum::<f64>() / n as f64;
    let correct = scored.iter().zip(labels).filter(|((_, p), y)| p == *y).count();
    EvalResult {
        nll_nats: nll,
        accuracy: correct as f64 / n as f64,
        n,
        fingerprint: None,
    }
}

/// Predicts the label frequencies it was fitted on, for every input.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrior {
    probs: Vec<f64>,
}

impl ClassPrior {
    pub fn fit(labels: &[usize], num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("class prior of an empty label set"));
        }
        let mut counts = vec![0usize; num_classes];
        for &y in labels {
            if y >= num_classes {
                return Err(Error::invalid(format!("label {y} out of range")));
            }
            counts[y] += 1;
        }
        let n = labels.len() as f64;
        Ok(ClassPrior {
            probs: counts.iter().map(|&c| c as f64 / n).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn evaluate(&self, labels: &[usize]) -> Result<EvalResult> {
        if labels.is_empty() {
            return Err(Error::invalid("evaluation on an empty set"));
        }
        let pred = argmax(&self.probs);
        let scored: Vec<(f64, usize)> = labels.iter().map(|&y| (nll_loss(&self.probs, y), pred)).collect();
        Ok(summarize(&scored, labels))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Epoch 0 is a full pass over the training set at initialization; later epochs
    /// report the mean minibatch loss seen during the epoch.
    pub train_nll: f64,
    pub dev_nll: f64,
    pub dev_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub dev: EvalResult,
}

struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl Adam {
    fn new(params: &MlpParams) -> Self {
        Adam {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            step: 0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn update_slice(
        p: &mut [f64],
        g: &mut [f64],
        m: &mut [f64],
        v: &mut [f64],
        cfg: &TrainConfig,
        scale: f64,
        bc1: f64,
        bc2: f64,
    ) {
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        for i in 0..p.len() {
            let gi = g[i] * scale;
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            g[i] = 0.0;
        }
    }

    /// Applies one step using the summed gradient in `grads` (divided by `batch`), then
    /// zeroes the consumed gradient entries.
    fn step(
        &mut self,
        params: &mut MlpParams,
        grads: &mut Gradients,
        batch: usize,
        cfg: &TrainConfig,
        touched: Option<&mut TouchedRows>,
    ) {
        self.step += 1;
        let bc1 = 1.0 - cfg.adam_beta1.powi(self.step);
        let bc2 = 1.0 - cfg.adam_beta2.powi(self.step);
        let scale = 1.0 / batch as f64;
        for l in 0..params.num_layers() {
            let fan_out = params.sizes[l + 1];
            match (&touched, l) {
                (Some(t), 0) => {
                    for &r in &t.rows {
                        let span = r * fan_out..(r + 1) * fan_out;
                        Adam::update_slice(
                            &mut params.weights[0][span.clone()],
                            &mut grads.weights[0][span.clone()],
                            &mut self.m.weights[0][span.clone()],
                            &mut self.v.weights[0][span],
                            cfg,
                            scale,
                            bc1,
                            bc2,
                        );
                    }
                }
                _ => Adam::update_slice(
                    &mut params.weights[l],
                    &mut grads.weights[l],
                    &mut self.m.weights[l],
                    &mut self.v.weights[l],
                    cfg,
                    scale,
                    bc1,
                    bc2,
                ),
            }
            Adam::update_slice(
                &mut params.biases[l],
                &mut grads.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
                cfg,
                scale,
                bc1,
                bc2,
            );
        }
        if let Some(t) = touched {
            t.clear();
        }
    }
}

/// Trains a fresh network and returns the parameters of the epoch with the lowest dev
/// NLL (epoch 0 = initialization). Deterministic for a given config.
pub fn train(train_set: &Examples, dev_set: &Examples, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate(train_set.len())?;
    if dev_set.is_empty() {
        return Err(Error::invalid("dev set is empty"));
    }
    if train_set.input_dim() != dev_set.input_dim() || train_set.num_classes != dev_set.num_classes {
        return Err(Error::invalid("train and dev sets differ in input width or class count"));
    }
    let mut sizes = vec![train_set.input_dim()];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(train_set.num_classes);

    let mut params = init(&sizes, derive_seed(config.seed, "init"))?;
    let mut shuffle_rng = seed::rng(derive_seed(config.seed, "shuffle"));
    let mut grads = Gradients::zeros_like(&params);
    let mut adam = Adam::new(&params);
    let mut bp = Backprop::new(&params);
    let mut touched = train_set.is_sparse().then(|| TouchedRows::new(sizes[0]));

    let init_train = evaluate(&params, train_set)?;
    let mut dev = evaluate(&params, dev_set)?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_nll: init_train.nll_nats,
        dev_nll: dev.nll_nats,
        dev_acc: dev.accuracy,
    }];
    let mut best = (params.clone(), 0usize, dev.clone());
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        seed::shuffle(&mut order, &mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            for &i in batch {
                loss_sum += bp.accumulate(
                    &params,
                    train_set.row(i),
                    train_set.labels[i],
                    &mut grads,
                    touched.as_mut(),
                );
            }
            adam.step(&mut params, &mut grads, batch.len(), config, touched.as_mut());
        }
        let train_nll = loss_sum / train_set.len() as f64;
        if !train_nll.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("train NLL {train_nll}"),
            });
        }
        dev = evaluate(&params, dev_set)?;
        if !dev.nll_nats.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("dev NLL {}", dev.nll_nats),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_nll,
            dev_nll: dev.nll_nats,
            dev_acc: dev.accuracy,
        });
        if dev.nll_nats < best.2.nll_nats - config.min_delta {
            best = (params.clone(), epoch, dev.clone());
            since_best = 0;
        } else {
            if dev.nll_nats < best.2.nll_nats {
                best = (params.clone(), epoch, dev.clone());
            }
            since_best += 1;
            if since_best >= config.early_stop_patience {
                break;
            }
        }
    }
    let (params, best_epoch, dev) = best;
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
        dev,
    })
}

/// The hidden-size grid searched for control models.
pub fn default_hidden_grid() -> Vec<Vec<usize>> {
    vec![
        vec![10],
        vec![30],
        vec![100],
        vec![300],
        vec![10, 10],
        vec![30, 30],
        vec![100, 100],
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCandidate {
    pub hidden: Vec<usize>,
    pub dev: Option<EvalResult>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best_index: usize,
    pub best: TrainOutcome,
    pub candidates: Vec<GridCandidate>,
}

impl GridOutcome {
    pub fn dev(&self) -> &EvalResult {
        &self.best.dev
    }

    pub fn params(&self) -> &MlpParams {
        &self.best.params
    }
}

/// Trains one model per hidden spec (in parallel when a pool is installed) and keeps
/// the lowest dev NLL, ties going to the earlier spec.
pub fn grid_search(
    train_set: &Examples,
    dev_set: &Examples,
    hidden_specs: &[Vec<usize>],
    base: &TrainConfig,
) -> Result<GridOutcome> {
    if hidden_specs.is_empty() {
        return Err(Error::invalid("empty hidden-size grid"));
    }
    let mut runs: Vec<Result<TrainOutcome>> = hidden_specs
        .par_iter()
        .map(|h| train(train_set, dev_set, &base.with_hidden(h)))
        .collect();
    let candidates = hidden_specs
        .iter()
        .zip(&runs)
        .map(|(h, r)| GridCandidate {
            hidden: h.clone(),
            dev: r.as_ref().ok().map(|o| o.dev.clone()),
            best_epoch: r.as_ref().ok().map(|o| o.best_epoch),
            error: r.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    let mut best_index: Option<usize> = None;
    let scores: Vec<Option<f64>> = runs.iter().map(|r| r.as_ref().ok().map(|o| o.dev.nll_nats)).collect();
    for (i, score) in scores.iter().enumerate() {
        if let Some(s) = score {
            if best_index.is_none_or(|b| *s < scores[b].unwrap()) {
                best_index = Some(i);
            }
        }
    }
    match best_index {
        Some(b) => Ok(GridOutcome {
            best_index: b,
            best: runs.swap_remove(b).unwrap(),
            candidates,
        }),
        None => Err(runs.swap_remove(0).unwrap_err()),
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"TSIMLP01";

/// Binary layout, all integers and floats little-endian:
/// magic `TSIMLP01`, `u32` count of layer sizes, that many `u64` sizes, then for each
/// layer its `(fan_in, fan_out)` weights row-major as `f64`, followed by its biases.
pub fn write_checkpoint<W: Write>(mut out: W, params: &MlpParams) -> Result<()> {
    let io = |e| Error::io("<checkpoint>", e);
    out.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    out.write_all(&(params.sizes.len() as u32).to_le_bytes()).map_err(io)?;
    for &s in &params.sizes {
        out.write_all(&(s as u64).to_le_bytes()).map_err(io)?;
    }
    let mut buf = Vec::with_capacity(params.num_params() * 8);
    for v in params.flat() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf).map_err(io)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<MlpParams> {
    let io = |e| Error::io("<checkpoint>", e);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not an MLP checkpoint".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word).map_err(io)?;
    let count = u32::from_le_bytes(word) as usize;
    if !(2..=64).contains(&count) {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut sizes = Vec::with_capacity(count);
    let mut long = [0u8; 8];
    for _ in 0..count {
        input.read_exact(&mut long).map_err(io)?;
        sizes.push(u64::from_le_bytes(long) as usize);
    }
    let mut params = MlpParams::zeros(&sizes)?;
    let mut bytes = vec![0u8; params.num_params() * 8];
    input.read_exact(&mut bytes).map_err(io)?;
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    params.set_flat(&flat);
    Ok(params)
}

/// Sidecar written next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub layer_sizes: Vec<usize>,
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub dev: EvalResult,
}

impl CheckpointMeta {
    pub fn new(outcome: &TrainOutcome, config: &TrainConfig) -> Self {
        CheckpointMeta {
            format: "tsi-mlp v1".into(),
            layer_sizes: outcome.params.sizes.clone(),
            config: config.clone(),
            best_epoch: outcome.best_epoch,
            dev: outcome.dev.clone(),
        }
    }
}

/// CSV `epoch,train_nll,dev_nll,dev_acc`.
pub fn write_history_csv<W: Write>(out: W, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in history {
        w.serialize(rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny(sizes: &[usize], seed: u64) -> MlpParams {
        init(sizes, seed).unwrap()
    }

    fn random_examples(n: usize, dim: usize, m: usize, seed: u64) -> Examples {
        let mut rng = seed::rng(seed);
        let data: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels = (0..n).map(|_| rng.random_range(0..m)).collect();
        Examples::dense(dim, data, labels, m).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases_and_bounded_weights() {
        let a = tiny(&[4, 3, 2], 11);
        assert_eq!(a, tiny(&[4, 3, 2], 11));
        assert_ne!(a, tiny(&[4, 3, 2], 12));
        assert!(a.biases.iter().flatten().all(|&b| b == 0.0));
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(a.weights(0).iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn zero_network_is_uniform() {
        let p = MlpParams::zeros(&[2, 4, 3]).unwrap();
        let probs = forward(&p, InputRow::Dense(&[0.3, -1.0])).unwrap();
        for q in probs {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let probs = softmax(&[1000.0, 0.0]);
        assert!(probs.iter().all(|p| p.is_finite()));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // nll through logits never overflows
        let mut p = MlpParams::zeros(&[1, 2]).unwrap();
        p.weights_mut(0).copy_from_slice(&[1000.0, 0.0]);
        let loss = nll_of(&p, InputRow::Dense(&[1.0]), 1).unwrap();
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn hand_evaluated_two_two_two_network() {
        let mut p = MlpParams::zeros(&[2, 2, 2]).unwrap();
        // rows are inputs: W0[i][j]
        p.weights_mut(0).copy_from_slice(&[0.5, -1.0, 0.25, 2.0]);
        p.biases_mut(0).copy_from_slice(&[0.1, -0.2]);
        p.weights_mut(1).copy_from_slice(&[1.0, -1.0, 0.5, 0.3]);
        p.biases_mut(1).copy_from_slice(&[0.0, 0.2]);
        // x = (1, 2): h_pre = (0.5 + 0.5 + 0.1, -1 + 4 - 0.2) = (1.1, 2.8)
        // logits = (1.1*1 + 2.8*0.5, 1.1*-1 + 2.8*0.3 + 0.2) = (2.5, -0.06)
        let probs = forward(&p, InputRow::Dense(&[1.0, 2.0])).unwrap();
        let e0 = 2.5f64.exp();
        let e1 = (-0.06f64).exp();
        assert!((probs[0] - e0 / (e0 + e1)).abs() < 1e-9);
        assert!((probs[1] - e1 / (e0 + e1)).abs() < 1e-9);
    }

    #[test]
    fn relu_blocks_negative_units() {
        let mut p = MlpParams::zeros(&[1, 1, 2]).unwrap();
        p.weights_mut(0)[0] = -1.0;
        p.weights_mut(1).copy_from_slice(&[5.0, -5.0]);
        let probs = forward(&p, InputRow::Dense(&[3.0])).unwrap();
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let p = tiny(&[2, 2], 0);
        assert!(forward(&p, InputRow::Dense(&[f64::NAN, 0.0])).is_err());
        assert!(forward(&p, InputRow::Dense(&[1.0])).is_err());
    }

    #[test]
    fn nll_values() {
        assert!((nll_loss(&[0.5, 0.5], 0) - 2f64.ln()).abs() < 1e-15);
        assert!((nll_loss(&[0.9, 0.1], 0) - 0.1054).abs() < 5e-5);
        assert!((nll_loss(&[0.9, 0.1], 1) - 2.3026).abs() < 5e-5);
    }

    #[test]
    fn gradient_matches_central_differences_on_dense_and_sparse_inputs() {
        let check = |params: &mut MlpParams, data: &Examples| {
            let g = grad_all(params, data).unwrap().flat();
            let base = params.flat();
            let mean_nll = |p: &MlpParams| evaluate(p, data).unwrap().nll_nats;
            for k in 0..base.len() {
                let mut plus = base.clone();
                plus[k] += 1e-5;
                let mut minus = base.clone();
                minus[k] -= 1e-5;
                params.set_flat(&plus);
                let fp = mean_nll(params);
                params.set_flat(&minus);
                let fm = mean_nll(params);
                let numeric = (fp - fm) / 2e-5;
                let denom = numeric.abs().max(g[k].abs()).max(1e-8);
                assert!((numeric - g[k]).abs() / denom < 1e-4 || (numeric - g[k]).abs() < 1e-9);
            }
            params.set_flat(&base);
        };
        let mut p = tiny(&[3, 4, 3], 5);
        check(&mut p, &random_examples(6, 3, 3, 1));

        let rows = vec![
            SparseVector::new(vec![0, 4], vec![0.6, 0.8]).unwrap(),
            SparseVector::new(vec![2], vec![1.0]).unwrap(),
            SparseVector::new(vec![1, 3, 4], vec![0.5, 0.5, 0.7]).unwrap(),
        ];
        let sparse = Examples::sparse(5, rows, vec![0, 1, 1], 2).unwrap();
        let mut q = tiny(&[5, 3, 2], 9);
        check(&mut q, &sparse);
    }

    #[test]
    fn duplicated_batch_has_the_same_gradient() {
        let p = tiny(&[3, 5, 2], 2);
        let data = random_examples(8, 3, 2, 4);
        let g1 = grad_all(&p, &data).unwrap().flat();
        let g2 = grad_all(&p, &data.repeated(2)).unwrap().flat();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn output_gradient_vanishes_at_balanced_stationary_point() {
        let p = MlpParams::zeros(&[2, 3]).unwrap();
        let data = Examples::dense(2, vec![0.0; 6], vec![0, 1, 2], 3).unwrap();
        let g = grad_all(&p, &data).unwrap();
        assert!(g.weights[0].iter().all(|&v| v == 0.0));
        assert!(g.biases[0].iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn evaluate_hand_cases() {
        let p = MlpParams::zeros(&[1, 3]).unwrap();
        let data = Examples::dense(1, vec![0.0; 4], vec![0, 1, 2, 1], 3).unwrap();
        let e = evaluate(&p, &data).unwrap();
        assert!((e.nll_nats - 3f64.ln()).abs() < 1e-12);
        assert!((e.nll_nats - 1.0986).abs() < 5e-5);
        // ties go to class 0
        assert_eq!(e.accuracy, 0.25);

        // probs (0.9, 0.1) from logit gap ln 9
        let mut q = MlpParams::zeros(&[1, 2]).unwrap();
        q.biases_mut(0)[0] = 9f64.ln();
        let two = Examples::dense(1, vec![0.0, 0.0], vec![0, 1], 2).unwrap();
        let e = evaluate(&q, &two).unwrap();
        let expected = (-(0.9f64.ln()) - 0.1f64.ln()) / 2.0;
        assert!((e.nll_nats - expected).abs() < 1e-12);
        assert!((e.nll_nats - 1.2040).abs() < 5e-5);
        assert_eq!(e.accuracy, 0.5);
    }

    #[test]
    fn class_prior_matches_plug_in_entropy() {
        let labels = vec![0, 0, 0, 1, 2, 2];
        let prior = ClassPrior::fit(&labels, 3).unwrap();
        let e = prior.evaluate(&labels).unwrap();
        let h = crate::corpus::entropy_of_counts(&[3, 1, 2]);
        assert!((e.nll_nats - h).abs() < 1e-9);
    }

    #[test]
    fn separable_problem_trains_to_zero_loss() {
        let mut rng = seed::rng(3);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..600 {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            if (x + y).abs() < 0.2 {
                continue;
            }
            rows.push(vec![x, y]);
            labels.push(usize::from(x + y > 0.0));
        }
        let data = Examples::from_rows(&rows, labels, 2).unwrap();
        let (train_idx, dev_idx): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|i| i % 4 != 0);
        let (tr, dv) = (data.subset(&train_idx), data.subset(&dev_idx));
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            hidden: vec![10],
            ..TrainConfig::default()
        };
        let out = train(&tr, &dv, &cfg).unwrap();
        assert_eq!(out.dev.accuracy, 1.0);
        assert!(out.dev.nll_nats < 0.05, "{}", out.dev.nll_nats);
        assert_eq!(evaluate(&out.params, &tr).unwrap().accuracy, 1.0);
    }

    #[test]
    fn training_is_deterministic_and_never_worse_than_init() {
        let tr = random_examples(200, 3, 2, 1);
        let dv = random_examples(100, 3, 2, 2);
        let cfg = TrainConfig {
            max_epochs: 8,
            ..TrainConfig::default()
        };
        let a = train(&tr, &dv, &cfg).unwrap();
        let b = train(&tr, &dv, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
        assert!(a.dev.nll_nats <= a.history[0].dev_nll);
    }

    fn as_sparse(data: &Examples) -> Examples {
        let rows = (0..data.len())
            .map(|i| match data.row(i) {
                InputRow::Dense(x) => SparseVector::new((0..x.len() as u32).collect(), x.to_vec()).unwrap(),
                InputRow::Sparse(_) => unreachable!(),
            })
            .collect();
        Examples::sparse(data.input_dim(), rows, data.labels().to_vec(), data.num_classes()).unwrap()
    }

    #[test]
    fn lazy_adam_matches_dense_adam_when_every_row_is_touched() {
        let mut rng = seed::rng(11);
        let positive = |n: usize, rng: &mut seed::SeededRng| {
            let data: Vec<f64> = (0..n * 4).map(|_| rng.random_range(0.1..1.0)).collect();
            let labels = (0..n).map(|i| usize::from(data[i * 4] > 0.55)).collect();
            Examples::dense(4, data, labels, 2).unwrap()
        };
        let (tr, dv) = (positive(120, &mut rng), positive(40, &mut rng));
        let cfg = TrainConfig {
            max_epochs: 6,
            batch_size: 16,
            hidden: vec![5],
            ..TrainConfig::default()
        };
        let dense = train(&tr, &dv, &cfg).unwrap();
        let sparse = train(&as_sparse(&tr), &as_sparse(&dv), &cfg).unwrap();
        assert_eq!(dense.best_epoch, sparse.best_epoch);
        for (a, b) in dense.params.flat().iter().zip(sparse.params.flat()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn lazy_adam_leaves_untouched_rows_alone() {
        let rows: Vec<SparseVector> = (0..40)
            .map(|i| SparseVector::new(vec![(i % 3) as u32], vec![1.0]).unwrap())
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i % 3 == 1)).collect();
        let data = Examples::sparse(5, rows, labels, 2).unwrap();
        let cfg = TrainConfig {
            max_epochs: 3,
            batch_size: 8,
            early_stop_patience: 10,
            hidden: vec![4],
            ..TrainConfig::default()
        };
        let out = train(&data, &data, &cfg).unwrap();
        let start = init(&[5, 4, 2], derive_seed(cfg.seed, "init")).unwrap();
        let (w0, w) = (start.weights(0), out.params.weights(0));
        // Rows 3 and 4 never appear in any input.
        assert_eq!(&w0[3 * 4..], &w[3 * 4..]);
        assert_ne!(&w0[..3 * 4], &w[..3 * 4]);
    }

    #[test]
    fn config_validation() {
        let tr = random_examples(10, 2, 2, 1);
        let mut cfg = TrainConfig::default();
        assert!(train(&tr, &tr, &cfg).is_err(), "batch 32 > 10 samples");
        cfg.batch_size = 4;
        cfg.adam_beta1 = 1.0;
        assert!(train(&tr, &tr, &cfg).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let tr = random_examples(64, 2, 2, 1);
        let cfg = TrainConfig {
            learning_rate: f64::MAX,
            batch_size: 8,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&tr, &tr, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn grid_search_picks_the_minimum() {
        let tr = random_examples(120, 2, 2, 7);
        let dv = random_examples(60, 2, 2, 8);
        let base = TrainConfig {
            max_epochs: 5,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let single = grid_search(&tr, &dv, &[vec![10]], &base).unwrap();
        let direct = train(&tr, &dv, &base.with_hidden(&[10])).unwrap();
        assert_eq!(single.dev(), &direct.dev);

        let specs = vec![vec![10], vec![30], vec![10, 10]];
        let g = grid_search(&tr, &dv, &specs, &base).unwrap();
        for c in &g.candidates {
            assert!(g.dev().nll_nats <= c.dev.as_ref().unwrap().nll_nats);
        }
        assert!(grid_search(&tr, &dv, &[], &base).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = tiny(&[3, 4, 2], 1);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        assert_eq!(&buf[..8], b"TSIMLP01");
        assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), p);
        assert!(read_checkpoint(&b"NOTAMODEL"[..]).is_err());
    }

    #[test]
    fn history_csv_header() {
        let mut buf = Vec::new();
        write_history_csv(
            &mut buf,
            &[EpochRecord {
                epoch: 0,
                train_nll: 0.5,
                dev_nll: 0.25,
                dev_acc: 1.0,
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_nll,dev_nll,dev_acc\n0,0.5,0.25,1.0\n");
    }
}
