//! Shared training machinery: Adam, dropout, and the model trait the loop is
//! generic over.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distribution::ForecastDistribution;
use super::features::{ForecastInput, TrainExample};
use super::ForecastError;
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Inverted dropout; `Off` in every deterministic test and at inference.
pub enum Dropout<'a> {
    Off,
    On { p: f64, rng: &'a mut ChaCha8Rng },
}

impl Dropout<'_> {
    pub fn apply(&mut self, x: Var) -> Result<Var, TensorError> {
        match self {
            Dropout::Off => Ok(x),
            Dropout::On { p, rng } => {
                let p = *p;
                if p <= 0.0 {
                    return Ok(x);
                }
                let keep = 1.0 - p;
                let shape = x.shape();
                let mask: Vec<f64> = (0..shape.iter().product())
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 / keep })
                    .collect();
                x.mul_const(&Tensor::new(shape, mask).expect("mask shape"))
            }
        }
    }
}

/// Adam with bias correction; β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, param_sizes: &[usize]) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len());
        self.step_count += 1;
        let t = self.step_count as f64;
        let bias1 = 1.0 - self.beta1.powf(t);
        let bias2 = 1.0 - self.beta2.powf(t);
        for ((param, grad), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (i, g) in grad.data().iter().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                param.data_mut()[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// A probabilistic sequence model trainable by [`train`]: it binds its weights
/// to a tape, scores one window with teacher forcing, and samples forecast
/// paths autoregressively.
pub trait SequenceModel {
    type Bound;

    fn bind_to(&self, tape: &Tape) -> Self::Bound;

    /// Mean NLL of one window under teacher forcing.
    fn window_nll(
        bound: &Self::Bound,
        example: &TrainExample,
        dropout: &mut Dropout,
    ) -> Result<Var, TensorError>;

    /// Bound weight handles, in the canonical visit order.
    fn bound_params(bound: &Self::Bound) -> Vec<Var>;

    /// Weight tensors, in the same canonical order.
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn dropout_p(&self) -> f64;

    /// Sample `num_samples` autoregressive paths over the full horizon,
    /// de-standardized.
    fn forecast(
        &self,
        input: &ForecastInput,
        num_samples: usize,
        seed: u64,
    ) -> Result<ForecastDistribution, ForecastError>;

    /// Distribution of the first horizon step only (cheap: one deterministic
    /// decode, `num_samples` draws).
    fn forecast_one_step(
        &self,
        input: &ForecastInput,
        num_samples: usize,
        seed: u64,
    ) -> Result<ForecastDistribution, ForecastError>;
}

/// Minimize mean Student-t NLL with Adam over shuffled mini-batches.
/// Deterministic for a given seed. Returns the per-epoch mean loss.
pub fn train<M: SequenceModel>(
    model: &mut M,
    examples: &[TrainExample],
    config: &TrainConfig,
) -> Result<Vec<f64>, ForecastError> {
    assert!(!examples.is_empty(), "need at least one training window");
    assert!(config.batch_size >= 1, "batch size must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sizes: Vec<usize> = model.params_mut().iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(config.learning_rate, &sizes);
    let dropout_p = model.dropout_p();

    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let tape = Tape::new();
            let bound = model.bind_to(&tape);
            let mut batch_loss: Option<Var> = None;
            for &i in batch {
                let mut dropout = if dropout_p > 0.0 {
                    Dropout::On {
                        p: dropout_p,
                        rng: &mut rng,
                    }
                } else {
                    Dropout::Off
                };
                let nll = M::window_nll(&bound, &examples[i], &mut dropout)?;
                batch_loss = Some(match batch_loss {
                    None => nll,
                    Some(acc) => acc.add(&nll)?,
                });
            }
            let loss = batch_loss
                .expect("non-empty batch")
                .scale(1.0 / batch.len() as f64);
            let loss_value = loss.value().data()[0];
            if !loss_value.is_finite() {
                return Err(ForecastError::NonFinite {
                    epoch,
                    batch: batch_index,
                });
            }
            loss.backward()?;
            let grads: Vec<Tensor> = M::bound_params(&bound)
                .iter()
                .map(|v| {
                    v.grad()
                        .unwrap_or_else(|| Tensor::zeros(&v.shape()))
                })
                .collect();
            adam.step(model.params_mut(), &grads);
            loss_sum += loss_value * batch.len() as f64;
        }
        history.push(loss_sum / examples.len() as f64);
    }
    Ok(history)
}
