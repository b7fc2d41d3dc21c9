//! Single-layer gated recurrent baseline. It consumes the same standardized
//! windows as the Transformer (previous value, time features, static
//! embedding per step), feeds the same Student-t head, and trains through the
//! same loop, so model comparisons isolate the architecture.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::distribution::ForecastDistribution;
use super::features::{ForecastInput, TrainExample};
use super::model::student_t_nll;
use super::params::{init_head, xavier, Gate, GruWeights};
use super::train::{Dropout, SequenceModel};
use super::{ForecastError, ModelConfig, TIME_FEATURES};
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecurrentConfig {
    pub context_length: usize,
    pub prediction_length: usize,
    pub hidden_size: usize,
    pub embedding_dimension: usize,
    pub cardinality: usize,
    pub dropout: f64,
}

impl RecurrentConfig {
    /// Comparable sizing: hidden dimension matching the Transformer's dModel.
    pub fn from_model(config: &ModelConfig) -> RecurrentConfig {
        RecurrentConfig {
            context_length: config.context_length,
            prediction_length: config.prediction_length,
            hidden_size: config.d_model,
            embedding_dimension: config.embedding_dimension,
            cardinality: config.cardinality,
            dropout: config.dropout,
        }
    }

    pub fn input_dim(&self) -> usize {
        1 + TIME_FEATURES + self.embedding_dimension
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.hidden_size == 0
            || self.context_length == 0
            || self.prediction_length == 0
            || self.cardinality == 0
            || self.embedding_dimension == 0
        {
            return Err(ForecastError::BadConfig(
                "recurrent config dimensions must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ForecastError::BadConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Gru {
    pub config: RecurrentConfig,
    pub weights: GruWeights<Tensor>,
}

impl Gru {
    pub fn new(config: RecurrentConfig, seed: u64) -> Result<Gru, ForecastError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let din = config.input_dim();
        let h = config.hidden_size;
        let gate = |rng: &mut ChaCha8Rng| Gate {
            wx: xavier(rng, din, h),
            wh: xavier(rng, h, h),
            b: Tensor::zeros(&[h]),
        };
        let weights = GruWeights {
            static_embedding: xavier(&mut rng, config.cardinality, config.embedding_dimension),
            update: gate(&mut rng),
            reset: gate(&mut rng),
            candidate: gate(&mut rng),
            head: init_head(&mut rng, h),
        };
        Ok(Gru { config, weights })
    }

    pub fn bind(&self, tape: &Tape) -> BoundGru {
        BoundGru {
            tape: tape.clone(),
            config: self.config.clone(),
            weights: self.weights.map(&mut |t: &Tensor| tape.param(t.clone())),
        }
    }

}

pub struct BoundGru {
    pub tape: Tape,
    pub config: RecurrentConfig,
    pub weights: GruWeights<Var>,
}

impl BoundGru {
    fn gate(&self, gate: &Gate<Var>, x: &Var, h: &Var) -> Result<Var, TensorError> {
        x.matmul(&gate.wx)?
            .add(&h.matmul(&gate.wh)?)?
            .add_bias(&gate.b)
    }

    /// One cell update: `h' = (1 - z) ∘ n + z ∘ h`.
    pub fn step(&self, h: &Var, x: &Var) -> Result<Var, TensorError> {
        let z = self.gate(&self.weights.update, x, h)?.sigmoid();
        let r = self.gate(&self.weights.reset, x, h)?.sigmoid();
        let n = x
            .matmul(&self.weights.candidate.wx)?
            .add(&r.mul(h)?.matmul(&self.weights.candidate.wh)?)?
            .add_bias(&self.weights.candidate.b)?
            .tanh();
        let keep = z.neg().add_scalar(1.0);
        keep.mul(&n)?.add(&z.mul(h)?)
    }

    fn input_row(
        &self,
        prev_value: f64,
        time_row: &[f64],
        static_id: usize,
    ) -> Result<Var, TensorError> {
        let mut data = Vec::with_capacity(1 + TIME_FEATURES);
        data.push(prev_value);
        data.extend_from_slice(time_row);
        let consts = self
            .tape
            .constant(Tensor::new(vec![1, 1 + TIME_FEATURES], data).expect("input row"));
        let emb = Var::embedding_lookup(&self.weights.static_embedding, &[static_id])?;
        Var::concat(&[consts, emb], 1)
    }

    pub fn zero_state(&self) -> Var {
        self.tape.constant(Tensor::zeros(&[1, self.config.hidden_size]))
    }

    /// Consume the context; returns the hidden state at the forecast origin.
    pub fn run_context(&self, input: &ForecastInput) -> Result<Var, TensorError> {
        let mut h = self.zero_state();
        for t in 0..input.context_length {
            let absolute = input.max_lag + t;
            let time_row: Vec<f64> = (0..TIME_FEATURES)
                .map(|f| input.past_time.at2(absolute, f))
                .collect();
            let x = self.input_row(input.past_values[absolute - 1], &time_row, input.static_id)?;
            h = self.step(&h, &x)?;
        }
        Ok(h)
    }

    /// Walk the horizon from state `h`, one previous value per step, emitting
    /// Student-t parameters per step (each `[steps, 1]`).
    pub fn horizon_params(
        &self,
        h: Var,
        input: &ForecastInput,
        prev_values_std: &[f64],
        dropout: &mut Dropout,
    ) -> Result<(Var, Var, Var), TensorError> {
        let mut state = h;
        let mut locs = Vec::with_capacity(prev_values_std.len());
        let mut scales = Vec::with_capacity(prev_values_std.len());
        let mut dofs = Vec::with_capacity(prev_values_std.len());
        for (j, &prev) in prev_values_std.iter().enumerate() {
            let time_row: Vec<f64> = (0..TIME_FEATURES)
                .map(|f| input.future_time.at2(j, f))
                .collect();
            let x = self.input_row(prev, &time_row, input.static_id)?;
            state = self.step(&state, &x)?;
            let emit = dropout.apply(state.clone())?;
            locs.push(
                emit.matmul(&self.weights.head.loc.w)?
                    .add_bias(&self.weights.head.loc.b)?,
            );
            scales.push(
                emit.matmul(&self.weights.head.scale.w)?
                    .add_bias(&self.weights.head.scale.b)?
                    .softplus(),
            );
            dofs.push(
                emit.matmul(&self.weights.head.dof.w)?
                    .add_bias(&self.weights.head.dof.b)?
                    .softplus()
                    .add_scalar(2.0),
            );
        }
        Ok((
            Var::concat(&locs, 0)?,
            Var::concat(&scales, 0)?,
            Var::concat(&dofs, 0)?,
        ))
    }
}

impl SequenceModel for Gru {
    type Bound = BoundGru;

    fn bind_to(&self, tape: &Tape) -> BoundGru {
        self.bind(tape)
    }

    fn window_nll(
        bound: &BoundGru,
        example: &TrainExample,
        dropout: &mut Dropout,
    ) -> Result<Var, TensorError> {
        let h = bound.run_context(&example.input)?;
        let mut prev = Vec::with_capacity(example.targets_std.len());
        prev.push(example.input.last_context_value());
        prev.extend_from_slice(&example.targets_std[..example.targets_std.len() - 1]);
        let (loc, scale, dof) = bound.horizon_params(h, &example.input, &prev, dropout)?;
        student_t_nll(&loc, &scale, &dof, &example.targets_std)
    }

    fn bound_params(bound: &BoundGru) -> Vec<Var> {
        let mut out = Vec::new();
        bound.weights.visit(&mut |_, v| out.push(v.clone()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.weights.visit_mut(&mut |_, t| out.push(t));
        out
    }

    fn dropout_p(&self) -> f64 {
        self.config.dropout
    }

    fn forecast(
        &self,
        input: &ForecastInput,
        num_samples: usize,
        seed: u64,
    ) -> Result<ForecastDistribution, ForecastError> {
        let horizon = self.config.prediction_length;
        let context_state = {
            let tape = Tape::new();
            let bound = self.bind(&tape);
            bound.run_context(input)?.value()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut raw = Vec::with_capacity(num_samples);
        for _ in 0..num_samples {
            let tape = Tape::new();
            let bound = self.bind(&tape);
            let mut state = tape.constant((*context_state).clone());
            let mut prev = input.last_context_value();
            let mut path = Vec::with_capacity(horizon);
            for j in 0..horizon {
                let time_row: Vec<f64> = (0..TIME_FEATURES)
                    .map(|f| input.future_time.at2(j, f))
                    .collect();
                let x = bound.input_row(prev, &time_row, input.static_id)?;
                state = bound.step(&state, &x)?;
                let (m, s, v) = head_values(&bound, &state)?;
                let t: f64 = rand_distr::StudentT::new(v)
                    .expect("dof > 2")
                    .sample(&mut rng);
                let draw = m + s * t;
                path.push(input.scale.destandardize(draw));
                prev = draw;
            }
            raw.push(path);
        }
        Ok(ForecastDistribution::from_raw_samples(raw, seed))
    }

    fn forecast_one_step(
        &self,
        input: &ForecastInput,
        num_samples: usize,
        seed: u64,
    ) -> Result<ForecastDistribution, ForecastError> {
        let tape = Tape::new();
        let bound = self.bind(&tape);
        let state = bound.run_context(input)?;
        let time_row: Vec<f64> = (0..TIME_FEATURES)
            .map(|f| input.future_time.at2(0, f))
            .collect();
        let x = bound.input_row(input.last_context_value(), &time_row, input.static_id)?;
        let state = bound.step(&state, &x)?;
        let (m, s, v) = head_values(&bound, &state)?;
        let student = rand_distr::StudentT::new(v).expect("dof > 2");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = (0..num_samples)
            .map(|_| {
                let t: f64 = student.sample(&mut rng);
                vec![input.scale.destandardize(m + s * t)]
            })
            .collect();
        Ok(ForecastDistribution::from_raw_samples(raw, seed))
    }
}

fn head_values(bound: &BoundGru, state: &Var) -> Result<(f64, f64, f64), TensorError> {
    let m = state
        .matmul(&bound.weights.head.loc.w)?
        .add_bias(&bound.weights.head.loc.b)?
        .value()
        .data()[0];
    let s = state
        .matmul(&bound.weights.head.scale.w)?
        .add_bias(&bound.weights.head.scale.b)?
        .softplus()
        .value()
        .data()[0];
    let v = state
        .matmul(&bound.weights.head.dof.w)?
        .add_bias(&bound.weights.head.dof.b)?
        .softplus()
        .add_scalar(2.0)
        .value()
        .data()[0];
    Ok((m, s, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::features::build_input;
    use crate::trace::{Granularity, InvocationSeries};
    use chrono::{DateTime, Utc};

    fn start() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2019-07-15T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc)
    }

    fn tiny_config() -> RecurrentConfig {
        RecurrentConfig {
            context_length: 6,
            prediction_length: 3,
            hidden_size: 4,
            embedding_dimension: 2,
            cardinality: 1,
            dropout: 0.0,
        }
    }

    fn tiny_input() -> ForecastInput {
        let series = InvocationSeries {
            function_id: "f".into(),
            granularity: Granularity::Minute,
            start_time: start(),
            values: (0..40).map(|i| (i * 3) % 7).collect(),
        };
        let cfg = ModelConfig {
            context_length: 6,
            prediction_length: 3,
            lags_sequence: vec![1, 2],
            cardinality: 1,
            ..ModelConfig::default_minute()
        };
        build_input(&series, 20, &cfg, 0).unwrap()
    }

    #[test]
    fn zero_weights_keep_hidden_state_at_zero_fixed_point() {
        let mut gru = Gru::new(tiny_config(), 0).unwrap();
        gru.weights.visit_mut(&mut |_, t| *t = Tensor::zeros(t.shape()));
        let tape = Tape::new();
        let bound = gru.bind(&tape);
        let input = tiny_input();
        let h = bound.run_context(&input).unwrap();
        // z = sigmoid(0) = 1/2, n = tanh(0) = 0, so h' = h/2; from h = 0 it stays 0
        assert!(h.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_step_unroll_passes_gradient_check() {
        use crate::tensor::grad_check;
        let config = tiny_config();
        let gru = Gru::new(config.clone(), 3).unwrap();
        let input = tiny_input();

        // pack all weights into one vector and grad-check the unrolled NLL
        let mut flat = Vec::new();
        gru.weights.visit(&mut |_, t| flat.extend_from_slice(t.data()));
        let shapes: Vec<Vec<usize>> = {
            let mut s = Vec::new();
            gru.weights.visit(&mut |_, t| s.push(t.shape().to_vec()));
            s
        };
        let targets = vec![0.4, -0.2];

        let f = move |tape: &Tape, theta: Var| -> Result<Var, crate::tensor::TensorError> {
            let mut offset = 0;
            let mut pieces = Vec::new();
            for shape in &shapes {
                let len: usize = shape.iter().product();
                pieces.push(theta.slice_axis(0, offset, len)?.reshape(shape)?);
                offset += len;
            }
            let mut iter = pieces.into_iter();
            let weights = GruWeights {
                static_embedding: iter.next().unwrap(),
                update: Gate {
                    wx: iter.next().unwrap(),
                    wh: iter.next().unwrap(),
                    b: iter.next().unwrap(),
                },
                reset: Gate {
                    wx: iter.next().unwrap(),
                    wh: iter.next().unwrap(),
                    b: iter.next().unwrap(),
                },
                candidate: Gate {
                    wx: iter.next().unwrap(),
                    wh: iter.next().unwrap(),
                    b: iter.next().unwrap(),
                },
                head: crate::forecaster::params::Head {
                    loc: crate::forecaster::params::Linear {
                        w: iter.next().unwrap(),
                        b: iter.next().unwrap(),
                    },
                    scale: crate::forecaster::params::Linear {
                        w: iter.next().unwrap(),
                        b: iter.next().unwrap(),
                    },
                    dof: crate::forecaster::params::Linear {
                        w: iter.next().unwrap(),
                        b: iter.next().unwrap(),
                    },
                },
            };
            let bound = BoundGru {
                tape: tape.clone(),
                config: config.clone(),
                weights,
            };
            let h = bound.zero_state();
            let x0 = bound.input_row(0.3, &[0.1, -0.2, 0.0, 0.25, -0.1], 0)?;
            let h = bound.step(&h, &x0)?;
            let (loc, scale, dof) =
                bound.horizon_params(h, &input, &[0.3, 0.5], &mut Dropout::Off)?;
            student_t_nll(&loc, &scale, &dof, &targets)
        };

        let report = grad_check(&f, &Tensor::from_vec(flat), 1e-5, 1e-4).unwrap();
        assert!(report.passed(), "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn forecast_is_deterministic_under_fixed_seed() {
        let gru = Gru::new(tiny_config(), 5).unwrap();
        let input = tiny_input();
        let a = gru.forecast(&input, 8, 99).unwrap();
        let b = gru.forecast(&input, 8, 99).unwrap();
        assert_eq!(a, b);
        let c = gru.forecast(&input, 8, 100).unwrap();
        assert_ne!(a, c);
    }
}
