//! The encoder/decoder Transformer with multi-head attention, sinusoidal
//! positional encoding, and a Student-t distribution head.

use std::f64::consts::PI;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::ForecastInput;
use super::params::{
    init_attention, init_head, init_layer_norm, init_linear, xavier, Attention, DecoderLayer,
    EncoderLayer, TransformerWeights,
};
use super::train::Dropout;
use super::{ForecastError, ModelConfig, TIME_FEATURES};
use crate::tensor::{Tape, Tensor, TensorError, Var};

pub(crate) const LN_EPS: f64 = 1e-5;

/// Fixed sinusoidal positional encoding, `[len, d]`.
pub fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d / 2 {
            let rate = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            data[pos * d + 2 * i] = (pos as f64 * rate).sin();
            data[pos * d + 2 * i + 1] = (pos as f64 * rate).cos();
        }
        if d % 2 == 1 {
            let i = d / 2;
            let rate = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            data[pos * d + d - 1] = (pos as f64 * rate).sin();
        }
    }
    Tensor::new(vec![len, d], data).expect("positional encoding shape")
}

/// Additive causal mask `[n, n]`: zero on and below the diagonal, `-inf`
/// above, so masked logits softmax to exact zeros.
pub fn causal_mask(n: usize) -> Tensor {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            data[i * n + j] = f64::NEG_INFINITY;
        }
    }
    Tensor::new(vec![n, n], data).expect("mask shape")
}

/// Captured attention weights of one forward pass, one `[Lq, Lk]` matrix per
/// head per layer, in execution order.
#[derive(Default)]
pub struct ForwardTrace {
    pub attention_rows: Vec<Rc<Tensor>>,
    enabled: bool,
}

impl ForwardTrace {
    pub fn enabled() -> Self {
        ForwardTrace {
            attention_rows: Vec::new(),
            enabled: true,
        }
    }

    pub fn off() -> Self {
        ForwardTrace::default()
    }

    fn record(&mut self, weights: Rc<Tensor>) {
        if self.enabled {
            self.attention_rows.push(weights);
        }
    }
}

/// Scaled dot-product attention over `num_heads` slices of the model
/// dimension: per head `softmax(q kᵀ / sqrt(d_head) + mask) v`, heads
/// concatenated and output-projected.
pub fn multi_head_attention(
    q_in: &Var,
    k_in: &Var,
    v_in: &Var,
    params: &Attention<Var>,
    num_heads: usize,
    mask: Option<&Tensor>,
    trace: &mut ForwardTrace,
) -> Result<Var, TensorError> {
    let d = q_in.shape()[1];
    assert_eq!(d % num_heads, 0, "dModel must divide into heads");
    let d_head = d / num_heads;
    let q = q_in.matmul(&params.wq)?;
    let k = k_in.matmul(&params.wk)?;
    let v = v_in.matmul(&params.wv)?;
    let scale = 1.0 / (d_head as f64).sqrt();
    let mut heads = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let qh = q.slice_axis(1, h * d_head, d_head)?;
        let kh = k.slice_axis(1, h * d_head, d_head)?;
        let vh = v.slice_axis(1, h * d_head, d_head)?;
        let mut logits = qh.matmul(&kh.transpose()?)?.scale(scale);
        if let Some(mask) = mask {
            logits = logits.add_const(mask)?;
        }
        let weights = logits.softmax(1)?;
        trace.record(weights.value());
        heads.push(weights.matmul(&vh)?);
    }
    Var::concat(&heads, 1)?.matmul(&params.wo)
}

/// The Transformer forecaster: configuration plus weights.
#[derive(Debug, Clone)]
pub struct Transformer {
    pub config: ModelConfig,
    pub weights: TransformerWeights<Tensor>,
}

impl Transformer {
    pub fn encoder_input_dim(config: &ModelConfig) -> usize {
        config.lags_sequence.len() + TIME_FEATURES + config.embedding_dimension
    }

    pub fn decoder_input_dim(config: &ModelConfig) -> usize {
        1 + TIME_FEATURES + config.embedding_dimension
    }

    /// Fresh model with Xavier-initialized weights, deterministic in `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Transformer, ForecastError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let ff = config.feedforward_dim;
        let encoder = (0..config.num_layers_encoder)
            .map(|_| EncoderLayer {
                attn: init_attention(&mut rng, d),
                ln1: init_layer_norm(d),
                ff1: init_linear(&mut rng, d, ff),
                ff2: init_linear(&mut rng, ff, d),
                ln2: init_layer_norm(d),
            })
            .collect();
        let decoder = (0..config.num_layers_decoder)
            .map(|_| DecoderLayer {
                self_attn: init_attention(&mut rng, d),
                ln1: init_layer_norm(d),
                cross_attn: init_attention(&mut rng, d),
                ln2: init_layer_norm(d),
                ff1: init_linear(&mut rng, d, ff),
                ff2: init_linear(&mut rng, ff, d),
                ln3: init_layer_norm(d),
            })
            .collect();
        let weights = TransformerWeights {
            static_embedding: xavier(&mut rng, config.cardinality, config.embedding_dimension),
            encoder_input: init_linear(&mut rng, Self::encoder_input_dim(&config), d),
            decoder_input: init_linear(&mut rng, Self::decoder_input_dim(&config), d),
            encoder,
            decoder,
            head: init_head(&mut rng, d),
        };
        Ok(Transformer { config, weights })
    }

    /// Register every weight on `tape` for one forward pass.
    pub fn bind(&self, tape: &Tape) -> BoundTransformer {
        BoundTransformer {
            tape: tape.clone(),
            config: self.config.clone(),
            weights: self.weights.map(&mut |t: &Tensor| tape.param(t.clone())),
        }
    }
}

/// One tape's view of the Transformer.
pub struct BoundTransformer {
    pub tape: Tape,
    pub config: ModelConfig,
    pub weights: TransformerWeights<Var>,
}

impl BoundTransformer {
    /// Per-step encoder features: lagged standardized values, time features,
    /// and the broadcast static embedding.
    fn encoder_features(&self, input: &ForecastInput) -> Result<Var, TensorError> {
        let ctx = input.context_length;
        let lags = &self.config.lags_sequence;
        let width = lags.len() + TIME_FEATURES;
        let mut data = Vec::with_capacity(ctx * width);
        for t in 0..ctx {
            let absolute = input.max_lag + t;
            for &lag in lags {
                data.push(input.past_values[absolute - lag]);
            }
            for f in 0..TIME_FEATURES {
                data.push(input.past_time.at2(absolute, f));
            }
        }
        let consts = self
            .tape
            .constant(Tensor::new(vec![ctx, width], data).expect("encoder feature shape"));
        let emb = Var::embedding_lookup(
            &self.weights.static_embedding,
            &vec![input.static_id; ctx],
        )?;
        Var::concat(&[consts, emb], 1)
    }

    /// Run the encoder; returns the `[contextLength, dModel]` memory.
    pub fn encode(
        &self,
        input: &ForecastInput,
        trace: &mut ForwardTrace,
        dropout: &mut Dropout,
    ) -> Result<Var, TensorError> {
        let feats = self.encoder_features(input)?;
        self.encode_from_features(&feats, true, trace, dropout)
    }

    /// Encoder blocks over an explicit `[len, inputDim]` feature matrix, with
    /// the positional encoding optionally ablated. Diagnostics surface; the
    /// normal path is [`BoundTransformer::encode`].
    pub fn encode_from_features(
        &self,
        feats: &Var,
        use_positional_encoding: bool,
        trace: &mut ForwardTrace,
        dropout: &mut Dropout,
    ) -> Result<Var, TensorError> {
        let len = feats.shape()[0];
        let mut x = feats
            .matmul(&self.weights.encoder_input.w)?
            .add_bias(&self.weights.encoder_input.b)?;
        if use_positional_encoding {
            x = x.add_const(&positional_encoding(len, self.config.d_model))?;
        }
        for layer in &self.weights.encoder {
            let attn = multi_head_attention(
                &x,
                &x,
                &x,
                &layer.attn,
                self.config.num_heads,
                None,
                trace,
            )?;
            let attn = dropout.apply(attn)?;
            x = x.add(&attn)?.layer_norm(&layer.ln1.gain, &layer.ln1.bias, LN_EPS)?;
            let ff = x
                .matmul(&layer.ff1.w)?
                .add_bias(&layer.ff1.b)?
                .relu()
                .matmul(&layer.ff2.w)?
                .add_bias(&layer.ff2.b)?;
            let ff = dropout.apply(ff)?;
            x = x.add(&ff)?.layer_norm(&layer.ln2.gain, &layer.ln2.bias, LN_EPS)?;
        }
        Ok(x)
    }

    /// Run the decoder over `prev_values_std` (one previous standardized value
    /// per step: teacher-forced targets in training, sampled feedback at
    /// inference). Returns per-step Student-t parameters `(location, scale,
    /// degrees of freedom)`, each `[steps, 1]`.
    pub fn decode(
        &self,
        memory: &Var,
        input: &ForecastInput,
        prev_values_std: &[f64],
        trace: &mut ForwardTrace,
        dropout: &mut Dropout,
    ) -> Result<(Var, Var, Var), TensorError> {
        let steps = prev_values_std.len();
        assert!(steps >= 1, "decoder needs at least one step");
        let width = 1 + TIME_FEATURES;
        let mut data = Vec::with_capacity(steps * width);
        for (j, &prev) in prev_values_std.iter().enumerate() {
            data.push(prev);
            for f in 0..TIME_FEATURES {
                data.push(input.future_time.at2(j, f));
            }
        }
        let consts = self
            .tape
            .constant(Tensor::new(vec![steps, width], data).expect("decoder feature shape"));
        let emb = Var::embedding_lookup(
            &self.weights.static_embedding,
            &vec![input.static_id; steps],
        )?;
        let feats = Var::concat(&[consts, emb], 1)?;

        let mut x = feats
            .matmul(&self.weights.decoder_input.w)?
            .add_bias(&self.weights.decoder_input.b)?;
        x = x.add_const(&positional_encoding(steps, self.config.d_model))?;
        let mask = causal_mask(steps);
        for layer in &self.weights.decoder {
            let self_attn = multi_head_attention(
                &x,
                &x,
                &x,
                &layer.self_attn,
                self.config.num_heads,
                Some(&mask),
                trace,
            )?;
            let self_attn = dropout.apply(self_attn)?;
            x = x
                .add(&self_attn)?
                .layer_norm(&layer.ln1.gain, &layer.ln1.bias, LN_EPS)?;
            let cross = multi_head_attention(
                &x,
                memory,
                memory,
                &layer.cross_attn,
                self.config.num_heads,
                None,
                trace,
            )?;
            let cross = dropout.apply(cross)?;
            x = x
                .add(&cross)?
                .layer_norm(&layer.ln2.gain, &layer.ln2.bias, LN_EPS)?;
            let ff = x
                .matmul(&layer.ff1.w)?
                .add_bias(&layer.ff1.b)?
                .relu()
                .matmul(&layer.ff2.w)?
                .add_bias(&layer.ff2.b)?;
            let ff = dropout.apply(ff)?;
            x = x.add(&ff)?.layer_norm(&layer.ln3.gain, &layer.ln3.bias, LN_EPS)?;
        }

        let loc = x
            .matmul(&self.weights.head.loc.w)?
            .add_bias(&self.weights.head.loc.b)?;
        let scale = x
            .matmul(&self.weights.head.scale.w)?
            .add_bias(&self.weights.head.scale.b)?
            .softplus();
        let dof = x
            .matmul(&self.weights.head.dof.w)?
            .add_bias(&self.weights.head.dof.b)?
            .softplus()
            .add_scalar(2.0);
        Ok((loc, scale, dof))
    }

    /// Teacher-forced previous values for a target window: the last context
    /// value followed by all but the final target.
    pub fn teacher_forced_prev(input: &ForecastInput, targets_std: &[f64]) -> Vec<f64> {
        let mut prev = Vec::with_capacity(targets_std.len());
        prev.push(input.last_context_value());
        prev.extend_from_slice(&targets_std[..targets_std.len() - 1]);
        prev
    }
}

impl super::train::SequenceModel for Transformer {
    type Bound = BoundTransformer;

    fn bind_to(&self, tape: &Tape) -> BoundTransformer {
        self.bind(tape)
    }

    fn window_nll(
        bound: &BoundTransformer,
        example: &super::features::TrainExample,
        dropout: &mut Dropout,
    ) -> Result<Var, TensorError> {
        let memory = bound.encode(&example.input, &mut ForwardTrace::off(), dropout)?;
        let prev = BoundTransformer::teacher_forced_prev(&example.input, &example.targets_std);
        let (loc, scale, dof) =
            bound.decode(&memory, &example.input, &prev, &mut ForwardTrace::off(), dropout)?;
        student_t_nll(&loc, &scale, &dof, &example.targets_std)
    }

    fn bound_params(bound: &BoundTransformer) -> Vec<Var> {
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
    ) -> Result<super::distribution::ForecastDistribution, ForecastError> {
        use rand_distr::Distribution;
        let horizon = self.config.prediction_length;
        let memory_value = {
            let tape = Tape::new();
            let bound = self.bind(&tape);
            bound
                .encode(input, &mut ForwardTrace::off(), &mut Dropout::Off)?
                .value()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut raw = Vec::with_capacity(num_samples);
        for _ in 0..num_samples {
            let tape = Tape::new();
            let bound = self.bind(&tape);
            let memory = tape.constant((*memory_value).clone());
            let mut prev = vec![input.last_context_value()];
            let mut path = Vec::with_capacity(horizon);
            for step in 0..horizon {
                let (loc, scale, dof) = bound.decode(
                    &memory,
                    input,
                    &prev,
                    &mut ForwardTrace::off(),
                    &mut Dropout::Off,
                )?;
                let m = loc.value().data()[step];
                let s = scale.value().data()[step];
                let v = dof.value().data()[step];
                let t: f64 = rand_distr::StudentT::new(v)
                    .expect("dof > 2")
                    .sample(&mut rng);
                let draw = m + s * t;
                path.push(input.scale.destandardize(draw));
                prev.push(draw);
            }
            raw.push(path);
        }
        Ok(super::distribution::ForecastDistribution::from_raw_samples(
            raw, seed,
        ))
    }

    fn forecast_one_step(
        &self,
        input: &ForecastInput,
        num_samples: usize,
        seed: u64,
    ) -> Result<super::distribution::ForecastDistribution, ForecastError> {
        use rand_distr::Distribution;
        let tape = Tape::new();
        let bound = self.bind(&tape);
        let memory = bound.encode(input, &mut ForwardTrace::off(), &mut Dropout::Off)?;
        let (loc, scale, dof) = bound.decode(
            &memory,
            input,
            &[input.last_context_value()],
            &mut ForwardTrace::off(),
            &mut Dropout::Off,
        )?;
        let m = loc.value().data()[0];
        let s = scale.value().data()[0];
        let v = dof.value().data()[0];
        let student = rand_distr::StudentT::new(v).expect("dof > 2");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = (0..num_samples)
            .map(|_| {
                let t: f64 = student.sample(&mut rng);
                vec![input.scale.destandardize(m + s * t)]
            })
            .collect();
        Ok(super::distribution::ForecastDistribution::from_raw_samples(
            raw, seed,
        ))
    }
}

/// Mean Student-t negative log-likelihood of standardized targets under
/// per-step `(location, scale, dof)` parameters, all `[steps, 1]`.
pub fn student_t_nll(
    location: &Var,
    scale: &Var,
    dof: &Var,
    targets_std: &[f64],
) -> Result<Var, TensorError> {
    let n = targets_std.len();
    let neg_targets = Tensor::new(vec![n, 1], targets_std.iter().map(|t| -t).collect())
        .expect("target shape");
    let diff = location.add_const(&neg_targets)?;
    let z = diff.div(scale)?;
    let z2 = z.mul(&z)?;
    let ratio = z2.div(dof)?;
    let log_term = ratio.add_scalar(1.0).log()?;
    let half_nu_plus = dof.add_scalar(1.0).scale(0.5);

    let nll = half_nu_plus
        .lgamma()?
        .neg()
        .add(&dof.scale(0.5).lgamma()?)?
        .add(&dof.scale(PI).log()?.scale(0.5))?
        .add(&scale.log()?)?
        .add(&half_nu_plus.mul(&log_term)?)?;
    Ok(nll.mean_all())
}
