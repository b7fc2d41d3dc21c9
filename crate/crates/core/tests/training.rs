//! Training-loop behavior: determinism, optimization progress, and the
//! forecast-distribution contract.

use chrono::{DateTime, Utc};
use coldstart_core::forecaster::{
    train, training_examples, Dropout, ForwardTrace, Gru, ModelConfig, RecurrentConfig,
    SequenceModel, TrainConfig, Transformer,
};
use coldstart_core::trace::{Granularity, InvocationSeries};

fn start() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2019-07-15T00:00:00Z")
        .unwrap()
        .with_timezone(&Utc)
}

fn small_config() -> ModelConfig {
    ModelConfig {
        context_length: 12,
        prediction_length: 4,
        num_layers_encoder: 1,
        num_layers_decoder: 1,
        d_model: 8,
        num_heads: 2,
        embedding_dimension: 2,
        cardinality: 1,
        lags_sequence: vec![1, 2, 4],
        feedforward_dim: 16,
        dropout: 0.0,
    }
}

fn series(values: Vec<u64>) -> InvocationSeries {
    InvocationSeries {
        function_id: "f".into(),
        granularity: Granularity::Minute,
        start_time: start(),
        values,
    }
}

fn train_setup(values: Vec<u64>) -> (Transformer, Vec<coldstart_core::forecaster::TrainExample>) {
    let config = small_config();
    let model = Transformer::new(config.clone(), 11).unwrap();
    let examples = training_examples(&series(values), &config, 0, 4).unwrap();
    (model, examples)
}

#[test]
fn constant_series_loss_decreases_and_scale_shrinks() {
    let (mut model, examples) = train_setup(vec![5; 80]);
    let sigma_before = head_sigma(&model, &examples[0]);
    let history = train(
        &mut model,
        &examples,
        &TrainConfig {
            epochs: 5,
            batch_size: 4,
            learning_rate: 5e-3,
            seed: 1,
        },
    )
    .unwrap();
    assert_eq!(history.len(), 5);
    for pair in history.windows(2) {
        assert!(
            pair[1] < pair[0],
            "loss failed to decrease: {:?}",
            history
        );
    }
    let sigma_after = head_sigma(&model, &examples[0]);
    assert!(
        sigma_after < sigma_before,
        "scale should shrink on a constant series: {sigma_before} -> {sigma_after}"
    );
}

fn head_sigma(
    model: &Transformer,
    example: &coldstart_core::forecaster::TrainExample,
) -> f64 {
    let tape = coldstart_core::Tape::new();
    let bound = model.bind(&tape);
    let memory = bound
        .encode(&example.input, &mut ForwardTrace::off(), &mut Dropout::Off)
        .unwrap();
    let prev =
        coldstart_core::forecaster::BoundTransformer::teacher_forced_prev(
            &example.input,
            &example.targets_std,
        );
    let (_, scale, _) = bound
        .decode(&memory, &example.input, &prev, &mut ForwardTrace::off(), &mut Dropout::Off)
        .unwrap();
    scale.value().data().iter().sum::<f64>() / scale.value().len() as f64
}

#[test]
fn identical_seeds_give_bitwise_identical_history() {
    let values: Vec<u64> = (0..80).map(|i| (i * 7) % 5).collect();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        learning_rate: 1e-3,
        seed: 42,
    };
    let (mut a, examples) = train_setup(values.clone());
    let history_a = train(&mut a, &examples, &cfg).unwrap();
    let (mut b, examples_b) = train_setup(values);
    let history_b = train(&mut b, &examples_b, &cfg).unwrap();
    assert_eq!(history_a, history_b);

    // and the resulting weights match bitwise
    let mut wa = Vec::new();
    a.weights.visit(&mut |_, t| wa.extend_from_slice(t.data()));
    let mut wb = Vec::new();
    b.weights.visit(&mut |_, t| wb.extend_from_slice(t.data()));
    assert_eq!(wa, wb);
}

#[test]
fn zero_learning_rate_leaves_weights_unchanged() {
    let (mut model, examples) = train_setup((0..80).map(|i| i % 3).collect());
    let mut before = Vec::new();
    model.weights.visit(&mut |_, t| before.push(t.clone()));
    train(
        &mut model,
        &examples,
        &TrainConfig {
            epochs: 2,
            batch_size: 4,
            learning_rate: 0.0,
            seed: 9,
        },
    )
    .unwrap();
    let mut after = Vec::new();
    model.weights.visit(&mut |_, t| after.push(t.clone()));
    assert_eq!(before, after);
}

#[test]
fn dropout_training_is_still_deterministic() {
    let values: Vec<u64> = (0..80).map(|i| (i * 11) % 6).collect();
    let mut config = small_config();
    config.dropout = 0.1;
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        learning_rate: 1e-3,
        seed: 5,
    };
    let run = || {
        let mut model = Transformer::new(config.clone(), 11).unwrap();
        let examples = training_examples(&series(values.clone()), &config, 0, 4).unwrap();
        train(&mut model, &examples, &cfg).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn forecast_contract_median_and_quantile_order() {
    let (model, examples) = train_setup((0..80).map(|i| 2 + (i % 4)).collect());
    let input = &examples[0].input;
    let dist = model.forecast(input, 25, 7).unwrap();
    assert_eq!(dist.samples.len(), 25);
    assert_eq!(dist.horizon(), 4);

    // reproducible single path
    let one = model.forecast(input, 1, 3).unwrap();
    let two = model.forecast(input, 1, 3).unwrap();
    assert_eq!(one, two);

    // point forecast = per-step median; quantiles ordered
    for step in 0..dist.horizon() {
        let mut col: Vec<f64> = dist.samples.iter().map(|p| p[step]).collect();
        col.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let median = col[12]; // 25 samples -> middle order statistic
        assert_eq!(dist.point_forecast()[step], median);
        assert!(dist.quantile(0.9, step) >= dist.quantile(0.5, step));
    }

    // samples are clamped at zero, raw samples retained
    for (path, raw) in dist.samples.iter().zip(&dist.raw_samples) {
        for (s, r) in path.iter().zip(raw) {
            assert!(*s >= 0.0);
            assert!((s - r.max(0.0)).abs() == 0.0);
        }
    }
}

#[test]
fn gru_trains_through_the_same_loop() {
    let config = small_config();
    let recurrent = RecurrentConfig::from_model(&config);
    let mut gru = Gru::new(recurrent, 3).unwrap();
    let examples =
        training_examples(&series((0..80).map(|i| (i % 5)).collect()), &config, 0, 4).unwrap();
    let history = train(
        &mut gru,
        &examples,
        &TrainConfig {
            epochs: 4,
            batch_size: 4,
            learning_rate: 5e-3,
            seed: 2,
        },
    )
    .unwrap();
    assert_eq!(history.len(), 4);
    assert!(
        history.last().unwrap() < history.first().unwrap(),
        "GRU loss should improve: {history:?}"
    );
}
