use panelscope_core::classifier::{
    evaluate, forward, init_params_with_hidden, train, Example, MlpParams, OutputActivation, TrainConfig,
};
use panelscope_core::{TransitionLabel, NUM_LABELS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn softmax_scores_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for seed in 0..100 {
        let p = init_params_with_hidden(seed, 8, 16);
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
        let s = forward(&p, &x, OutputActivation::Softmax).unwrap();
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

fn separable(n: usize, dim: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    (0..n)
        .map(|i| {
            let label = TransitionLabel::ALL[i % NUM_LABELS];
            let x = (0..dim)
                .map(|d| if d == label.index() { 3.0 } else { 0.0 } + noise.sample(&mut rng))
                .collect();
            (x, label)
        })
        .collect()
}

#[test]
fn separable_blobs_are_learned() {
    let data = separable(200, 12, 32);
    let mut p = init_params_with_hidden(1, 12, 256);
    let cfg = TrainConfig { epochs_per_round: 50, ..TrainConfig::default() };
    let h = train(&mut p, &data, &cfg).unwrap();
    assert!(h.last().unwrap().accuracy >= 0.99);
    let e = evaluate(&p, &data, OutputActivation::Softmax).unwrap();
    assert!(e.accuracy >= 0.99);
}

#[test]
fn sigmoid_head_also_learns() {
    let data = separable(120, 12, 33);
    let mut p = init_params_with_hidden(2, 12, 64);
    let cfg = TrainConfig {
        epochs_per_round: 60,
        output_activation: OutputActivation::Sigmoid,
        ..TrainConfig::default()
    };
    train(&mut p, &data, &cfg).unwrap();
    assert!(evaluate(&p, &data, OutputActivation::Sigmoid).unwrap().accuracy >= 0.95);
}

#[test]
fn constant_predictor_has_chance_accuracy_and_zero_kappa() {
    let data = separable(6000, 4, 34);
    let mut p = MlpParams::zeros(4, 3);
    p.b2[TransitionLabel::Sub.index()] = 1.0;
    let e = evaluate(&p, &data, OutputActivation::Softmax).unwrap();
    assert!((e.accuracy - 1.0 / 6.0).abs() <= 0.02);
    assert!(e.kappa.unwrap().kappa.abs() <= 0.02);
}
