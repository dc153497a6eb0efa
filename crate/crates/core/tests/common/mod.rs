#![allow(dead_code)]

pub mod attack;
pub mod stats;

use robustatr::nn::{
    input_gradient, loss_and_gradients, loss_value, ForwardMode, LossConfig, Model, ModelConfig, StageConfig, Tensor,
};
use robustatr::seed;

use rand::Rng;

/// Two stages on 8×8 inputs, everything switched on.
pub fn two_stage_config(skip: bool) -> ModelConfig {
    ModelConfig {
        input_height: 8,
        input_width: 8,
        n_classes: 3,
        stages: vec![StageConfig { channels: 3, stride: 2 }, StageConfig { channels: 4, stride: 2 }],
        skip_connections: skip,
        dropout_rate: 0.25,
        norm: true,
    }
}

pub fn random_batch(n: usize, h: usize, w: usize, s: u64) -> Tensor<f64> {
    let mut rng = seed::stream(s);
    Tensor::new(vec![n, 1, h, w], (0..n * h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
}

pub fn random_targets(n: usize, k: usize, s: u64) -> Tensor<f64> {
    let mut rng = seed::stream(s);
    let mut data = Vec::with_capacity(n * k);
    for _ in 0..n {
        let row: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
        let sum: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| v / sum));
    }
    Tensor::new(vec![n, k], data).unwrap()
}

/// Moves a freshly initialized model to a generic point: every parameter
/// jittered, running statistics taken from a few training passes. At init,
/// zero biases and zero running means put whole regions exactly on a ReLU
/// kink, where the loss has no derivative to check.
pub fn generic_point(model: &mut Model<f64>, s: u64) {
    let mut rng = seed::stream(s);
    for p in model.params_mut().iter_mut() {
        for v in p.iter_mut() {
            *v += 0.05 * rng.random_range(-1.0..1.0);
        }
    }
    let c = model.config().clone();
    for i in 0..3 {
        let x = random_batch(6, c.input_height, c.input_width, seed::derive(s, i));
        let (_, tape) = model.forward_tape(&x, ForwardMode::Train { dropout_seed: i }).unwrap();
        model.update_running_stats(&tape.batch_stats);
    }
}

/// Central differences at `h = 1e-6` on an O(1) loss carry about 1e-10 of
/// cancellation noise, so entries below 1e-5 are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

fn loss_at(model: &Model<f64>, x: &Tensor<f64>, y: &Tensor<f64>, cfg: &LossConfig, mode: ForwardMode) -> f64 {
    loss_value(&model.forward(x, mode).unwrap(), y, cfg).unwrap()
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter entry.
pub fn max_param_grad_error(
    model: &Model<f64>,
    x: &Tensor<f64>,
    y: &Tensor<f64>,
    cfg: &LossConfig,
    mode: ForwardMode,
) -> f64 {
    let analytic = loss_and_gradients(model, x, y, cfg, mode).unwrap().grads;
    let h = FD_STEP;
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for (pi, g) in analytic.iter().enumerate() {
        for j in 0..g.len() {
            let orig = probe.params()[pi][j];
            probe.params_mut()[pi][j] = orig + h;
            let lp = loss_at(&probe, x, y, cfg, mode);
            probe.params_mut()[pi][j] = orig - h;
            let lm = loss_at(&probe, x, y, cfg, mode);
            probe.params_mut()[pi][j] = orig;
            worst = worst.max(rel_err(g[j], (lp - lm) / (2.0 * h)));
        }
    }
    worst
}

pub fn max_input_grad_error(
    model: &Model<f64>,
    x: &Tensor<f64>,
    y: &Tensor<f64>,
    cfg: &LossConfig,
    mode: ForwardMode,
) -> f64 {
    let analytic = input_gradient(model, x, y, cfg, mode).unwrap();
    let h = FD_STEP;
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for j in 0..x.len() {
        let orig = probe.data()[j];
        probe.data_mut()[j] = orig + h;
        let lp = loss_at(model, &probe, y, cfg, mode);
        probe.data_mut()[j] = orig - h;
        let lm = loss_at(model, &probe, y, cfg, mode);
        probe.data_mut()[j] = orig;
        worst = worst.max(rel_err(analytic.data()[j], (lp - lm) / (2.0 * h)));
    }
    worst
}
