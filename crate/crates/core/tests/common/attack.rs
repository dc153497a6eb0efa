use rand::Rng;

use robustatr::adversarial::{fgsm_l2_delta, AttackConfig};
use robustatr::nn::{LossConfig, Model, ModelConfig, StageConfig, Tensor};
use robustatr::seed;

use super::stats::Verdict;

/// A small random architecture: linear, one or two stages, with or without
/// skips and normalization.
pub fn random_model(rng: &mut impl Rng, s: u64) -> Model<f32> {
    let side = [8, 12, 16][rng.random_range(0..3)];
    let k = rng.random_range(2..6);
    let n_stages = rng.random_range(0..3);
    let stages = (0..n_stages).map(|_| StageConfig { channels: rng.random_range(2..6), stride: rng.random_range(1..3) }).collect();
    let cfg = ModelConfig {
        input_height: side,
        input_width: side,
        n_classes: k,
        stages,
        skip_connections: rng.random(),
        dropout_rate: 0.0,
        norm: rng.random(),
    };
    Model::new(cfg, s).unwrap()
}

/// `pairs` random (model, image, label) triples: the pre-clip FGSM-L2 step
/// has L2 norm `epsilon` within `tol` whenever the input gradient is nonzero.
pub fn fgsm_budget(pairs: usize, epsilon: f64, tol: f64, seed_: u64) -> Verdict {
    let mut rng = seed::stream(seed_);
    let cfg = AttackConfig { epsilon, ..AttackConfig::default() };
    let (mut worst, mut zero) = (0.0f64, 0usize);
    for i in 0..pairs {
        let model = random_model(&mut rng, seed::derive(seed_, i as u64));
        let c = model.config();
        let (h, w, k) = (c.input_height, c.input_width, c.n_classes);
        let x = Tensor::new(vec![1, 1, h, w], (0..h * w).map(|_| rng.random::<f32>()).collect()).unwrap();
        let mut y = Tensor::zeros(vec![1, k]);
        y.row_mut(0)[rng.random_range(0..k)] = 1.0;
        let delta = fgsm_l2_delta(&model, &x, &y, &cfg, &LossConfig::default()).map_err(|e| e.to_string())?;
        let norm = delta.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero += 1;
            continue;
        }
        worst = worst.max((norm - epsilon).abs());
    }
    let detail = format!("{} pairs with nonzero gradient, {zero} zero, worst |norm - eps| {worst:.2e}", pairs - zero);
    if worst <= tol && zero < pairs {
        Ok(detail)
    } else {
        Err(detail)
    }
}
