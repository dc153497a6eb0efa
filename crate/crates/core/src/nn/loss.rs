use serde::{Deserialize, Serialize};

use super::{BatchStats, ForwardMode, Gradients, Model, Real, Tensor};
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    /// `1 − cos(softmax(z), y)`.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub label_smoothing_alpha: f64,
    pub gaussian_input_noise_sigma: f64,
    /// Beta parameter for mixup; 0 disables it.
    pub mixup_alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::CrossEntropy,
            label_smoothing_alpha: 0.0,
            gaussian_input_noise_sigma: 0.0,
            mixup_alpha: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            (0.0..1.0).contains(&self.label_smoothing_alpha),
            "label smoothing must lie in [0, 1), got {}",
            self.label_smoothing_alpha
        );
        ensure!(
            self.gaussian_input_noise_sigma.is_finite() && self.gaussian_input_noise_sigma >= 0.0,
            "noise sigma must be non-negative"
        );
        ensure!(
            self.mixup_alpha.is_finite() && self.mixup_alpha >= 0.0,
            "mixup alpha must be non-negative"
        );
        Ok(())
    }
}

pub fn softmax_rows<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let k = logits.row_len();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Targets must be `N×K` non-negative rows summing to one.
pub fn validate_targets<T: Real>(targets: &Tensor<T>, n: usize, k: usize) -> Result<()> {
    ensure!(
        targets.shape() == [n, k],
        "targets shape {:?} does not match {n}x{k}",
        targets.shape()
    );
    let tol = if std::mem::size_of::<T>() == 4 { 1e-4 } else { 1e-9 };
    for (i, row) in targets.data().chunks_exact(k).enumerate() {
        let sum: f64 = row.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).sum();
        ensure!(
            row.iter().all(|&v| v >= T::zero() && v.is_finite()) && (sum - 1.0).abs() <= tol,
            "target row {i} is not a probability vector (sum {sum})"
        );
    }
    Ok(())
}

/// `(1−α)·y + α/K` on every row.
pub fn smooth_targets<T: Real>(targets: &Tensor<T>, alpha: f64) -> Tensor<T> {
    if alpha == 0.0 {
        return targets.clone();
    }
    let k = targets.row_len();
    let (keep, spread) = (T::lit(1.0 - alpha), T::lit(alpha / k as f64));
    targets.map(|v| keep * v + spread)
}

/// Mean loss over the batch and its gradient with respect to the logits.
fn loss_and_dlogits<T: Real>(logits: &Tensor<T>, targets: &Tensor<T>, config: &LossConfig) -> Result<(T, Vec<T>)> {
    let (n, k) = (logits.rows(), logits.row_len());
    validate_targets(targets, n, k)?;
    let y = smooth_targets(targets, config.label_smoothing_alpha);
    let p = softmax_rows(logits);
    let nf = T::from_usize(n).unwrap();
    let mut grad = vec![T::zero(); n * k];
    let mut total = T::zero();
    for i in 0..n {
        let (pr, yr, zr) = (p.row(i), y.row(i), logits.row(i));
        let g = &mut grad[i * k..(i + 1) * k];
        match config.kind {
            LossKind::CrossEntropy => {
                let max = zr.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = max + zr.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
                total += yr.iter().zip(zr).map(|(&t, &z)| t * (lse - z)).sum::<T>();
                for ((g, &pv), &t) in g.iter_mut().zip(pr).zip(yr) {
                    *g = (pv - t) / nf;
                }
            }
            LossKind::Cosine => {
                let pn = pr.iter().map(|&v| v * v).sum::<T>().sqrt();
                let yn = yr.iter().map(|&v| v * v).sum::<T>().sqrt();
                let dot: T = pr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                let cos = dot / (pn * yn);
                total += T::one() - cos;
                // dL/dp, then through the softmax Jacobian
                let dp: Vec<T> =
                    pr.iter().zip(yr).map(|(&pv, &t)| -(t / (pn * yn) - cos * pv / (pn * pn)) / nf).collect();
                let inner: T = pr.iter().zip(&dp).map(|(&a, &b)| a * b).sum();
                for ((g, &pv), &d) in g.iter_mut().zip(pr).zip(&dp) {
                    *g = pv * (d - inner);
                }
            }
        }
    }
    Ok((total / nf, grad))
}

/// Mean loss of precomputed logits.
pub fn loss_value<T: Real>(logits: &Tensor<T>, targets: &Tensor<T>, config: &LossConfig) -> Result<T> {
    loss_and_dlogits(logits, targets, config).map(|(l, _)| l)
}

#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub loss: T,
    pub logits: Tensor<T>,
    pub grads: Gradients<T>,
    pub batch_stats: BatchStats<T>,
}

pub fn loss_and_gradients<T: Real>(
    model: &Model<T>,
    batch: &Tensor<T>,
    targets: &Tensor<T>,
    config: &LossConfig,
    mode: ForwardMode,
) -> Result<LossOutput<T>> {
    config.validate()?;
    let (logits, tape) = model.forward_tape(batch, mode)?;
    let (loss, dlogits) = loss_and_dlogits(&logits, targets, config)?;
    let (grads, _) = model.backward(&tape, &dlogits, true, false);
    Ok(LossOutput { loss, logits, grads: grads.expect("requested"), batch_stats: tape.batch_stats })
}

/// Gradient of the mean loss with respect to the input batch.
pub fn input_gradient<T: Real>(
    model: &Model<T>,
    batch: &Tensor<T>,
    targets: &Tensor<T>,
    config: &LossConfig,
    mode: ForwardMode,
) -> Result<Tensor<T>> {
    config.validate()?;
    let (logits, tape) = model.forward_tape(batch, mode)?;
    let (_, dlogits) = loss_and_dlogits(&logits, targets, config)?;
    let (_, dx) = model.backward(&tape, &dlogits, false, true);
    Ok(dx.expect("requested"))
}
