//! Input-space attacks used for adversarial training: the fast gradient
//! method under an L2 budget and the iterative L∞ PGD baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::nn::{input_gradient, ForwardMode, LossConfig, Model, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    FgsmL2,
    PgdLinf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// L2 radius for FGSM, L∞ radius for PGD.
    pub epsilon: f64,
    pub pgd_steps: usize,
    pub pgd_step_size: f64,
    pub pgd_random_start: bool,
    /// FGSM variant: step along `sign(g)` rescaled to the L2 budget instead
    /// of along the normalized gradient.
    pub sign_rescale: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::FgsmL2,
            epsilon: 2.0,
            pgd_steps: 50,
            pgd_step_size: 0.002,
            pgd_random_start: true,
            sign_rescale: false,
        }
    }
}

impl AttackConfig {
    pub fn pgd_linf(epsilon: f64, steps: usize, step_size: f64) -> Self {
        Self { kind: AttackKind::PgdLinf, epsilon, pgd_steps: steps, pgd_step_size: step_size, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.epsilon.is_finite() && self.epsilon > 0.0, "epsilon must be positive");
        if self.kind == AttackKind::PgdLinf {
            ensure!(self.pgd_steps >= 1, "pgd needs at least one step");
            ensure!(
                self.pgd_step_size.is_finite() && self.pgd_step_size > 0.0,
                "pgd step size must be positive"
            );
        }
        Ok(())
    }
}

fn clip01<T: Real>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

/// Per-image step of L2 length `epsilon` along the gradient (or its sign).
/// Images with an all-zero gradient get a zero step.
pub fn fgsm_l2_step<T: Real>(gradient: &Tensor<T>, epsilon: f64, sign_rescale: bool) -> Tensor<T> {
    let mut delta = gradient.clone();
    let eps = T::lit(epsilon);
    for i in 0..delta.rows() {
        let row = delta.row_mut(i);
        if sign_rescale {
            let nnz = row.iter().filter(|v| **v != T::zero()).count();
            if nnz == 0 {
                continue;
            }
            let scale = eps / T::from_usize(nnz).unwrap().sqrt();
            for v in row.iter_mut() {
                *v = if *v > T::zero() { scale } else if *v < T::zero() { -scale } else { T::zero() };
            }
        } else {
            // accumulate the norm in f64 so f32 gradients keep full accuracy
            let norm = row.iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            for v in row.iter_mut() {
                *v = T::lit(v.to_f64().unwrap() * epsilon / norm);
            }
        }
    }
    delta
}

/// Unclipped FGSM-L2 perturbation, using one eval-mode gradient.
pub fn fgsm_l2_delta<T: Real>(
    model: &Model<T>,
    batch: &Tensor<T>,
    targets: &Tensor<T>,
    config: &AttackConfig,
    loss: &LossConfig,
) -> Result<Tensor<T>> {
    config.validate()?;
    let g = input_gradient(model, batch, targets, loss, ForwardMode::Eval)?;
    Ok(fgsm_l2_step(&g, config.epsilon, config.sign_rescale))
}

/// `clip(x + ε·g/‖g‖₂, 0, 1)` per image; images with zero gradient are
/// returned unchanged.
pub fn fgsm_l2<T: Real>(
    model: &Model<T>,
    batch: &Tensor<T>,
    targets: &Tensor<T>,
    config: &AttackConfig,
    loss: &LossConfig,
) -> Result<Tensor<T>> {
    let delta = fgsm_l2_delta(model, batch, targets, config, loss)?;
    let mut out = batch.clone();
    for (x, &d) in out.data_mut().iter_mut().zip(delta.data()) {
        if d != T::zero() {
            *x = clip01(*x + d);
        }
    }
    Ok(out)
}

/// Moves `x` into `[x0 − ε, x0 + ε]` so that `|x − x0| ≤ ε` holds exactly in
/// `T` arithmetic.
fn project<T: Real>(x: T, x0: T, eps: T) -> T {
    let mut v = x.max(x0 - eps).min(x0 + eps);
    while (v - x0).abs() > eps {
        v = v.step_toward(x0);
    }
    v
}

/// Iterated signed-gradient ascent projected onto the L∞ ball around the
/// input and onto `[0, 1]`.
pub fn pgd_linf<T: Real, R: Rng + ?Sized>(
    model: &Model<T>,
    batch: &Tensor<T>,
    targets: &Tensor<T>,
    config: &AttackConfig,
    loss: &LossConfig,
    rng: &mut R,
) -> Result<Tensor<T>> {
    config.validate()?;
    let eps = T::lit(config.epsilon);
    let alpha = T::lit(config.pgd_step_size);
    let x0 = batch.data();
    let mut x = batch.clone();
    if config.pgd_random_start {
        for (v, &o) in x.data_mut().iter_mut().zip(x0) {
            let u = T::lit(rng.random_range(-config.epsilon..=config.epsilon));
            *v = project(clip01(o + u), o, eps);
        }
    }
    for _ in 0..config.pgd_steps {
        let g = input_gradient(model, &x, targets, loss, ForwardMode::Eval)?;
        for ((v, &o), &gv) in x.data_mut().iter_mut().zip(x0).zip(g.data()) {
            let s = if gv > T::zero() { alpha } else if gv < T::zero() { -alpha } else { T::zero() };
            // clipping to [0,1] cannot leave the ball: x0 itself is in [0,1]
            *v = project(clip01(project(*v + s, o, eps)), o, eps);
        }
    }
    Ok(x)
}
