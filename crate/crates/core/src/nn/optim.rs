use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Model, Real};
use crate::error::{ensure, Result};

/// Nesterov SGD with L2 weight decay:
/// `v ← μv − lr(g + wd·w)`, `w ← w + μv − lr(g + wd·w)`.
pub fn sgd_step<T: Real>(model: &mut Model<T>, grads: &[Vec<T>], lr: f64, momentum: f64, weight_decay: f64) -> Result<()> {
    ensure!(grads.len() == model.params.len(), "gradient count does not match parameters");
    for (g, p) in grads.iter().zip(&model.params) {
        ensure!(g.len() == p.len(), "gradient shape does not match parameter");
    }
    let (lr, mu, wd) = (T::lit(lr), T::lit(momentum), T::lit(weight_decay));
    for ((w, v), g) in model.params.iter_mut().zip(model.velocity.iter_mut()).zip(grads) {
        for ((w, v), &g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
            let step = lr * (g + wd * *w);
            *v = mu * *v - step;
            *w = *w + mu * *v - step;
        }
    }
    Ok(())
}

/// 1cycle policy: learning rate warms up from `lr_max/lr_div` to `lr_max`
/// over the first `peak_fraction` of the steps, then anneals to
/// `lr_max/lr_final_div`. Momentum mirrors it between `momentum_max` and
/// `momentum_min`. Both phases use cosine interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneCycleSchedule {
    pub total_steps: usize,
    pub lr_max: f64,
    pub lr_div: f64,
    pub lr_final_div: f64,
    pub momentum_max: f64,
    pub momentum_min: f64,
    pub peak_fraction: f64,
}

impl Default for OneCycleSchedule {
    fn default() -> Self {
        Self {
            total_steps: 1000,
            lr_max: 0.1,
            lr_div: 10.0,
            lr_final_div: 100.0,
            momentum_max: 0.95,
            momentum_min: 0.85,
            peak_fraction: 0.3,
        }
    }
}

fn cos_interp(a: f64, b: f64, s: f64) -> f64 {
    let t = 0.5 * (1.0 - (PI * s).cos());
    a * (1.0 - t) + b * t
}

impl OneCycleSchedule {
    pub fn with_total_steps(mut self, total_steps: usize) -> Self {
        self.total_steps = total_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.total_steps >= 3, "schedule needs at least 3 steps");
        ensure!(self.lr_max.is_finite() && self.lr_max > 0.0, "lr_max must be positive");
        ensure!(
            self.lr_div >= 1.0 && self.lr_final_div >= 1.0 && self.lr_div.is_finite() && self.lr_final_div.is_finite(),
            "lr divisors must be at least 1"
        );
        ensure!(
            self.peak_fraction > 0.0 && self.peak_fraction < 1.0,
            "peak fraction must lie in (0, 1)"
        );
        ensure!(
            (0.0..1.0).contains(&self.momentum_min) && self.momentum_min <= self.momentum_max && self.momentum_max < 1.0,
            "momentum bounds must satisfy 0 <= min <= max < 1"
        );
        Ok(())
    }

    /// Step index at which the learning rate peaks.
    pub fn peak_step(&self) -> usize {
        // strictly between the first and last step
        let last = self.total_steps.saturating_sub(1);
        ((last as f64 * self.peak_fraction).round() as usize).clamp(1, last.saturating_sub(1).max(1))
    }

    /// `(lr, momentum)` at `step`.
    pub fn at(&self, step: usize) -> Result<(f64, f64)> {
        self.validate()?;
        ensure!(step < self.total_steps, "step {step} outside schedule of {} steps", self.total_steps);
        let peak = self.peak_step();
        let lr_start = self.lr_max / self.lr_div;
        let lr_end = self.lr_max / self.lr_final_div;
        Ok(if step <= peak {
            let s = step as f64 / peak as f64;
            (cos_interp(lr_start, self.lr_max, s), cos_interp(self.momentum_max, self.momentum_min, s))
        } else {
            let s = (step - peak) as f64 / (self.total_steps - 1 - peak) as f64;
            (cos_interp(self.lr_max, lr_end, s), cos_interp(self.momentum_min, self.momentum_max, s))
        })
    }
}
