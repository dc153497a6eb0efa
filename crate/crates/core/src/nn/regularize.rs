use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use super::{Real, Tensor};
use crate::error::{ensure, Error, Result};

/// Adds i.i.d. `N(0, sigma²)` noise. `sigma = 0` is a no-op.
pub fn add_gaussian_noise<T: Real, R: Rng + ?Sized>(batch: &mut Tensor<T>, sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for v in batch.data_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += T::lit(sigma * z);
    }
}

/// Row `i` becomes `λ_i·a_i + (1−λ_i)·b_i` for both inputs and targets.
pub fn mix_with_lambdas<T: Real>(
    x1: &Tensor<T>,
    y1: &Tensor<T>,
    x2: &Tensor<T>,
    y2: &Tensor<T>,
    lambdas: &[f64],
) -> Result<(Tensor<T>, Tensor<T>)> {
    ensure!(
        x1.shape() == x2.shape() && y1.shape() == y2.shape(),
        "mixup operands differ in shape"
    );
    ensure!(
        x1.rows() == y1.rows() && lambdas.len() == x1.rows(),
        "mixup needs one lambda per row"
    );
    let mix = |a: &Tensor<T>, b: &Tensor<T>| {
        let mut out = a.clone();
        for (i, &l) in lambdas.iter().enumerate() {
            let (l, r) = (T::lit(l), T::lit(1.0 - l));
            for (o, &bv) in out.row_mut(i).iter_mut().zip(b.row(i)) {
                *o = l * *o + r * bv;
            }
        }
        out
    };
    Ok((mix(x1, x2), mix(y1, y2)))
}

/// Mixup with `λ ~ Beta(alpha, alpha)` drawn per pair. Returns the lambdas.
pub fn mixup_batch<T: Real, R: Rng + ?Sized>(
    x1: &Tensor<T>,
    y1: &Tensor<T>,
    x2: &Tensor<T>,
    y2: &Tensor<T>,
    alpha: f64,
    rng: &mut R,
) -> Result<(Tensor<T>, Tensor<T>, Vec<f64>)> {
    ensure!(alpha > 0.0 && alpha.is_finite(), "mixup alpha must be positive");
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Validation(format!("beta distribution: {e}")))?;
    let lambdas: Vec<f64> = (0..x1.rows()).map(|_| beta.sample(rng)).collect();
    let (x, y) = mix_with_lambdas(x1, y1, x2, y2, &lambdas)?;
    Ok((x, y, lambdas))
}
