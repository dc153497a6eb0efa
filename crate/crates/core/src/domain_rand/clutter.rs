use std::f32::consts::TAU;

use num_complex::Complex32;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{ensure, Result};

pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Background clutter with gamma-distributed power (`k = gamma_shape`,
/// mean `10^(level_db/10)`) and uniform phase.
pub fn generate_clutter<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    level_db: f64,
    gamma_shape: f64,
    rng: &mut R,
) -> Result<Vec<Complex32>> {
    ensure!(
        gamma_shape.is_finite() && gamma_shape > 0.0,
        "gamma shape must be positive, got {gamma_shape}"
    );
    ensure!(level_db.is_finite(), "clutter level must be finite");
    let mean = db_to_power(level_db);
    let gamma = Gamma::new(gamma_shape as f32, (mean / gamma_shape) as f32)
        .map_err(|e| crate::Error::Validation(format!("gamma distribution: {e}")))?;
    Ok((0..height * width)
        .map(|_| {
            let power: f32 = gamma.sample(rng);
            let phase: f32 = rng.random::<f32>() * TAU;
            let (s, c) = phase.sin_cos();
            let a = power.sqrt();
            Complex32::new(a * c, a * s)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn minus_ten_db_is_a_tenth() {
        assert!((db_to_power(-10.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shape() {
        let mut rng = seed::stream(0);
        assert!(generate_clutter(4, 4, -10.0, 0.0, &mut rng).is_err());
        assert!(generate_clutter(4, 4, -10.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn independent_seeds_are_uncorrelated() {
        let a = generate_clutter(1000, 1000, -10.0, 4.0, &mut seed::stream(1)).unwrap();
        let b = generate_clutter(1000, 1000, -10.0, 4.0, &mut seed::stream(2)).unwrap();
        let pa: Vec<f64> = a.iter().map(|z| z.norm_sqr() as f64).collect();
        let pb: Vec<f64> = b.iter().map(|z| z.norm_sqr() as f64).collect();
        let n = pa.len() as f64;
        let (ma, mb) = (pa.iter().sum::<f64>() / n, pb.iter().sum::<f64>() / n);
        let cov: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va: f64 = pa.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let vb: f64 = pb.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
        assert!((cov / (va * vb).sqrt()).abs() < 0.01);
    }
}
