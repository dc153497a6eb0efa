use std::time::Instant;

use num_complex::Complex32;
use rand::Rng;

use super::batch::StageTimes;
use super::{add_thermal_noise, brightpoint_dropout, circular_shift, generate_clutter, resample_resolution};
use super::AugmentationParams;
use crate::error::{ensure, Result};
use crate::scene::{qpm_scale, TargetSignature};
use crate::seed;

/// Builds one randomized training image in `[0, 1]`, row-major `H×W`.
///
/// Stages run in a fixed order: resolution, bright-point dropout, clutter,
/// compositing (no clutter under the shadow mask), thermal noise, shift of
/// the whole composite, then QPM scaling.
pub fn compose_augmented<R: Rng + ?Sized>(
    signature: &TargetSignature,
    params: &AugmentationParams,
    rng: &mut R,
) -> Result<Vec<f32>> {
    compose_timed(signature, params, rng, None)
}

pub(crate) fn compose_timed<R: Rng + ?Sized>(
    signature: &TargetSignature,
    params: &AugmentationParams,
    rng: &mut R,
    mut times: Option<&mut StageTimes>,
) -> Result<Vec<f32>> {
    let (h, w) = (signature.height(), signature.width());
    ensure!(
        signature.image.len() == h * w && signature.shadow_mask.len() == h * w,
        "signature buffers do not match {h}x{w}"
    );
    let mut clock = Instant::now();
    let mut lap = |slot: fn(&mut StageTimes) -> &mut f64, times: &mut Option<&mut StageTimes>| {
        if let Some(t) = times.as_deref_mut() {
            let now = Instant::now();
            *slot(t) += (now - clock).as_secs_f64();
            clock = now;
        }
    };

    let sensor = &signature.sensor;
    let mut image = match (params.range_resolution_m, params.cross_range_resolution_m) {
        (None, None) => signature.image.clone(),
        (r, c) => resample_resolution(
            &signature.image,
            sensor,
            r.unwrap_or(sensor.range_resolution),
            c.unwrap_or(sensor.cross_range_resolution),
        )?,
    };
    lap(|t| &mut t.resample_s, &mut times);

    if let Some(d) = params.dropout {
        brightpoint_dropout(&mut image, d.drop_fraction, d.threshold_ratio, &mut seed::stream(d.seed));
    }
    lap(|t| &mut t.dropout_s, &mut times);

    if let Some(c) = params.clutter {
        let clutter = generate_clutter(h, w, c.level_db, c.gamma_shape, rng)?;
        for ((z, bg), &shadow) in image.iter_mut().zip(clutter).zip(&signature.shadow_mask) {
            if !shadow {
                *z += bg;
            }
        }
    }
    lap(|t| &mut t.clutter_s, &mut times);

    add_thermal_noise(&mut image, params.thermal_noise_db, rng);
    lap(|t| &mut t.noise_s, &mut times);

    let image: Vec<Complex32> = circular_shift(&image, h, w, params.dx, params.dy);
    lap(|t| &mut t.shift_s, &mut times);

    let magnitude: Vec<f32> = image.iter().map(|z| z.norm()).collect();
    let out = qpm_scale(&magnitude).into_iter().map(|q| q as f32 / 255.0).collect();
    lap(|t| &mut t.qpm_s, &mut times);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain_rand::{sample_params, ClutterDraw, RandomizationConfig};
    use crate::scene::{SensorModel, ViewGeometry};

    fn blank(h: usize, w: usize) -> TargetSignature {
        TargetSignature {
            image: vec![Complex32::default(); h * w],
            shadow_mask: vec![false; h * w],
            sensor: SensorModel::default().with_size(h, w),
            geometry: ViewGeometry::new(17.0, 0.0),
            class_label: 0,
        }
    }

    #[test]
    fn identity_params_give_qpm_of_signature() {
        let mut sig = blank(4, 4);
        sig.image[5] = Complex32::new(3.0, 4.0);
        let out = compose_augmented(&sig, &AugmentationParams::identity(), &mut seed::stream(0)).unwrap();
        assert_eq!(out[5], 1.0);
        assert_eq!(out.iter().filter(|&&v| v == 0.0).count(), 15);
    }

    #[test]
    fn repeated_calls_are_bit_identical() {
        let sig = blank(16, 16);
        let cfg = RandomizationConfig::default();
        let p = sample_params(&cfg, &mut seed::stream(9));
        let a = compose_augmented(&sig, &p, &mut seed::stream(10)).unwrap();
        let b = compose_augmented(&sig, &p, &mut seed::stream(10)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn shadow_is_darker() {
        let mut sig = blank(32, 32);
        for i in 0..32 * 16 {
            sig.shadow_mask[i] = true;
        }
        let p = AugmentationParams {
            clutter: Some(ClutterDraw { level_db: -10.0, gamma_shape: 4.0 }),
            thermal_noise_db: Some(-20.0),
            ..AugmentationParams::identity()
        };
        let out = compose_augmented(&sig, &p, &mut seed::stream(1)).unwrap();
        let inside: f32 = out[..512].iter().map(|v| v * v).sum();
        let outside: f32 = out[512..].iter().map(|v| v * v).sum();
        assert!(inside < outside);
    }
}
