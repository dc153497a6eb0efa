//! Runtime domain randomization of target signatures.
//!
//! Each training image gets a fresh [`AugmentationParams`] draw and is
//! composed from its coherent signature, a gamma clutter field, thermal noise
//! and a circular shift. Stages are pure kernels; batches are mapped in
//! parallel with per-item RNG streams.

mod batch;
mod clutter;
mod compose;
mod dropout;
mod noise;
mod resample;
mod shift;

pub use batch::{augment_batch, augment_batch_timed, Parallelism, StageTimes};
pub use clutter::{db_to_power, generate_clutter};
pub use compose::compose_augmented;
pub use dropout::brightpoint_dropout;
pub use noise::add_thermal_noise;
pub use resample::resample_resolution;
pub use shift::circular_shift;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Closed sampling intervals for every randomized knob. `None` disables a
/// knob: native resolution is kept, no clutter or noise is added, no shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationConfig {
    pub range_resolution_m: Option<[f64; 2]>,
    pub cross_range_resolution_m: Option<[f64; 2]>,
    /// Clutter reflectivity, dB·m²/m².
    pub clutter_level_db: Option<[f64; 2]>,
    pub clutter_gamma_shape: [f64; 2],
    /// Thermal noise floor, dB·m²/m².
    pub thermal_noise_db: Option<[f64; 2]>,
    pub shift_px: Option<[i32; 2]>,
    pub brightpoint_dropout: bool,
    pub brightpoint_threshold_ratio: f64,
    pub brightpoint_drop_fraction: f64,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            range_resolution_m: Some([0.203125, 0.35]),
            cross_range_resolution_m: Some([0.21, 0.35]),
            clutter_level_db: Some([-20.0, -5.0]),
            clutter_gamma_shape: [2.0, 10.0],
            thermal_noise_db: Some([-25.0, -15.0]),
            shift_px: Some([-5, 5]),
            brightpoint_dropout: true,
            brightpoint_threshold_ratio: 0.5,
            brightpoint_drop_fraction: 0.5,
        }
    }
}

impl RandomizationConfig {
    /// Everything disabled: composition reduces to QPM of the raw signature.
    pub fn disabled() -> Self {
        Self {
            range_resolution_m: None,
            cross_range_resolution_m: None,
            clutter_level_db: None,
            clutter_gamma_shape: [4.0, 4.0],
            thermal_noise_db: None,
            shift_px: None,
            brightpoint_dropout: false,
            ..Self::default()
        }
    }

    /// Fixed background at one clutter level, with an optional shift range.
    pub fn fixed_background(
        clutter_db: Option<f64>,
        gamma_shape: f64,
        shift_px: Option<[i32; 2]>,
    ) -> Self {
        Self {
            clutter_level_db: clutter_db.map(|l| [l, l]),
            clutter_gamma_shape: [gamma_shape, gamma_shape],
            shift_px,
            ..Self::disabled()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, r: [f64; 2]| -> Result<()> {
            ensure!(
                r[0].is_finite() && r[1].is_finite() && r[0] <= r[1],
                "{name} range {r:?} must be finite and ordered"
            );
            Ok(())
        };
        for (name, r) in [
            ("range resolution", self.range_resolution_m),
            ("cross-range resolution", self.cross_range_resolution_m),
        ] {
            if let Some(r) = r {
                check(name, r)?;
                ensure!(r[0] > 0.0, "{name} must be positive");
            }
        }
        if let Some(r) = self.clutter_level_db {
            check("clutter level", r)?;
        }
        check("clutter gamma shape", self.clutter_gamma_shape)?;
        ensure!(self.clutter_gamma_shape[0] > 0.0, "gamma shape must be positive");
        if let Some(r) = self.thermal_noise_db {
            check("thermal noise", r)?;
        }
        if let Some([lo, hi]) = self.shift_px {
            ensure!(lo <= hi, "shift range [{lo}, {hi}] must be ordered");
        }
        ensure!(
            (0.0..=1.0).contains(&self.brightpoint_threshold_ratio),
            "bright-point threshold ratio must lie in [0, 1]"
        );
        ensure!(
            (0.0..=1.0).contains(&self.brightpoint_drop_fraction),
            "bright-point drop fraction must lie in [0, 1]"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterDraw {
    pub level_db: f64,
    pub gamma_shape: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutDraw {
    pub threshold_ratio: f64,
    pub drop_fraction: f64,
    pub seed: u64,
}

/// One concrete draw of every randomized knob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationParams {
    pub range_resolution_m: Option<f64>,
    pub cross_range_resolution_m: Option<f64>,
    pub clutter: Option<ClutterDraw>,
    pub thermal_noise_db: Option<f64>,
    pub dx: i32,
    pub dy: i32,
    pub dropout: Option<DropoutDraw>,
}

impl AugmentationParams {
    /// No-op parameters.
    pub fn identity() -> Self {
        Self {
            range_resolution_m: None,
            cross_range_resolution_m: None,
            clutter: None,
            thermal_noise_db: None,
            dx: 0,
            dy: 0,
            dropout: None,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws each enabled knob independently and uniformly from its closed range.
pub fn sample_params<R: Rng + ?Sized>(
    config: &RandomizationConfig,
    rng: &mut R,
) -> AugmentationParams {
    let range_resolution_m = config.range_resolution_m.map(|r| uniform(rng, r));
    let cross_range_resolution_m = config.cross_range_resolution_m.map(|r| uniform(rng, r));
    let clutter = config.clutter_level_db.map(|r| {
        let level_db = uniform(rng, r);
        ClutterDraw {
            level_db,
            gamma_shape: uniform(rng, config.clutter_gamma_shape),
        }
    });
    let thermal_noise_db = config.thermal_noise_db.map(|r| uniform(rng, r));
    let (dx, dy) = match config.shift_px {
        Some([lo, hi]) => (rng.random_range(lo..=hi), rng.random_range(lo..=hi)),
        None => (0, 0),
    };
    let dropout = config.brightpoint_dropout.then(|| DropoutDraw {
        threshold_ratio: config.brightpoint_threshold_ratio,
        drop_fraction: config.brightpoint_drop_fraction,
        seed: rng.random(),
    });
    AugmentationParams {
        range_resolution_m,
        cross_range_resolution_m,
        clutter,
        thermal_noise_db,
        dx,
        dy,
        dropout,
    }
}
