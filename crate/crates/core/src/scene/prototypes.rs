use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{rotate_about, Scatterer, ScattererTarget, SensorModel, Substructure};
use crate::error::{ensure, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeConfig {
    pub n_classes: usize,
    /// Inclusive scatterer count range per prototype.
    pub scatterer_count: [usize; 2],
    /// Upper bound on a vehicle's hull length, meters.
    pub footprint_m: f64,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            scatterer_count: [30, 60],
            footprint_m: 3.6,
        }
    }
}

/// Procedural vehicle-like prototypes, one per class.
///
/// Each prototype is a rectangular hull with bright corners, edge and
/// interior returns, plus a turret substructure (ring and barrel) holding
/// 20–40% of the scatterers. Deterministic per seed.
pub fn make_class_prototypes(
    config: &PrototypeConfig,
    sensor: &SensorModel,
    seed: u64,
) -> Result<Vec<ScattererTarget>> {
    ensure!(config.n_classes >= 2, "need at least two classes");
    let [lo, hi] = config.scatterer_count;
    ensure!(lo >= 5 && lo <= hi, "scatterer count range must satisfy 5 <= min <= max");
    ensure!(hi <= 100_000, "scatterer count too large");
    let cell = sensor.range_resolution.max(sensor.cross_range_resolution);
    ensure!(
        config.footprint_m.is_finite() && config.footprint_m >= cell,
        "footprint {} m is smaller than one resolution cell ({cell} m)",
        config.footprint_m
    );

    (0..config.n_classes)
        .map(|class| {
            let mut rng = seed::stream(seed::derive_tagged(seed, "prototype", class as u64));
            Ok(one_prototype(config, class as u32, &mut rng))
        })
        .collect()
}

fn one_prototype<R: Rng>(config: &PrototypeConfig, class: u32, rng: &mut R) -> ScattererTarget {
    let [lo, hi] = config.scatterer_count;
    let total = rng.random_range(lo..=hi);
    let min_turret = (total as f64 * 0.2).ceil() as usize;
    let max_turret = (total as f64 * 0.4).floor() as usize;
    let n_turret = rng.random_range(min_turret.max(1)..=max_turret.max(min_turret.max(1)));
    let n_body = total - n_turret;

    let length = config.footprint_m * rng.random_range(0.7..1.0);
    let width = length * rng.random_range(0.4..0.62);
    let (hl, hw) = (0.5 * length, 0.5 * width);
    let height_m = rng.random_range(1.8..3.0);
    let phase = |rng: &mut R| rng.random_range(0.0..TAU);
    let log_amp = |rng: &mut R, base: f64| base * (0.5 * rng.sample::<f64, _>(StandardNormal)).exp();

    let mut scatterers = Vec::with_capacity(total);
    let corners = [(-hw, -hl), (hw, -hl), (hw, hl), (-hw, hl)];
    for (i, &(x, y)) in corners.iter().enumerate().take(n_body) {
        // the near corners get dihedral-like brightness
        let base = if i < 2 { 2.0 } else { 1.4 };
        scatterers.push(Scatterer {
            x,
            y,
            amplitude: log_amp(rng, base),
            phase: phase(rng),
        });
    }
    let edge_share = rng.random_range(0.4..0.7);
    while scatterers.len() < n_body {
        let (x, y, base) = if rng.random_bool(edge_share) {
            // long sides carry most of the specular returns
            let side = if rng.random_bool(0.5) { -hw } else { hw };
            let pos = rng.random_range(-hl..hl);
            if rng.random_bool(0.75) {
                (side, pos, 0.9)
            } else {
                (rng.random_range(-hw..hw), if side < 0.0 { -hl } else { hl }, 0.9)
            }
        } else {
            (rng.random_range(-hw..hw), rng.random_range(-hl..hl), 0.45)
        };
        scatterers.push(Scatterer {
            x,
            y,
            amplitude: log_amp(rng, base),
            phase: phase(rng),
        });
    }

    let pivot = [
        rng.random_range(-0.15..0.15) * width,
        rng.random_range(-0.3..0.3) * length,
    ];
    let ring_radius = hw * rng.random_range(0.45..0.8);
    let barrel_len = hl * rng.random_range(0.6..1.1);
    let barrel_dir = rng.random_range(0.0..TAU);
    let n_barrel = (n_turret / 3).max(1);
    let start = scatterers.len();
    for k in 0..n_turret {
        let (x, y) = if k < n_barrel {
            let t = (k + 1) as f64 / n_barrel as f64;
            (
                pivot[0] + t * barrel_len * barrel_dir.cos(),
                pivot[1] + t * barrel_len * barrel_dir.sin(),
            )
        } else {
            let a = rng.random_range(0.0..TAU);
            (
                pivot[0] + ring_radius * a.cos(),
                pivot[1] + ring_radius * a.sin(),
            )
        };
        scatterers.push(Scatterer {
            x,
            y,
            amplitude: log_amp(rng, 1.1),
            phase: phase(rng),
        });
    }

    ScattererTarget {
        scatterers,
        class_label: class,
        substructures: vec![Substructure {
            name: "turret".into(),
            indices: (start..start + n_turret).collect(),
            pivot,
        }],
        height_m,
    }
}

/// Magnitudes of one variant perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantParams {
    pub position_jitter_sigma: f64,
    pub amplitude_jitter_rel: f64,
    pub substructure_rotation_deg: f64,
}

/// Emulates a different vehicle of the same class: every substructure turns
/// rigidly about its pivot, then positions get Gaussian jitter and
/// amplitudes log-normal jitter. Zero magnitudes leave the target untouched.
pub fn perturb_variant(
    target: &ScattererTarget,
    params: &VariantParams,
    seed: u64,
) -> Result<ScattererTarget> {
    target.validate()?;
    ensure!(
        params.position_jitter_sigma.is_finite() && params.position_jitter_sigma >= 0.0,
        "position jitter must be finite and non-negative"
    );
    ensure!(
        params.amplitude_jitter_rel.is_finite() && params.amplitude_jitter_rel >= 0.0,
        "amplitude jitter must be finite and non-negative"
    );
    ensure!(
        params.substructure_rotation_deg.is_finite(),
        "substructure rotation must be finite"
    );
    let mut out = target.clone();
    if params.substructure_rotation_deg != 0.0 {
        let angle = params.substructure_rotation_deg.to_radians();
        for sub in &out.substructures {
            for &i in &sub.indices {
                let s = &mut out.scatterers[i];
                (s.x, s.y) = rotate_about(s.x, s.y, sub.pivot, angle);
            }
        }
    }
    let mut rng = seed::stream(seed);
    if params.position_jitter_sigma > 0.0 {
        let jitter = Normal::new(0.0, params.position_jitter_sigma)
            .expect("sigma validated as finite and positive");
        for s in &mut out.scatterers {
            s.x += jitter.sample(&mut rng);
            s.y += jitter.sample(&mut rng);
        }
    }
    if params.amplitude_jitter_rel > 0.0 {
        for s in &mut out.scatterers {
            let z: f64 = rng.sample(StandardNormal);
            s.amplitude *= (params.amplitude_jitter_rel * z).exp();
        }
    }
    Ok(out)
}
