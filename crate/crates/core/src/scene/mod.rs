//! Point-scatterer SAR scene synthesis.
//!
//! Targets are clouds of point scatterers standing in for CAD models. A
//! target is rendered through a separable Taylor-weighted PSF into a complex
//! signature, together with a geometric shadow mask.

mod dataset;
mod format;
mod prototypes;
pub mod psf;
mod qpm;
mod render;
mod shadow;

pub use dataset::{
    generate_dataset, DatasetManifest, GeneratedDataset, GeometryGrid, SplitCounts, SplitGrid,
    VariantPolicy,
};
pub use format::{decode_split, encode_split, SplitRecord, SplitData, SPLIT_MAGIC, SPLIT_VERSION};
pub use prototypes::{make_class_prototypes, perturb_variant, PrototypeConfig, VariantParams};
pub use qpm::qpm_scale;
pub use render::render_signature;
pub use shadow::{compute_shadow_mask, shadow_length_px};

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    /// Cross-range position, meters.
    pub x: f64,
    /// Range position, meters.
    pub y: f64,
    /// Square-root RCS, meters.
    pub amplitude: f64,
    /// Radians in `[0, 2π)`.
    pub phase: f64,
}

/// Named rigid sub-part of a target, e.g. a turret.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substructure {
    pub name: String,
    pub indices: Vec<usize>,
    pub pivot: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererTarget {
    pub scatterers: Vec<Scatterer>,
    pub class_label: u32,
    pub substructures: Vec<Substructure>,
    /// Physical height used for shadow casting, meters.
    pub height_m: f64,
}

impl ScattererTarget {
    pub fn validate(&self) -> Result<()> {
        if self.scatterers.is_empty() {
            return Err(Error::DegenerateInput("target has no scatterers".into()));
        }
        for (i, s) in self.scatterers.iter().enumerate() {
            ensure!(
                s.x.is_finite() && s.y.is_finite(),
                "scatterer {i} has non-finite position"
            );
            ensure!(
                s.amplitude.is_finite() && s.amplitude >= 0.0,
                "scatterer {i} has invalid amplitude {}",
                s.amplitude
            );
            ensure!(s.phase.is_finite(), "scatterer {i} has non-finite phase");
        }
        ensure!(
            self.height_m.is_finite() && self.height_m >= 0.0,
            "target height must be finite and non-negative"
        );
        let mut seen = vec![false; self.scatterers.len()];
        for sub in &self.substructures {
            ensure!(
                sub.pivot.iter().all(|p| p.is_finite()),
                "substructure '{}' pivot is not finite",
                sub.name
            );
            for &i in &sub.indices {
                ensure!(
                    i < seen.len(),
                    "substructure '{}' index {i} out of range",
                    sub.name
                );
                ensure!(!seen[i], "substructures overlap at scatterer {i}");
                seen[i] = true;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub range_resolution: f64,
    pub cross_range_resolution: f64,
    pub range_spacing: f64,
    pub cross_range_spacing: f64,
    pub taylor_sidelobe_db: f64,
    pub taylor_nbar: u32,
    pub image_height: usize,
    pub image_width: usize,
}

impl Default for SensorModel {
    /// Finest resolution of the randomization ranges, sampled finely enough
    /// that the Taylor band is alias-free.
    fn default() -> Self {
        Self {
            range_resolution: 0.203125,
            cross_range_resolution: 0.21,
            range_spacing: 0.16,
            cross_range_spacing: 0.16,
            taylor_sidelobe_db: -35.0,
            taylor_nbar: 4,
            image_height: 128,
            image_width: 128,
        }
    }
}

impl SensorModel {
    pub fn with_size(mut self, height: usize, width: usize) -> Self {
        self.image_height = height;
        self.image_width = width;
        self
    }

    pub fn pixels(&self) -> usize {
        self.image_height * self.image_width
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("range_resolution", self.range_resolution),
            ("cross_range_resolution", self.cross_range_resolution),
            ("range_spacing", self.range_spacing),
            ("cross_range_spacing", self.cross_range_spacing),
        ] {
            ensure!(v.is_finite() && v > 0.0, "{name} must be positive, got {v}");
        }
        ensure!(
            self.range_spacing <= self.range_resolution
                && self.cross_range_spacing <= self.cross_range_resolution,
            "pixel spacing must not exceed resolution"
        );
        ensure!(
            self.image_height > 0 && self.image_width > 0,
            "image dimensions must be positive"
        );
        ensure!(
            self.image_height <= 8192 && self.image_width <= 8192,
            "image dimensions too large"
        );
        ensure!(
            self.taylor_sidelobe_db.is_finite() && self.taylor_sidelobe_db != 0.0,
            "taylor sidelobe level must be a nonzero dB value"
        );
        ensure!(self.taylor_nbar <= 64, "taylor nbar too large");
        Ok(())
    }

    pub fn taylor(&self) -> psf::TaylorWindow {
        psf::TaylorWindow::new(self.taylor_sidelobe_db, self.taylor_nbar)
    }

    pub fn range_psf(&self) -> psf::AxisPsf {
        psf::AxisPsf::new(self.range_resolution, self.taylor())
    }

    pub fn cross_range_psf(&self) -> psf::AxisPsf {
        psf::AxisPsf::new(self.cross_range_resolution, self.taylor())
    }

    /// Range coordinate of row `u`, meters. Row `H/2` is the scene center.
    pub fn row_position(&self, u: usize) -> f64 {
        (u as f64 - (self.image_height / 2) as f64) * self.range_spacing
    }

    pub fn col_position(&self, v: usize) -> f64 {
        (v as f64 - (self.image_width / 2) as f64) * self.cross_range_spacing
    }

    /// Fractional (row, col) of a scene point.
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            y / self.range_spacing + (self.image_height / 2) as f64,
            x / self.cross_range_spacing + (self.image_width / 2) as f64,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewGeometry {
    pub depression_deg: f64,
    pub azimuth_deg: f64,
}

impl ViewGeometry {
    pub fn new(depression_deg: f64, azimuth_deg: f64) -> Self {
        Self {
            depression_deg,
            azimuth_deg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.depression_deg > 0.0 && self.depression_deg <= 90.0,
            "depression must lie in (0, 90], got {}",
            self.depression_deg
        );
        ensure!(
            (0.0..360.0).contains(&self.azimuth_deg),
            "azimuth must lie in [0, 360), got {}",
            self.azimuth_deg
        );
        Ok(())
    }

    /// Scene position of a target-frame point after the azimuth rotation.
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.azimuth_deg.to_radians().sin_cos();
        (x * c - y * s, x * s + y * c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSignature {
    /// Row-major `H×W` complex amplitude.
    pub image: Vec<Complex32>,
    pub shadow_mask: Vec<bool>,
    pub sensor: SensorModel,
    pub geometry: ViewGeometry,
    pub class_label: u32,
}

impl TargetSignature {
    pub fn height(&self) -> usize {
        self.sensor.image_height
    }

    pub fn width(&self) -> usize {
        self.sensor.image_width
    }

    pub fn magnitude(&self) -> Vec<f32> {
        self.image.iter().map(|z| z.norm()).collect()
    }

    pub fn energy(&self) -> f64 {
        self.image.iter().map(|z| z.norm_sqr() as f64).sum()
    }
}

/// Rotates `(x, y)` about `pivot` by `angle_rad`.
pub(crate) fn rotate_about(x: f64, y: f64, pivot: [f64; 2], angle_rad: f64) -> (f64, f64) {
    let (s, c) = angle_rad.sin_cos();
    let dx = x - pivot[0];
    let dy = y - pivot[1];
    (pivot[0] + dx * c - dy * s, pivot[1] + dx * s + dy * c)
}
