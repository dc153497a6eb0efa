use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain_rand::{augment_batch, Parallelism, RandomizationConfig};
use crate::error::{ensure, Error, Result};
use crate::pipeline::{LabeledImages, SignatureSource};
use crate::scene::{
    generate_dataset, make_class_prototypes, GeneratedDataset, GeometryGrid, PrototypeConfig, SensorModel, SplitGrid,
    TargetSignature, VariantPolicy,
};
use crate::seed;

pub const BENCHMARK_CONFIG_VERSION: u32 = 1;
pub const BENCHMARK_FILE: &str = "benchmark.json";

/// A synthetic train set and a deliberately mismatched "measured" test set.
///
/// Test images come from perturbed target variants at held-out azimuths and
/// a different depression, composed under `test_conditions` (a narrow band
/// of clutter, noise, resolution and position the training data never
/// shows unless randomized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub version: u32,
    pub prototypes: PrototypeConfig,
    pub sensor: SensorModel,
    pub train_azimuth_step_deg: f64,
    pub test_azimuth_offset_deg: f64,
    pub train_depressions_deg: Vec<f64>,
    pub test_depressions_deg: Vec<f64>,
    pub variant_policy: VariantPolicy,
    pub test_conditions: RandomizationConfig,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    /// Ten classes, 32×32 images, 360 train and 360 test records.
    fn default() -> Self {
        Self {
            version: BENCHMARK_CONFIG_VERSION,
            prototypes: PrototypeConfig::default(),
            sensor: SensorModel::default().with_size(32, 32),
            train_azimuth_step_deg: 10.0,
            test_azimuth_offset_deg: 5.0,
            train_depressions_deg: vec![17.0],
            test_depressions_deg: vec![15.0],
            variant_policy: VariantPolicy::default(),
            test_conditions: RandomizationConfig {
                range_resolution_m: Some([0.28, 0.32]),
                cross_range_resolution_m: Some([0.28, 0.32]),
                clutter_level_db: Some([-14.0, -10.0]),
                clutter_gamma_shape: [3.0, 5.0],
                thermal_noise_db: Some([-22.0, -20.0]),
                shift_px: Some([-4, 4]),
                brightpoint_dropout: false,
                ..RandomizationConfig::default()
            },
            seed: 2024,
        }
    }
}

impl BenchmarkConfig {
    /// Two classes on 16×16 images, for smoke runs.
    pub fn micro() -> Self {
        Self {
            prototypes: PrototypeConfig { n_classes: 2, scatterer_count: [10, 20], footprint_m: 2.0 },
            sensor: SensorModel::default().with_size(16, 16),
            train_azimuth_step_deg: 30.0,
            test_azimuth_offset_deg: 15.0,
            test_conditions: RandomizationConfig { shift_px: Some([-2, 2]), ..Self::default().test_conditions },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.version == BENCHMARK_CONFIG_VERSION,
            "unsupported benchmark config version {}",
            self.version
        );
        self.sensor.validate()?;
        self.test_conditions.validate()?;
        ensure!(
            self.train_azimuth_step_deg.is_finite() && self.train_azimuth_step_deg > 0.0,
            "azimuth step must be positive"
        );
        ensure!(self.test_azimuth_offset_deg.is_finite(), "azimuth offset must be finite");
        Ok(())
    }

    pub fn grid(&self) -> Result<GeometryGrid> {
        Ok(GeometryGrid {
            train: SplitGrid::regular(self.train_azimuth_step_deg, 0.0, self.train_depressions_deg.clone())?,
            test: SplitGrid::regular(
                self.train_azimuth_step_deg,
                self.test_azimuth_offset_deg,
                self.test_depressions_deg.clone(),
            )?,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    /// The configuration with `seed` set to the seed actually used.
    pub config: BenchmarkConfig,
    pub dataset: GeneratedDataset,
    pub test_images: LabeledImages,
}

/// Composes each test signature once under the test conditions.
/// Deterministic in `seed`.
pub fn measured_test_images(
    signatures: &[TargetSignature],
    conditions: &RandomizationConfig,
    n_classes: usize,
    seed: u64,
) -> Result<LabeledImages> {
    ensure!(!signatures.is_empty(), "no test signatures");
    let images = augment_batch(signatures, conditions, seed, Parallelism::Ambient)?;
    let (h, w) = (signatures[0].height(), signatures[0].width());
    let labels = signatures.iter().map(|s| s.class_label as usize).collect();
    LabeledImages::new(h, w, n_classes, images, labels)
}

pub fn build_benchmark(config: &BenchmarkConfig, seed: u64) -> Result<Benchmark> {
    config.validate()?;
    let prototypes = make_class_prototypes(&config.prototypes, &config.sensor, seed::derive_tagged(seed, "prototypes", 0))?;
    let dataset = generate_dataset(
        &prototypes,
        &config.grid()?,
        &config.sensor,
        &config.variant_policy,
        seed::derive_tagged(seed, "dataset", 0),
    )?;
    finish(BenchmarkConfig { seed, ..config.clone() }, dataset)
}

fn finish(config: BenchmarkConfig, dataset: GeneratedDataset) -> Result<Benchmark> {
    let k = dataset.class_count();
    let test_images =
        measured_test_images(&dataset.test, &config.test_conditions, k, seed::derive_tagged(config.seed, "measured", 0))?;
    Ok(Benchmark { config, dataset, test_images })
}

impl Benchmark {
    pub fn n_classes(&self) -> usize {
        self.dataset.class_count()
    }

    pub fn class_names(&self) -> &[String] {
        &self.dataset.manifest.class_names
    }

    pub fn train_source(&self, randomization: RandomizationConfig) -> SignatureSource<'_> {
        SignatureSource { signatures: &self.dataset.train, randomization, n_classes: self.n_classes() }
    }

    /// Dataset files plus `benchmark.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        self.dataset.write_dir(dir)?;
        let path = dir.join(BENCHMARK_FILE);
        std::fs::write(&path, self.config.to_json() + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let config = BenchmarkConfig::load(dir.join(BENCHMARK_FILE))?;
        let dataset = GeneratedDataset::read_dir(dir)?;
        finish(config, dataset)
    }
}
