use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::format::{decode_split, write_split, SplitData, SplitRecord};
use super::{
    perturb_variant, render_signature, ScattererTarget, SensorModel, TargetSignature,
    VariantParams, ViewGeometry,
};
use crate::error::{ensure, Error, Result};
use crate::seed;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_FILE: &str = "train.sard";
pub const TEST_FILE: &str = "test.sard";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitGrid {
    pub azimuths_deg: Vec<f64>,
    pub depressions_deg: Vec<f64>,
}

impl SplitGrid {
    /// Azimuths `offset, offset + step, ...` below 360°.
    pub fn regular(step_deg: f64, offset_deg: f64, depressions_deg: Vec<f64>) -> Result<Self> {
        ensure!(
            step_deg.is_finite() && step_deg > 0.0 && step_deg <= 360.0,
            "azimuth step must lie in (0, 360]"
        );
        ensure!(
            offset_deg.is_finite() && (0.0..360.0).contains(&offset_deg),
            "azimuth offset must lie in [0, 360)"
        );
        let mut azimuths_deg = Vec::new();
        let mut k = 0u32;
        loop {
            let az = offset_deg + k as f64 * step_deg;
            if az >= 360.0 {
                break;
            }
            azimuths_deg.push(az);
            k += 1;
        }
        Ok(Self {
            azimuths_deg,
            depressions_deg,
        })
    }

    pub fn len(&self) -> usize {
        self.azimuths_deg.len() * self.depressions_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn geometries(&self) -> impl Iterator<Item = ViewGeometry> + '_ {
        self.depressions_deg.iter().flat_map(move |&d| {
            self.azimuths_deg
                .iter()
                .map(move |&a| ViewGeometry::new(d, a))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryGrid {
    pub train: SplitGrid,
    pub test: SplitGrid,
}

/// How far each class's test vehicle departs from its prototype. Each class
/// turns its substructures by the full angle with a random sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantPolicy {
    pub substructure_rotation_deg: f64,
    pub position_jitter_sigma_m: f64,
    pub amplitude_jitter_rel: f64,
}

impl Default for VariantPolicy {
    fn default() -> Self {
        Self {
            substructure_rotation_deg: 45.0,
            position_jitter_sigma_m: 0.15,
            amplitude_jitter_rel: 0.2,
        }
    }
}

impl VariantPolicy {
    pub fn none() -> Self {
        Self {
            substructure_rotation_deg: 0.0,
            position_jitter_sigma_m: 0.0,
            amplitude_jitter_rel: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub class_names: Vec<String>,
    pub counts: SplitCounts,
    pub grid: GeometryGrid,
    pub seed: u64,
    pub sensor: SensorModel,
    pub variant_policy: VariantPolicy,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.format_version == FORMAT_VERSION,
            "unsupported dataset format version {}",
            self.format_version
        );
        ensure!(self.class_names.len() >= 2, "manifest lists fewer than two classes");
        self.sensor.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub manifest: DatasetManifest,
    pub train: Vec<TargetSignature>,
    pub test: Vec<TargetSignature>,
}

/// Renders the train split from the prototypes and the test split from one
/// perturbed variant per class. Records are class-major, then depression,
/// then azimuth.
pub fn generate_dataset(
    prototypes: &[ScattererTarget],
    grid: &GeometryGrid,
    sensor: &SensorModel,
    policy: &VariantPolicy,
    seed: u64,
) -> Result<GeneratedDataset> {
    ensure!(!prototypes.is_empty(), "no prototypes");
    ensure!(
        !grid.train.is_empty() && !grid.test.is_empty(),
        "geometry grid must be nonempty for both splits"
    );
    sensor.validate()?;

    let variants = prototypes
        .iter()
        .enumerate()
        .map(|(class, proto)| {
            let mut rng = seed::stream(seed::derive_tagged(seed, "variant-draw", class as u64));
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let params = VariantParams {
                position_jitter_sigma: policy.position_jitter_sigma_m,
                amplitude_jitter_rel: policy.amplitude_jitter_rel,
                substructure_rotation_deg: sign * policy.substructure_rotation_deg,
            };
            perturb_variant(proto, &params, seed::derive_tagged(seed, "variant", class as u64))
        })
        .collect::<Result<Vec<_>>>()?;

    let render_split = |targets: &[ScattererTarget], split: &SplitGrid| -> Result<Vec<TargetSignature>> {
        let jobs: Vec<(&ScattererTarget, ViewGeometry)> = targets
            .iter()
            .flat_map(|t| split.geometries().map(move |g| (t, g)))
            .collect();
        jobs.par_iter()
            .map(|(t, g)| render_signature(t, sensor, g))
            .collect()
    };
    let train = render_split(prototypes, &grid.train)?;
    let test = render_split(&variants, &grid.test)?;

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        class_names: (0..prototypes.len()).map(|c| format!("class_{c:02}")).collect(),
        counts: SplitCounts {
            train: train.len(),
            test: test.len(),
        },
        grid: grid.clone(),
        seed,
        sensor: sensor.clone(),
        variant_policy: *policy,
    };
    Ok(GeneratedDataset {
        manifest,
        train,
        test,
    })
}

fn to_split(signatures: &[TargetSignature], sensor: &SensorModel) -> SplitData {
    SplitData {
        height: sensor.image_height,
        width: sensor.image_width,
        records: signatures
            .iter()
            .map(|s| SplitRecord {
                class_id: s.class_label,
                azimuth_deg: s.geometry.azimuth_deg as f32,
                depression_deg: s.geometry.depression_deg as f32,
                image: s.image.clone(),
                mask: s.shadow_mask.clone(),
            })
            .collect(),
    }
}

fn from_split(data: SplitData, manifest: &DatasetManifest, name: &str) -> Result<Vec<TargetSignature>> {
    let sensor = &manifest.sensor;
    if data.height != sensor.image_height || data.width != sensor.image_width {
        return Err(Error::format(
            "dataset",
            format!(
                "{name} split is {}x{}, manifest sensor is {}x{}",
                data.height, data.width, sensor.image_height, sensor.image_width
            ),
        ));
    }
    let n_classes = manifest.class_names.len() as u32;
    data.records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.class_id >= n_classes {
                return Err(Error::format(
                    "dataset",
                    format!("{name} record {i} has class {} of {n_classes}", r.class_id),
                ));
            }
            Ok(TargetSignature {
                image: r.image,
                shadow_mask: r.mask,
                sensor: sensor.clone(),
                geometry: ViewGeometry::new(r.depression_deg as f64, r.azimuth_deg as f64),
                class_label: r.class_id,
            })
        })
        .collect()
}

impl GeneratedDataset {
    pub fn class_count(&self) -> usize {
        self.manifest.class_names.len()
    }

    /// Writes `manifest.json`, `train.sard` and `test.sard` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = serde_json::to_string_pretty(&self.manifest)?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, manifest + "\n").map_err(|e| Error::io(&path, e))?;
        for (file, split) in [(TRAIN_FILE, &self.train), (TEST_FILE, &self.test)] {
            let path = dir.join(file);
            let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_split(&mut BufWriter::new(f), &to_split(split, &self.manifest.sensor))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        let load = |file: &str, name: &str, count: usize| -> Result<Vec<TargetSignature>> {
            let path = dir.join(file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let split = decode_split(&bytes)?;
            if split.records.len() != count {
                return Err(Error::format(
                    "dataset",
                    format!(
                        "{name} split holds {} records, manifest says {count}",
                        split.records.len()
                    ),
                ));
            }
            from_split(split, &manifest, name)
        };
        let train = load(TRAIN_FILE, "train", manifest.counts.train)?;
        let test = load(TEST_FILE, "test", manifest.counts.test)?;
        Ok(Self {
            manifest,
            train,
            test,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{make_class_prototypes, PrototypeConfig};

    fn small(policy: VariantPolicy, same_grid: bool) -> GeneratedDataset {
        let sensor = SensorModel::default().with_size(24, 24);
        let protos = make_class_prototypes(
            &PrototypeConfig {
                n_classes: 3,
                scatterer_count: [10, 20],
                footprint_m: 2.5,
            },
            &sensor,
            4,
        )
        .unwrap();
        let train = SplitGrid::regular(90.0, 0.0, vec![17.0]).unwrap();
        let test = if same_grid {
            train.clone()
        } else {
            SplitGrid::regular(90.0, 45.0, vec![15.0, 16.0]).unwrap()
        };
        generate_dataset(&protos, &GeometryGrid { train, test }, &sensor, &policy, 8).unwrap()
    }

    #[test]
    fn counts_follow_grid() {
        let d = small(VariantPolicy::default(), false);
        assert_eq!(d.manifest.counts.train, 3 * 4);
        assert_eq!(d.manifest.counts.test, 3 * 4 * 2);
        assert_eq!(d.train.len(), 12);
        assert_eq!(d.test.len(), 24);
    }

    #[test]
    fn variants_differ_from_prototypes() {
        let d = small(VariantPolicy::default(), true);
        for (a, b) in d.train.iter().zip(&d.test) {
            assert_eq!(a.geometry, b.geometry);
            assert_ne!(a.image, b.image);
        }
    }

    #[test]
    fn zero_policy_same_grid_renders_identically() {
        let d = small(VariantPolicy::none(), true);
        assert_eq!(d.train, d.test);
    }

    #[test]
    fn write_read_roundtrip_and_determinism() {
        let d = small(VariantPolicy::default(), false);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        d.write_dir(a.path()).unwrap();
        small(VariantPolicy::default(), false).write_dir(b.path()).unwrap();
        for f in [MANIFEST_FILE, TRAIN_FILE, TEST_FILE] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap()
            );
        }
        let back = GeneratedDataset::read_dir(a.path()).unwrap();
        assert_eq!(back.manifest, d.manifest);
        assert_eq!(back.train.len(), d.train.len());
        assert_eq!(back.train[3].image, d.train[3].image);
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let d = small(VariantPolicy::default(), false);
        let dir = tempfile::tempdir().unwrap();
        d.write_dir(dir.path()).unwrap();
        let mut m = d.manifest.clone();
        m.counts.train += 1;
        fs::write(
            dir.path().join(MANIFEST_FILE),
            serde_json::to_string(&m).unwrap(),
        )
        .unwrap();
        assert!(GeneratedDataset::read_dir(dir.path()).is_err());
    }
}
