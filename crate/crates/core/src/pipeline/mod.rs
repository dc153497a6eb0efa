//! Training and inference orchestration: the per-epoch randomization loop,
//! the optional technique stack, adversarial training, bagging and
//! test-time augmentation.

mod export;
mod predict;
mod train;

pub use export::{read_predictions_csv, write_predictions_csv, write_training_log, PredictionRow};
pub use predict::{
    bag_predict, evaluate, predict_dataset, ttda_predict, Ensemble, Evaluation, LabeledImages, Predictor, TtdaConfig,
};
pub use train::{train_ensemble, train_model, train_on_source, EpochLog, EpochSource, SignatureSource, TrainedModel};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversarial::AttackConfig;
use crate::domain_rand::RandomizationConfig;
use crate::error::{ensure, Error, Result};
use crate::nn::{LossConfig, LossKind, ModelConfig, OneCycleSchedule};

pub const EXPERIMENT_CONFIG_VERSION: u32 = 1;

/// Switches for the regularization catalogue plus adversarial training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TechniqueFlags {
    pub label_smoothing: bool,
    pub mixup: bool,
    pub cosine_loss: bool,
    pub gaussian_noise: bool,
    pub dropout: bool,
    pub adversarial_training: bool,
    /// Random circular shifts on an otherwise fixed pipeline. Ignored when
    /// full domain randomization is on, which already shifts.
    pub random_shift_only: bool,
}

/// Fixed clutter and noise used when domain randomization is off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundConfig {
    pub clutter_db: f64,
    pub gamma_shape: f64,
    pub thermal_noise_db: Option<f64>,
}

/// A complete training recipe.
///
/// Numeric settings for each technique live in `model` (dropout rate),
/// `loss` (smoothing, noise, mixup) and `attack`; the `techniques` flags
/// decide which of them are active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub attack: Option<AttackConfig>,
    /// Full domain randomization; `None` trains on the fixed pipeline.
    pub randomization: Option<RandomizationConfig>,
    pub background: Option<BackgroundConfig>,
    pub shift_range_px: [i32; 2],
    pub techniques: TechniqueFlags,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub schedule: OneCycleSchedule,
    pub bag_size: usize,
    /// Shifted copies averaged per test image; 0 disables test-time
    /// augmentation.
    pub ttda_variants: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    /// The full recipe: domain randomization, adversarial training, bagging
    /// and test-time augmentation.
    fn default() -> Self {
        Self {
            version: EXPERIMENT_CONFIG_VERSION,
            model: ModelConfig { dropout_rate: 0.4, ..ModelConfig::default() },
            loss: LossConfig {
                kind: LossKind::CrossEntropy,
                label_smoothing_alpha: 0.1,
                gaussian_input_noise_sigma: 0.05,
                mixup_alpha: 0.2,
            },
            attack: Some(AttackConfig::default()),
            randomization: Some(RandomizationConfig::default()),
            background: None,
            shift_range_px: [-5, 5],
            techniques: TechniqueFlags { adversarial_training: true, ..TechniqueFlags::default() },
            epochs: 150,
            batch_size: 128,
            weight_decay: 1e-4,
            schedule: OneCycleSchedule::default(),
            bag_size: 10,
            ttda_variants: 20,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Plain SGD on the raw rendered images: no augmentation, no technique,
    /// a single model, no test-time augmentation.
    pub fn baseline() -> Self {
        Self {
            attack: None,
            randomization: None,
            techniques: TechniqueFlags::default(),
            bag_size: 1,
            ttda_variants: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.version == EXPERIMENT_CONFIG_VERSION,
            "unsupported experiment config version {}",
            self.version
        );
        self.model.validate()?;
        self.loss.validate()?;
        if let Some(a) = &self.attack {
            a.validate()?;
        }
        ensure!(
            !self.techniques.adversarial_training || self.attack.is_some(),
            "adversarial training is on but no attack is configured"
        );
        if let Some(r) = &self.randomization {
            r.validate()?;
        }
        if let Some(b) = &self.background {
            ensure!(b.clutter_db.is_finite(), "background clutter level must be finite");
            ensure!(b.gamma_shape.is_finite() && b.gamma_shape > 0.0, "background gamma shape must be positive");
            ensure!(b.thermal_noise_db.is_none_or(f64::is_finite), "background noise must be finite");
        }
        ensure!(self.shift_range_px[0] <= self.shift_range_px[1], "shift range must be ordered");
        ensure!(!self.techniques.mixup || self.loss.mixup_alpha > 0.0, "mixup needs alpha > 0");
        ensure!(self.epochs >= 1, "need at least one epoch");
        ensure!(self.batch_size >= 2, "batch size must be at least 2");
        ensure!(
            self.weight_decay.is_finite() && self.weight_decay >= 0.0,
            "weight decay must be non-negative"
        );
        ensure!(self.bag_size >= 1, "bag size must be at least 1");
        self.schedule.with_total_steps(self.schedule.total_steps.max(2)).validate()?;
        Ok(())
    }

    /// Model configuration with the dropout switch applied.
    pub fn effective_model(&self) -> ModelConfig {
        ModelConfig {
            dropout_rate: if self.techniques.dropout { self.model.dropout_rate } else { 0.0 },
            ..self.model.clone()
        }
    }

    /// Loss configuration with the technique switches applied.
    pub fn effective_loss(&self) -> LossConfig {
        let t = &self.techniques;
        LossConfig {
            kind: if t.cosine_loss { LossKind::Cosine } else { self.loss.kind },
            label_smoothing_alpha: if t.label_smoothing { self.loss.label_smoothing_alpha } else { 0.0 },
            gaussian_input_noise_sigma: if t.gaussian_noise { self.loss.gaussian_input_noise_sigma } else { 0.0 },
            mixup_alpha: if t.mixup { self.loss.mixup_alpha } else { 0.0 },
        }
    }

    pub fn effective_attack(&self) -> Option<AttackConfig> {
        self.attack.filter(|_| self.techniques.adversarial_training)
    }

    /// What the per-epoch image synthesis draws from.
    pub fn epoch_randomization(&self) -> RandomizationConfig {
        if let Some(r) = &self.randomization {
            return r.clone();
        }
        let mut r = match &self.background {
            Some(b) => RandomizationConfig {
                thermal_noise_db: b.thermal_noise_db.map(|n| [n, n]),
                ..RandomizationConfig::fixed_background(Some(b.clutter_db), b.gamma_shape, None)
            },
            None => RandomizationConfig::disabled(),
        };
        if self.techniques.random_shift_only {
            r.shift_px = Some(self.shift_range_px);
        }
        r
    }

    pub fn ttda(&self) -> Option<TtdaConfig> {
        (self.ttda_variants > 0).then(|| TtdaConfig {
            n_variants: self.ttda_variants,
            shift_range_px: self.shift_range_px,
            seed: crate::seed::derive_tagged(self.seed, "ttda", 0),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_training_recipe() {
        let c = ExperimentConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.weight_decay), (150, 128, 1e-4));
        assert_eq!((c.bag_size, c.ttda_variants), (10, 20));
        assert_eq!(c.attack.unwrap().epsilon, 2.0);
        c.validate().unwrap();
        ExperimentConfig::baseline().validate().unwrap();
    }

    #[test]
    fn baseline_is_plain() {
        let c = ExperimentConfig::baseline();
        assert_eq!(c.effective_model().dropout_rate, 0.0);
        let l = c.effective_loss();
        assert_eq!(
            (l.kind, l.label_smoothing_alpha, l.gaussian_input_noise_sigma, l.mixup_alpha),
            (LossKind::CrossEntropy, 0.0, 0.0, 0.0)
        );
        assert!(c.effective_attack().is_none());
        assert_eq!(c.epoch_randomization(), RandomizationConfig::disabled());
    }

    #[test]
    fn json_round_trip() {
        let c = ExperimentConfig { seed: 42, ..ExperimentConfig::default() };
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        assert!(ExperimentConfig::from_json(&c.to_json().replace("\"version\": 1", "\"version\": 9")).is_err());
    }

    #[test]
    fn attack_flag_needs_attack() {
        let mut c = ExperimentConfig::baseline();
        c.techniques.adversarial_training = true;
        assert!(c.validate().is_err());
    }
}
