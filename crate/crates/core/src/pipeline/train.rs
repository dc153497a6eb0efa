use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::predict::{Ensemble, LabeledImages};
use super::ExperimentConfig;
use crate::adversarial::{fgsm_l2, pgd_linf, AttackKind};
use crate::domain_rand::{augment_batch, Parallelism, RandomizationConfig};
use crate::error::{ensure, Error, Result};
use crate::nn::{add_gaussian_noise, loss_and_gradients, mixup_batch, sgd_step, ForwardMode, Model, Tensor};
use crate::scene::TargetSignature;
use crate::seed;

/// Supplies one freshly synthesized pass over the training set per epoch.
pub trait EpochSource: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn dims(&self) -> (usize, usize);
    fn n_classes(&self) -> usize;
    fn label(&self, index: usize) -> usize;
    /// Images for one epoch, in item order, values in `[0, 1]`.
    fn epoch_images(&self, epoch_seed: u64) -> Result<Vec<Vec<f32>>>;
}

/// Randomizes stored signatures anew each epoch.
pub struct SignatureSource<'a> {
    pub signatures: &'a [TargetSignature],
    pub randomization: RandomizationConfig,
    pub n_classes: usize,
}

impl EpochSource for SignatureSource<'_> {
    fn len(&self) -> usize {
        self.signatures.len()
    }

    fn dims(&self) -> (usize, usize) {
        self.signatures.first().map_or((0, 0), |s| (s.height(), s.width()))
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn label(&self, index: usize) -> usize {
        self.signatures[index].class_label as usize
    }

    fn epoch_images(&self, epoch_seed: u64) -> Result<Vec<Vec<f32>>> {
        augment_batch(self.signatures, &self.randomization, epoch_seed, Parallelism::Ambient)
    }
}

/// The same images every epoch.
impl EpochSource for LabeledImages {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    fn epoch_images(&self, _epoch_seed: u64) -> Result<Vec<Vec<f32>>> {
        Ok(self.images.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub lr: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model<f32>,
    pub seed: u64,
    pub log: Vec<EpochLog>,
}

fn one_hot(labels: &[usize], k: usize) -> Tensor<f32> {
    let mut t = Tensor::zeros(vec![labels.len(), k]);
    for (i, &l) in labels.iter().enumerate() {
        t.row_mut(i)[l] = 1.0;
    }
    t
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Batch boundaries; a trailing singleton joins the previous batch so that
/// batch statistics are always defined.
fn batch_ranges(n: usize, batch: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).step_by(batch).map(|s| (s, (s + batch).min(n))).collect();
    if out.len() > 1 && out.last().is_some_and(|&(s, e)| e - s == 1) {
        let (_, e) = out.pop().unwrap();
        out.last_mut().unwrap().1 = e;
    }
    out
}

/// Trains on signatures randomized per the config. The class count is taken
/// from the largest label.
pub fn train_model(config: &ExperimentConfig, train: &[TargetSignature], seed: u64) -> Result<TrainedModel> {
    let n_classes = train.iter().map(|s| s.class_label as usize + 1).max().unwrap_or(0).max(2);
    let source = SignatureSource { signatures: train, randomization: config.epoch_randomization(), n_classes };
    train_on_source(config, &source, seed)
}

/// The training loop. Per epoch: synthesize images, shuffle, then per batch
/// Gaussian noise → mixup → attack → loss → Nesterov step on the 1cycle
/// schedule.
pub fn train_on_source(config: &ExperimentConfig, source: &dyn EpochSource, seed: u64) -> Result<TrainedModel> {
    config.validate()?;
    ensure!(!source.is_empty(), "training set is empty");
    let (h, w) = source.dims();
    let k = source.n_classes();
    let mut model_cfg = config.effective_model();
    model_cfg.input_height = h;
    model_cfg.input_width = w;
    model_cfg.n_classes = k;
    let mut model = Model::<f32>::new(model_cfg, seed::derive_tagged(seed, "init", 0))?;
    let loss_cfg = config.effective_loss();
    let attack = config.effective_attack();

    let n = source.len();
    let ranges = batch_ranges(n, config.batch_size);
    let schedule = config.schedule.with_total_steps((ranges.len() * config.epochs).max(3));
    schedule.validate()?;
    let labels: Vec<usize> = (0..n).map(|i| source.label(i)).collect();
    ensure!(labels.iter().all(|&l| l < k), "label out of range for {k} classes");

    let mut log = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let images = source.epoch_images(seed::derive_tagged(seed, "augment", epoch as u64))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::stream(seed::derive_tagged(seed, "shuffle", epoch as u64)));
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        let (mut lr, mut momentum) = (0.0, 0.0);
        for &(start, end) in &ranges {
            let idx = &order[start..end];
            let imgs: Vec<&[f32]> = idx.iter().map(|&i| images[i].as_slice()).collect();
            let mut x = Tensor::<f32>::from_images(&imgs, h, w)?;
            let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let mut y = one_hot(&batch_labels, k);
            let mut rng = seed::stream(seed::derive_tagged(seed, "batch", step as u64));

            add_gaussian_noise(&mut x, loss_cfg.gaussian_input_noise_sigma, &mut rng);
            if loss_cfg.mixup_alpha > 0.0 {
                let mut perm: Vec<usize> = (0..idx.len()).collect();
                perm.shuffle(&mut rng);
                let (mx, my, _) =
                    mixup_batch(&x, &y, &x.select_rows(&perm), &y.select_rows(&perm), loss_cfg.mixup_alpha, &mut rng)?;
                (x, y) = (mx, my);
            }
            if let Some(a) = &attack {
                x = match a.kind {
                    AttackKind::FgsmL2 => fgsm_l2(&model, &x, &y, a, &loss_cfg)?,
                    AttackKind::PgdLinf => pgd_linf(&model, &x, &y, a, &loss_cfg, &mut rng)?,
                };
            }
            let mode = ForwardMode::Train { dropout_seed: seed::derive_tagged(seed, "dropout", step as u64) };
            let out = loss_and_gradients(&model, &x, &y, &loss_cfg, mode)?;
            if !out.loss.is_finite() {
                return Err(Error::Divergence { epoch, reason: format!("loss is {}", out.loss) });
            }
            model.update_running_stats(&out.batch_stats);
            (lr, momentum) = schedule.at(step)?;
            sgd_step(&mut model, &out.grads, lr, momentum, config.weight_decay)?;
            loss_sum += out.loss as f64 * idx.len() as f64;
            correct += batch_labels
                .iter()
                .enumerate()
                .filter(|&(i, &l)| argmax(out.logits.row(i)) == l)
                .count();
            step += 1;
        }
        if !model.all_finite() {
            return Err(Error::Divergence { epoch, reason: "non-finite parameters".into() });
        }
        log.push(EpochLog {
            epoch,
            mean_loss: loss_sum / n as f64,
            train_accuracy: correct as f64 / n as f64,
            lr,
            momentum,
        });
    }
    Ok(TrainedModel { model, seed, log })
}

/// Trains `bag_size` members with seeds derived from `seed`, in parallel.
pub fn train_ensemble(config: &ExperimentConfig, source: &dyn EpochSource, seed: u64) -> Result<Ensemble> {
    let members: Result<Vec<TrainedModel>> = (0..config.bag_size as u64)
        .into_par_iter()
        .map(|i| train_on_source(config, source, seed::derive_tagged(seed, "member", i)))
        .collect();
    Ensemble::new(members?)
}
