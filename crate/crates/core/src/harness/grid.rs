use std::time::Instant;

use rayon::prelude::*;

use super::benchmark::Benchmark;
use crate::domain_rand::Parallelism;
use crate::error::{ensure, Result};
use crate::nn::{LossKind, ModelConfig};
use crate::pipeline::{evaluate, train_ensemble, BackgroundConfig, ExperimentConfig, TechniqueFlags};
use crate::seed;

/// One named experiment in a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub name: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationGrid {
    pub rows: Vec<GridRow>,
    pub replicates: usize,
    pub master_seed: u64,
}

/// Fixed clutter levels for the rows that train without domain randomization.
const BACKGROUND_LEVELS_DB: [f64; 2] = [-20.0, -15.0];
const BACKGROUND_GAMMA_SHAPE: f64 = 6.0;
const BACKGROUND_NOISE_DB: f64 = -20.0;

fn plain(base: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelConfig { skip_connections: true, ..base.model.clone() },
        attack: None,
        randomization: None,
        background: None,
        techniques: TechniqueFlags::default(),
        bag_size: 1,
        ttda_variants: 0,
        ..base.clone()
    }
}

fn with_background(mut c: ExperimentConfig, level_db: f64) -> ExperimentConfig {
    c.background = Some(BackgroundConfig {
        clutter_db: level_db,
        gamma_shape: BACKGROUND_GAMMA_SHAPE,
        thermal_noise_db: Some(BACKGROUND_NOISE_DB),
    });
    c
}

fn with_dr(mut c: ExperimentConfig, base: &ExperimentConfig) -> ExperimentConfig {
    let mut r = base.randomization.clone().unwrap_or_default();
    if r.shift_px.is_none() {
        r.shift_px = Some(base.shift_range_px);
    }
    c.randomization = Some(r);
    c
}

fn with_at(mut c: ExperimentConfig, base: &ExperimentConfig) -> ExperimentConfig {
    c.attack = Some(base.attack.unwrap_or_default());
    c.techniques.adversarial_training = true;
    c
}

fn dense(mut c: ExperimentConfig) -> ExperimentConfig {
    c.model = c.model.widened(2.0);
    c
}

impl AblationGrid {
    pub const DEFAULT_REPLICATES: usize = 5;

    pub fn new(rows: Vec<GridRow>, replicates: usize, master_seed: u64) -> Self {
        Self { rows, replicates, master_seed }
    }

    /// The architecture/randomization/AT/bagging/TTDA ladder. Training
    /// length, batch size, schedule, bag size and variant count come from
    /// `base`; the wider "dense" model doubles every stage's channels.
    pub fn ablation(base: &ExperimentConfig, replicates: usize, master_seed: u64) -> Self {
        let bag = base.bag_size.max(2);
        let ttda = if base.ttda_variants == 0 { 20 } else { base.ttda_variants };
        let p = plain(base);
        let mut rows = Vec::new();
        let mut push = |name: &str, config: ExperimentConfig| rows.push(GridRow { name: name.to_string(), config });

        let full = dense(with_at(with_dr(p.clone(), base), base));
        push("bagging+dense+shift+dr+at+ttda", ExperimentConfig { bag_size: bag, ttda_variants: ttda, ..full.clone() });
        push("bagging+dense+shift+dr+at", ExperimentConfig { bag_size: bag, ..full.clone() });
        push("dense+shift+dr+at", full);
        push("resnet+shift+dr+at", with_at(with_dr(p.clone(), base), base));
        push("resnet+shift+dr", with_dr(p.clone(), base));
        for level in BACKGROUND_LEVELS_DB {
            let mut c = with_background(p.clone(), level);
            c.techniques.random_shift_only = true;
            push(&format!("resnet+shift@{level}dB"), c);
        }
        for level in BACKGROUND_LEVELS_DB {
            push(&format!("resnet@{level}dB"), with_background(p.clone(), level));
        }
        Self::new(rows, replicates, master_seed)
    }

    /// The regularization catalogue, each technique on centered and on
    /// randomly shifted training images. Background and other settings
    /// come from `base`.
    pub fn techniques(base: &ExperimentConfig, replicates: usize, master_seed: u64) -> Self {
        let p = ExperimentConfig { background: base.background, ..plain(base) };
        let gd = TechniqueFlags { gaussian_noise: true, dropout: true, ..TechniqueFlags::default() };
        let single: [(&str, TechniqueFlags); 5] = [
            ("baseline", TechniqueFlags::default()),
            ("lblsm", TechniqueFlags { label_smoothing: true, ..Default::default() }),
            ("mixup", TechniqueFlags { mixup: true, ..Default::default() }),
            ("cosine", TechniqueFlags { cosine_loss: true, ..Default::default() }),
            ("at", TechniqueFlags { adversarial_training: true, ..Default::default() }),
        ];
        let mut variants: Vec<(String, TechniqueFlags)> = single.iter().map(|(n, f)| (n.to_string(), *f)).collect();
        variants.push(("gauss+dropout".into(), gd));
        for (n, f) in &single[1..] {
            let merged = TechniqueFlags { gaussian_noise: true, dropout: true, ..*f };
            variants.push((format!("{n}+gauss+dropout"), merged));
        }
        let mut rows = Vec::new();
        for shift in [false, true] {
            for (name, flags) in &variants {
                let mut c = p.clone();
                c.techniques = TechniqueFlags { random_shift_only: shift, ..*flags };
                if c.techniques.adversarial_training {
                    c.attack = Some(base.attack.unwrap_or_default());
                }
                if c.techniques.cosine_loss {
                    c.loss.kind = LossKind::Cosine;
                }
                let suffix = if shift { "/shift" } else { "/centered" };
                rows.push(GridRow { name: format!("{name}{suffix}"), config: c });
            }
        }
        Self::new(rows, replicates, master_seed)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.rows.is_empty(), "grid has no rows");
        ensure!(self.replicates >= 1, "need at least one replicate");
        let mut seen = std::collections::HashSet::new();
        for row in &self.rows {
            ensure!(seen.insert(row.name.as_str()), "duplicate row name {:?}", row.name);
            row.config.validate()?;
        }
        Ok(())
    }

    /// Seed of replicate `r`; shared by every row so rows are paired.
    pub fn replicate_seed(&self, r: usize) -> u64 {
        seed::derive(self.master_seed, r as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub parallelism: Parallelism,
    /// Record wall-clock runtimes. Off keeps reports byte-reproducible.
    pub record_runtime: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { parallelism: Parallelism::Ambient, record_runtime: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub overall: f64,
    pub per_class: Vec<f64>,
    pub confusion: Vec<Vec<u64>>,
    /// Zero unless runtimes are recorded.
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowReport {
    pub name: String,
    pub config: ExperimentConfig,
    pub replicates: Vec<ReplicateResult>,
    /// The first error hit by any replicate; such a row keeps no results.
    pub failure: Option<String>,
}

impl RowReport {
    fn overall(&self) -> impl Iterator<Item = f64> + '_ {
        self.replicates.iter().map(|r| r.overall)
    }

    pub fn mean(&self) -> f64 {
        self.overall().sum::<f64>() / self.replicates.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.overall().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.overall().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_runtime_s(&self) -> f64 {
        self.replicates.iter().map(|r| r.runtime_s).sum::<f64>() / self.replicates.len() as f64
    }

    /// Per-class accuracy averaged over replicates.
    pub fn mean_per_class(&self) -> Vec<f64> {
        let k = self.replicates.first().map_or(0, |r| r.per_class.len());
        (0..k)
            .map(|c| self.replicates.iter().map(|r| r.per_class[c]).sum::<f64>() / self.replicates.len() as f64)
            .collect()
    }

    /// Confusion counts summed over replicates.
    pub fn total_confusion(&self) -> Vec<Vec<u64>> {
        let k = self.replicates.first().map_or(0, |r| r.confusion.len());
        let mut out = vec![vec![0u64; k]; k];
        for r in &self.replicates {
            for (o, row) in out.iter_mut().zip(&r.confusion) {
                for (a, b) in o.iter_mut().zip(row) {
                    *a += b;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub class_names: Vec<String>,
    pub rows: Vec<RowReport>,
}

impl MetricsReport {
    pub fn row(&self, name: &str) -> Option<&RowReport> {
        self.rows.iter().find(|r| r.name == name)
    }
}

fn run_one(row: &GridRow, bench: &Benchmark, seed: u64, replicate: usize, record: bool) -> Result<ReplicateResult> {
    let start = Instant::now();
    let source = bench.train_source(row.config.epoch_randomization());
    let config = ExperimentConfig { seed, ..row.config.clone() };
    let ensemble = train_ensemble(&config, &source, seed)?;
    let eval = evaluate(&ensemble, &bench.test_images, config.ttda().as_ref())?;
    Ok(ReplicateResult {
        replicate,
        seed,
        overall: eval.overall,
        per_class: eval.per_class,
        confusion: eval.confusion,
        runtime_s: if record { start.elapsed().as_secs_f64() } else { 0.0 },
    })
}

/// Trains and evaluates every (row, replicate) pair. Jobs run in parallel;
/// results come back in grid order. A failing row is reported, not fatal.
pub fn run_grid(grid: &AblationGrid, bench: &Benchmark, options: RunOptions) -> Result<MetricsReport> {
    ensure!(!grid.rows.is_empty(), "grid has no rows");
    ensure!(grid.replicates >= 1, "need at least one replicate");
    let mut seen = std::collections::HashSet::new();
    ensure!(grid.rows.iter().all(|r| seen.insert(r.name.as_str())), "row names must be unique");
    let jobs: Vec<(usize, usize)> =
        (0..grid.rows.len()).flat_map(|i| (0..grid.replicates).map(move |r| (i, r))).collect();
    let results: Vec<Result<ReplicateResult>> = options.parallelism.run(|| {
        jobs.par_iter()
            .map(|&(i, r)| {
                let row = &grid.rows[i];
                row.config.validate()?;
                run_one(row, bench, grid.replicate_seed(r), r, options.record_runtime)
            })
            .collect()
    });
    let mut results = results.into_iter();
    let rows = grid
        .rows
        .iter()
        .map(|row| {
            let mut replicates = Vec::with_capacity(grid.replicates);
            let mut failure = None;
            for res in results.by_ref().take(grid.replicates) {
                match res {
                    Ok(r) => replicates.push(r),
                    Err(e) => {
                        failure.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            if failure.is_some() {
                replicates.clear();
            }
            RowReport { name: row.name.clone(), config: row.config.clone(), replicates, failure }
        })
        .collect();
    Ok(MetricsReport { class_names: bench.class_names().to_vec(), rows })
}
