use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::compose::compose_timed;
use super::{sample_params, RandomizationConfig};
use crate::error::{ensure, Result};
use crate::scene::TargetSignature;
use crate::seed;

/// Worker count for batch kernels. `Threads(1)` runs on the calling thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    /// Whatever rayon pool is current.
    Ambient,
    Threads(usize),
}

impl Parallelism {
    pub fn run<T: Send>(self, f: impl FnOnce() -> T + Send) -> T {
        match self {
            Parallelism::Ambient => f(),
            Parallelism::Threads(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
                Ok(pool) => pool.install(f),
                Err(_) => f(),
            },
        }
    }
}

/// Wall-clock seconds spent in each stage, summed over items.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub sample_s: f64,
    pub resample_s: f64,
    pub dropout_s: f64,
    pub clutter_s: f64,
    pub noise_s: f64,
    pub shift_s: f64,
    pub qpm_s: f64,
}

impl StageTimes {
    fn add(mut self, o: StageTimes) -> StageTimes {
        self.sample_s += o.sample_s;
        self.resample_s += o.resample_s;
        self.dropout_s += o.dropout_s;
        self.clutter_s += o.clutter_s;
        self.noise_s += o.noise_s;
        self.shift_s += o.shift_s;
        self.qpm_s += o.qpm_s;
        self
    }

    pub fn stages(&self) -> [(&'static str, f64); 7] {
        [
            ("sample", self.sample_s),
            ("resample", self.resample_s),
            ("dropout", self.dropout_s),
            ("clutter", self.clutter_s),
            ("noise", self.noise_s),
            ("shift", self.shift_s),
            ("qpm", self.qpm_s),
        ]
    }
}

fn augment_one(
    signature: &TargetSignature,
    config: &RandomizationConfig,
    epoch_seed: u64,
    index: usize,
    times: Option<&mut StageTimes>,
) -> Result<Vec<f32>> {
    let start = Instant::now();
    let mut rng = seed::stream(seed::derive(epoch_seed, index as u64));
    let params = sample_params(config, &mut rng);
    match times {
        Some(t) => {
            t.sample_s += start.elapsed().as_secs_f64();
            compose_timed(signature, &params, &mut rng, Some(t))
        }
        None => compose_timed(signature, &params, &mut rng, None),
    }
}

/// Randomizes every signature once. Item `i` uses its own stream seeded from
/// `(epoch_seed, i)`, so the result does not depend on the worker count.
pub fn augment_batch(
    signatures: &[TargetSignature],
    config: &RandomizationConfig,
    epoch_seed: u64,
    parallelism: Parallelism,
) -> Result<Vec<Vec<f32>>> {
    ensure!(!signatures.is_empty(), "cannot augment an empty batch");
    config.validate()?;
    parallelism.run(|| {
        signatures
            .par_iter()
            .enumerate()
            .map(|(i, s)| augment_one(s, config, epoch_seed, i, None))
            .collect()
    })
}

/// As [`augment_batch`], also reporting per-stage time.
pub fn augment_batch_timed(
    signatures: &[TargetSignature],
    config: &RandomizationConfig,
    epoch_seed: u64,
    parallelism: Parallelism,
) -> Result<(Vec<Vec<f32>>, StageTimes)> {
    ensure!(!signatures.is_empty(), "cannot augment an empty batch");
    config.validate()?;
    parallelism.run(|| {
        let out: Result<Vec<(Vec<f32>, StageTimes)>> = signatures
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut t = StageTimes::default();
                augment_one(s, config, epoch_seed, i, Some(&mut t)).map(|img| (img, t))
            })
            .collect();
        let out = out?;
        let total = out.iter().fold(StageTimes::default(), |acc, (_, t)| acc.add(*t));
        Ok((out.into_iter().map(|(img, _)| img).collect(), total))
    })
}
