use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::domain_rand::{augment_batch_timed, Parallelism, RandomizationConfig, StageTimes};
use crate::error::{ensure, Error, Result};
use crate::scene::{generate_dataset, make_class_prototypes, GeometryGrid, PrototypeConfig, SensorModel, SplitGrid, VariantPolicy};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchReport {
    pub images: usize,
    pub height: usize,
    pub width: usize,
    pub threads: usize,
    pub seconds: f64,
    pub images_per_minute: f64,
    /// Per-stage time summed over all worker threads.
    pub stages: StageTimes,
}

/// Times fully randomized synthesis of `n_images` images of `size×size`
/// pixels. Signatures are pre-rendered (36 views) and cycled, so only the
/// per-epoch work is measured.
pub fn throughput_bench(
    n_images: usize,
    size: usize,
    config: &RandomizationConfig,
    parallelism: Parallelism,
    seed: u64,
) -> Result<BenchReport> {
    ensure!(n_images > 0, "need at least one image");
    let sensor = SensorModel::default().with_size(size, size);
    let protos = make_class_prototypes(&PrototypeConfig::default(), &sensor, seed::derive_tagged(seed, "prototypes", 0))?;
    let grid = GeometryGrid {
        train: SplitGrid::regular(100.0, 0.0, vec![17.0])?,
        test: SplitGrid::regular(180.0, 0.0, vec![17.0])?,
    };
    let data = generate_dataset(&protos, &grid, &sensor, &VariantPolicy::default(), seed::derive_tagged(seed, "dataset", 0))?;
    let signatures: Vec<_> = data.train.iter().cycle().take(n_images).cloned().collect();
    let threads = parallelism.run(rayon::current_num_threads);
    let start = Instant::now();
    let (images, stages) = augment_batch_timed(&signatures, config, seed::derive_tagged(seed, "bench", 0), parallelism)?;
    let seconds = start.elapsed().as_secs_f64();
    debug_assert_eq!(images.len(), n_images);
    Ok(BenchReport {
        images: n_images,
        height: size,
        width: size,
        threads,
        seconds,
        images_per_minute: n_images as f64 / seconds * 60.0,
        stages,
    })
}

pub fn write_bench_csv<W: Write>(out: W, reports: &[BenchReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let stage_names: Vec<String> = StageTimes::default().stages().iter().map(|(n, _)| format!("{n}_s")).collect();
    let mut header: Vec<String> =
        ["images", "height", "width", "threads", "seconds", "images_per_minute"].iter().map(|s| s.to_string()).collect();
    header.extend(stage_names);
    w.write_record(&header)?;
    for r in reports {
        let mut rec = vec![
            r.images.to_string(),
            r.height.to_string(),
            r.width.to_string(),
            r.threads.to_string(),
            format!("{:.4}", r.seconds),
            format!("{:.1}", r.images_per_minute),
        ];
        rec.extend(r.stages.stages().iter().map(|(_, s)| format!("{s:.4}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<bench output>", e))
}
