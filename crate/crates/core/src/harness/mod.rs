//! End-to-end experiment driver: the mismatch benchmark, ablation grids,
//! metrics files and the augmentation throughput bench.

mod bench;
mod benchmark;
mod grid;
mod metrics;

pub use bench::{throughput_bench, write_bench_csv, BenchReport};
pub use benchmark::{build_benchmark, measured_test_images, Benchmark, BenchmarkConfig, BENCHMARK_CONFIG_VERSION, BENCHMARK_FILE};
pub use grid::{run_grid, AblationGrid, GridRow, MetricsReport, ReplicateResult, RowReport, RunOptions};
pub use metrics::{read_metrics_csv, write_metrics, MetricsRow, METRICS_FILE, SUMMARY_FILE};
