//! Command-line front end: dataset generation, augmentation previews,
//! training, evaluation, ablation grids and the throughput bench.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use robustatr::domain_rand::{augment_batch, Parallelism, RandomizationConfig};
use robustatr::harness::{
    build_benchmark, run_grid, throughput_bench, write_bench_csv, write_metrics, AblationGrid, Benchmark,
    BenchmarkConfig, MetricsReport, ReplicateResult, RowReport, RunOptions,
};
use robustatr::nn::{load_checkpoint, save_checkpoint};
use robustatr::pipeline::{evaluate, train_ensemble, write_predictions_csv, write_training_log, Ensemble, ExperimentConfig};

const EXPERIMENT_FILE: &str = "experiment.json";

#[derive(Parser)]
#[command(name = "robustatr", version, about = "Sim-to-real robustness workbench for SAR target recognition")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// JSON config: a benchmark config for `generate`, an experiment config otherwise.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridKind {
    Ablation,
    Techniques,
}

#[derive(Subcommand)]
enum Command {
    /// Render the train set and the mismatched test set.
    Generate {
        /// Use the two-class 16x16 benchmark instead of the default.
        #[arg(long)]
        micro: bool,
    },
    /// Write randomized images as 8-bit PGM files.
    Augment {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// Skip randomization and write the raw renders.
        #[arg(long)]
        raw: bool,
    },
    /// Train a model (or a bag of models) on a generated dataset.
    Train {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Evaluate trained models on the benchmark's test set.
    Eval {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Directory holding model_*.sarm files.
        #[arg(long, value_name = "DIR")]
        models: PathBuf,
    },
    /// Run an ablation grid and write metrics CSVs.
    Ablate {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "ablation")]
        grid: GridKind,
        #[arg(long, default_value_t = AblationGrid::DEFAULT_REPLICATES)]
        replicates: usize,
        /// Record wall-clock runtimes (metrics are then not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Measure augmentation throughput; CSV on standard output.
    Bench {
        #[arg(long, default_value_t = 10_000)]
        images: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    let dir = cli.out.as_deref().context("--out is required for this command")?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn experiment_config(cli: &Cli, fallback_dir: Option<&Path>) -> Result<ExperimentConfig> {
    let path = match (&cli.config, fallback_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) if d.join(EXPERIMENT_FILE).exists() => d.join(EXPERIMENT_FILE),
        _ => return Ok(ExperimentConfig::default()),
    };
    ExperimentConfig::load(&path).with_context(|| format!("loading experiment config {}", path.display()))
}

fn load_benchmark(dir: &Path) -> Result<Benchmark> {
    Benchmark::read_dir(dir).with_context(|| format!("reading benchmark from {}", dir.display()))
}

fn write_pgm(path: &Path, pixels: &[f32], height: usize, width: usize) -> Result<()> {
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(pixels.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn generate(cli: &Cli, micro: bool) -> Result<()> {
    let config = match &cli.config {
        Some(p) => BenchmarkConfig::load(p).with_context(|| format!("loading benchmark config {}", p.display()))?,
        None if micro => BenchmarkConfig::micro(),
        None => BenchmarkConfig::default(),
    };
    let seed = cli.seed.unwrap_or(config.seed);
    let bench = build_benchmark(&config, seed)?;
    let dir = out_dir(cli)?;
    bench.write_dir(dir)?;
    println!("wrote {} train and {} test records to {}", bench.dataset.train.len(), bench.dataset.test.len(), dir.display());
    Ok(())
}

fn augment(cli: &Cli, data: &Path, split: Split, count: usize, raw: bool) -> Result<()> {
    let bench = load_benchmark(data)?;
    let config = experiment_config(cli, None)?;
    let seed = cli.seed.unwrap_or(config.seed);
    let dir = out_dir(cli)?;
    let (name, images, labels, h, w) = match split {
        Split::Train => {
            let sigs = &bench.dataset.train[..count.min(bench.dataset.train.len())];
            let r = if raw { RandomizationConfig::disabled() } else { config.epoch_randomization() };
            let images = augment_batch(sigs, &r, seed, Parallelism::Ambient)?;
            let labels: Vec<usize> = sigs.iter().map(|s| s.class_label as usize).collect();
            ("train", images, labels, bench.test_images.height, bench.test_images.width)
        }
        Split::Test => {
            let t = &bench.test_images;
            let n = count.min(t.len());
            ("test", t.images[..n].to_vec(), t.labels[..n].to_vec(), t.height, t.width)
        }
    };
    for (i, (img, label)) in images.iter().zip(&labels).enumerate() {
        write_pgm(&dir.join(format!("{name}_{i:05}_c{label}.pgm")), img, h, w)?;
    }
    println!("wrote {} images to {}", images.len(), dir.display());
    Ok(())
}

fn train(cli: &Cli, data: &Path) -> Result<()> {
    let bench = load_benchmark(data)?;
    let mut config = experiment_config(cli, None)?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    config.validate()?;
    let dir = out_dir(cli)?;
    let source = bench.train_source(config.epoch_randomization());
    let ensemble = train_ensemble(&config, &source, config.seed)?;
    for (i, m) in ensemble.members.iter().enumerate() {
        save_checkpoint(&m.model, dir.join(format!("model_{i:02}.sarm")))?;
        write_training_log(dir.join(format!("training_log_{i:02}.csv")), &m.log)?;
    }
    let path = dir.join(EXPERIMENT_FILE);
    fs::write(&path, config.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
    let last: Vec<String> = ensemble
        .members
        .iter()
        .filter_map(|m| m.log.last())
        .map(|l| format!("{:.4}", l.train_accuracy))
        .collect();
    println!("trained {} model(s); final train accuracy {}", ensemble.members.len(), last.join(" "));
    Ok(())
}

fn eval(cli: &Cli, data: &Path, models: &Path) -> Result<()> {
    let bench = load_benchmark(data)?;
    let config = experiment_config(cli, Some(models))?;
    let mut paths: Vec<PathBuf> = fs::read_dir(models)
        .with_context(|| format!("listing {}", models.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "sarm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .sarm checkpoints in {}", models.display());
    }
    let loaded = paths.iter().map(load_checkpoint).collect::<robustatr::Result<Vec<_>>>()?;
    let ensemble = Ensemble::from_models(loaded)?;
    let eval = evaluate(&ensemble, &bench.test_images, config.ttda().as_ref())?;
    let dir = out_dir(cli)?;
    write_predictions_csv(dir.join("predictions.csv"), &bench.test_images.labels, &eval.predicted, &eval.probabilities)?;
    let report = MetricsReport {
        class_names: bench.class_names().to_vec(),
        rows: vec![RowReport {
            name: "eval".into(),
            config,
            replicates: vec![ReplicateResult {
                replicate: 0,
                seed: 0,
                overall: eval.overall,
                per_class: eval.per_class,
                confusion: eval.confusion,
                runtime_s: 0.0,
            }],
            failure: None,
        }],
    };
    write_metrics(&report, dir)?;
    println!("accuracy {:.4} over {} images ({} model(s))", eval.overall, bench.test_images.len(), paths.len());
    Ok(())
}

fn ablate(cli: &Cli, data: &Path, kind: GridKind, replicates: usize, timing: bool) -> Result<()> {
    let bench = load_benchmark(data)?;
    let base = experiment_config(cli, None)?;
    let seed = cli.seed.unwrap_or(base.seed);
    let grid = match kind {
        GridKind::Ablation => AblationGrid::ablation(&base, replicates, seed),
        GridKind::Techniques => AblationGrid::techniques(&base, replicates, seed),
    };
    grid.validate()?;
    let report = run_grid(&grid, &bench, RunOptions { record_runtime: timing, ..RunOptions::default() })?;
    let dir = out_dir(cli)?;
    write_metrics(&report, dir)?;
    for row in &report.rows {
        match &row.failure {
            Some(e) => println!("{:<34} FAILED {e}", row.name),
            None => println!("{:<34} mean {:.4} min {:.4} max {:.4}", row.name, row.mean(), row.min(), row.max()),
        }
    }
    Ok(())
}

fn bench(cli: &Cli, images: usize, size: usize, threads: usize) -> Result<()> {
    let config = match &cli.config {
        Some(_) => experiment_config(cli, None)?.randomization.unwrap_or_default(),
        None => RandomizationConfig::default(),
    };
    let par = if threads == 0 { Parallelism::Ambient } else { Parallelism::Threads(threads) };
    let report = throughput_bench(images, size, &config, par, cli.seed.unwrap_or(0))?;
    write_bench_csv(std::io::stdout().lock(), &[report])?;
    if cli.out.is_some() {
        let path = out_dir(cli)?.join("bench.csv");
        let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_bench_csv(&mut f, &[report])?;
        f.flush()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate { micro } => generate(cli, *micro),
        Command::Augment { data, split, count, raw } => augment(cli, data, *split, *count, *raw),
        Command::Train { data } => train(cli, data),
        Command::Eval { data, models } => eval(cli, data, models),
        Command::Ablate { data, grid, replicates, timing } => ablate(cli, data, *grid, *replicates, *timing),
        Command::Bench { images, size, threads } => bench(cli, *images, *size, *threads),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
