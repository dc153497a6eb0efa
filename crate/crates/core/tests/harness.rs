use std::collections::HashSet;
use std::fs;

use robustatr::domain_rand::{Parallelism, RandomizationConfig};
use robustatr::harness::*;
use robustatr::pipeline::ExperimentConfig;
use robustatr::scene::VariantPolicy;

fn quick_base() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.model = c.model.widened(0.25);
    c.epochs = 2;
    c.batch_size = 8;
    c.bag_size = 2;
    c.ttda_variants = 3;
    c
}

fn micro() -> Benchmark {
    build_benchmark(&BenchmarkConfig::micro(), 5).unwrap()
}

#[test]
fn default_benchmark_shape() {
    let c = BenchmarkConfig::default();
    let g = c.grid().unwrap();
    assert_eq!(c.prototypes.n_classes, 10);
    assert_eq!((c.sensor.image_height, c.sensor.image_width), (32, 32));
    assert_eq!(g.train.azimuths_deg.len(), 36);
    let train: HashSet<u64> = g.train.azimuths_deg.iter().map(|a| a.to_bits()).collect();
    assert!(g.test.azimuths_deg.iter().all(|a| !train.contains(&a.to_bits())));
    assert_eq!((g.train.depressions_deg.as_slice(), g.test.depressions_deg.as_slice()), ([17.0].as_slice(), [15.0].as_slice()));
    let b = build_benchmark(&c, 1).unwrap();
    assert_eq!((b.dataset.train.len(), b.test_images.len()), (360, 360));
    assert!(b.test_images.images.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn zero_perturbation_same_grid_matches_train() {
    let mut c = BenchmarkConfig::micro();
    c.variant_policy = VariantPolicy::none();
    c.test_azimuth_offset_deg = 0.0;
    c.test_depressions_deg = c.train_depressions_deg.clone();
    c.test_conditions = RandomizationConfig::disabled();
    let b = build_benchmark(&c, 3).unwrap();
    assert_eq!(b.dataset.train, b.dataset.test);
}

#[test]
fn benchmark_roundtrips_through_disk() {
    let b = micro();
    let dir = tempfile::tempdir().unwrap();
    b.write_dir(dir.path()).unwrap();
    let back = Benchmark::read_dir(dir.path()).unwrap();
    assert_eq!(back.config, b.config);
    assert_eq!(back.test_images, b.test_images);
    assert_eq!(back.dataset.train, b.dataset.train);
    let again = build_benchmark(&BenchmarkConfig::micro(), 5).unwrap();
    assert_eq!(again.test_images, b.test_images);
}

#[test]
fn benchmark_config_json_roundtrip_and_version() {
    let c = BenchmarkConfig::micro();
    assert_eq!(BenchmarkConfig::from_json(&c.to_json()).unwrap(), c);
    let bumped = c.to_json().replacen("\"version\": 1", "\"version\": 2", 1);
    assert!(BenchmarkConfig::from_json(&bumped).is_err());
}

#[test]
fn every_ablation_row_is_valid() {
    let g = AblationGrid::ablation(&ExperimentConfig::default(), AblationGrid::DEFAULT_REPLICATES, 0);
    g.validate().unwrap();
    assert_eq!(g.rows.len(), 9);
    assert_eq!(g.replicates, 5);
}

#[test]
fn duplicate_row_names_rejected() {
    let row = GridRow { name: "a".into(), config: quick_base() };
    let g = AblationGrid::new(vec![row.clone(), row], 1, 0);
    assert!(g.validate().is_err());
    assert!(run_grid(&g, &micro(), RunOptions::default()).is_err());
}

#[test]
fn identical_rows_give_identical_metrics_and_failures_are_contained() {
    let bench = micro();
    let base = ExperimentConfig { bag_size: 1, ttda_variants: 0, ..quick_base() };
    let broken = ExperimentConfig { batch_size: 0, ..base.clone() };
    let grid = AblationGrid::new(
        vec![
            GridRow { name: "a".into(), config: base.clone() },
            GridRow { name: "broken".into(), config: broken },
            GridRow { name: "b".into(), config: base },
        ],
        2,
        4,
    );
    let report = run_grid(&grid, &bench, RunOptions::default()).unwrap();
    let (a, broken, b) = (&report.rows[0], &report.rows[1], &report.rows[2]);
    assert_eq!(a.replicates, b.replicates);
    assert!(broken.failure.is_some() && broken.replicates.is_empty());
    for r in [a, b] {
        assert_eq!(r.replicates.len(), 2);
        assert!(r.min() <= r.mean() && r.mean() <= r.max());
        assert!(r.replicates.iter().all(|x| x.runtime_s == 0.0));
    }

    let dir = tempfile::tempdir().unwrap();
    write_metrics(&report, dir.path()).unwrap();
    let summary = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    assert!(summary.lines().nth(2).unwrap().starts_with("broken,failed: "));
    assert!(!dir.path().join("confusion_broken.csv").exists());
}

#[test]
fn metrics_files_are_reproducible_serial_and_parallel() {
    let bench = micro();
    let grid = AblationGrid::ablation(&quick_base(), 1, 21);
    let mut outputs = Vec::new();
    for par in [Parallelism::Threads(1), Parallelism::Threads(4), Parallelism::Threads(1)] {
        let report = run_grid(&grid, &bench, RunOptions { parallelism: par, record_runtime: false }).unwrap();
        assert!(report.rows.iter().all(|r| r.failure.is_none()));
        let dir = tempfile::tempdir().unwrap();
        write_metrics(&report, dir.path()).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert_eq!(outputs[0].len(), 2 + 9);
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn metrics_csv_header_and_roundtrip() {
    let bench = micro();
    let base = ExperimentConfig { bag_size: 1, ttda_variants: 0, ..quick_base() };
    let grid = AblationGrid::new(vec![GridRow { name: "only".into(), config: base }], 3, 8);
    let report = run_grid(&grid, &bench, RunOptions { record_runtime: true, ..RunOptions::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_metrics(&report, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(text.lines().next().unwrap(), "row_name,replicate,overall_acc,runtime_s,acc_class_00,acc_class_01");
    let rows = read_metrics_csv(&text).unwrap();
    assert_eq!(rows.len(), 3);
    let q = |v: f64| format!("{v:.4}").parse::<f64>().unwrap();
    for (parsed, orig) in rows.iter().zip(&report.rows[0].replicates) {
        assert_eq!(parsed.row_name, "only");
        assert_eq!(parsed.replicate, orig.replicate);
        assert_eq!(parsed.overall_acc, q(orig.overall));
        assert_eq!(parsed.runtime_s, q(orig.runtime_s));
        assert_eq!(parsed.per_class, orig.per_class.iter().map(|&v| q(v)).collect::<Vec<_>>());
    }
    assert!(report.rows[0].replicates.iter().all(|r| r.runtime_s > 0.0));
}

#[test]
fn metrics_parser_rejects_malformed() {
    assert!(read_metrics_csv("a,b\n").is_err());
    assert!(read_metrics_csv("row_name,replicate,overall_acc,runtime_s,acc_x\nr,0,0.5,0.0\n").is_err());
    assert!(read_metrics_csv("row_name,replicate,overall_acc,runtime_s,acc_x\nr,zero,0.5,0.0,1\n").is_err());
    assert!(read_metrics_csv("row_name,replicate,overall_acc,runtime_s,other\n").is_err());
    assert_eq!(read_metrics_csv("row_name,replicate,overall_acc,runtime_s\n").unwrap(), vec![]);
}

#[test]
fn throughput_bench_reports_every_stage() {
    let r = throughput_bench(40, 64, &RandomizationConfig::default(), Parallelism::Threads(1), 3).unwrap();
    assert_eq!((r.images, r.height, r.threads), (40, 64, 1));
    assert!(r.images_per_minute > 0.0);
    let mut out = Vec::new();
    write_bench_csv(&mut out, &[r]).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("images,height,width,threads,seconds,images_per_minute,sample_s,"));
}
