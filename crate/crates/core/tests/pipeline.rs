use std::fs;
use std::path::Path;

use mstml::lda::{KRule, SamplerConfig};
use mstml::pipeline::{
    link_batch, load_hrg, report, run, run_until, MetaTopicsArtifact, MetricsReport, PipelineConfig, RunManifest,
    Stage, StageStatus,
};
use mstml::synth::{drifting_corpus, write_jsonl, DriftConfig};
use mstml::{Error, Exec};
use tempfile::TempDir;

fn small_config(dir: &Path) -> PipelineConfig {
    let drift = DriftConfig {
        chunks: 4,
        docs_per_chunk: 60,
        ..DriftConfig::desk_scale()
    };
    let input = dir.join("corpus.jsonl");
    write_jsonl(&drifting_corpus(&drift, 3), &input).unwrap();
    let fast = SamplerConfig {
        iters: 120,
        burn_in: 40,
        sample_lag: 10,
        ..SamplerConfig::default()
    };
    let mut cfg = PipelineConfig::default();
    cfg.input.path = input;
    cfg.out = dir.join("run");
    cfg.chunking.length = "1m".parse().unwrap();
    cfg.global.k = 6;
    cfg.global.sampler = fast.clone();
    cfg.ensemble.sampler = fast;
    cfg.ensemble.k_rule = KRule::constant(4);
    cfg.geometry.knn_k = 4;
    cfg.metrics.null_trials = 5;
    cfg.metrics.tno_windows = vec![1, 3];
    cfg.metrics.etsg_taus = vec![6.0, 36.0];
    cfg
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn full_run_records_every_stage_and_caches() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let first = run(&cfg, Exec::Parallel).unwrap();
    assert_eq!(first.stages.len(), 8);
    for (record, stage) in first.stages.iter().zip(Stage::ALL) {
        assert_eq!(record.name, stage);
        assert_eq!(record.status, StageStatus::Computed);
        assert_eq!(record.seed, stage.seed(cfg.seed));
        assert!(!record.artifacts.is_empty());
    }
    let metrics_before = fs::read(cfg.out.join("metrics.json")).unwrap();
    let embedding_before = fs::read(cfg.out.join("embedding.csv")).unwrap();

    let second = run(&cfg, Exec::Parallel).unwrap();
    assert!(second.stages.iter().all(|s| s.status == StageStatus::Cached));
    assert_eq!(fs::read(cfg.out.join("metrics.json")).unwrap(), metrics_before);
    assert_eq!(fs::read(cfg.out.join("embedding.csv")).unwrap(), embedding_before);

    // A downstream-only change recomputes only the tail.
    let mut tweaked = cfg.clone();
    tweaked.metrics.null_trials = 6;
    let third = run(&tweaked, Exec::Parallel).unwrap();
    for record in &third.stages {
        let expect = if record.name == Stage::Metrics {
            StageStatus::Computed
        } else {
            StageStatus::Cached
        };
        assert_eq!(record.status, expect, "stage {}", record.name);
    }
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path());
    run(&cfg, Exec::Parallel).unwrap();
    let par = fs::read(cfg.out.join("metrics.json")).unwrap();
    let par_emb = fs::read(cfg.out.join("embedding.csv")).unwrap();
    cfg.out = tmp.path().join("seq");
    run(&cfg, Exec::Sequential).unwrap();
    assert_eq!(fs::read(cfg.out.join("metrics.json")).unwrap(), par);
    assert_eq!(fs::read(cfg.out.join("embedding.csv")).unwrap(), par_emb);
}

#[test]
fn cut_height_one_gives_single_meta_topic() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg.geometry.cut_height = 1.0;
    let manifest = run_until(&cfg, Stage::Dendrogram, Exec::Parallel).unwrap();
    assert_eq!(manifest.meta_topics.unwrap().count, 1);
    let meta: MetaTopicsArtifact = read(&cfg.out.join("meta_topics.json"));
    assert_eq!(meta.num_clusters, 1);
    assert!(meta.labels.iter().all(|&l| l == 0));
}

#[test]
fn report_has_a_row_per_window_and_decay() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    run_until(&cfg, Stage::Metrics, Exec::Parallel).unwrap();
    let metrics: MetricsReport = read(&cfg.out.join("metrics.json"));
    assert_eq!(metrics.tno.len(), 2);
    assert_eq!(metrics.etsg.len(), 2);
    let text = report(&cfg.out).unwrap();
    for row in ["| 1 |", "| 3 |", "| 6 |", "| 36 |", "| UCI |", "| NPMI |", "| CV |"] {
        assert!(text.contains(row), "missing {row} in\n{text}");
    }
    assert!(text.contains("### Meta topic 0"));
}

#[test]
fn empty_decay_grid_is_noted() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg.metrics.etsg_taus.clear();
    run_until(&cfg, Stage::Metrics, Exec::Parallel).unwrap();
    let text = report(&cfg.out).unwrap();
    assert!(text.contains("section omitted"));
}

#[test]
fn missing_artifacts_are_rebuilt_or_reported() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    run_until(&cfg, Stage::Geometry, Exec::Parallel).unwrap();
    fs::remove_file(cfg.out.join("distances.csv")).unwrap();
    let err = run_until(&cfg, Stage::Dendrogram, Exec::Parallel);
    // The geometry stage sees its artifact is gone and recomputes it.
    assert!(err.is_ok());
    let manifest = RunManifest::load(&cfg.out).unwrap();
    assert_eq!(manifest.stage(Stage::Geometry).unwrap().status, StageStatus::Computed);

    fs::remove_file(cfg.out.join("distances.csv")).unwrap();
    fs::remove_file(cfg.out.join("metrics.json")).ok();
    let e = report(&cfg.out).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("rerun stage"), "{e}");
}

#[test]
fn link_queries_score_known_authors() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    run_until(&cfg, Stage::Dendrogram, Exec::Parallel).unwrap();
    let model = load_hrg(&cfg.out).unwrap();
    let (a, b) = (model.authors[0].author.clone(), model.authors[1].author.clone());
    let p = model.link(&a, &b).unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(model.link(&b, &a).unwrap(), p);
    let out = link_batch(&model, &format!("author_u,author_v\n{a},{b}\n\n")).unwrap();
    assert_eq!(out, format!("author_u,author_v,probability\n{a},{b},{p}\n"));
    assert!(matches!(
        model.link(&a, "nobody at all"),
        Err(Error::InvalidInput(_)) | Err(Error::Data(_))
    ));
    assert!(model.link(&a, &a).is_err());
}
