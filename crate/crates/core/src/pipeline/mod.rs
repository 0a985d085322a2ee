//! End-to-end runs: stages hand off through files in an output directory,
//! and a manifest records content hashes so unchanged stages are reused.
//!
//! Stages, in order: `ingest`, `global_lda`, `relevancy`, `ensemble`,
//! `geometry`, `dendrogram` (with link probabilities), `metrics`, `embed`.

mod config;
mod link;
mod report;
mod run;

pub use config::{
    ChunkingConfig, EmbedSection, EnsembleConfig, GeometryConfig, GlobalConfig, InputConfig, MetricsConfig,
    PipelineConfig, PreprocessSection,
};
pub use link::{link_batch, load_hrg};
pub use report::{render, report};
pub use run::{
    run, run_until, Artifact, CoherenceSummary, CorpusArtifact, EnsembleArtifact, KnnArtifact, LeafInfo, MetaTopicInfo,
    MetaTopicSummary, MetaTopicsArtifact, MetricsReport, NullSummary, RunManifest, Stage, StageRecord, StageStatus,
    AUTHOR_TOPICS_FILE, CORPUS_FILE, DENDROGRAM_FILE, DISTANCES_FILE, EMBEDDING_CSV, EMBEDDING_SVG, ENSEMBLE_FILE,
    FILTERED_CORPUS_FILE, KNN_FILE, MANIFEST_FILE, META_TOPICS_FILE, METRICS_FILE, NEWICK_FILE,
};
