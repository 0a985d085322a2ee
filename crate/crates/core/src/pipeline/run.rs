use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{hex_digest, PipelineConfig};
use crate::corpus::{
    build_coauthor_graph, chunk_by_time_with_margin, ingest, load_stopwords, parse_stopwords, preprocess, Chunk,
    ChunkLength, ChunkedCorpus, PreprocessConfig, TokenizedDoc, Vocabulary, ENGLISH_STOPWORDS,
};
use crate::embed::{diffuse_embed, export_embedding, EmbedConfig, PointMeta};
use crate::error::{Error, Result};
use crate::geometry::{knn_graph, normalize_heights, pairwise_hellinger, ward_agglomerate, DistanceMatrix, KnnGraph};
use crate::hrg::{
    apply_probabilities, author_topic_distributions, ensemble_doc_topics, node_statistics, AuthorTopicDist,
    DendrogramExport,
};
use crate::lda::{read_model, train_ensemble, train_global_lda, write_model, Ensemble, LdaModel, ModelScope};
use crate::metrics::{coherence, etsg, etsg_shuffled_null, ncomp, tno, tno_shuffled_null, CoherenceMeasure};
use crate::par::Exec;
use crate::relevancy::{empirical_marginals, filter_vocabulary, term_relevancy, top_terms_text};

pub const MANIFEST_FILE: &str = "run_manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    GlobalLda,
    Relevancy,
    Ensemble,
    Geometry,
    Dendrogram,
    Metrics,
    Embed,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::GlobalLda,
        Stage::Relevancy,
        Stage::Ensemble,
        Stage::Geometry,
        Stage::Dendrogram,
        Stage::Metrics,
        Stage::Embed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::GlobalLda => "global_lda",
            Stage::Relevancy => "relevancy",
            Stage::Ensemble => "ensemble",
            Stage::Geometry => "geometry",
            Stage::Dendrogram => "dendrogram",
            Stage::Metrics => "metrics",
            Stage::Embed => "embed",
        }
    }

    fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::GlobalLda => &[Stage::Ingest],
            Stage::Relevancy => &[Stage::Ingest, Stage::GlobalLda],
            Stage::Ensemble => &[Stage::Relevancy],
            Stage::Geometry => &[Stage::Ensemble],
            Stage::Dendrogram => &[Stage::Relevancy, Stage::Ensemble],
            Stage::Metrics => &[Stage::Relevancy, Stage::Ensemble, Stage::Geometry],
            Stage::Embed => &[Stage::Ensemble, Stage::Geometry, Stage::Dendrogram],
        }
    }

    /// Per-stage seed: the first 8 bytes of `sha256(name || seed_le)`.
    pub fn seed(self, global: u64) -> u64 {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.name().as_bytes());
        h.update(global.to_le_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Computed,
    Cached,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: Stage,
    pub seed: u64,
    pub input_hash: String,
    pub status: StageStatus,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTopicSummary {
    pub cut_height: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub meta_topics: Option<MetaTopicSummary>,
}

impl RunManifest {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.name == stage)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        read_artifact(dir, MANIFEST_FILE, Stage::Ingest)
    }
}

/// Tokenized corpus with its vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusArtifact {
    pub vocabulary: Vocabulary,
    pub docs: Vec<TokenizedDoc>,
    pub skipped_records: usize,
    pub dropped_docs: usize,
}

/// Chunk layout and model files of the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleArtifact {
    pub chunk_length: ChunkLength,
    pub margin: ChunkLength,
    pub chunks: Vec<Chunk>,
    pub base_chunk: Vec<usize>,
    pub skipped_chunks: Vec<usize>,
    pub models: Vec<String>,
    pub leaves: Vec<LeafInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafInfo {
    pub leaf: usize,
    pub chunk: usize,
    pub topic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnArtifact {
    pub k: usize,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTopicsArtifact {
    pub cut_height: f64,
    pub num_clusters: usize,
    pub labels: Vec<usize>,
    pub topics: Vec<MetaTopicInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTopicInfo {
    pub id: usize,
    pub leaves: Vec<usize>,
    pub chunks: Vec<usize>,
    pub top_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
}

impl NullSummary {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        NullSummary {
            trials: values.len(),
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSummary {
    pub window: usize,
    pub mean: f64,
    pub per_topic: Vec<f64>,
    pub absent_terms: usize,
}

/// Contents of `metrics.json`. Grid keys are the configured values as text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_topics: usize,
    pub knn_k: usize,
    pub ncomp: usize,
    pub tno: BTreeMap<String, f64>,
    #[serde(default)]
    pub tno_null: BTreeMap<String, NullSummary>,
    pub etsg_eps: f64,
    pub etsg: BTreeMap<String, f64>,
    #[serde(default)]
    pub etsg_null: BTreeMap<String, NullSummary>,
    pub coherence: BTreeMap<String, CoherenceSummary>,
}

pub const CORPUS_FILE: &str = "corpus.json";
pub const FILTERED_CORPUS_FILE: &str = "filtered_corpus.json";
pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const DISTANCES_FILE: &str = "distances.csv";
pub const KNN_FILE: &str = "knn_graph.json";
pub const DENDROGRAM_FILE: &str = "dendrogram.json";
pub const NEWICK_FILE: &str = "dendrogram.nwk";
pub const META_TOPICS_FILE: &str = "meta_topics.json";
pub const AUTHOR_TOPICS_FILE: &str = "author_topics.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const EMBEDDING_CSV: &str = "embedding.csv";
pub const EMBEDDING_SVG: &str = "embedding.svg";

/// Runs every stage.
pub fn run(cfg: &PipelineConfig, exec: Exec) -> Result<RunManifest> {
    run_until(cfg, Stage::Embed, exec)
}

/// Runs stages up to and including `last`, reusing any stage whose inputs
/// and artifacts match the previous manifest in the output directory.
pub fn run_until(cfg: &PipelineConfig, last: Stage, exec: Exec) -> Result<RunManifest> {
    cfg.validate()?;
    let out = cfg.out.clone();
    std::fs::create_dir_all(out.join("models")).map_err(|e| Error::io(&out, e))?;
    let previous = std::fs::read(out.join(MANIFEST_FILE))
        .ok()
        .and_then(|b| serde_json::from_slice::<RunManifest>(&b).ok());

    let mut manifest = RunManifest {
        version: MANIFEST_VERSION,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        stages: Vec::new(),
        meta_topics: None,
    };
    for stage in Stage::ALL.into_iter().filter(|s| *s <= last) {
        let ctx = StageContext {
            cfg,
            out: &out,
            exec,
            seed: stage.seed(cfg.seed),
        };
        let input_hash = stage_input_hash(stage, &ctx, &manifest).map_err(|e| e.in_stage(stage.name()))?;
        let reusable = previous
            .as_ref()
            .and_then(|p| p.stage(stage))
            .filter(|r| r.input_hash == input_hash && artifacts_intact(&out, &r.artifacts));
        let record = match reusable {
            Some(r) => {
                info!("stage {stage}: cached");
                StageRecord {
                    status: StageStatus::Cached,
                    ..r.clone()
                }
            }
            None => {
                info!("stage {stage}: computing");
                let paths = run_stage(stage, &ctx).map_err(|e| e.in_stage(stage.name()))?;
                let artifacts = paths
                    .into_iter()
                    .map(|path| {
                        let bytes = std::fs::read(out.join(&path)).map_err(|e| Error::io(out.join(&path), e))?;
                        Ok(Artifact {
                            sha256: hex_digest(&bytes),
                            path,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                StageRecord {
                    name: stage,
                    seed: ctx.seed,
                    input_hash,
                    status: StageStatus::Computed,
                    artifacts,
                }
            }
        };
        manifest.stages.push(record);
        if stage == Stage::Dendrogram {
            let meta: MetaTopicsArtifact = read_artifact(&out, META_TOPICS_FILE, Stage::Dendrogram)?;
            manifest.meta_topics = Some(MetaTopicSummary {
                cut_height: meta.cut_height,
                count: meta.num_clusters,
            });
        }
        write_json(&out, MANIFEST_FILE, &manifest)?;
    }
    std::fs::write(out.join("config.toml"), cfg.to_toml()).map_err(|e| Error::io(out.join("config.toml"), e))?;
    Ok(manifest)
}

struct StageContext<'a> {
    cfg: &'a PipelineConfig,
    out: &'a Path,
    exec: Exec,
    seed: u64,
}

fn artifacts_intact(out: &Path, artifacts: &[Artifact]) -> bool {
    artifacts.iter().all(|a| {
        std::fs::read(out.join(&a.path))
            .map(|b| hex_digest(&b) == a.sha256)
            .unwrap_or(false)
    })
}

fn stage_input_hash(stage: Stage, ctx: &StageContext<'_>, manifest: &RunManifest) -> Result<String> {
    let cfg = ctx.cfg;
    let section = match stage {
        Stage::Ingest => {
            let input = std::fs::read(&cfg.input.path).map_err(|e| Error::io(&cfg.input.path, e))?;
            let stop = match &cfg.preprocess.stopwords_file {
                Some(p) => hex_digest(&std::fs::read(p).map_err(|e| Error::io(p, e))?),
                None => String::new(),
            };
            serde_json::json!({
                "input": hex_digest(&input),
                "schema": cfg.input.schema,
                "preprocess": cfg.preprocess,
                "stopwords": stop,
            })
        }
        Stage::GlobalLda => serde_json::json!({ "k": cfg.global.k, "sampler": cfg.global.sampler }),
        Stage::Relevancy => serde_json::json!({
            "lambda": cfg.global.lambda,
            "keep_per_topic": cfg.global.keep_per_topic,
        }),
        Stage::Ensemble => serde_json::json!({ "chunking": cfg.chunking, "ensemble": cfg.ensemble }),
        Stage::Geometry => serde_json::json!({ "knn_k": cfg.geometry.knn_k }),
        Stage::Dendrogram => serde_json::json!({
            "cut_height": cfg.geometry.cut_height,
            "top_terms": cfg.geometry.top_terms,
            "hrg": cfg.hrg,
        }),
        Stage::Metrics => serde_json::json!({ "metrics": cfg.metrics, "knn_k": cfg.geometry.knn_k }),
        Stage::Embed => serde_json::json!({ "embed": cfg.embed }),
    };
    let mut upstream = Vec::new();
    for dep in stage.upstream() {
        let rec = manifest
            .stage(*dep)
            .ok_or_else(|| Error::Internal(format!("stage {stage} ran before {dep}")))?;
        upstream.push(&rec.artifacts);
    }
    let payload = serde_json::json!({
        "stage": stage.name(),
        "seed": ctx.seed,
        "config": section,
        "upstream": upstream,
    });
    Ok(hex_digest(payload.to_string().as_bytes()))
}

fn run_stage(stage: Stage, ctx: &StageContext<'_>) -> Result<Vec<String>> {
    match stage {
        Stage::Ingest => stage_ingest(ctx),
        Stage::GlobalLda => stage_global_lda(ctx),
        Stage::Relevancy => stage_relevancy(ctx),
        Stage::Ensemble => stage_ensemble(ctx),
        Stage::Geometry => stage_geometry(ctx),
        Stage::Dendrogram => stage_dendrogram(ctx),
        Stage::Metrics => stage_metrics(ctx),
        Stage::Embed => stage_embed(ctx),
    }
}

fn stage_ingest(ctx: &StageContext<'_>) -> Result<Vec<String>> {
    let cfg = ctx.cfg;
    let report = ingest(&cfg.input.path, &cfg.input.schema)?;
    if report.documents.is_empty() {
        return Err(Error::Data(format!(
            "no usable records in {}",
            cfg.input.path.display()
        )));
    }
    info!(
        "ingested {} documents, skipped {}",
        report.documents.len(),
        report.skipped
    );
    let mut stopwords = if cfg.preprocess.builtin_stopwords {
        parse_stopwords(ENGLISH_STOPWORDS)
    } else {
        Default::default()
    };
    if let Some(p) = &cfg.preprocess.stopwords_file {
        stopwords.extend(load_stopwords(p)?);
    }
    let pcfg = PreprocessConfig {
        stopwords,
        min_count: cfg.preprocess.min_count,
    };
    let (vocabulary, docs, pre) = preprocess(&report.documents, &pcfg, ctx.exec)?;
    info!("vocabulary of {} terms over {} documents", vocabulary.len(), docs.len());
    write_json(
        ctx.out,
        CORPUS_FILE,
        &CorpusArtifact {
            vocabulary,
            docs,
            skipped_records: report.skipped,
            dropped_docs: pre.empty_docs,
        },
    )?;
    Ok(vec![CORPUS_FILE.into()])
}

fn global_model_path(cfg: &PipelineConfig) -> String {
    format!("models/global.{}", cfg.ensemble.model_format.extension())
}

fn stage_global_lda(ctx: &StageContext<'_>) -> Result<Vec<String>> {
    let corpus: CorpusArtifact = read_artifact(ctx.out, CORPUS_FILE, Stage::Ingest)?;
    let g = &ctx.cfg.global;
    let model = train_global_lda(&corpus.docs, corpus.vocabulary.len(), g.k, &g.sampler, ctx.seed)?;
    let path = global_model_path(ctx.cfg);
    write_model(&model, &ctx.out.join(&path), ctx.cfg.ensemble.model_format)?;
    let lists: Vec<Vec<u32>> = (0..model.k)
        .map(|k| model.top_terms(k, ctx.cfg.geometry.top_terms))
        .collect();
    write_text(
        ctx.out,
        "global_top_terms.txt",
        &top_terms_text(&lists, &corpus.vocabulary),
    )?;
    Ok(vec![path, "global_top_terms.txt".into()])
}

fn stage_relevancy(ctx: &StageContext<'_>) -> Result<Vec<String>> {
    let corpus: CorpusArtifact = read_artifact(ctx.out, CORPUS_FILE, Stage::Ingest)?;
    let model = read_model_artifact(ctx.out, &global_model_path(ctx.cfg), Stage::GlobalLda)?;
    let v = corpus.vocabulary.len();
    let marginals = empirical_marginals(&corpus.docs, v);
    let table = term_relevancy(&model, &marginals, ctx.cfg.global.lambda)?;
    let filtered = filter_vocabulary(&table, &corpus.vocabulary, ctx.cfg.global.keep_per_topic)?;
    let (docs, dropped) = filtered.retokenize(&corpus.docs, v);
    if docs.is_empty() {
        return Err(Error::Data("relevancy filtering left no documents".into()));
    }
    info!(
        "relevancy filter kept {} of {} terms; {} documents dropped",
        filtered.vocab.len(),
        v,
        dropped
    );
    write_text(ctx.out, "relevancy.csv", &table.to_csv(&corpus.vocabulary))?;
    write_json(
        ctx.out,
        FILTERED_CORPUS_FILE,
        &CorpusArtifact {
            vocabulary: filtered.vocab,
            docs,
            skipped_records: corpus.skipped_records,
            dropped_docs: corpus.dropped_docs + dropped,
        },
    )?;
    Ok(vec!["relevancy.csv".into(), FILTERED_CORPUS_FILE.into()])
}

fn stage_ensemble(ctx: &StageContext<'_>) -> Result<Vec<String>> {
    let corpus: CorpusArtifact = read_artifact(ctx.out, FILTERED_CORPUS_FILE, Stage::Relevancy)?;
    let c = &ctx.cfg.chunking;
    let chunked = chunk_by_time_with_margin(corpus.docs, c.length, c.margin)?;
    info!("{} chunks, sizes {:?}", chunked.num_chunks(), chunked.sizes());
    let e = &ctx.cfg.ensemble;
    let ensemble = train_ensemble(
        &chunked,
        corpus.vocabulary.len(),
        &e.k_rule,
        &e.sampler,
        ctx.seed,
        ctx.exec,
    )?;
    let mut paths = Vec::new();
    for m in &ensemble.models {
        let ModelScope::Chunk(t) = m.scope else {
            return Err(Error::Internal("ensemble holds a global model".into()));
        };
        let path = format!("models/chunk_{t:03}.{}", e.model_format.extension());
        write_model(m, &ctx.out.join(&path), e.model_format)?;
        paths.push(path);
    }
    let artifact = EnsembleArtifact {
        chunk_length: chunked.chunk_length,
        margin: chunked.margin,
        chunks: chunked.chunks,
        base_chunk: chunked.base_chunk,
        skipped_chunks: ensemble.skipped_chunks.clone(),
        models: paths.clone(),
        leaves: ensemble
            .topics
            .iter()
            .map(|t| LeafInfo {
                leaf: t.leaf,
                chunk: t.chunk,
                topic: t.topic,
            })
            .collect(),
    };
    write_json(ctx.out, ENSEMBLE_FILE, &artifact)?;
    paths.push(ENSEMBLE_FILE.into());
    Ok(paths)
}

fn load_ensemble(out: &Path) -> Result<(EnsembleArtifact, Ensemble)> {
    let art: EnsembleArtifact = read_artifact(out, ENSEMBLE_FILE, Stage::Ensemble)?;
    let models = art
        .models
        .iter()
        .map(|p| read_model_artifact(out, p, Stage::Ensemble))
        .collect::<Result<Vec<LdaModel>>>()?;
    let ensemble = Ensemble::from_models(models, art.skipped_chunks.clone());
    Ok((art, ensemble))
}

fn load_chunked(out: &Path, art: &EnsembleArtifact) -> Result<(Vocabulary, ChunkedCorpus)> {
    let corpus: CorpusArtifact = read_artifact(out, FILTERED_CORPUS_FILE, Stage::Relevancy)?;
    let chunked = ChunkedCorpus {
        docs: corpus.docs,
        chunks: art.chunks.clone(),
        chunk_length: art.chunk_length,
        margin: art.margin,
        base_chunk: art.base_chunk.clone(),
    };
    Ok((corpus.vocabulary, chunked))
}

fn stage_geometry(ctx: &StageContext<'_>) -> Result<Vec<String>> {
    let (_, ensemble) = load_ensemble(ctx.out)?;
    let n = ensemble.num_leaves();
    let k = ctx.cfg.geometry.knn_k;
    if k >= n {
        return Err(Error::Config(format!(
            "geometry.knn_k = {k} must be below the {n} ensemble topics"
        )));
    }
    let d = pairwise_hellinger(&ensemble.topics, ctx.exec)?;
    let graph = knn_graph(&d, k, ctx.exec)?;
    write_text(ctx.out, DISTANCES_FILE, &d.to_csv())?;
    write_json(
        ctx.out,
        KNN_FILE,
        &KnnArtifact {
            k,
            edges: graph.edges(),
        },
    )?;
    Ok(vec![DISTANCES_FILE.into(), KNN_FILE.into()])
}

fn load_distances(out: &Path) -> Result<DistanceMatrix> {
    let text = read_text(out, DISTANCES_FILE, Stage::Geometry)?;
    DistanceMatrix::from_csv(&text)
}

fn stage_dendrogram(ctx: &StageContext<'_>) -> Result<Vec<String>> {
    let (art, ensemble) = load_ensemble(ctx.out)?;
    let (vocab, chunked) = load_chunked(ctx.out, &art)?;
    let mut dendro = ward_agglomerate(&ensemble.topics)?;
    normalize_heights(&mut dendro);

    let psis = author_topic_distributions(ensemble_doc_topics(&ensemble, &chunked), ensemble.num_leaves())?;
    let graph = build_coauthor_graph(&chunked.docs, None);
    info!(
        "co-author graph: {} authors, {} edges",
        graph.num_vertices(),
        graph.num_edges()
    );
    let stats = node_statistics(&dendro, &psis, &graph, &ctx.cfg.hrg, ctx.exec)?;
    apply_probabilities(&mut dendro, &stats);

    let h = ctx.cfg.geometry.cut_height;
    let cut = dendro.cut(h);
    let topics = (0..cut.num_clusters)
        .map(|c| {
            let leaves = cut.members(c);
            let mut chunks: Vec<usize> = leaves.iter().map(|&l| ensemble.topics[l].chunk).collect();
            chunks.dedup();
            let v = vocab.len();
            let mut mean = vec![0.0; v];
            for &l in &leaves {
                mean.iter_mut()
                    .zip(&ensemble.topics[l].weights)
                    .for_each(|(m, w)| *m += w);
            }
            let mut ids: Vec<u32> = (0..v as u32).collect();
            ids.sort_by(|&a, &b| mean[b as usize].total_cmp(&mean[a as usize]).then(a.cmp(&b)));
            ids.truncate(ctx.cfg.geometry.top_terms);
            MetaTopicInfo {
                id: c,
                leaves,
                chunks,
                top_terms: ids.iter().map(|&w| vocab.term(w).to_string()).collect(),
            }
        })
        .collect();
    info!("cut at {h}: {} meta topics", cut.num_clusters);

    write_json(ctx.out, DENDROGRAM_FILE, &DendrogramExport::new(&dendro, Some(&stats)))?;
    write_text(ctx.out, NEWICK_FILE, &format!("{}\n", dendro.to_newick()))?;
    write_json(ctx.out, AUTHOR_TOPICS_FILE, &psis)?;
    write_json(
        ctx.out,
        META_TOPICS_FILE,
        &MetaTopicsArtifact {
            cut_height: h,
            num_clusters: cut.num_clusters,
            labels: cut.labels,
            topics,
        },
    )?;
    Ok(vec![
        DENDROGRAM_FILE.into(),
        NEWICK_FILE.into(),
        AUTHOR_TOPICS_FILE.into(),
        META_TOPICS_FILE.into(),
    ])
}

fn stage_metrics(ctx: &StageContext<'_>) -> Result<Vec<String>> {
    let m = &ctx.cfg.metrics;
    let (art, ensemble) = load_ensemble(ctx.out)?;
    let (_, chunked) = load_chunked(ctx.out, &art)?;
    let d = load_distances(ctx.out)?;
    let knn: KnnArtifact = read_artifact(ctx.out, KNN_FILE, Stage::Geometry)?;
    let graph = KnnGraph::from_edges(d.len(), &knn.edges);
    let labels = ensemble.time_labels();

    let mut tno_values = BTreeMap::new();
    let mut tno_null = BTreeMap::new();
    for &w in &m.tno_windows {
        tno_values.insert(w.to_string(), tno(&d, &labels, knn.k, w, ctx.exec)?);
        if m.null_trials > 0 {
            let null = tno_shuffled_null(&d, &labels, knn.k, w, m.null_trials, ctx.seed, ctx.exec)?;
            tno_null.insert(w.to_string(), NullSummary::of(&null));
        }
    }
    let mut etsg_values = BTreeMap::new();
    let mut etsg_null = BTreeMap::new();
    for &tau in &m.etsg_taus {
        etsg_values.insert(tau.to_string(), etsg(&graph, &labels, tau, m.etsg_eps)?);
        if m.null_trials > 0 {
            let null = etsg_shuffled_null(&graph, &labels, tau, m.etsg_eps, m.null_trials, ctx.seed, ctx.exec)?;
            etsg_null.insert(tau.to_string(), NullSummary::of(&null));
        }
    }

    let top: Vec<Vec<u32>> = ensemble
        .models
        .iter()
        .flat_map(|model| (0..model.k).map(|k| model.top_terms(k, m.coherence_top_n)))
        .collect();
    let refs: Vec<&[u32]> = chunked.docs.iter().map(|doc| doc.tokens.as_slice()).collect();
    let mut coh = BTreeMap::new();
    for (measure, window) in [
        (CoherenceMeasure::Uci, m.uci_window),
        (CoherenceMeasure::Npmi, m.npmi_window),
        (CoherenceMeasure::Cv, m.cv_window),
    ] {
        let r = coherence(&top, &refs, measure, window)?;
        coh.insert(
            measure.name().to_string(),
            CoherenceSummary {
                window,
                mean: r.mean,
                per_topic: r.per_topic,
                absent_terms: r.absent_terms.len(),
            },
        );
    }

    let report = MetricsReport {
        n_topics: d.len(),
        knn_k: knn.k,
        ncomp: ncomp(&graph),
        tno: tno_values,
        tno_null,
        etsg_eps: m.etsg_eps,
        etsg: etsg_values,
        etsg_null,
        coherence: coh,
    };
    write_json(ctx.out, METRICS_FILE, &report)?;
    Ok(vec![METRICS_FILE.into()])
}

fn stage_embed(ctx: &StageContext<'_>) -> Result<Vec<String>> {
    let art: EnsembleArtifact = read_artifact(ctx.out, ENSEMBLE_FILE, Stage::Ensemble)?;
    let d = load_distances(ctx.out)?;
    let meta: MetaTopicsArtifact = read_artifact(ctx.out, META_TOPICS_FILE, Stage::Dendrogram)?;
    let psis: Vec<AuthorTopicDist> = read_artifact(ctx.out, AUTHOR_TOPICS_FILE, Stage::Dendrogram)?;
    let params = EmbedConfig {
        seed: ctx.seed,
        ..ctx.cfg.embed.params.clone()
    };
    let result = diffuse_embed(&d, &params, ctx.exec)?;
    let points: Vec<PointMeta> = art
        .leaves
        .iter()
        .map(|l| PointMeta {
            leaf: l.leaf,
            chunk: l.chunk,
            label: meta.labels[l.leaf],
        })
        .collect();
    let author = ctx.cfg.embed.author.as_deref().map(crate::corpus::normalize_author);
    let export = export_embedding(&result, &points, Some(&psis), author.as_deref())?;
    export.write(&ctx.out.join(EMBEDDING_CSV), &ctx.out.join(EMBEDDING_SVG))?;
    Ok(vec![EMBEDDING_CSV.into(), EMBEDDING_SVG.into()])
}

fn missing(dir: &Path, rel: &str, stage: Stage) -> Error {
    Error::Data(format!(
        "missing artifact {}; rerun stage `{stage}`",
        dir.join(rel).display()
    ))
}

pub(crate) fn read_text(dir: &Path, rel: &str, stage: Stage) -> Result<String> {
    let path = dir.join(rel);
    if !path.exists() {
        return Err(missing(dir, rel, stage));
    }
    std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
}

pub(crate) fn read_artifact<T: DeserializeOwned>(dir: &Path, rel: &str, stage: Stage) -> Result<T> {
    let text = read_text(dir, rel, stage)?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", dir.join(rel).display())))
}

fn read_model_artifact(dir: &Path, rel: &str, stage: Stage) -> Result<LdaModel> {
    let path = dir.join(rel);
    if !path.exists() {
        return Err(missing(dir, rel, stage));
    }
    read_model(&path)
}

fn write_json<T: Serialize>(dir: &Path, rel: &str, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    let path: PathBuf = dir.join(rel);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

fn write_text(dir: &Path, rel: &str, text: &str) -> Result<()> {
    let path = dir.join(rel);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
