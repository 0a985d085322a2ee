use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ChunkLength, Schema};
use crate::embed::EmbedConfig;
use crate::error::{Error, Result};
use crate::hrg::HrgConfig;
use crate::lda::{KRule, ModelFormat, SamplerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub input: InputConfig,
    pub preprocess: PreprocessSection,
    pub chunking: ChunkingConfig,
    pub global: GlobalConfig,
    pub ensemble: EnsembleConfig,
    pub geometry: GeometryConfig,
    pub hrg: HrgConfig,
    pub metrics: MetricsConfig,
    pub embed: EmbedSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    pub schema: Schema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub min_count: usize,
    /// Use the bundled English stopword list.
    pub builtin_stopwords: bool,
    /// Extra stopwords, one per line.
    pub stopwords_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingConfig {
    pub length: ChunkLength,
    /// Overlap added on both sides of every chunk.
    pub margin: ChunkLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub k: usize,
    pub lambda: f64,
    pub keep_per_topic: usize,
    pub sampler: SamplerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub k_rule: KRule,
    pub sampler: SamplerConfig,
    pub model_format: ModelFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Neighbours per topic in the k-NN graph and in TNO.
    pub knn_k: usize,
    /// Dendrogram cut for meta topics, on the normalized height scale.
    pub cut_height: f64,
    pub top_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub tno_windows: Vec<usize>,
    pub etsg_taus: Vec<f64>,
    pub etsg_eps: f64,
    /// Shuffled-label trials for the TNO and ETSG baselines; 0 disables them.
    pub null_trials: usize,
    pub coherence_top_n: usize,
    pub uci_window: usize,
    pub npmi_window: usize,
    pub cv_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct EmbedSection {
    #[serde(flatten)]
    pub params: EmbedConfig,
    /// Author whose topic mass sizes the exported points.
    pub author: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("run"),
            input: InputConfig::default(),
            preprocess: PreprocessSection::default(),
            chunking: ChunkingConfig::default(),
            global: GlobalConfig::default(),
            ensemble: EnsembleConfig::default(),
            geometry: GeometryConfig::default(),
            hrg: HrgConfig::default(),
            metrics: MetricsConfig::default(),
            embed: EmbedSection::default(),
        }
    }
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data/mini_corpus.jsonl"),
            schema: Schema::default(),
        }
    }
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            min_count: 2,
            builtin_stopwords: true,
            stopwords_file: None,
        }
    }
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            length: ChunkLength::Months(3),
            margin: ChunkLength::Days(0),
        }
    }
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            k: 20,
            lambda: 0.4,
            keep_per_topic: 400,
            sampler: SamplerConfig::default(),
        }
    }
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            k_rule: KRule::default(),
            sampler: SamplerConfig::default(),
            model_format: ModelFormat::Csv,
        }
    }
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            knn_k: 10,
            cut_height: 0.55,
            top_terms: 10,
        }
    }
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            tno_windows: vec![3],
            etsg_taus: vec![36.0],
            etsg_eps: 1e-9,
            null_trials: 20,
            coherence_top_n: 10,
            uci_window: 10,
            npmi_window: 10,
            cv_window: 110,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Sets a dotted key such as `metrics.tno_windows` from a TOML literal.
    /// Bare words that are not valid TOML are taken as strings.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        self.set_all(&[(key, raw)])
    }

    /// Applies several overrides, validating only the final result. The
    /// config is left unchanged on error.
    pub fn set_all<K: AsRef<str>, V: AsRef<str>>(&mut self, pairs: &[(K, V)]) -> Result<()> {
        let mut root = match toml::Value::try_from(&*self) {
            Ok(toml::Value::Table(t)) => t,
            _ => return Err(Error::Internal("config does not serialize to a table".into())),
        };
        for (key, raw) in pairs {
            let (key, raw) = (key.as_ref(), raw.as_ref());
            let parts: Vec<&str> = key.split('.').collect();
            let (last, path) = parts
                .split_last()
                .filter(|(l, _)| !l.is_empty())
                .ok_or_else(|| Error::Config(format!("empty config key `{key}`")))?;
            let mut table = &mut root;
            for part in path {
                table = table
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("`{part}` in `{key}` is not a section")))?;
            }
            table.insert(last.to_string(), parse_value(raw));
            // Deserialize after each key so errors name the offending override.
            let _: Self = toml::Value::Table(root.clone())
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("cannot set `{key}` = {raw}: {}", e.message())))?;
        }
        let updated: Self = toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.preprocess.min_count < 1 {
            return bad("preprocess.min_count must be at least 1".into());
        }
        if self.chunking.length.is_zero() {
            return bad("chunking.length must be positive".into());
        }
        if self.global.k < 2 {
            return bad("global.k must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.global.lambda) {
            return bad(format!("global.lambda must lie in [0, 1], got {}", self.global.lambda));
        }
        if self.global.keep_per_topic == 0 {
            return bad("global.keep_per_topic must be at least 1".into());
        }
        self.global.sampler.validate()?;
        self.ensemble.sampler.validate()?;
        self.ensemble.k_rule.validate()?;
        if self.geometry.knn_k == 0 {
            return bad("geometry.knn_k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.geometry.cut_height) {
            return bad(format!(
                "geometry.cut_height must lie in [0, 1], got {}",
                self.geometry.cut_height
            ));
        }
        if self.geometry.top_terms == 0 {
            return bad("geometry.top_terms must be at least 1".into());
        }
        let m = &self.metrics;
        if m.etsg_taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad("metrics.etsg_taus must be positive".into());
        }
        if m.etsg_eps.is_nan() || m.etsg_eps <= 0.0 {
            return bad("metrics.etsg_eps must be positive".into());
        }
        if m.coherence_top_n < 2 {
            return bad("metrics.coherence_top_n must be at least 2".into());
        }
        if m.uci_window == 0 || m.npmi_window == 0 || m.cv_window == 0 {
            return bad("coherence windows must be positive".into());
        }
        self.embed.params.validate()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex_digest(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
