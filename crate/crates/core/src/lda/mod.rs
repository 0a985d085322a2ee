//! Latent Dirichlet allocation by collapsed Gibbs sampling, the time-chunked
//! ensemble, and the model dump format.
//!
//! Estimators average the count matrices over post-burn-in sweeps (every
//! `sample_lag`-th sweep, always including the last one):
//!
//! ```text
//! phi[k][w]   = (n_kw + beta)  / (n_k + V * beta)
//! theta[j][k] = (n_jk + alpha) / (n_j + K * alpha)
//! ```

mod dump;
mod ensemble;
mod sampler;

pub use dump::{decode_model, encode_model, read_model, write_model, ModelFormat};
pub use ensemble::{derive_seed, train_ensemble, train_global_lda, Ensemble, TopicVector};
pub use sampler::{infer_theta, train_lda, GibbsSampler};

use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::error::{Error, Result};

/// Which corpus a model was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelScope {
    Global,
    Chunk(usize),
}

impl std::fmt::Display for ModelScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelScope::Global => f.write_str("global"),
            ModelScope::Chunk(t) => write!(f, "{t}"),
        }
    }
}

impl std::str::FromStr for ModelScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(ModelScope::Global),
            _ => s
                .parse()
                .map(ModelScope::Chunk)
                .map_err(|_| Error::Data(format!("bad model scope `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub k: usize,
    pub vocab_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub scope: ModelScope,
    /// K x V topic-word distributions.
    pub phi: Matrix,
    /// N_D x K document-topic distributions, rows in training order.
    pub theta: Matrix,
}

impl LdaModel {
    pub fn topic(&self, k: usize) -> &[f64] {
        self.phi.row(k)
    }

    pub fn num_docs(&self) -> usize {
        self.theta.rows()
    }

    /// Term ids of topic `k` ordered by descending probability, ties by id.
    pub fn top_terms(&self, k: usize, n: usize) -> Vec<u32> {
        let row = self.phi.row(k);
        let mut ids: Vec<u32> = (0..row.len() as u32).collect();
        ids.sort_by(|&a, &b| row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b)));
        ids.truncate(n);
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub iters: usize,
    pub burn_in: usize,
    pub sample_lag: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            alpha: 1.0,
            beta: 1.0,
            iters: 500,
            burn_in: 200,
            sample_lag: 10,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::Config("alpha and beta must be positive".into()));
        }
        if self.iters <= self.burn_in {
            return Err(Error::Config("iters must exceed burn_in".into()));
        }
        if self.sample_lag == 0 {
            return Err(Error::Config("sample_lag must be positive".into()));
        }
        Ok(())
    }
}

/// Affine topic-count rule `K = clamp(round(intercept + slope * n_docs), k_min, k_max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KRule {
    pub slope: f64,
    pub intercept: f64,
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for KRule {
    fn default() -> Self {
        KRule {
            slope: 0.01,
            intercept: 5.0,
            k_min: 2,
            k_max: 100,
        }
    }
}

impl KRule {
    pub fn constant(k: usize) -> Self {
        KRule {
            slope: 0.0,
            intercept: k as f64,
            k_min: 2,
            k_max: k.max(2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min < 2 || self.k_max < self.k_min || self.slope < 0.0 || !self.intercept.is_finite() {
            return Err(Error::Config(format!(
                "invalid K rule (need 2 <= k_min <= k_max, slope >= 0): {self:?}"
            )));
        }
        Ok(())
    }
}

pub fn choose_k(n_docs: usize, rule: &KRule) -> usize {
    let raw = (rule.intercept + rule.slope * n_docs as f64).round();
    let raw = if raw.is_finite() { raw.max(0.0) } else { f64::MAX };
    (raw.min(usize::MAX as f64) as usize).clamp(rule.k_min, rule.k_max)
}
