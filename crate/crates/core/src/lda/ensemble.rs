use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{choose_k, train_lda, KRule, LdaModel, ModelScope, SamplerConfig};
use crate::corpus::{ChunkedCorpus, TokenizedDoc};
use crate::error::{Error, Result};
use crate::par::Exec;

/// A chunk topic: one dendrogram leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicVector {
    pub weights: Vec<f64>,
    pub chunk: usize,
    /// Topic index within its chunk model.
    pub topic: usize,
    /// Global leaf id, `0..n` across the whole ensemble.
    pub leaf: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    /// One model per non-empty chunk, ascending chunk index.
    pub models: Vec<LdaModel>,
    /// All chunk topics in `(chunk, topic)` order.
    pub topics: Vec<TopicVector>,
    pub skipped_chunks: Vec<usize>,
}

impl Ensemble {
    pub fn from_models(models: Vec<LdaModel>, skipped_chunks: Vec<usize>) -> Self {
        let mut topics = Vec::new();
        for m in &models {
            let ModelScope::Chunk(t) = m.scope else {
                panic!("ensemble models must be chunk models");
            };
            for k in 0..m.k {
                topics.push(TopicVector {
                    weights: m.phi.row(k).to_vec(),
                    chunk: t,
                    topic: k,
                    leaf: topics.len(),
                });
            }
        }
        Ensemble {
            models,
            topics,
            skipped_chunks,
        }
    }

    pub fn model_for_chunk(&self, t: usize) -> Option<&LdaModel> {
        self.models.iter().find(|m| m.scope == ModelScope::Chunk(t))
    }

    /// First leaf id of chunk `t`'s topic block.
    pub fn leaf_offset(&self, t: usize) -> Option<usize> {
        self.topics.iter().find(|tv| tv.chunk == t).map(|tv| tv.leaf)
    }

    pub fn num_leaves(&self) -> usize {
        self.topics.len()
    }

    pub fn time_labels(&self) -> Vec<usize> {
        self.topics.iter().map(|t| t.chunk).collect()
    }
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains one model per non-empty chunk, chunks in parallel. Chunk `t` uses
/// seed `derive_seed(seed, t)`; K comes from the affine rule on the chunk's
/// document count, capped by its token count.
pub fn train_ensemble(
    corpus: &ChunkedCorpus,
    vocab_size: usize,
    rule: &KRule,
    cfg: &SamplerConfig,
    seed: u64,
    exec: Exec,
) -> Result<Ensemble> {
    rule.validate()?;
    cfg.validate()?;
    let outcomes: Vec<Result<Option<LdaModel>>> = exec.map_range(corpus.num_chunks(), |t| {
        let docs: Vec<&[u32]> = corpus.chunk_docs(t).map(|d| d.tokens.as_slice()).collect();
        let tokens: usize = docs.iter().map(|d| d.len()).sum();
        if docs.is_empty() || tokens < 2 {
            return Ok(None);
        }
        let k = choose_k(docs.len(), rule).min(tokens);
        train_lda(
            &docs,
            vocab_size,
            k,
            cfg,
            derive_seed(seed, t as u64),
            ModelScope::Chunk(t),
        )
        .map(Some)
    });

    let mut models = Vec::new();
    let mut skipped = Vec::new();
    for (t, outcome) in outcomes.into_iter().enumerate() {
        match outcome? {
            Some(m) => {
                info!("chunk {t}: K = {} over {} documents", m.k, m.num_docs());
                models.push(m);
            }
            None => {
                warn!("chunk {t} is empty; no model trained");
                skipped.push(t);
            }
        }
    }
    if models.is_empty() {
        return Err(Error::Data("every time chunk is empty".into()));
    }
    Ok(Ensemble::from_models(models, skipped))
}

/// The single model over the whole corpus used for vocabulary filtering.
pub fn train_global_lda(
    docs: &[TokenizedDoc],
    vocab_size: usize,
    k: usize,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<LdaModel> {
    let refs: Vec<&[u32]> = docs.iter().map(|d| d.tokens.as_slice()).collect();
    train_lda(&refs, vocab_size, k, cfg, seed, ModelScope::Global)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{chunk_by_time, ChunkLength};
    use chrono::NaiveDate;

    fn corpus(months: &[u32]) -> ChunkedCorpus {
        let docs = months
            .iter()
            .enumerate()
            .map(|(i, &m)| TokenizedDoc {
                id: i.to_string(),
                authors: vec!["a".into()],
                date: NaiveDate::from_ymd_opt(2020, m, 1).unwrap(),
                tokens: (0..12).map(|x| ((x * 5 + i) % 10) as u32).collect(),
            })
            .collect();
        chunk_by_time(docs, ChunkLength::Months(1)).unwrap()
    }

    fn quick() -> SamplerConfig {
        SamplerConfig {
            iters: 30,
            burn_in: 10,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn constant_k_counts_leaves() {
        let c = corpus(&[1, 1, 2, 2, 3, 3]);
        let e = train_ensemble(&c, 10, &KRule::constant(5), &quick(), 1, Exec::Sequential).unwrap();
        assert_eq!(e.models.len(), 3);
        assert_eq!(e.topics.len(), 15);
        assert_eq!(
            e.topics.iter().map(|t| t.leaf).collect::<Vec<_>>(),
            (0..15).collect::<Vec<_>>()
        );
        assert_eq!(e.leaf_offset(2), Some(10));
    }

    #[test]
    fn empty_chunk_is_skipped() {
        let c = corpus(&[1, 1, 3, 3]);
        assert_eq!(c.sizes(), vec![2, 0, 2]);
        let e = train_ensemble(&c, 10, &KRule::constant(3), &quick(), 1, Exec::Sequential).unwrap();
        assert_eq!(e.skipped_chunks, vec![1]);
        assert_eq!(e.models.len(), 2);
        assert_eq!(e.topics.last().unwrap().leaf, 5);
        assert_eq!(e.topics.last().unwrap().chunk, 2);
    }

    #[test]
    fn parallel_matches_sequential() {
        let c = corpus(&[1, 2, 2, 3, 3, 3, 4]);
        let a = train_ensemble(&c, 10, &KRule::constant(2), &quick(), 9, Exec::Sequential).unwrap();
        let b = train_ensemble(&c, 10, &KRule::constant(2), &quick(), 9, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeds_differ_per_stream() {
        assert_ne!(derive_seed(42, 0), derive_seed(42, 1));
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
    }
}
