//! Term relevancy from the global model and relevancy-based vocabulary
//! filtering.
//!
//! `r(w, k) = lambda * ln P(w|k) + (1 - lambda) * ln(P(w|k) / P(w))`, with
//! `P(w|k)` the global model's topic-word probability and `P(w)` the empirical
//! corpus frequency of `w`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::corpus::{TokenizedDoc, Vocabulary};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::lda::LdaModel;

#[derive(Debug, Clone, PartialEq)]
pub struct RelevancyTable {
    pub lambda: f64,
    /// K x V scores; `-inf` where `P(w|k) = 0` or `P(w) = 0`.
    pub scores: Matrix,
    pub marginals: Vec<f64>,
}

/// Empirical term frequencies `P(w)` over a tokenized corpus.
pub fn empirical_marginals(docs: &[TokenizedDoc], vocab_size: usize) -> Vec<f64> {
    let mut counts = vec![0u64; vocab_size];
    for d in docs {
        for &w in &d.tokens {
            counts[w as usize] += 1;
        }
    }
    let total = counts.iter().sum::<u64>().max(1) as f64;
    counts.iter().map(|&c| c as f64 / total).collect()
}

pub fn term_relevancy(model: &LdaModel, marginals: &[f64], lambda: f64) -> Result<RelevancyTable> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if marginals.len() != model.vocab_size {
        return Err(Error::DimensionMismatch {
            expected: model.vocab_size,
            got: marginals.len(),
        });
    }
    let scores = Matrix::from_fn(model.k, model.vocab_size, |k, w| {
        let p = model.phi[(k, w)];
        let pw = marginals[w];
        if p <= 0.0 || pw <= 0.0 {
            f64::NEG_INFINITY
        } else {
            lambda * p.ln() + (1.0 - lambda) * (p / pw).ln()
        }
    });
    Ok(RelevancyTable {
        lambda,
        scores,
        marginals: marginals.to_vec(),
    })
}

impl RelevancyTable {
    pub fn num_topics(&self) -> usize {
        self.scores.rows()
    }

    /// Term ids of topic `k` by descending relevancy; ties by higher `P(w)`,
    /// then lexicographically by term.
    pub fn ranking(&self, k: usize, vocab: &Vocabulary) -> Vec<u32> {
        rank_by(self.scores.row(k), &self.marginals, vocab)
    }

    /// `(topic, term, score)` rows for inspection.
    pub fn to_csv(&self, vocab: &Vocabulary) -> String {
        let mut s = String::from("topic,term,score\n");
        for k in 0..self.num_topics() {
            for (w, score) in self.scores.row(k).iter().enumerate() {
                let _ = writeln!(s, "{k},{},{score}", vocab.term(w as u32));
            }
        }
        s
    }
}

/// Sorts term ids by descending `scores`, ties by higher `marginals`, then
/// lexicographically.
pub fn rank_by(scores: &[f64], marginals: &[f64], vocab: &Vocabulary) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..scores.len() as u32).collect();
    ids.sort_by(|&a, &b| {
        let (a, b) = (a as usize, b as usize);
        scores[b]
            .total_cmp(&scores[a])
            .then(marginals[b].total_cmp(&marginals[a]))
            .then_with(|| vocab.term(a as u32).cmp(vocab.term(b as u32)))
    });
    ids
}

/// A reduced vocabulary and the old id of each retained term.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredVocabulary {
    pub vocab: Vocabulary,
    pub old_ids: Vec<u32>,
}

impl FilteredVocabulary {
    /// Maps documents onto the reduced vocabulary, dropping documents left
    /// empty. Returns the kept documents and the number dropped.
    pub fn retokenize(&self, docs: &[TokenizedDoc], old_vocab_size: usize) -> (Vec<TokenizedDoc>, usize) {
        let mut map = vec![u32::MAX; old_vocab_size];
        for (new, &old) in self.old_ids.iter().enumerate() {
            map[old as usize] = new as u32;
        }
        let mut dropped = 0;
        let kept = docs
            .iter()
            .filter_map(|d| {
                let tokens: Vec<u32> = d
                    .tokens
                    .iter()
                    .map(|&w| map[w as usize])
                    .filter(|&w| w != u32::MAX)
                    .collect();
                if tokens.is_empty() {
                    dropped += 1;
                    None
                } else {
                    Some(TokenizedDoc { tokens, ..d.clone() })
                }
            })
            .collect();
        (kept, dropped)
    }
}

/// Keeps the union over topics of each topic's `keep_per_topic` most relevant
/// terms. Retained terms keep their relative order from `vocab`.
pub fn filter_vocabulary(
    table: &RelevancyTable,
    vocab: &Vocabulary,
    keep_per_topic: usize,
) -> Result<FilteredVocabulary> {
    if keep_per_topic == 0 {
        return Err(Error::Config("keep_per_topic must be at least 1".into()));
    }
    let mut keep = BTreeSet::new();
    for k in 0..table.num_topics() {
        keep.extend(
            table
                .ranking(k, vocab)
                .into_iter()
                .filter(|&w| table.scores[(k, w as usize)].is_finite())
                .take(keep_per_topic),
        );
    }
    if keep.is_empty() {
        return Err(Error::Config("relevancy filtering retained no terms".into()));
    }
    let old_ids: Vec<u32> = keep.into_iter().collect();
    let terms = old_ids.iter().map(|&w| vocab.term(w).to_string()).collect();
    Ok(FilteredVocabulary {
        vocab: Vocabulary::new(terms),
        old_ids,
    })
}

/// One line per topic: `topic<k>: term term ...`.
pub fn top_terms_text(lists: &[Vec<u32>], vocab: &Vocabulary) -> String {
    let mut s = String::new();
    for (k, list) in lists.iter().enumerate() {
        let words: Vec<&str> = list.iter().map(|&w| vocab.term(w)).collect();
        let _ = writeln!(s, "topic{k}: {}", words.join(" "));
    }
    s
}
