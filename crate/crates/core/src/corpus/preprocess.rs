use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::ingest::{normalize_author, Document};
use crate::error::{Error, Result};
use crate::par::Exec;

/// Term list with contiguous ids `0..len()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Panics on duplicate terms.
    pub fn new(terms: Vec<String>) -> Self {
        let index: HashMap<String, u32> = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        assert_eq!(index.len(), terms.len(), "duplicate vocabulary term");
        Vocabulary { terms, index }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(terms: Vec<String>) -> Self {
        Vocabulary::new(terms)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.terms
    }
}

/// A document reduced to term ids, with normalized author names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub id: String,
    pub authors: Vec<String>,
    pub date: NaiveDate,
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub stopwords: BTreeSet<String>,
    pub min_count: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            stopwords: BTreeSet::new(),
            min_count: 2,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PreprocessReport {
    /// Documents left with no in-vocabulary token; these are dropped.
    pub empty_docs: usize,
}

/// Lowercased maximal alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Bundled English stopword list.
pub const ENGLISH_STOPWORDS: &str = include_str!("stopwords.txt");

/// One term per line; blank lines and `#` comments ignored.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}

/// Builds the vocabulary (descending corpus frequency, ties lexicographic)
/// and maps every document onto it. Documents with no surviving token are
/// dropped and counted.
pub fn preprocess(
    docs: &[Document],
    cfg: &PreprocessConfig,
    exec: Exec,
) -> Result<(Vocabulary, Vec<TokenizedDoc>, PreprocessReport)> {
    if cfg.min_count < 1 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let raw: Vec<Vec<String>> = exec.map_slice(docs, |d| {
        tokenize(&d.text)
            .into_iter()
            .filter(|t| !cfg.stopwords.contains(t))
            .collect()
    });

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for toks in &raw {
        for t in toks {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= cfg.min_count).collect();
    if kept.is_empty() {
        return Err(Error::Config(
            "vocabulary is empty after stopword and min-count filtering".into(),
        ));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let vocab = Vocabulary::new(kept.into_iter().map(|(t, _)| t.to_string()).collect());

    let mut report = PreprocessReport::default();
    let mut out = Vec::with_capacity(docs.len());
    for (doc, toks) in docs.iter().zip(&raw) {
        let tokens: Vec<u32> = toks.iter().filter_map(|t| vocab.id(t)).collect();
        if tokens.is_empty() {
            report.empty_docs += 1;
            continue;
        }
        out.push(TokenizedDoc {
            id: doc.id.clone(),
            authors: normalized_authors(&doc.authors),
            date: doc.date,
            tokens,
        });
    }
    Ok((vocab, out, report))
}

fn normalized_authors(raw: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    raw.iter()
        .map(|a| normalize_author(a))
        .filter(|a| !a.is_empty() && seen.insert(a.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document {
                id: i.to_string(),
                text: t.to_string(),
                authors: vec!["A".into()],
                date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            })
            .collect()
    }

    #[test]
    fn min_count_two_keeps_repeated_terms() {
        let (vocab, toks, report) =
            preprocess(&docs(&["a b b", "b c"]), &PreprocessConfig::default(), Exec::Sequential).unwrap();
        assert_eq!(vocab.terms(), &["b".to_string()]);
        assert_eq!(toks.len(), 2);
        assert_eq!(toks[0].tokens, vec![0, 0]);
        assert_eq!(report.empty_docs, 0);
    }

    #[test]
    fn min_count_one_keeps_everything() {
        let cfg = PreprocessConfig {
            min_count: 1,
            ..Default::default()
        };
        let (vocab, _, _) = preprocess(&docs(&["a b b", "b c"]), &cfg, Exec::Sequential).unwrap();
        // frequency order, ties lexicographic
        assert_eq!(vocab.terms(), &["b", "a", "c"]);
    }

    #[test]
    fn all_stopwords_is_fatal() {
        let cfg = PreprocessConfig {
            stopwords: ["a", "b", "c"].iter().map(|s| s.to_string()).collect(),
            min_count: 1,
        };
        let err = preprocess(&docs(&["a b b", "b c"]), &cfg, Exec::Sequential).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn tokenization_is_lowercased_and_deterministic() {
        assert_eq!(
            tokenize("Deep-Learning, GRAPHS & (graphs)!"),
            vec!["deep", "learning", "graphs", "graphs"]
        );
        let d = docs(&["The cat sat", "the cat ran", "a Cat"]);
        let cfg = PreprocessConfig {
            stopwords: ["the".to_string()].into_iter().collect(),
            min_count: 1,
        };
        let a = preprocess(&d, &cfg, Exec::Sequential).unwrap();
        let b = preprocess(&d, &cfg, Exec::Parallel).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert!(a.0.id("the").is_none());
    }

    #[test]
    fn docs_without_vocabulary_terms_are_dropped() {
        let (_, toks, report) =
            preprocess(&docs(&["a a", "zzz"]), &PreprocessConfig::default(), Exec::Sequential).unwrap();
        assert_eq!(toks.len(), 1);
        assert_eq!(report.empty_docs, 1);
    }
}
