//! Seeded synthetic corpora: block topics for recovery checks and drifting
//! topic lineages laid out on a toroidal word grid.

use std::io::Write;
use std::path::Path;

use chrono::{Months, NaiveDate};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::Serialize;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::geometry::hellinger;

/// Ground-truth corpus for topic recovery: token ids plus the generating φ.
#[derive(Debug, Clone)]
pub struct RecoveryCorpus {
    pub docs: Vec<Vec<u32>>,
    pub phi: Vec<Vec<f64>>,
    pub vocab_size: usize,
}

/// Three topics over 30 terms, each putting most of its mass on its own block
/// of 10 terms; 500 documents of 50 tokens.
pub fn block_topic_corpus(seed: u64) -> RecoveryCorpus {
    block_topic_corpus_with(3, 30, 500, 50, seed)
}

pub fn block_topic_corpus_with(k: usize, vocab: usize, docs: usize, len: usize, seed: u64) -> RecoveryCorpus {
    let block = vocab / k;
    let phi: Vec<Vec<f64>> = (0..k)
        .map(|t| {
            let raw: Vec<f64> = (0..vocab).map(|w| if w / block == t { 1.0 } else { 0.02 }).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(0.5, 1.0).unwrap();
    let docs = (0..docs)
        .map(|_| {
            let mut theta: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
            let s: f64 = theta.iter().sum::<f64>().max(f64::MIN_POSITIVE);
            theta.iter_mut().for_each(|x| *x /= s);
            (0..len)
                .map(|_| {
                    let t = sample_index(&theta, &mut rng);
                    sample_index(&phi[t], &mut rng) as u32
                })
                .collect()
        })
        .collect();
    RecoveryCorpus {
        docs,
        phi,
        vocab_size: vocab,
    }
}

fn sample_index(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Greedy one-to-one matching of learned to true topics by smallest Hellinger
/// distance; returns the mean matched distance.
pub fn matched_topic_error<A: AsRef<[f64]>, B: AsRef<[f64]>>(truth: &[A], learned: &[B]) -> Result<f64> {
    let mut pairs = Vec::with_capacity(truth.len() * learned.len());
    for (i, t) in truth.iter().enumerate() {
        for (j, l) in learned.iter().enumerate() {
            pairs.push((hellinger(t.as_ref(), l.as_ref())?, i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut used_t = vec![false; truth.len()];
    let mut used_l = vec![false; learned.len()];
    let mut total = 0.0;
    let mut matched = 0;
    for (d, i, j) in pairs {
        if !used_t[i] && !used_l[j] {
            used_t[i] = true;
            used_l[j] = true;
            total += d;
            matched += 1;
        }
    }
    if matched == 0 {
        return Err(Error::InvalidInput("no topics to match".into()));
    }
    Ok(total / matched as f64)
}

/// Topic lineages drifting across a `rows × cols` toroidal word grid. Lineage
/// `l` in chunk `t` is a Gaussian bump centred at
/// `(l * row_spacing, col_offset * l + t * drift)`.
#[derive(Debug, Clone)]
pub struct DriftConfig {
    pub chunks: usize,
    pub docs_per_chunk: usize,
    pub lineages: usize,
    pub rows: usize,
    pub cols: usize,
    pub row_spacing: f64,
    pub col_offset: f64,
    pub drift: f64,
    pub sigma: f64,
    pub doc_len: (usize, usize),
    /// Probability that a token comes from a second, random lineage.
    pub mix: f64,
    /// Probability that a token is a stopword.
    pub stopword_rate: f64,
    pub authors_per_lineage: usize,
    pub months_per_chunk: u32,
    pub start: NaiveDate,
    /// Pronounceable pseudo-words instead of grid coordinates as terms.
    pub pseudo_words: bool,
    pub id_prefix: String,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            chunks: 10,
            docs_per_chunk: 150,
            lineages: 5,
            rows: 15,
            cols: 20,
            row_spacing: 3.0,
            col_offset: 0.0,
            drift: 1.0,
            sigma: 1.5,
            doc_len: (40, 80),
            mix: 0.1,
            stopword_rate: 0.0,
            authors_per_lineage: 8,
            months_per_chunk: 1,
            start: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            pseudo_words: false,
            id_prefix: "doc".into(),
        }
    }
}

impl DriftConfig {
    /// Four well-separated lineages drifting one column per chunk over ten
    /// chunks; the intended model has one topic per lineage per chunk.
    pub fn desk_scale() -> Self {
        Self {
            lineages: 4,
            rows: 24,
            row_spacing: 6.0,
            ..Self::default()
        }
    }

    /// Layout of the bundled mini-corpus: 2,000 records over 36 months.
    pub fn mini_corpus() -> Self {
        Self {
            chunks: 36,
            docs_per_chunk: 2000 / 36 + 1,
            lineages: 8,
            rows: 40,
            cols: 40,
            row_spacing: 5.0,
            col_offset: 7.0,
            drift: 0.5,
            sigma: 2.5,
            doc_len: (40, 110),
            mix: 0.15,
            stopword_rate: 0.15,
            authors_per_lineage: 12,
            months_per_chunk: 1,
            start: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            pseudo_words: true,
            id_prefix: "mini".into(),
        }
    }
}

const SYLLABLE_ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh",
];
const SYLLABLE_VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

/// Deterministic pronounceable word for an index, three syllables long.
pub fn pseudo_word(i: usize) -> String {
    let n = SYLLABLE_ONSETS.len() * SYLLABLE_VOWELS.len();
    // 7919 is coprime to n^3, so the scatter is a bijection.
    let mut x = (i * 7919 + 13) % (n * n * n);
    let mut word = String::new();
    for _ in 0..3 {
        let s = x % n;
        x /= n;
        word.push_str(SYLLABLE_ONSETS[s % SYLLABLE_ONSETS.len()]);
        word.push_str(SYLLABLE_VOWELS[s / SYLLABLE_ONSETS.len()]);
    }
    word
}

/// Small English stopword list sprinkled into generated text.
pub const STOPWORDS: [&str; 20] = [
    "the", "of", "and", "a", "in", "to", "is", "for", "we", "on", "with", "that", "this", "by", "are", "as", "an",
    "be", "from", "our",
];

const GIVEN_NAMES: [&str; 16] = [
    "Ada", "Bao", "Chidi", "Dana", "Emil", "Farah", "Goran", "Hana", "Ines", "Jun", "Kofi", "Lena", "Mateo", "Nia",
    "Omar", "Priya",
];
const FAMILY_NAMES: [&str; 12] = [
    "Abara", "Berg", "Castillo", "Dube", "Eklund", "Fischer", "Gupta", "Haddad", "Ito", "Jansen", "Kowal", "Laine",
];

fn author_name(lineage: usize, member: usize) -> String {
    let given = GIVEN_NAMES[(lineage * 7 + member) % GIVEN_NAMES.len()];
    let family = FAMILY_NAMES[lineage % FAMILY_NAMES.len()];
    format!("{given} {family}-{member}")
}

fn wrap(x: f64, n: usize) -> usize {
    (x.round() as i64).rem_euclid(n as i64) as usize
}

fn term(cfg: &DriftConfig, r: usize, c: usize) -> String {
    if cfg.pseudo_words {
        pseudo_word(r * cfg.cols + c)
    } else {
        format!("r{r}c{c}")
    }
}

/// Per-chunk topic centres `(row, col)` of every lineage.
pub fn lineage_centres(cfg: &DriftConfig, chunk: usize) -> Vec<(f64, f64)> {
    (0..cfg.lineages)
        .map(|l| {
            (
                l as f64 * cfg.row_spacing,
                l as f64 * cfg.col_offset + chunk as f64 * cfg.drift,
            )
        })
        .collect()
}

pub fn drifting_corpus(cfg: &DriftConfig, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bump = Normal::new(0.0, cfg.sigma).unwrap();
    let mut docs = Vec::with_capacity(cfg.chunks * cfg.docs_per_chunk);
    for t in 0..cfg.chunks {
        let centres = lineage_centres(cfg, t);
        let month = cfg.start + Months::new(t as u32 * cfg.months_per_chunk);
        let days = (month + Months::new(cfg.months_per_chunk) - month).num_days().max(1) as u64;
        for j in 0..cfg.docs_per_chunk {
            let primary = rng.random_range(0..cfg.lineages);
            let secondary = rng.random_range(0..cfg.lineages);
            let len = rng.random_range(cfg.doc_len.0..=cfg.doc_len.1);
            let mut words = Vec::with_capacity(len);
            for _ in 0..len {
                if rng.random::<f64>() < cfg.stopword_rate {
                    words.push(STOPWORDS.choose(&mut rng).unwrap().to_string());
                    continue;
                }
                let l = if rng.random::<f64>() < cfg.mix {
                    secondary
                } else {
                    primary
                };
                let (r0, c0) = centres[l];
                let r = wrap(r0 + bump.sample(&mut rng), cfg.rows);
                let c = wrap(c0 + bump.sample(&mut rng), cfg.cols);
                words.push(term(cfg, r, c));
            }
            let n_authors = rng.random_range(1..=3usize);
            let mut authors: Vec<String> = (0..n_authors)
                .map(|_| {
                    let community = if rng.random::<f64>() < 0.9 { primary } else { secondary };
                    author_name(community, rng.random_range(0..cfg.authors_per_lineage))
                })
                .collect();
            authors.sort();
            authors.dedup();
            let date = month + chrono::Days::new(rng.random_range(0..days));
            docs.push(Document {
                id: format!("{}-{:02}-{:04}", cfg.id_prefix, t, j),
                text: words.join(" "),
                authors,
                date,
            });
        }
    }
    docs
}

/// The bundled fixture: exactly 2,000 records.
pub fn mini_corpus(seed: u64) -> Vec<Document> {
    let mut docs = drifting_corpus(&DriftConfig::mini_corpus(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d69_6e69);
    while docs.len() > 2000 {
        let i = rng.random_range(0..docs.len());
        docs.remove(i);
    }
    docs
}

#[derive(Serialize)]
struct Record<'a> {
    id: &'a str,
    #[serde(rename = "abstract")]
    text: &'a str,
    authors: &'a [String],
    update_date: String,
}

/// Writes documents as JSON lines using the default ingest schema.
pub fn write_jsonl(docs: &[Document], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for d in docs {
        let rec = Record {
            id: &d.id,
            text: &d.text,
            authors: &d.authors,
            update_date: d.date.format("%Y-%m-%d").to_string(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
