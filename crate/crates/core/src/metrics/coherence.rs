//! Topic coherence from boolean sliding-window document counts.
//!
//! A document of length `L` yields `max(1, L - s + 1)` windows of size `s`.
//! Marginals and joints are the fraction of windows containing the term(s).

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DELTA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoherenceMeasure {
    Uci,
    Npmi,
    Cv,
}

impl CoherenceMeasure {
    /// Conventional window size for the measure.
    pub fn default_window(self) -> usize {
        match self {
            CoherenceMeasure::Uci | CoherenceMeasure::Npmi => 10,
            CoherenceMeasure::Cv => 110,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CoherenceMeasure::Uci => "uci",
            CoherenceMeasure::Npmi => "npmi",
            CoherenceMeasure::Cv => "cv",
        }
    }
}

/// Window occurrence counts restricted to a set of terms of interest.
#[derive(Debug, Clone)]
pub struct WindowCounts {
    pub window: usize,
    pub num_windows: u64,
    single: HashMap<u32, u64>,
    joint: HashMap<(u32, u32), u64>,
}

impl WindowCounts {
    pub fn count<D: AsRef<[u32]>>(docs: &[D], terms: &BTreeSet<u32>, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("coherence window must be positive".into()));
        }
        let mut out = WindowCounts {
            window,
            num_windows: 0,
            single: HashMap::new(),
            joint: HashMap::new(),
        };
        let mut present: Vec<u32> = Vec::new();
        for doc in docs {
            let doc = doc.as_ref();
            if doc.is_empty() {
                continue;
            }
            let starts = if doc.len() <= window { 1 } else { doc.len() - window + 1 };
            for s in 0..starts {
                let end = (s + window).min(doc.len());
                present.clear();
                present.extend(doc[s..end].iter().copied().filter(|w| terms.contains(w)));
                present.sort_unstable();
                present.dedup();
                out.num_windows += 1;
                for (i, &a) in present.iter().enumerate() {
                    *out.single.entry(a).or_default() += 1;
                    for &b in &present[i + 1..] {
                        *out.joint.entry((a, b)).or_default() += 1;
                    }
                }
            }
        }
        if out.num_windows == 0 {
            return Err(Error::InvalidInput("coherence reference corpus is empty".into()));
        }
        Ok(out)
    }

    pub fn windows_with(&self, w: u32) -> u64 {
        self.single.get(&w).copied().unwrap_or(0)
    }

    pub fn windows_with_both(&self, a: u32, b: u32) -> u64 {
        if a == b {
            return self.windows_with(a);
        }
        let key = if a < b { (a, b) } else { (b, a) };
        self.joint.get(&key).copied().unwrap_or(0)
    }

    pub fn p(&self, w: u32) -> f64 {
        self.windows_with(w) as f64 / self.num_windows as f64
    }

    pub fn p_joint(&self, a: u32, b: u32) -> f64 {
        self.windows_with_both(a, b) as f64 / self.num_windows as f64
    }

    /// `log((P(a,b) + δ) / (P(a) P(b)))`, or `None` if either term never occurs.
    pub fn pmi(&self, a: u32, b: u32) -> Option<f64> {
        let (pa, pb) = (self.p(a), self.p(b));
        if pa == 0.0 || pb == 0.0 {
            return None;
        }
        Some(((self.p_joint(a, b) + DELTA) / (pa * pb)).ln())
    }

    /// PMI normalized by `-log(P(a,b) + δ)`; terms that fill every window
    /// take the limiting value 1.
    pub fn npmi(&self, a: u32, b: u32) -> Option<f64> {
        let pmi = self.pmi(a, b)?;
        let denom = -(self.p_joint(a, b) + DELTA).ln();
        Some(if denom <= 0.0 { 1.0 } else { pmi / denom })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub measure: CoherenceMeasure,
    pub window: usize,
    pub per_topic: Vec<f64>,
    pub mean: f64,
    /// Topic terms that never occur in the reference corpus. Pairs involving
    /// them contribute 0.
    pub absent_terms: Vec<u32>,
}

pub fn coherence<D: AsRef<[u32]>>(
    topics: &[Vec<u32>],
    docs: &[D],
    measure: CoherenceMeasure,
    window: usize,
) -> Result<CoherenceReport> {
    if topics.is_empty() {
        return Err(Error::InvalidInput("no topics to score".into()));
    }
    if let Some(t) = topics.iter().position(|t| t.len() < 2) {
        return Err(Error::InvalidInput(format!("topic {t} has fewer than 2 terms")));
    }
    let terms: BTreeSet<u32> = topics.iter().flatten().copied().collect();
    let counts = WindowCounts::count(docs, &terms, window)?;
    let absent_terms: Vec<u32> = terms.iter().copied().filter(|&w| counts.windows_with(w) == 0).collect();

    let per_topic: Vec<f64> = topics
        .iter()
        .map(|t| match measure {
            CoherenceMeasure::Uci => pair_mean(t, |a, b| counts.pmi(a, b)),
            CoherenceMeasure::Npmi => pair_mean(t, |a, b| counts.npmi(a, b)),
            CoherenceMeasure::Cv => cv(t, &counts),
        })
        .collect();
    let mean = per_topic.iter().sum::<f64>() / per_topic.len() as f64;
    Ok(CoherenceReport {
        measure,
        window,
        per_topic,
        mean,
        absent_terms,
    })
}

fn pair_mean(terms: &[u32], f: impl Fn(u32, u32) -> Option<f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, &a) in terms.iter().enumerate() {
        for &b in &terms[i + 1..] {
            sum += f(a, b).unwrap_or(0.0);
            n += 1;
        }
    }
    sum / n as f64
}

/// Mean cosine between each term's NPMI context vector and the topic's summed
/// context vector.
fn cv(terms: &[u32], counts: &WindowCounts) -> f64 {
    let vectors: Vec<Vec<f64>> = terms
        .iter()
        .map(|&a| terms.iter().map(|&b| counts.npmi(a, b).unwrap_or(0.0)).collect())
        .collect();
    let mut total = vec![0.0; terms.len()];
    for v in &vectors {
        total.iter_mut().zip(v).for_each(|(t, x)| *t += x);
    }
    let total_norm = norm(&total);
    let sum: f64 = vectors
        .iter()
        .map(|v| {
            let denom = norm(v) * total_norm;
            if denom == 0.0 {
                0.0
            } else {
                v.iter().zip(&total).map(|(a, b)| a * b).sum::<f64>() / denom
            }
        })
        .sum();
    sum / terms.len() as f64
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
