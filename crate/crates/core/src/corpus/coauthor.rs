use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::chunk::TimeInterval;
use super::ingest::{normalize_author, Document};
use super::preprocess::TokenizedDoc;

/// Anything carrying an author list and a date.
pub trait Authored {
    fn author_names(&self) -> &[String];
    fn date(&self) -> NaiveDate;
}

impl Authored for Document {
    fn author_names(&self) -> &[String] {
        &self.authors
    }
    fn date(&self) -> NaiveDate {
        self.date
    }
}

impl Authored for TokenizedDoc {
    fn author_names(&self) -> &[String] {
        &self.authors
    }
    fn date(&self) -> NaiveDate {
        self.date
    }
}

/// Undirected co-author graph. Vertices are normalized author names in
/// sorted order; each edge `(u, v)` with `u < v` carries the number of
/// active documents the pair shares.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoAuthorGraph {
    pub authors: Vec<String>,
    pub edges: BTreeMap<(u32, u32), u32>,
    pub window: Option<TimeInterval>,
}

impl CoAuthorGraph {
    pub fn num_vertices(&self) -> usize {
        self.authors.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, author: &str) -> Option<u32> {
        let key = normalize_author(author);
        self.authors.binary_search(&key).ok().map(|i| i as u32)
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.edges.contains_key(&(u.min(v), u.max(v)))
    }

    pub fn degree(&self, v: u32) -> usize {
        self.edges.keys().filter(|&&(a, b)| a == v || b == v).count()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.authors.len()];
        for &(a, b) in self.edges.keys() {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        deg
    }
}

/// Builds the co-author graph over documents active in `window` (all
/// documents when `None`). A single-author document contributes a vertex
/// but no edge.
pub fn build_coauthor_graph<D: Authored>(docs: &[D], window: Option<TimeInterval>) -> CoAuthorGraph {
    let active: Vec<Vec<String>> = docs
        .iter()
        .filter(|d| window.is_none_or(|w| w.contains(d.date())))
        .map(|d| {
            let set: BTreeSet<String> = d
                .author_names()
                .iter()
                .map(|a| normalize_author(a))
                .filter(|a| !a.is_empty())
                .collect();
            set.into_iter().collect()
        })
        .collect();

    let authors: Vec<String> = active
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let id = |a: &String| authors.binary_search(a).expect("author indexed") as u32;

    let mut edges = BTreeMap::new();
    for list in &active {
        let ids: Vec<u32> = list.iter().map(id).collect();
        for (i, &u) in ids.iter().enumerate() {
            for &v in &ids[i + 1..] {
                *edges.entry((u.min(v), u.max(v))).or_insert(0) += 1;
            }
        }
    }
    CoAuthorGraph { authors, edges, window }
}
