use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::hellinger::DistanceMatrix;
use crate::error::{Error, Result};
use crate::par::Exec;

/// Exact k-nearest-neighbour graph, symmetrized by edge union.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnGraph {
    pub k: usize,
    /// Directed neighbour lists, nearest first (ties by lower id). Empty for
    /// graphs built from an explicit edge list.
    pub nearest: Vec<Vec<usize>>,
    /// Symmetrized adjacency, ascending ids.
    pub adjacency: Vec<Vec<usize>>,
}

/// `k` nearest others of every point, ties by lower id, then symmetrized.
pub fn knn_graph(d: &DistanceMatrix, k: usize, exec: Exec) -> Result<KnnGraph> {
    let n = d.len();
    if k < 1 || k >= n {
        return Err(Error::InvalidInput(format!(
            "k-NN needs 1 <= k < n, got k = {k}, n = {n}"
        )));
    }
    let nearest: Vec<Vec<usize>> = exec.map_range(n, |i| nearest_of(d, i, k));
    let mut sets = vec![BTreeSet::new(); n];
    for (i, list) in nearest.iter().enumerate() {
        for &j in list {
            sets[i].insert(j);
            sets[j].insert(i);
        }
    }
    Ok(KnnGraph {
        k,
        nearest,
        adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
    })
}

pub(crate) fn nearest_of(d: &DistanceMatrix, i: usize, k: usize) -> Vec<usize> {
    let row = d.row(i);
    let mut others: Vec<usize> = (0..row.len()).filter(|&j| j != i).collect();
    let by_distance = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
    if k < others.len() {
        others.select_nth_unstable_by(k, by_distance);
        others.truncate(k);
    }
    others.sort_by(by_distance);
    others
}

impl KnnGraph {
    /// Undirected graph from an explicit edge list; self-loops are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut sets = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a != b {
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        KnnGraph {
            k: 0,
            nearest: Vec::new(),
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, nb)| nb.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect()
    }

    /// Connected-component label per vertex, numbered by first vertex.
    pub fn component_labels(&self) -> Vec<usize> {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &u in &self.adjacency[v] {
                    if label[u] == usize::MAX {
                        label[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn num_components(&self) -> usize {
        self.component_labels().iter().max().map_or(0, |m| m + 1)
    }
}
