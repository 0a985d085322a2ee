//! Hierarchical-random-graph readout over the topic dendrogram.
//!
//! Each author is a distribution `psi` over dendrogram leaves. For internal
//! node `m` with left and right leaf sets, `q_u(m, side)` is author `u`'s
//! mass on that side, and
//!
//! ```text
//! L_m = sum_u q_u(m, L)        R_m = sum_u q_u(m, R)
//! E_m = sum_{(u,v) in E} q_u(m, L) q_v(m, R) + q_u(m, R) q_v(m, L)
//!       + sum_{leaf children c of m} psi_u[c] psi_v[c]
//! p_m = E_m / (L_m R_m), clamped to [0, 1]
//! ```
//!
//! The same-leaf term assigns the mass of an edge whose endpoints sit on one
//! leaf to that leaf's parent, matching the link readout, so the `E_m` over
//! all nodes sum to the total edge mass.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{ChunkedCorpus, CoAuthorGraph};
use crate::error::{Error, Result};
use crate::geometry::{Dendrogram, Merge};
use crate::lda::Ensemble;
use crate::par::Exec;

/// Below this, `L_m * R_m` is treated as zero.
pub const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorTopicDist {
    pub author: String,
    /// Dense distribution over all leaves.
    pub psi: Vec<f64>,
}

/// One document's contribution to its authors' distributions.
#[derive(Debug, Clone, Copy)]
pub struct DocTopics<'a> {
    pub authors: &'a [String],
    /// First leaf of the document's chunk block.
    pub leaf_offset: usize,
    pub theta: &'a [f64],
}

/// `psi_u` proportional to the sum over `u`'s documents of
/// `theta_j / |authors(j)|`, lifted into global leaf coordinates. Sorted by
/// author name.
pub fn author_topic_distributions<'a>(
    docs: impl IntoIterator<Item = DocTopics<'a>>,
    n_leaves: usize,
) -> Result<Vec<AuthorTopicDist>> {
    let mut acc: BTreeMap<&'a str, Vec<f64>> = BTreeMap::new();
    for d in docs {
        if d.authors.is_empty() {
            continue;
        }
        if d.leaf_offset + d.theta.len() > n_leaves {
            return Err(Error::DimensionMismatch {
                expected: n_leaves,
                got: d.leaf_offset + d.theta.len(),
            });
        }
        let w = 1.0 / d.authors.len() as f64;
        for a in d.authors {
            let psi = acc.entry(a.as_str()).or_insert_with(|| vec![0.0; n_leaves]);
            for (k, &x) in d.theta.iter().enumerate() {
                psi[d.leaf_offset + k] += w * x;
            }
        }
    }
    let mut out = Vec::with_capacity(acc.len());
    for (author, mut psi) in acc {
        let total: f64 = psi.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            warn!("author `{author}` has no topic mass; excluded");
            continue;
        }
        psi.iter_mut().for_each(|x| *x /= total);
        out.push(AuthorTopicDist {
            author: author.to_string(),
            psi,
        });
    }
    Ok(out)
}

/// Document-topic rows of every document in its base chunk's model.
pub fn ensemble_doc_topics<'a>(ensemble: &'a Ensemble, corpus: &'a ChunkedCorpus) -> Vec<DocTopics<'a>> {
    let mut out = Vec::new();
    for model in &ensemble.models {
        let crate::lda::ModelScope::Chunk(t) = model.scope else {
            continue;
        };
        let offset = ensemble.leaf_offset(t).expect("model has leaves");
        for (row, &doc) in corpus.chunks[t].docs.iter().enumerate() {
            if corpus.base_chunk[doc] == t {
                out.push(DocTopics {
                    authors: &corpus.docs[doc].authors,
                    leaf_offset: offset,
                    theta: model.theta.row(row),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct HrgConfig {
    /// Weight edges by co-publication count instead of counting them once.
    pub weighted_edges: bool,
    /// Let authors outside the co-author graph contribute to `L_m`, `R_m`.
    pub include_inactive_authors: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStat {
    pub expected_left: f64,
    pub expected_right: f64,
    /// Edge mass between the two subtrees.
    pub cross_edges: f64,
    /// Edge mass with both endpoints on one leaf child of this node.
    pub same_leaf_edges: f64,
    /// `cross_edges + same_leaf_edges`.
    pub expected_edges: f64,
    pub probability: f64,
    /// `L_m * R_m` too small for the ratio to be defined.
    pub degenerate: bool,
    /// The raw ratio exceeded 1.
    pub clamped: bool,
}

/// Per-merge statistics, indexed like [`Dendrogram::merges`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub nodes: Vec<NodeStat>,
}

/// Subtree masses of `psi` for every node (leaves then merges).
fn subtree_mass(dendro: &Dendrogram, psi: &[f64]) -> Vec<f64> {
    let mut s = Vec::with_capacity(dendro.num_nodes());
    s.extend_from_slice(psi);
    for m in &dendro.merges {
        let v = s[m.left] + s[m.right];
        s.push(v);
    }
    s
}

fn same_leaf_product(dendro: &Dendrogram, m: &Merge, pu: &[f64], pv: &[f64]) -> f64 {
    [m.left, m.right]
        .into_iter()
        .filter(|&c| dendro.is_leaf(c))
        .map(|c| pu[c] * pv[c])
        .sum()
}

/// Expected subtree author counts and cross-subtree edge mass for every
/// internal node, with `p_m` filled in by [`node_probabilities`].
pub fn node_statistics(
    dendro: &Dendrogram,
    psis: &[AuthorTopicDist],
    graph: &CoAuthorGraph,
    cfg: &HrgConfig,
    exec: Exec,
) -> Result<NodeStats> {
    let n = dendro.n_leaves;
    if let Some(bad) = psis.iter().find(|a| a.psi.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.psi.len(),
        });
    }
    let mut sorted: Vec<&AuthorTopicDist> = psis.iter().collect();
    sorted.sort_by(|a, b| a.author.cmp(&b.author));
    let by_name: BTreeMap<&str, usize> = sorted.iter().enumerate().map(|(i, a)| (a.author.as_str(), i)).collect();

    // Graph vertex -> psi index.
    let vertex_psi: Vec<Option<usize>> = graph
        .authors
        .iter()
        .map(|a| {
            let idx = by_name.get(a.as_str()).copied();
            if idx.is_none() {
                warn!("co-author `{a}` has no topic distribution; ignored");
            }
            idx
        })
        .collect();

    let counted: Vec<usize> = if cfg.include_inactive_authors {
        (0..sorted.len()).collect()
    } else {
        let mut v: Vec<usize> = vertex_psi.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let masses: Vec<Vec<f64>> = exec.map_slice(&sorted, |a| subtree_mass(dendro, &a.psi));

    let edges: Vec<(usize, usize, f64)> = graph
        .edges
        .iter()
        .filter_map(|(&(u, v), &count)| {
            let (pu, pv) = (vertex_psi[u as usize]?, vertex_psi[v as usize]?);
            let w = if cfg.weighted_edges { f64::from(count) } else { 1.0 };
            Some((pu, pv, w))
        })
        .collect();

    let nodes = exec.map_slice(&dendro.merges, |m| {
        let (l, r) = (m.left, m.right);
        let expected_left: f64 = counted.iter().map(|&u| masses[u][l]).sum();
        let expected_right: f64 = counted.iter().map(|&u| masses[u][r]).sum();
        let mut cross = 0.0;
        let mut same = 0.0;
        for &(u, v, w) in &edges {
            let (su, sv) = (&masses[u], &masses[v]);
            cross += w * (su[l] * sv[r] + su[r] * sv[l]);
            same += w * same_leaf_product(dendro, m, &sorted[u].psi, &sorted[v].psi);
        }
        NodeStat {
            expected_left,
            expected_right,
            cross_edges: cross,
            same_leaf_edges: same,
            expected_edges: cross + same,
            probability: 0.0,
            degenerate: false,
            clamped: false,
        }
    });
    let mut stats = NodeStats { nodes };
    node_probabilities(&mut stats);
    Ok(stats)
}

/// `p_m = E_m / (L_m R_m)` clamped to `[0, 1]`; 0 and flagged when the
/// denominator is below [`DEGENERATE_EPS`].
pub fn node_probabilities(stats: &mut NodeStats) {
    for s in &mut stats.nodes {
        let denom = s.expected_left * s.expected_right;
        if denom > DEGENERATE_EPS {
            let p = s.expected_edges / denom;
            s.clamped = p > 1.0;
            s.probability = p.clamp(0.0, 1.0);
            s.degenerate = false;
        } else {
            s.probability = 0.0;
            s.degenerate = true;
            s.clamped = false;
        }
    }
}

/// Copies `p_m` onto the dendrogram's merges.
pub fn apply_probabilities(dendro: &mut Dendrogram, stats: &NodeStats) {
    for (m, s) in dendro.merges.iter_mut().zip(&stats.nodes) {
        m.probability = Some(s.probability);
    }
}

/// `P(u ~ v) = sum_{i != j} psi_u[i] psi_v[j] p_lca(i,j) + sum_i psi_u[i] psi_v[i] p_parent(i)`,
/// evaluated in one pass over the merges.
pub fn link_probability(dendro: &Dendrogram, stats: &NodeStats, psi_u: &[f64], psi_v: &[f64]) -> Result<f64> {
    let n = dendro.n_leaves;
    for p in [psi_u, psi_v] {
        if p.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
    }
    let su = subtree_mass(dendro, psi_u);
    let sv = subtree_mass(dendro, psi_v);
    let total: f64 = dendro
        .merges
        .iter()
        .zip(&stats.nodes)
        .map(|(m, s)| {
            let (l, r) = (m.left, m.right);
            s.probability * (su[l] * sv[r] + su[r] * sv[l] + same_leaf_product(dendro, m, psi_u, psi_v))
        })
        .sum();
    Ok(total.clamp(0.0, 1.0))
}

/// Fitted dendrogram plus author distributions, queryable by author name.
#[derive(Debug, Clone)]
pub struct HrgModel {
    pub dendrogram: Dendrogram,
    pub stats: NodeStats,
    pub authors: Vec<AuthorTopicDist>,
}

impl HrgModel {
    pub fn psi(&self, author: &str) -> Result<&[f64]> {
        let key = crate::corpus::normalize_author(author);
        self.authors
            .binary_search_by(|a| a.author.as_str().cmp(&key))
            .map(|i| self.authors[i].psi.as_slice())
            .map_err(|_| Error::InvalidInput(format!("unknown author `{author}`")))
    }

    pub fn link(&self, u: &str, v: &str) -> Result<f64> {
        if crate::corpus::normalize_author(u) == crate::corpus::normalize_author(v) {
            return Err(Error::InvalidInput(
                "link probability needs two distinct authors".into(),
            ));
        }
        link_probability(&self.dendrogram, &self.stats, self.psi(u)?, self.psi(v)?)
    }
}

/// Dendrogram JSON with node statistics merged in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramExport {
    pub n_leaves: usize,
    pub nodes: Vec<NodeExport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeExport {
    pub id: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub children: Option<[usize; 2]>,
    pub size: usize,
    pub height: f64,
    pub normalized_height: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stats: Option<NodeStat>,
}

impl DendrogramExport {
    pub fn new(dendro: &Dendrogram, stats: Option<&NodeStats>) -> Self {
        let mut nodes: Vec<NodeExport> = (0..dendro.n_leaves)
            .map(|id| NodeExport {
                id,
                children: None,
                size: 1,
                height: 0.0,
                normalized_height: 0.0,
                probability: None,
                stats: None,
            })
            .collect();
        for (i, m) in dendro.merges.iter().enumerate() {
            let stat = stats.map(|s| s.nodes[i].clone());
            nodes.push(NodeExport {
                id: dendro.n_leaves + i,
                children: Some([m.left, m.right]),
                size: m.size,
                height: m.height,
                normalized_height: m.normalized_height,
                probability: stat.as_ref().map(|s| s.probability).or(m.probability),
                stats: stat,
            });
        }
        DendrogramExport {
            n_leaves: dendro.n_leaves,
            nodes,
        }
    }

    pub fn into_parts(self) -> Result<(Dendrogram, Option<NodeStats>)> {
        let n = self.n_leaves;
        let mut merges = Vec::new();
        let mut stats = Vec::new();
        for node in self.nodes.into_iter().skip(n) {
            let [left, right] = node
                .children
                .ok_or_else(|| Error::Data(format!("internal node {} has no children", node.id)))?;
            merges.push(Merge {
                left,
                right,
                size: node.size,
                height: node.height,
                normalized_height: node.normalized_height,
                probability: node.probability,
            });
            if let Some(s) = node.stats {
                stats.push(s);
            }
        }
        let stats = (stats.len() == merges.len() && !merges.is_empty()).then_some(NodeStats { nodes: stats });
        Ok((Dendrogram { n_leaves: n, merges }, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_coauthor_graph;
    use crate::corpus::Document;

    fn two_leaf() -> Dendrogram {
        Dendrogram {
            n_leaves: 2,
            merges: vec![Merge {
                left: 0,
                right: 1,
                size: 2,
                height: 1.0,
                normalized_height: 1.0,
                probability: None,
            }],
        }
    }

    fn graph(pairs: &[(&str, &str)], singles: &[&str]) -> CoAuthorGraph {
        let mut docs: Vec<Document> = pairs
            .iter()
            .map(|(a, b)| Document {
                id: String::new(),
                text: String::new(),
                authors: vec![a.to_string(), b.to_string()],
                date: chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            })
            .collect();
        docs.extend(singles.iter().map(|a| Document {
            id: String::new(),
            text: String::new(),
            authors: vec![a.to_string()],
            date: chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
        }));
        build_coauthor_graph(&docs, None)
    }

    fn psi(author: &str, p: &[f64]) -> AuthorTopicDist {
        AuthorTopicDist {
            author: author.into(),
            psi: p.to_vec(),
        }
    }

    #[test]
    fn concentrated_authors() {
        let psis = [psi("a", &[1.0, 0.0]), psi("b", &[0.0, 1.0])];
        let s = node_statistics(
            &two_leaf(),
            &psis,
            &graph(&[("a", "b")], &[]),
            &HrgConfig::default(),
            Exec::Sequential,
        )
        .unwrap();
        let n = &s.nodes[0];
        assert_eq!((n.expected_left, n.expected_right, n.expected_edges), (1.0, 1.0, 1.0));
        assert_eq!(n.probability, 1.0);

        let s = node_statistics(
            &two_leaf(),
            &psis,
            &graph(&[], &["a", "b"]),
            &HrgConfig::default(),
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(s.nodes[0].expected_edges, 0.0);
        assert_eq!(s.nodes[0].probability, 0.0);
    }

    #[test]
    fn probability_ratio_and_degenerate_nodes() {
        let stat = |e: f64, l: f64, r: f64| NodeStat {
            expected_left: l,
            expected_right: r,
            cross_edges: e,
            same_leaf_edges: 0.0,
            expected_edges: e,
            probability: 0.0,
            degenerate: false,
            clamped: false,
        };
        let mut s = NodeStats {
            nodes: vec![
                stat(0.6, 2.0, 1.5),
                stat(1.0, 1.0, 1.0),
                stat(0.5, 0.0, 3.0),
                stat(3.0, 1.0, 1.0),
            ],
        };
        node_probabilities(&mut s);
        assert!((s.nodes[0].probability - 0.2).abs() < 1e-15);
        assert_eq!(s.nodes[1].probability, 1.0);
        assert!(s.nodes[2].degenerate);
        assert_eq!(s.nodes[2].probability, 0.0);
        assert!(s.nodes[3].clamped);
        assert_eq!(s.nodes[3].probability, 1.0);
    }

    #[test]
    fn author_distribution_examples() {
        let solo = vec!["x".to_string()];
        let trio = vec!["x".to_string(), "y".to_string(), "z".to_string()];
        let psis = author_topic_distributions(
            [DocTopics {
                authors: &solo,
                leaf_offset: 2,
                theta: &[0.7, 0.3],
            }],
            4,
        )
        .unwrap();
        assert_eq!(psis[0].psi, vec![0.0, 0.0, 0.7, 0.3]);

        let psis = author_topic_distributions(
            [DocTopics {
                authors: &trio,
                leaf_offset: 0,
                theta: &[1.0, 0.0],
            }],
            2,
        )
        .unwrap();
        assert_eq!(psis.len(), 3);
        assert_eq!(psis[1].psi, vec![1.0, 0.0]);

        // Two chunks: solo doc theta (0.5, 0.5) in chunk 0, three-author doc
        // theta (1, 0) in chunk 1. Raw mass (0.5, 0.5, 1/3, 0) / (4/3).
        let psis = author_topic_distributions(
            [
                DocTopics {
                    authors: &solo,
                    leaf_offset: 0,
                    theta: &[0.5, 0.5],
                },
                DocTopics {
                    authors: &trio,
                    leaf_offset: 2,
                    theta: &[1.0, 0.0],
                },
            ],
            4,
        )
        .unwrap();
        let want = [0.375, 0.375, 0.25, 0.0];
        for (g, w) in psis[0].psi.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn link_examples() {
        let d = two_leaf();
        let stats = NodeStats {
            nodes: vec![NodeStat {
                expected_left: 1.0,
                expected_right: 1.0,
                cross_edges: 0.5,
                same_leaf_edges: 0.0,
                expected_edges: 0.5,
                probability: 0.5,
                degenerate: false,
                clamped: false,
            }],
        };
        assert_eq!(link_probability(&d, &stats, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.5);
        let mut same = stats.clone();
        same.nodes[0].probability = 0.3;
        assert_eq!(link_probability(&d, &same, &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.3);
        assert!(link_probability(&d, &same, &[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn model_queries() {
        let d = two_leaf();
        let psis = vec![psi("a", &[1.0, 0.0]), psi("b", &[0.0, 1.0])];
        let stats = node_statistics(
            &d,
            &psis,
            &graph(&[("a", "b")], &[]),
            &HrgConfig::default(),
            Exec::Parallel,
        )
        .unwrap();
        let m = HrgModel {
            dendrogram: d,
            stats,
            authors: psis,
        };
        assert_eq!(m.link("A", " b").unwrap(), 1.0);
        assert!(m.link("a", "nobody").is_err());
        assert!(m.link("a", "A").is_err());
    }

    #[test]
    fn export_roundtrip() {
        let mut d = two_leaf();
        let psis = [psi("a", &[0.6, 0.4]), psi("b", &[0.1, 0.9])];
        let s = node_statistics(
            &d,
            &psis,
            &graph(&[("a", "b")], &[]),
            &HrgConfig::default(),
            Exec::Sequential,
        )
        .unwrap();
        apply_probabilities(&mut d, &s);
        let json = serde_json::to_string(&DendrogramExport::new(&d, Some(&s))).unwrap();
        let back: DendrogramExport = serde_json::from_str(&json).unwrap();
        let (d2, s2) = back.into_parts().unwrap();
        assert_eq!(d2, d);
        assert_eq!(s2.unwrap(), s);
    }
}
