use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::hellinger::sqrt_coordinates;
use crate::error::{Error, Result};

/// One agglomeration step. Node ids: leaves are `0..n`, the merge at index
/// `i` creates node `n + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub size: usize,
    /// Ward merge distance.
    pub height: f64,
    /// `height / max height`, in `[0, 1]`.
    pub normalized_height: f64,
    /// Internal-node connection probability, once assigned.
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

/// Ward agglomeration in square-root coordinates, where Euclidean distance
/// is `sqrt 2` times the Hellinger distance.
///
/// Squared merge distances follow the Lance–Williams recurrence
///
/// ```text
/// d2(k, a+b) = ((n_a + n_k) d2(k, a) + (n_b + n_k) d2(k, b) - n_k d2(a, b)) / (n_a + n_b + n_k)
/// ```
///
/// and the reported height is `sqrt(d2)`. The pair with the smallest
/// distance merges first; ties go to the smallest `(min id, max id)`.
pub fn ward_agglomerate<T: AsRef<[f64]>>(points: &[T]) -> Result<Dendrogram> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "agglomeration needs at least 2 points, got {n}"
        )));
    }
    let roots: Vec<Vec<f64>> = points
        .iter()
        .map(|p| sqrt_coordinates(p.as_ref()))
        .collect::<Result<_>>()?;
    if roots.iter().any(|r| r.len() != roots[0].len()) {
        return Err(Error::InvalidInput("topic vectors differ in length".into()));
    }

    // Squared distances indexed by slot; a merged cluster reuses its left slot.
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = roots[i].iter().zip(&roots[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d2[i * n + j] = s;
            d2[j * n + i] = s;
        }
    }
    // (cluster id, slot, size, height), ascending by id.
    let mut active: Vec<(usize, usize, usize, f64)> = (0..n).map(|i| (i, i, 1, 0.0)).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for x in 0..active.len() {
            let sx = active[x].1;
            for y in (x + 1)..active.len() {
                let v = d2[sx * n + active[y].1];
                if v < best.0 {
                    best = (v, x, y);
                }
            }
        }
        let (dist2, x, y) = best;
        let (id_a, slot_a, size_a, h_a) = active[x];
        let (id_b, slot_b, size_b, h_b) = active[y];

        for &(_, slot_k, size_k, _) in &active {
            if slot_k == slot_a || slot_k == slot_b {
                continue;
            }
            let (na, nb, nk) = (size_a as f64, size_b as f64, size_k as f64);
            let upd = ((na + nk) * d2[slot_k * n + slot_a] + (nb + nk) * d2[slot_k * n + slot_b] - nk * dist2)
                / (na + nb + nk);
            let upd = upd.max(0.0);
            d2[slot_k * n + slot_a] = upd;
            d2[slot_a * n + slot_k] = upd;
        }

        let height = dist2.max(0.0).sqrt().max(h_a).max(h_b);
        merges.push(Merge {
            left: id_a,
            right: id_b,
            size: size_a + size_b,
            height,
            normalized_height: 0.0,
            probability: None,
        });
        active.remove(y);
        active.remove(x);
        active.push((n + step, slot_a, size_a + size_b, height));
    }

    let mut dendro = Dendrogram { n_leaves: n, merges };
    normalize_heights(&mut dendro);
    Ok(dendro)
}

/// Divides every height by the largest one; all zeros when that is 0.
pub fn normalize_heights(d: &mut Dendrogram) {
    let max = d.merges.iter().map(|m| m.height).fold(0.0, f64::max);
    for m in &mut d.merges {
        m.normalized_height = if max > 0.0 { m.height / max } else { 0.0 };
    }
}

/// Leaf labeling from a dendrogram cut.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaTopics {
    pub cut_height: String,
    /// Cluster per leaf, numbered in order of each cluster's smallest leaf.
    pub labels: Vec<usize>,
    pub num_clusters: usize,
}

impl MetaTopics {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&l| self.labels[l] == cluster).collect()
    }
}

impl Dendrogram {
    pub fn num_nodes(&self) -> usize {
        self.n_leaves + self.merges.len()
    }

    pub fn root(&self) -> usize {
        self.num_nodes() - 1
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node < self.n_leaves
    }

    pub fn merge(&self, node: usize) -> Option<&Merge> {
        node.checked_sub(self.n_leaves).and_then(|i| self.merges.get(i))
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        self.merge(node).map(|m| (m.left, m.right))
    }

    pub fn normalized_height(&self, node: usize) -> f64 {
        self.merge(node).map_or(0.0, |m| m.normalized_height)
    }

    /// Parent of every node; the root maps to itself.
    pub fn parents(&self) -> Vec<usize> {
        let mut p = vec![self.root(); self.num_nodes()];
        for (i, m) in self.merges.iter().enumerate() {
            p[m.left] = self.n_leaves + i;
            p[m.right] = self.n_leaves + i;
        }
        p
    }

    /// Leaves under `node`, ascending.
    pub fn leaves_under(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            match self.children(v) {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => out.push(v),
            }
        }
        out.sort_unstable();
        out
    }

    /// Maximal subtrees whose normalized height is at most `h`.
    pub fn cut(&self, h: f64) -> MetaTopics {
        let mut roots = Vec::new();
        let mut stack = vec![self.root()];
        while let Some(v) = stack.pop() {
            if self.normalized_height(v) <= h {
                roots.push(v);
            } else if let Some((l, r)) = self.children(v) {
                stack.push(l);
                stack.push(r);
            }
        }
        let mut clusters: Vec<Vec<usize>> = roots.iter().map(|&r| self.leaves_under(r)).collect();
        clusters.sort_by_key(|c| c[0]);
        let mut labels = vec![0; self.n_leaves];
        for (c, leaves) in clusters.iter().enumerate() {
            for &l in leaves {
                labels[l] = c;
            }
        }
        MetaTopics {
            cut_height: format!("{h}"),
            labels,
            num_clusters: clusters.len(),
        }
    }

    /// Newick string. Leaves are `L<id>`, internal nodes `m<id>`; branch
    /// lengths are differences of normalized heights.
    pub fn to_newick(&self) -> String {
        let mut s = String::new();
        self.write_newick(self.root(), None, &mut s);
        s.push(';');
        s
    }

    fn write_newick(&self, node: usize, parent_h: Option<f64>, s: &mut String) {
        let h = self.normalized_height(node);
        match self.children(node) {
            Some((l, r)) => {
                s.push('(');
                self.write_newick(l, Some(h), s);
                s.push(',');
                self.write_newick(r, Some(h), s);
                let _ = write!(s, ")m{node}");
            }
            None => {
                let _ = write!(s, "L{node}");
            }
        }
        if let Some(ph) = parent_h {
            let _ = write!(s, ":{}", ph - h);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dendro(heights: &[f64]) -> Dendrogram {
        // caterpillar: ((0,1),2),3 ...
        let n = heights.len() + 1;
        let merges = heights
            .iter()
            .enumerate()
            .map(|(i, &h)| Merge {
                left: if i == 0 { 0 } else { n + i - 1 },
                right: i + 1,
                size: i + 2,
                height: h,
                normalized_height: 0.0,
                probability: None,
            })
            .collect();
        Dendrogram { n_leaves: n, merges }
    }

    fn normalized(heights: &[f64]) -> Vec<f64> {
        let mut d = dendro(heights);
        normalize_heights(&mut d);
        d.merges.iter().map(|m| m.normalized_height).collect()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalized(&[0.2, 0.5, 1.0]), vec![0.2, 0.5, 1.0]);
        assert_eq!(normalized(&[1.0, 2.0, 4.0]), vec![0.25, 0.5, 1.0]);
        assert_eq!(normalized(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn identical_pair_merges_at_zero() {
        let d = ward_agglomerate(&[vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        assert_eq!(d.merges.len(), 1);
        assert_eq!(d.merges[0].height, 0.0);
        assert_eq!(d.merges[0].normalized_height, 0.0);
    }

    #[test]
    fn three_point_lance_williams_by_hand() {
        // In sqrt-coordinates d(0,1) = d(0,2) < d(1,2); the tie goes to (0, 1).
        let p0 = vec![1.0, 0.0, 0.0];
        let p1 = vec![0.5, 0.5, 0.0];
        let p2 = vec![0.5, 0.0, 0.5];
        let s = |p: &Vec<f64>| p.iter().map(|x: &f64| x.sqrt()).collect::<Vec<_>>();
        let sq = |a: &Vec<f64>, b: &Vec<f64>| s(a).iter().zip(s(b)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let (d01, d02, d12) = (sq(&p0, &p1), sq(&p0, &p2), sq(&p1, &p2));
        assert_eq!(d01, d02);
        assert!(d01 < d12);
        let d = ward_agglomerate(&[p0, p1, p2]).unwrap();
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
        assert!((d.merges[0].height - d01.sqrt()).abs() < 1e-15);
        // d2(2, {0,1}) = (2 d02 + 2 d12 - d01) / 3
        let second = ((2.0 * d02 + 2.0 * d12 - d01) / 3.0).sqrt();
        assert_eq!((d.merges[1].left, d.merges[1].right), (2, 3));
        assert!((d.merges[1].height - second).abs() < 1e-15);
        assert_eq!(d.merges[1].normalized_height, 1.0);
    }

    #[test]
    fn needs_two_points() {
        assert!(ward_agglomerate(&[vec![1.0]]).is_err());
    }

    #[test]
    fn cuts() {
        let d = dendro(&[0.1, 0.4, 1.0]);
        let mut d = d;
        normalize_heights(&mut d);
        assert_eq!(d.cut(1.0).num_clusters, 1);
        assert_eq!(d.cut(0.0).num_clusters, 4);
        let mid = d.cut(0.5);
        assert_eq!(mid.labels, vec![0, 0, 0, 1]);
        assert_eq!(mid.members(1), vec![3]);
    }

    #[test]
    fn newick_and_parents() {
        let mut d = dendro(&[1.0, 2.0]);
        normalize_heights(&mut d);
        assert_eq!(d.to_newick(), "((L0:0.5,L1:0.5)m3:0.5,L2:1)m4;");
        assert_eq!(d.parents(), vec![3, 3, 4, 4, 4]);
        assert_eq!(d.leaves_under(3), vec![0, 1]);
    }
}
