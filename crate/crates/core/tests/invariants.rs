use std::collections::BTreeSet;

use chrono::NaiveDate;
use proptest::prelude::*;

use mstml::corpus::{
    build_coauthor_graph, chunk_by_time, preprocess, ChunkLength, Document, PreprocessConfig, TokenizedDoc, Vocabulary,
};
use mstml::dense::Matrix;
use mstml::embed::{diffuse_embed, diffusion_operator, DiffusionTime, EmbedConfig};
use mstml::geometry::{hellinger, knn_graph, normalize_heights, ward_agglomerate, DistanceMatrix};
use mstml::lda::{train_lda, LdaModel, ModelScope, SamplerConfig};
use mstml::metrics::{coherence, etsg_with, temporal_weights, tno, CoherenceMeasure, Eigensolver};
use mstml::relevancy::{filter_vocabulary, term_relevancy};
use mstml::Exec;

fn simplex(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 1e-6..1.0f64], dim).prop_map(|mut v| {
        if v.iter().all(|&x| x == 0.0) {
            v[0] = 1.0;
        }
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v
    })
}

/// Strictly positive entries: no ties, so the embedding is unique.
fn interior_simplex(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05..1.0f64, dim).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn points(max_n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(simplex(dim), 3..=max_n)
}

fn distances(pts: &[Vec<f64>]) -> DistanceMatrix {
    DistanceMatrix::from_fn(pts.len(), |i, j| hellinger(&pts[i], &pts[j]).unwrap())
}

fn day(offset: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + chrono::Duration::days(offset)
}

fn tokenized(offsets: &[i64]) -> Vec<TokenizedDoc> {
    offsets
        .iter()
        .enumerate()
        .map(|(i, &o)| TokenizedDoc {
            id: format!("d{i}"),
            authors: vec!["a".into()],
            date: day(o),
            tokens: vec![0, 1],
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chunks_partition_documents(offsets in prop::collection::vec(0i64..400, 1..60), months in 1u32..5) {
        let n = offsets.len();
        let corpus = chunk_by_time(tokenized(&offsets), ChunkLength::Months(months)).unwrap();
        prop_assert_eq!(corpus.sizes().iter().sum::<usize>(), n);
        let mut seen = vec![0; n];
        for c in &corpus.chunks {
            for &d in &c.docs {
                seen[d] += 1;
                prop_assert!(c.interval.contains(corpus.docs[d].date));
                prop_assert_eq!(corpus.base_chunk[d], c.index);
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        for pair in corpus.chunks.windows(2) {
            prop_assert_eq!(pair[0].interval.end, pair[1].interval.start);
        }
    }

    #[test]
    fn coauthor_graph_is_witnessed(lists in prop::collection::vec(prop::collection::btree_set(0u8..8, 1..4), 1..20)) {
        let docs: Vec<Document> = lists
            .iter()
            .enumerate()
            .map(|(i, a)| Document {
                id: format!("d{i}"),
                text: String::new(),
                authors: a.iter().map(|x| format!("author {x}")).collect(),
                date: day(i as i64),
            })
            .collect();
        let g = build_coauthor_graph(&docs, None);
        for &(u, v) in g.edges.keys() {
            prop_assert!(u < v);
            prop_assert!(g.has_edge(v, u));
            let (nu, nv) = (&g.authors[u as usize], &g.authors[v as usize]);
            prop_assert!(docs.iter().any(|d| d.authors.contains(nu) && d.authors.contains(nv)));
        }
        for d in &docs {
            for a in &d.authors {
                for b in &d.authors {
                    if a != b {
                        prop_assert!(g.has_edge(g.index_of(a).unwrap(), g.index_of(b).unwrap()));
                    }
                }
            }
        }
    }

    #[test]
    fn hellinger_metric_axioms(p in simplex(9), q in simplex(9), r in simplex(9)) {
        let pq = hellinger(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!((pq - hellinger(&q, &p).unwrap()).abs() <= 1e-12);
        prop_assert!(pq <= hellinger(&p, &r).unwrap() + hellinger(&r, &q).unwrap() + 1e-9);
        prop_assert!(hellinger(&p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn ward_heights_monotone_and_cuts_nested(pts in points(24, 6)) {
        let mut d = ward_agglomerate(&pts).unwrap();
        normalize_heights(&mut d);
        prop_assert_eq!(d.merges.len(), pts.len() - 1);
        let n = d.n_leaves;
        for m in &d.merges {
            prop_assert!((0.0..=1.0).contains(&m.normalized_height));
            for c in [m.left, m.right] {
                if c >= n {
                    prop_assert!(d.merges[c - n].height <= m.height + 1e-12);
                }
            }
        }
        let top = d.merges.iter().map(|m| m.normalized_height).fold(0.0, f64::max);
        prop_assert!((top - 1.0).abs() <= 1e-12);
        let mut prev = usize::MAX;
        for i in 0..=20 {
            let c = d.cut(i as f64 / 20.0).num_clusters;
            prop_assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn knn_matches_brute_force(pts in points(40, 5), k in 1usize..6) {
        let n = pts.len();
        let k = k.min(n - 1);
        let d = distances(&pts);
        let g = knn_graph(&d, k, Exec::Parallel).unwrap();
        for i in 0..n {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| d.get(i, a).total_cmp(&d.get(i, b)).then(a.cmp(&b)));
            order.truncate(k);
            prop_assert_eq!(&g.nearest[i], &order);
            prop_assert!(!g.has_edge(i, i));
            for &j in &order {
                prop_assert!(g.has_edge(i, j) && g.has_edge(j, i));
            }
        }
        let labels = g.component_labels();
        for (a, b) in g.edges() {
            prop_assert_eq!(labels[a], labels[b]);
        }
    }

    #[test]
    fn tno_bounded_and_monotone(pts in points(25, 4), seed_labels in prop::collection::vec(0usize..6, 25), k in 1usize..5) {
        let n = pts.len();
        let d = distances(&pts);
        let labels = &seed_labels[..n];
        let k = k.min(n - 1);
        let mut prev = 0.0;
        for w in 0..6 {
            let t = tno(&d, labels, k, w, Exec::Sequential).unwrap();
            prop_assert!((0.0..=1.0).contains(&t));
            prop_assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn temporal_weights_well_formed(pts in points(20, 4), raw_labels in prop::collection::vec(0usize..5, 20), tau in 0.5f64..50.0) {
        let n = pts.len();
        let g = knn_graph(&distances(&pts), 2.min(n - 1), Exec::Parallel).unwrap();
        let labels = &raw_labels[..n];
        let w = temporal_weights(&g, labels, tau, 1e-9).unwrap();
        prop_assert_eq!(w.max_abs_asymmetry(), 0.0);
        for i in 0..n {
            prop_assert_eq!(w[(i, i)], 0.0);
            for j in 0..n {
                if i != j {
                    if g.has_edge(i, j) {
                        prop_assert!(w[(i, j)] > 0.0 && w[(i, j)] <= 1.0);
                    } else {
                        prop_assert_eq!(w[(i, j)], 1e-9);
                    }
                }
            }
        }
        let r = etsg_with(&g, labels, tau, 1e-9, Eigensolver::Dense, Exec::Parallel).unwrap();
        prop_assert!(r.lambda2 >= 0.0);
        prop_assert!(r.lambda1.abs() <= 1e-8);
    }

    #[test]
    fn coherence_ignores_topic_order(
        docs in prop::collection::vec(prop::collection::vec(0u32..12, 1..15), 1..12),
        topic in prop::collection::btree_set(0u32..12, 2..6),
        window in 2usize..8,
    ) {
        let forward: Vec<u32> = topic.iter().copied().collect();
        let backward: Vec<u32> = forward.iter().rev().copied().collect();
        for m in [CoherenceMeasure::Uci, CoherenceMeasure::Npmi, CoherenceMeasure::Cv] {
            let a = coherence(std::slice::from_ref(&forward), &docs, m, window).unwrap().mean;
            let b = coherence(std::slice::from_ref(&backward), &docs, m, window).unwrap().mean;
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn diffusion_rows_stochastic(pts in points(16, 5), t in 1u32..12) {
        let d = distances(&pts);
        let knn = 3.min(pts.len() - 1);
        let p = diffusion_operator(&d, knn, Exec::Parallel).pow(t, Exec::Parallel);
        for i in 0..p.rows() {
            prop_assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.row(i).iter().all(|&x| x >= 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lda_estimators_are_simplices(
        docs in prop::collection::vec(prop::collection::vec(0u32..15, 1..20), 2..10),
        k in 2usize..5,
        seed in any::<u64>(),
    ) {
        let refs: Vec<&[u32]> = docs.iter().map(Vec::as_slice).collect();
        let cfg = SamplerConfig { iters: 40, burn_in: 10, sample_lag: 5, ..SamplerConfig::default() };
        let tokens: usize = docs.iter().map(Vec::len).sum();
        if k > tokens {
            prop_assert!(train_lda(&refs, 15, k, &cfg, seed, ModelScope::Global).is_err());
        }
        let k = k.min(tokens);
        let m = train_lda(&refs, 15, k, &cfg, seed, ModelScope::Global).unwrap();
        for r in 0..m.k {
            let row = m.topic(r);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        for j in 0..m.num_docs() {
            prop_assert!((m.theta.row(j).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        let again = train_lda(&refs, 15, k, &cfg, seed, ModelScope::Global).unwrap();
        prop_assert_eq!(m.phi.as_slice(), again.phi.as_slice());
    }

    #[test]
    fn filtering_monotone_in_keep(rows in prop::collection::vec(simplex(30), 2..5), keep in 1usize..15) {
        let k = rows.len();
        let model = LdaModel {
            k,
            vocab_size: 30,
            alpha: 1.0,
            beta: 1.0,
            seed: 0,
            scope: ModelScope::Global,
            phi: Matrix::from_fn(k, 30, |r, c| rows[r][c]),
            theta: Matrix::zeros(0, k),
        };
        let marginals = vec![1.0 / 30.0; 30];
        let vocab = Vocabulary::new((0..30).map(|i| format!("w{i:02}")).collect());
        let table = term_relevancy(&model, &marginals, 0.4).unwrap();
        let small: BTreeSet<u32> = filter_vocabulary(&table, &vocab, keep).unwrap().old_ids.into_iter().collect();
        let large: BTreeSet<u32> = filter_vocabulary(&table, &vocab, keep + 3).unwrap().old_ids.into_iter().collect();
        prop_assert!(small.is_subset(&large));
    }

    #[test]
    fn embedding_permutation_invariant(pts in prop::collection::vec(interior_simplex(5), 5..=12), rot in 1usize..11) {
        let n = pts.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
        let cfg = EmbedConfig { knn_k: 3, t: DiffusionTime::Fixed(4), ..EmbedConfig::default() };
        let a = diffuse_embed(&distances(&pts), &cfg, Exec::Parallel).unwrap();
        let b = diffuse_embed(&distances(&shuffled), &cfg, Exec::Parallel).unwrap();
        prop_assume!(!a.degenerate);
        let scale_a = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a.distance(i, j)).fold(0.0, f64::max);
        let scale_b = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| b.distance(i, j)).fold(0.0, f64::max);
        prop_assume!(scale_a > 1e-9);
        for i in 0..n {
            for j in 0..n {
                let x = a.distance(perm[i], perm[j]) / scale_a;
                let y = b.distance(i, j) / scale_b;
                prop_assert!((x - y).abs() <= 1e-6, "({i},{j}): {x} vs {y}");
            }
        }
    }
}

#[test]
fn tokenization_is_deterministic() {
    let docs: Vec<Document> = (0..30)
        .map(|i| Document {
            id: format!("d{i}"),
            text: format!("graph spectral topic {} model drift topic graph w{}", i % 4, i % 7),
            authors: vec!["x".into()],
            date: day(i),
        })
        .collect();
    let cfg = PreprocessConfig {
        stopwords: BTreeSet::new(),
        min_count: 2,
    };
    let (v1, d1, _) = preprocess(&docs, &cfg, Exec::Parallel).unwrap();
    let (v2, d2, _) = preprocess(&docs, &cfg, Exec::Sequential).unwrap();
    assert_eq!(v1.terms(), v2.terms());
    assert_eq!(d1, d2);
    assert!(d1.iter().flat_map(|d| &d.tokens).all(|&t| (t as usize) < v1.len()));
    assert_eq!(v1.term(0), "graph");
}
