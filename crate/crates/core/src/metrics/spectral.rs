//! Exponential temporal spectral gap: the algebraic connectivity of the k-NN
//! topic graph after re-weighting edges by time separation.
//!
//! ```text
//! w_ij = exp(-|t_i - t_j| / tau)   (i, j) an edge
//!      = eps                       otherwise, i != j
//!      = 0                         i == j
//! L = I - D^{-1/2} W D^{-1/2},  ETSG = lambda_2(L)
//! ```

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{symmetric_eigen, Matrix};
use crate::error::{Error, Result};
use crate::geometry::KnnGraph;
use crate::par::Exec;

/// Largest graph handled by the full dense eigendecomposition under
/// [`Eigensolver::Auto`].
pub const DENSE_SOLVER_LIMIT: usize = 2000;
const SOLVER_TOL: f64 = 1e-10;
const LAMBDA1_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eigensolver {
    #[default]
    Auto,
    Dense,
    /// Lanczos with full reorthogonalization on the deflated operator.
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtsgResult {
    pub lambda1: f64,
    pub lambda2: f64,
}

pub fn temporal_weights(graph: &KnnGraph, labels: &[usize], tau: f64, eps: f64) -> Result<Matrix> {
    let n = graph.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if tau.is_nan() || tau <= 0.0 || eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidInput("ETSG needs tau > 0 and eps > 0".into()));
    }
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[(i, j)] = eps;
            }
        }
    }
    for (i, j) in graph.edges() {
        let v = (-(labels[i].abs_diff(labels[j]) as f64) / tau).exp();
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    Ok(w)
}

/// `I - D^{-1/2} W D^{-1/2}`. Panics on a zero-degree vertex.
pub fn normalized_laplacian(w: &Matrix) -> Matrix {
    let inv_sqrt = inv_sqrt_degrees(w);
    let n = w.rows();
    Matrix::from_fn(n, n, |i, j| {
        let off = inv_sqrt[i] * w[(i, j)] * inv_sqrt[j];
        if i == j {
            1.0 - off
        } else {
            -off
        }
    })
}

fn inv_sqrt_degrees(w: &Matrix) -> Vec<f64> {
    (0..w.rows())
        .map(|i| {
            let d: f64 = w.row(i).iter().sum();
            assert!(d > 0.0, "vertex {i} has zero degree");
            1.0 / d.sqrt()
        })
        .collect()
}

pub fn etsg(graph: &KnnGraph, labels: &[usize], tau: f64, eps: f64) -> Result<f64> {
    etsg_with(graph, labels, tau, eps, Eigensolver::Auto, Exec::default()).map(|r| r.lambda2)
}

pub fn etsg_with(
    graph: &KnnGraph,
    labels: &[usize],
    tau: f64,
    eps: f64,
    solver: Eigensolver,
    exec: Exec,
) -> Result<EtsgResult> {
    let n = graph.len();
    if n < 2 {
        return Err(Error::InvalidInput("ETSG needs at least 2 vertices".into()));
    }
    let w = temporal_weights(graph, labels, tau, eps)?;
    let dense = match solver {
        Eigensolver::Auto => n <= DENSE_SOLVER_LIMIT,
        Eigensolver::Dense => true,
        Eigensolver::Iterative => false,
    };
    let result = if dense {
        let eig = symmetric_eigen(&normalized_laplacian(&w));
        EtsgResult {
            lambda1: eig.values[0],
            lambda2: eig.values[1],
        }
    } else {
        lanczos_lambda2(&w, exec)
    };
    if result.lambda1.abs() > LAMBDA1_TOL {
        return Err(Error::Internal(format!(
            "smallest Laplacian eigenvalue {} is not zero",
            result.lambda1
        )));
    }
    Ok(EtsgResult {
        lambda1: result.lambda1,
        lambda2: result.lambda2.max(0.0),
    })
}

/// ETSG under `trials` seeded permutations of the time labels.
pub fn etsg_shuffled_null(
    graph: &KnnGraph,
    labels: &[usize],
    tau: f64,
    eps: f64,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<f64>> {
    exec.map_range(trials, |i| {
        let mut shuffled = labels.to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(crate::lda::derive_seed(seed, i as u64));
        shuffled.shuffle(&mut rng);
        etsg_with(graph, &shuffled, tau, eps, Eigensolver::Auto, Exec::Sequential).map(|r| r.lambda2)
    })
    .into_iter()
    .collect()
}

/// Second-smallest eigenvalue of the normalized Laplacian via the largest
/// eigenvalue of `I + D^{-1/2} W D^{-1/2}` restricted to the complement of
/// its known top eigenvector `sqrt(d)`.
fn lanczos_lambda2(w: &Matrix, exec: Exec) -> EtsgResult {
    let n = w.rows();
    let inv_sqrt = inv_sqrt_degrees(w);
    let mut top: Vec<f64> = inv_sqrt.iter().map(|x| 1.0 / x).collect();
    let norm = dot(&top, &top).sqrt();
    top.iter_mut().for_each(|x| *x /= norm);

    let apply = |x: &[f64]| -> Vec<f64> {
        let scaled: Vec<f64> = x.iter().zip(&inv_sqrt).map(|(a, b)| a * b).collect();
        let mut y = exec.map_range(n, |i| inv_sqrt[i] * dot(w.row(i), &scaled) + x[i]);
        deflate(&mut y, &top);
        y
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    deflate(&mut q, &top);
    let nq = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= nq);

    let max_steps = n.saturating_sub(1).clamp(1, 300);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut theta = 0.0;
    for j in 0..max_steps {
        let mut v = apply(&basis[j]);
        let a = dot(&basis[j], &v);
        alphas.push(a);
        for b in &basis {
            let c = dot(b, &v);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        deflate(&mut v, &top);
        let beta = dot(&v, &v).sqrt();

        let m = alphas.len();
        let t = Matrix::from_fn(m, m, |r, c| {
            if r == c {
                alphas[r]
            } else if r + 1 == c {
                betas[r]
            } else if c + 1 == r {
                betas[c]
            } else {
                0.0
            }
        });
        let eig = symmetric_eigen(&t);
        theta = eig.values[m - 1];
        let residual = beta * eig.vectors[(m - 1, m - 1)].abs();
        if residual < SOLVER_TOL || beta < 1e-14 {
            break;
        }
        betas.push(beta);
        basis.push(v.into_iter().map(|x| x / beta).collect());
    }
    EtsgResult {
        lambda1: 0.0,
        lambda2: 2.0 - theta,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn deflate(v: &mut [f64], unit: &[f64]) {
    let c = dot(v, unit);
    v.iter_mut().zip(unit).for_each(|(x, u)| *x -= c * u);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize) -> KnnGraph {
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        KnnGraph::from_edges(n, &edges)
    }

    #[test]
    fn complete_graph_closed_form() {
        for n in [3, 5, 8] {
            let r = etsg_with(
                &complete(n),
                &vec![0; n],
                36.0,
                1e-12,
                Eigensolver::Dense,
                Exec::Sequential,
            )
            .unwrap();
            assert!((r.lambda2 - n as f64 / (n - 1) as f64).abs() < 1e-9);
            assert!(r.lambda1.abs() < 1e-8);
        }
    }

    #[test]
    fn weights_follow_kernel() {
        let g = KnnGraph::from_edges(3, &[(0, 1)]);
        let w = temporal_weights(&g, &[0, 2, 9], 4.0, 1e-9).unwrap();
        assert_eq!(w[(0, 1)], (-0.5f64).exp());
        assert_eq!(w[(1, 0)], w[(0, 1)]);
        assert_eq!(w[(0, 2)], 1e-9);
        assert_eq!(w[(2, 2)], 0.0);
        assert!(temporal_weights(&g, &[0, 0, 0], 0.0, 1e-9).is_err());
        assert!(temporal_weights(&g, &[0, 0, 0], 1.0, 0.0).is_err());
    }

    #[test]
    fn lanczos_matches_dense() {
        let n = 60;
        let mut edges = Vec::new();
        for i in 0..n {
            edges.push((i, (i + 1) % n));
            edges.push((i, (i * 7 + 3) % n));
        }
        let g = KnnGraph::from_edges(n, &edges);
        let labels: Vec<usize> = (0..n).map(|i| i / 6).collect();
        let dense = etsg_with(&g, &labels, 2.0, 1e-9, Eigensolver::Dense, Exec::Sequential).unwrap();
        let iter = etsg_with(&g, &labels, 2.0, 1e-9, Eigensolver::Iterative, Exec::Parallel).unwrap();
        assert!((dense.lambda2 - iter.lambda2).abs() < 1e-8, "{dense:?} vs {iter:?}");
    }

    #[test]
    fn large_tau_approaches_unweighted() {
        let g = KnnGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let labels = [0, 3, 1, 7, 2];
        let slow = etsg(&g, &labels, 1e12, 1e-9).unwrap();
        let flat = etsg(&g, &[0; 5], 36.0, 1e-9).unwrap();
        assert!((slow - flat).abs() < 1e-9);
    }
}
