use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::par::Exec;

const SIMPLEX_TOL: f64 = 1e-6;

/// Elementwise square roots of `p` after renormalizing it onto the simplex.
///
/// Rejects negative entries and vectors whose mass is off by more than 1e-6.
pub fn sqrt_coordinates(p: &[f64]) -> Result<Vec<f64>> {
    if p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidInput(
            "probability vector has negative or non-finite entries".into(),
        ));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidInput(format!(
            "probability vector sums to {total}, not 1"
        )));
    }
    Ok(p.iter().map(|&x| (x / total).sqrt()).collect())
}

fn from_sqrt(a: &[f64], b: &[f64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss.sqrt() * FRAC_1_SQRT_2).min(1.0)
}

/// Hellinger distance `(1/sqrt 2) * ||sqrt p - sqrt q||_2`, in `[0, 1]`.
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(from_sqrt(&sqrt_coordinates(p)?, &sqrt_coordinates(q)?))
}

/// Symmetric matrix of pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: Matrix,
}

impl DistanceMatrix {
    /// Panics unless `d` is square, symmetric and zero on the diagonal.
    pub fn new(d: Matrix) -> Self {
        assert!(d.is_square(), "distance matrix must be square");
        assert!(d.max_abs_asymmetry() == 0.0, "distance matrix must be symmetric");
        assert!(
            (0..d.rows()).all(|i| d[(i, i)] == 0.0),
            "distance matrix needs a zero diagonal"
        );
        DistanceMatrix { d }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut d = Matrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let x = f(i, j);
                d[(i, j)] = x;
                d[(j, i)] = x;
            }
        }
        DistanceMatrix { d }
    }

    pub fn len(&self) -> usize {
        self.d.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.d.rows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.d.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.d
    }

    /// Header row of leaf ids, then one row per leaf.
    pub fn to_csv(&self) -> String {
        let n = self.len();
        let mut s = String::from("leaf");
        for j in 0..n {
            let _ = write!(s, ",{j}");
        }
        s.push('\n');
        for i in 0..n {
            let _ = write!(s, "{i}");
            for x in self.row(i) {
                let _ = write!(s, ",{x}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = || Error::Data("malformed distance matrix csv".into());
        let mut lines = text.lines();
        let n = lines.next().ok_or_else(bad)?.split(',').count() - 1;
        let mut data = Vec::with_capacity(n * n);
        for line in lines.by_ref().take(n) {
            let mut fields = line.split(',').skip(1);
            for _ in 0..n {
                data.push(fields.next().ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?);
            }
        }
        if data.len() != n * n {
            return Err(bad());
        }
        let d = Matrix::from_vec(n, n, data);
        if d.max_abs_asymmetry() != 0.0 {
            return Err(bad());
        }
        Ok(DistanceMatrix { d })
    }
}

/// Full Hellinger distance matrix; rows are computed in parallel.
pub fn pairwise_hellinger<T: AsRef<[f64]> + Sync>(points: &[T], exec: Exec) -> Result<DistanceMatrix> {
    let roots: Vec<Vec<f64>> = points
        .iter()
        .map(|p| sqrt_coordinates(p.as_ref()))
        .collect::<Result<_>>()?;
    if let Some(bad) = roots.iter().find(|r| r.len() != roots[0].len()) {
        return Err(Error::DimensionMismatch {
            expected: roots[0].len(),
            got: bad.len(),
        });
    }
    let n = roots.len();
    let upper: Vec<Vec<f64>> = exec.map_range(n, |i| ((i + 1)..n).map(|j| from_sqrt(&roots[i], &roots[j])).collect());
    Ok(DistanceMatrix::from_fn(n, |i, j| upper[i][j - i - 1]))
}

impl AsRef<[f64]> for crate::lda::TopicVector {
    fn as_ref(&self) -> &[f64] {
        &self.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simplex(raw: Vec<f64>) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn worked_values() {
        assert_eq!(hellinger(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((hellinger(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        let want = FRAC_1_SQRT_2 * ((0.5f64.sqrt() - 1.0).powi(2) + 0.5).sqrt();
        let got = hellinger(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.5412).abs() < 1e-4);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            hellinger(&[1.0], &[0.5, 0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(hellinger(&[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(hellinger(&[-0.1, 1.1], &[0.5, 0.5]).is_err());
        // within tolerance: renormalized
        assert!(hellinger(&[0.5, 0.5000001], &[0.5, 0.5]).unwrap() < 1e-6);
    }

    #[test]
    fn pairwise_small_cases() {
        let d = pairwise_hellinger(&[vec![0.2, 0.8], vec![0.2, 0.8]], Exec::Sequential).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
        let onehot: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        let d = pairwise_hellinger(&onehot, Exec::Parallel).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn csv_roundtrip() {
        let pts = vec![
            simplex(vec![1.0, 2.0, 3.0]),
            simplex(vec![3.0, 1.0, 1.0]),
            simplex(vec![1.0, 1.0, 1.0]),
        ];
        let d = pairwise_hellinger(&pts, Exec::Sequential).unwrap();
        assert_eq!(DistanceMatrix::from_csv(&d.to_csv()).unwrap(), d);
    }

    proptest! {
        #[test]
        fn pairwise_matches_scalar_and_modes_agree(raw in prop::collection::vec(prop::collection::vec(0.001f64..1.0, 7), 2..10)) {
            let pts: Vec<Vec<f64>> = raw.into_iter().map(simplex).collect();
            let seq = pairwise_hellinger(&pts, Exec::Sequential).unwrap();
            let par = pairwise_hellinger(&pts, Exec::Parallel).unwrap();
            prop_assert_eq!(&seq, &par);
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    let want = if i == j { 0.0 } else { hellinger(&pts[i], &pts[j]).unwrap() };
                    prop_assert_eq!(seq.get(i, j), want);
                }
            }
        }

        #[test]
        fn metric_axioms(a in prop::collection::vec(0.0f64..1.0, 5), b in prop::collection::vec(0.0f64..1.0, 5), c in prop::collection::vec(0.0f64..1.0, 5)) {
            prop_assume!(a.iter().sum::<f64>() > 1e-3 && b.iter().sum::<f64>() > 1e-3 && c.iter().sum::<f64>() > 1e-3);
            let (a, b, c) = (simplex(a), simplex(b), simplex(c));
            let ab = hellinger(&a, &b).unwrap();
            let ba = hellinger(&b, &a).unwrap();
            let bc = hellinger(&b, &c).unwrap();
            let ac = hellinger(&a, &c).unwrap();
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
