use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{knn::nearest_of, DistanceMatrix, KnnGraph};
use crate::par::Exec;

/// Topic neighbourhood overlap: the mean over topics of the fraction of
/// their `k` nearest topics whose time label is within `w`.
pub fn tno(d: &DistanceMatrix, labels: &[usize], k: usize, w: usize, exec: Exec) -> Result<f64> {
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidInput("TNO needs at least 2 topics".into()));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if k < 1 || k >= n {
        return Err(Error::InvalidInput(format!(
            "TNO needs 1 <= k < n, got k = {k}, n = {n}"
        )));
    }
    let per_topic = exec.map_range(n, |i| {
        let hits = nearest_of(d, i, k)
            .into_iter()
            .filter(|&j| labels[i].abs_diff(labels[j]) <= w)
            .count();
        hits as f64 / k as f64
    });
    Ok(per_topic.iter().sum::<f64>() / n as f64)
}

/// TNO under `trials` random permutations of the time labels. Trial `i`
/// shuffles with its own seeded stream, so the values do not depend on the
/// execution mode.
pub fn tno_shuffled_null(
    d: &DistanceMatrix,
    labels: &[usize],
    k: usize,
    w: usize,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<f64>> {
    exec.map_range(trials, |i| {
        let mut shuffled = labels.to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(crate::lda::derive_seed(seed, i as u64));
        shuffled.shuffle(&mut rng);
        tno(d, &shuffled, k, w, Exec::Sequential)
    })
    .into_iter()
    .collect()
}

/// Number of connected components of the symmetrized k-NN graph.
pub fn ncomp(graph: &KnnGraph) -> usize {
    graph.num_components()
}
