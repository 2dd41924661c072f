//! Agglomerative clustering with average linkage.

use super::{euclidean, ClusterError, ClusterPartition, Engine};

/// Merge clusters bottom-up until `k` remain. Distances between clusters are
/// the mean pairwise Euclidean distance, maintained with the Lance-Williams
/// update. Ties merge the lowest (i, j) pair, clusters being named by their
/// lowest member index.
pub fn hierarchical_fit(
    sample_ids: &[u64],
    vectors: &[Vec<f64>],
    k: usize,
) -> Result<ClusterPartition, ClusterError> {
    let n = vectors.len();
    if n == 0 {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(ClusterError::InvalidHyperparameter(format!(
            "k = {k} with {n} samples"
        )));
    }
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&vectors[i], &vectors[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut size = vec![1usize; n];
    let mut alive = vec![true; n];
    let mut label: Vec<usize> = (0..n).collect();
    let mut clusters = n;

    while clusters > k {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in i + 1..n {
                if alive[j] && dist[i][j] < best.2 {
                    best = (i, j, dist[i][j]);
                }
            }
        }
        let (a, b, _) = best;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for x in 0..n {
            if alive[x] && x != a && x != b {
                let d = (na * dist[a][x] + nb * dist[b][x]) / (na + nb);
                dist[a][x] = d;
                dist[x][a] = d;
            }
        }
        size[a] += size[b];
        alive[b] = false;
        for l in label.iter_mut() {
            if *l == b {
                *l = a;
            }
        }
        clusters -= 1;
    }
    Ok(ClusterPartition::from_labels(
        Engine::Hierarchical,
        sample_ids.to_vec(),
        &label,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases() {
        let v = vec![vec![0.0], vec![1.0]];
        assert_eq!(hierarchical_fit(&[1, 2], &v, 2).unwrap().cluster_count, 2);
        assert_eq!(hierarchical_fit(&[1, 2], &v, 1).unwrap().labels, vec![0, 0]);
        assert!(hierarchical_fit(&[], &[], 1).is_err());
        assert!(hierarchical_fit(&[1], &[vec![0.0]], 2).is_err());
    }
}
