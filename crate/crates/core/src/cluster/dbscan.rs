//! Density-based clustering.

use std::collections::VecDeque;

use super::{euclidean, ClusterError, ClusterPartition, Engine, NOISE};

/// DBSCAN in index order. Neighbourhoods include the point itself; a border
/// point keeps the first cluster that reaches it.
pub fn dbscan_fit(
    sample_ids: &[u64],
    vectors: &[Vec<f64>],
    eps: f64,
    min_pts: usize,
) -> Result<ClusterPartition, ClusterError> {
    let n = vectors.len();
    if n == 0 {
        return Err(ClusterError::EmptyInput);
    }
    if !(eps > 0.0) || min_pts == 0 {
        return Err(ClusterError::InvalidHyperparameter(format!(
            "eps = {eps}, min_pts = {min_pts}"
        )));
    }
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclidean(&vectors[i], &vectors[j]) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels = vec![NOISE; n];
    let mut cluster = 0;
    for start in 0..n {
        if !core[start] || labels[start] != NOISE {
            continue;
        }
        labels[start] = cluster;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            if !core[p] {
                continue;
            }
            for &q in &neighbours[p] {
                if labels[q] == NOISE {
                    labels[q] = cluster;
                    queue.push_back(q);
                }
            }
        }
        cluster += 1;
    }
    Ok(ClusterPartition::from_labels(
        Engine::Dbscan,
        sample_ids.to_vec(),
        &labels,
    ))
}

/// eps at the knee of the ascending k-nearest-neighbour distance curve
/// (largest second difference). Falls back to the smallest positive
/// pairwise distance, then to 1.
pub fn knee_eps(vectors: &[Vec<f64>], k: usize) -> f64 {
    let n = vectors.len();
    let mut positive_min = f64::INFINITY;
    let mut kdist: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let mut d: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| euclidean(&vectors[i], &vectors[j]))
            .collect();
        for &x in &d {
            if x > 0.0 {
                positive_min = positive_min.min(x);
            }
        }
        if d.is_empty() {
            continue;
        }
        d.sort_by(f64::total_cmp);
        kdist.push(d[k.clamp(1, d.len()) - 1]);
    }
    kdist.sort_by(f64::total_cmp);
    let mut eps = 0.0;
    if kdist.len() >= 3 {
        let mut best = f64::NEG_INFINITY;
        for i in 1..kdist.len() - 1 {
            let second = kdist[i + 1] - 2.0 * kdist[i] + kdist[i - 1];
            if second > best {
                best = second;
                eps = kdist[i];
            }
        }
    } else if let Some(&last) = kdist.last() {
        eps = last;
    }
    if eps > 0.0 {
        eps
    } else if positive_min.is_finite() {
        positive_min
    } else {
        1.0
    }
}
