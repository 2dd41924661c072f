//! Lloyd k-means with seeded farthest-point initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{euclidean, ClusterError, ClusterPartition, Engine};

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub partition: ClusterPartition,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after every assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(v: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq(v, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

fn inertia(vectors: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    vectors
        .iter()
        .zip(labels)
        .map(|(v, &l)| sq(v, &centroids[l]))
        .sum()
}

pub fn kmeans_fit(
    sample_ids: &[u64],
    vectors: &[Vec<f64>],
    k: usize,
    seed: u64,
) -> Result<KMeansResult, ClusterError> {
    let n = vectors.len();
    if n == 0 {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(ClusterError::InvalidHyperparameter(format!(
            "k = {k} with {n} samples"
        )));
    }
    let dim = vectors[0].len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.gen_range(0..n)];
    while chosen.len() < k {
        let mut best = (0, -1.0);
        for (i, v) in vectors.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen
                .iter()
                .map(|&c| euclidean(v, &vectors[c]))
                .fold(f64::INFINITY, f64::min);
            if d > best.1 {
                best = (i, d);
            }
        }
        chosen.push(best.0);
    }
    let mut centroids: Vec<Vec<f64>> = chosen.iter().map(|&i| vectors[i].clone()).collect();

    let mut labels: Vec<usize> = vectors.iter().map(|v| nearest(v, &centroids)).collect();
    repair_empty(vectors, &mut labels, &mut centroids, k);
    let mut history = vec![inertia(vectors, &labels, &centroids)];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &l) in vectors.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let mut next: Vec<usize> = vectors.iter().map(|v| nearest(v, &centroids)).collect();
        repair_empty(vectors, &mut next, &mut centroids, k);
        history.push(inertia(vectors, &next, &centroids));
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(KMeansResult {
        partition: ClusterPartition::from_labels(Engine::Kmeans, sample_ids.to_vec(), &labels),
        centroids,
        inertia_history: history,
        iterations,
    })
}

/// Give every empty cluster the point farthest from its own centroid, taken
/// from a cluster with more than one member.
fn repair_empty(vectors: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in vectors.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = sq(v, &centroids[labels[i]]);
            if best.map_or(true, |(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let Some((i, _)) = best else {
            return;
        };
        labels[i] = empty;
        centroids[empty] = vectors[i].clone();
    }
}
