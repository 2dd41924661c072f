//! ClusWiSARD: one RAM-node discriminator per cluster, trained in a single
//! streaming pass.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    rand_index, ClusterError, ClusterPartition, Engine, Hyperparameters, SampleDistribution,
    Setting,
};

const THRESHOLDS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const LIMITS: [usize; 5] = [2, 4, 8, 16, 32];
const AUTO_REPEATS: u64 = 5;

/// Maps pictures to per-RAM addresses through a fixed seeded permutation.
struct Addresser {
    permutation: Vec<usize>,
    tuple_size: usize,
    input_len: usize,
}

impl Addresser {
    fn new(input_len: usize, tuple_size: usize, seed: u64) -> Self {
        let padded = input_len.div_ceil(tuple_size).max(1) * tuple_size;
        let mut permutation: Vec<usize> = (0..padded).collect();
        permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self {
            permutation,
            tuple_size,
            input_len,
        }
    }

    fn rams(&self) -> usize {
        self.permutation.len() / self.tuple_size
    }

    fn addresses(&self, picture: &[bool]) -> Vec<u64> {
        self.permutation
            .chunks(self.tuple_size)
            .map(|chunk| {
                chunk.iter().fold(0u64, |acc, &pos| {
                    let bit = pos < self.input_len && picture[pos];
                    (acc << 1) | u64::from(bit)
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Discriminator {
    rams: Vec<HashSet<u64>>,
}

impl Discriminator {
    fn new(rams: usize) -> Self {
        Self {
            rams: vec![HashSet::new(); rams],
        }
    }

    fn train(&mut self, addr: &[u64]) {
        for (ram, &a) in self.rams.iter_mut().zip(addr) {
            ram.insert(a);
        }
    }

    fn response(&self, addr: &[u64]) -> f64 {
        let hits = self
            .rams
            .iter()
            .zip(addr)
            .filter(|(ram, a)| ram.contains(a))
            .count();
        hits as f64 / self.rams.len() as f64
    }
}

/// Index and value of the maximum, lowest index on ties.
fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct WisardFit {
    pub partition: ClusterPartition,
    pub distribution: Vec<SampleDistribution>,
    /// Discriminators created during the pass (some may end up empty).
    pub discriminators: usize,
    /// `responses[s][d]`: final response of discriminator `d` to sample `s`.
    pub responses: Vec<Vec<f64>>,
}

fn check_pictures(pictures: &[Vec<bool>]) -> Result<usize, ClusterError> {
    let first = pictures.first().ok_or(ClusterError::EmptyInput)?;
    for (index, p) in pictures.iter().enumerate() {
        if p.len() != first.len() {
            return Err(ClusterError::LengthMismatch {
                index,
                expected: first.len(),
                found: p.len(),
            });
        }
    }
    Ok(first.len())
}

/// Raw labels of one streaming pass over `order`, indexed like `addrs`.
fn stream(
    addrs: &[Vec<u64>],
    rams: usize,
    order: &[usize],
    threshold: f64,
    limit: usize,
) -> (Vec<Discriminator>, Vec<usize>, Vec<Vec<f64>>) {
    let mut discs: Vec<Discriminator> = Vec::new();
    for &i in order {
        let addr = &addrs[i];
        let scores: Vec<f64> = discs.iter().map(|d| d.response(addr)).collect();
        let (best, max) = argmax(&scores);
        if !discs.is_empty() && (max >= threshold || discs.len() >= limit) {
            discs[best].train(addr);
        } else {
            let mut d = Discriminator::new(rams);
            d.train(addr);
            discs.push(d);
        }
    }
    let responses: Vec<Vec<f64>> = addrs
        .iter()
        .map(|a| discs.iter().map(|d| d.response(a)).collect())
        .collect();
    let labels = responses.iter().map(|r| argmax(r).0).collect();
    (discs, labels, responses)
}

/// Fit ClusWiSARD on pictures presented in the given order.
pub fn cluswisard_fit(
    sample_ids: &[u64],
    pictures: &[Vec<bool>],
    hp: &Hyperparameters,
) -> Result<WisardFit, ClusterError> {
    let order: Vec<usize> = (0..pictures.len()).collect();
    fit_in_order(sample_ids, pictures, hp, &order)
}

fn concrete(hp: &Hyperparameters) -> Result<(f64, usize), ClusterError> {
    hp.validate()?;
    match (hp.threshold, hp.discriminator_limit) {
        (Setting::Value(t), Setting::Value(l)) => Ok((t, l)),
        _ => Err(ClusterError::InvalidHyperparameter(
            "threshold and discriminator_limit must be concrete; run discover mode first".into(),
        )),
    }
}

fn fit_in_order(
    sample_ids: &[u64],
    pictures: &[Vec<bool>],
    hp: &Hyperparameters,
    order: &[usize],
) -> Result<WisardFit, ClusterError> {
    let (threshold, limit) = concrete(hp)?;
    let len = check_pictures(pictures)?;
    assert_eq!(sample_ids.len(), pictures.len());
    let addresser = Addresser::new(len, hp.tuple_size, hp.seed);
    let addrs: Vec<Vec<u64>> = pictures.iter().map(|p| addresser.addresses(p)).collect();
    let (discs, labels, responses) = stream(&addrs, addresser.rams(), order, threshold, limit);

    let partition = ClusterPartition::from_labels(Engine::Cluswisard, sample_ids.to_vec(), &labels);
    let used: HashSet<usize> = labels.iter().copied().collect();
    let distribution = sample_ids
        .iter()
        .zip(&responses)
        .zip(&partition.labels)
        .map(|((&sample_id, r), &best_cluster)| {
            let (_, max) = argmax(r);
            let candidates = r
                .iter()
                .enumerate()
                .filter(|(d, &v)| used.contains(d) && v >= max - hp.near_best_delta)
                .count();
            SampleDistribution {
                sample_id,
                candidate_cluster_count: candidates,
                best_cluster,
            }
        })
        .collect();
    Ok(WisardFit {
        partition,
        distribution,
        discriminators: discs.len(),
        responses,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoReport {
    pub threshold: f64,
    pub discriminator_limit: usize,
    pub agreement: f64,
    /// Mean agreement of every grid cell as (threshold, limit, agreement).
    pub grid: Vec<(f64, usize, f64)>,
}

/// Discover mode: grid search over threshold x discriminator_limit scored by
/// the mean pairwise Rand index of fits on shuffled presentation orders.
/// Settings already fixed in `partial` are kept.
pub fn cluswisard_auto(
    sample_ids: &[u64],
    pictures: &[Vec<bool>],
    partial: &Hyperparameters,
) -> Result<(Hyperparameters, AutoReport), ClusterError> {
    check_pictures(pictures)?;
    let thresholds: Vec<f64> = match partial.threshold {
        Setting::Value(t) => vec![t],
        Setting::Auto => THRESHOLDS.to_vec(),
    };
    let limits: Vec<usize> = match partial.discriminator_limit {
        Setting::Value(l) => vec![l],
        Setting::Auto => LIMITS.to_vec(),
    };
    let orders: Vec<Vec<usize>> = (0..AUTO_REPEATS)
        .map(|r| {
            let mut o: Vec<usize> = (0..pictures.len()).collect();
            let seed = partial.seed ^ (r + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            o.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            o
        })
        .collect();

    let n = pictures.len();
    let mut grid = Vec::new();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut fallback: Option<(f64, usize, f64)> = None;
    for &limit in &limits {
        for &threshold in &thresholds {
            let mut hp = partial.clone();
            hp.threshold = Setting::Value(threshold);
            hp.discriminator_limit = Setting::Value(limit);
            let fits = orders
                .iter()
                .map(|o| fit_in_order(sample_ids, pictures, &hp, o).map(|f| f.partition.labels))
                .collect::<Result<Vec<_>, _>>()?;
            let mut sum = 0.0;
            let mut pairs = 0;
            for i in 0..fits.len() {
                for j in i + 1..fits.len() {
                    sum += rand_index(&fits[i], &fits[j]);
                    pairs += 1;
                }
            }
            let agreement = if pairs == 0 { 1.0 } else { sum / pairs as f64 };
            grid.push((threshold, limit, agreement));
            // One cluster or all singletons agree with any reordering by
            // construction; such cells only win when nothing else exists.
            let degenerate = fits.iter().any(|labels| {
                let k = labels
                    .iter()
                    .collect::<std::collections::BTreeSet<_>>()
                    .len();
                n > 1 && (k == 1 || k == n)
            });
            let slot = if degenerate { &mut fallback } else { &mut best };
            // Limits ascend in the outer loop and thresholds in the inner one,
            // so ">=" on an equal limit prefers the larger threshold.
            let better = match *slot {
                None => true,
                Some((_, bl, ba)) => {
                    agreement > ba + 1e-12 || ((agreement - ba).abs() <= 1e-12 && limit == bl)
                }
            };
            if better {
                *slot = Some((threshold, limit, agreement));
            }
        }
    }
    let (threshold, limit, agreement) = best.or(fallback).expect("grid is non-empty");
    let mut hp = partial.clone();
    hp.threshold = Setting::Value(threshold);
    hp.discriminator_limit = Setting::Value(limit);
    Ok((
        hp,
        AutoReport {
            threshold,
            discriminator_limit: limit,
            agreement,
            grid,
        },
    ))
}
