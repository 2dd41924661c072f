//! ClusWiSARD over bit pictures and the three validation engines over
//! standardized feature vectors.

mod dbscan;
mod features;
mod hierarchical;
mod kmeans;
mod wisard;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dbscan::{dbscan_fit, knee_eps};
pub use features::{feature_vectors, standardize};
pub use hierarchical::hierarchical_fit;
pub use kmeans::{kmeans_fit, KMeansResult};
pub use wisard::{cluswisard_auto, cluswisard_fit, AutoReport, WisardFit};

/// Label of DBSCAN noise points.
pub const NOISE: usize = usize::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("no samples to cluster")]
    EmptyInput,
    #[error("sample {index} has length {found}, expected {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
}

token_enum!(
    /// Clustering engine tag.
    Engine, "engine", {
        Cluswisard => "CLUSWISARD",
        Hierarchical => "HIERARCHICAL",
        Kmeans => "KMEANS",
        Dbscan => "DBSCAN",
    }
);

/// A hyperparameter that discover mode may choose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Setting<T> {
    Auto,
    Value(T),
}

impl<T: Copy> Setting<T> {
    pub fn value(self) -> Option<T> {
        match self {
            Setting::Auto => None,
            Setting::Value(v) => Some(v),
        }
    }
}

impl<T: fmt::Display> fmt::Display for Setting<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::Auto => f.write_str("auto"),
            Setting::Value(v) => v.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub tuple_size: usize,
    pub threshold: Setting<f64>,
    pub discriminator_limit: Setting<usize>,
    pub seed: u64,
    /// Cluster count for hierarchical and k-means; `None` reuses ClusWiSARD's.
    pub k: Option<usize>,
    /// `None` picks eps from the k-distance knee.
    pub eps: Option<f64>,
    pub min_pts: usize,
    pub near_best_delta: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            tuple_size: 8,
            threshold: Setting::Auto,
            discriminator_limit: Setting::Auto,
            seed: 42,
            k: None,
            eps: None,
            min_pts: 4,
            near_best_delta: 0.05,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: &str| Err(ClusterError::InvalidHyperparameter(m.to_string()));
        if self.tuple_size == 0 || self.tuple_size > 64 {
            return bad("tuple_size must be in 1..=64");
        }
        if let Setting::Value(t) = self.threshold {
            if !(t > 0.0 && t <= 1.0) {
                return bad("threshold must be in (0, 1]");
            }
        }
        if self.discriminator_limit == Setting::Value(0) {
            return bad("discriminator_limit must be positive");
        }
        if self.k == Some(0) {
            return bad("k must be positive");
        }
        if let Some(e) = self.eps {
            if !(e > 0.0) {
                return bad("eps must be positive");
            }
        }
        if self.min_pts == 0 {
            return bad("min_pts must be positive");
        }
        if !(0.0..=1.0).contains(&self.near_best_delta) {
            return bad("near_best_delta must be in [0, 1]");
        }
        Ok(())
    }

    /// `key=value` lines, the format of the hyperparameters file.
    pub fn to_file_string(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        format!(
            "tuple_size={}\nthreshold={}\ndiscriminator_limit={}\nseed={}\nk={}\nlinkage=AVERAGE\neps={}\nmin_pts={}\nnear_best_delta={}\n",
            self.tuple_size,
            self.threshold,
            self.discriminator_limit,
            self.seed,
            opt(self.k.map(|k| k.to_string())),
            opt(self.eps.map(|e| e.to_string())),
            self.min_pts,
            self.near_best_delta,
        )
    }

    pub fn from_file_str(text: &str) -> Result<Self, ClusterError> {
        let mut hp = Hyperparameters::default();
        let bad = |k: &str, v: &str| ClusterError::InvalidHyperparameter(format!("{k}={v}"));
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ClusterError::InvalidHyperparameter(line.to_string()))?;
            let (k, v) = (k.trim(), v.trim());
            let auto = v.eq_ignore_ascii_case("auto");
            match k {
                "tuple_size" => hp.tuple_size = v.parse().map_err(|_| bad(k, v))?,
                "threshold" => {
                    hp.threshold = if auto {
                        Setting::Auto
                    } else {
                        Setting::Value(v.parse().map_err(|_| bad(k, v))?)
                    }
                }
                "discriminator_limit" => {
                    hp.discriminator_limit = if auto {
                        Setting::Auto
                    } else {
                        Setting::Value(v.parse().map_err(|_| bad(k, v))?)
                    }
                }
                "seed" => hp.seed = v.parse().map_err(|_| bad(k, v))?,
                "k" => {
                    hp.k = if auto {
                        None
                    } else {
                        Some(v.parse().map_err(|_| bad(k, v))?)
                    }
                }
                "eps" => {
                    hp.eps = if auto {
                        None
                    } else {
                        Some(v.parse().map_err(|_| bad(k, v))?)
                    }
                }
                "min_pts" => hp.min_pts = v.parse().map_err(|_| bad(k, v))?,
                "near_best_delta" => hp.near_best_delta = v.parse().map_err(|_| bad(k, v))?,
                "linkage" if v.eq_ignore_ascii_case("average") => {}
                _ => return Err(bad(k, v)),
            }
        }
        hp.validate()?;
        Ok(hp)
    }
}

/// Labeling of samples by one engine. Labels are dense `0..cluster_count`
/// in order of first appearance; DBSCAN noise keeps [`NOISE`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub engine: Engine,
    pub sample_ids: Vec<u64>,
    pub labels: Vec<usize>,
    pub cluster_count: usize,
}

impl ClusterPartition {
    pub fn from_labels(engine: Engine, sample_ids: Vec<u64>, raw: &[usize]) -> Self {
        assert_eq!(sample_ids.len(), raw.len());
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        let mut labels = Vec::with_capacity(raw.len());
        for &r in raw {
            if r == NOISE {
                labels.push(NOISE);
                continue;
            }
            let next = map.len();
            labels.push(*map.entry(r).or_insert(next));
        }
        Self {
            engine,
            sample_ids,
            labels,
            cluster_count: map.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label_of(&self, sample_id: u64) -> Option<usize> {
        self.sample_ids
            .iter()
            .position(|&s| s == sample_id)
            .map(|i| self.labels[i])
    }

    pub fn assignments(&self) -> BTreeMap<u64, usize> {
        self.sample_ids
            .iter()
            .copied()
            .zip(self.labels.iter().copied())
            .collect()
    }

    /// Members of cluster `c` (or of the noise group for [`NOISE`]).
    pub fn members(&self, c: usize) -> Vec<u64> {
        self.sample_ids
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == c)
            .map(|(&s, _)| s)
            .collect()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleDistribution {
    pub sample_id: u64,
    pub candidate_cluster_count: usize,
    pub best_cluster: usize,
}

/// Fraction of sample pairs on which two labelings agree (same/different).
pub fn rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut agree = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / (n * (n - 1) / 2) as f64
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn label_text(c: usize) -> String {
    if c == NOISE {
        "NOISE".into()
    } else {
        c.to_string()
    }
}

/// Clusters distribution file: one row per cluster with its members.
pub fn write_clusters_distribution<W: Write>(w: W, p: &ClusterPartition) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["Engine", "Cluster", "Size", "Members"])?;
    let mut groups: Vec<usize> = (0..p.cluster_count).collect();
    if p.noise_count() > 0 {
        groups.push(NOISE);
    }
    for c in groups {
        let members = p.members(c);
        let list: Vec<String> = members.iter().map(u64::to_string).collect();
        out.write_record([
            p.engine.to_string(),
            label_text(c),
            members.len().to_string(),
            list.join(" "),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Samples distribution file: candidate cluster count and best cluster.
pub fn write_samples_distribution<W: Write>(w: W, dist: &[SampleDistribution]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["SampleId", "CandidateClusters", "BestCluster"])?;
    for d in dist {
        out.write_record([
            d.sample_id.to_string(),
            d.candidate_cluster_count.to_string(),
            label_text(d.best_cluster),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Read a clusters distribution file back into a partition.
pub fn read_clusters_distribution<R: io::Read>(r: R) -> Result<ClusterPartition, String> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut pairs: Vec<(u64, usize)> = Vec::new();
    let mut engine = None;
    let mut count = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let e: Engine = rec
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|e: crate::ParseTokenError| e.to_string())?;
        engine = Some(e);
        let label = match rec.get(1).unwrap_or("") {
            "NOISE" => NOISE,
            s => {
                let c: usize = s.parse().map_err(|_| format!("bad cluster `{s}`"))?;
                count = count.max(c + 1);
                c
            }
        };
        for m in rec.get(3).unwrap_or("").split_whitespace() {
            pairs.push((m.parse().map_err(|_| format!("bad sample `{m}`"))?, label));
        }
    }
    pairs.sort_unstable();
    Ok(ClusterPartition {
        engine: engine.ok_or("empty distribution file")?,
        sample_ids: pairs.iter().map(|p| p.0).collect(),
        labels: pairs.iter().map(|p| p.1).collect(),
        cluster_count: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_relabel_keeps_noise() {
        let p = ClusterPartition::from_labels(Engine::Dbscan, vec![1, 2, 3, 4], &[7, NOISE, 3, 7]);
        assert_eq!(p.labels, vec![0, NOISE, 1, 0]);
        assert_eq!(p.cluster_count, 2);
        assert_eq!(p.members(0), vec![1, 4]);
    }

    #[test]
    fn hyperparameter_file_roundtrip() {
        let mut hp = Hyperparameters::default();
        hp.threshold = Setting::Value(0.7);
        hp.discriminator_limit = Setting::Value(4);
        hp.k = Some(3);
        let back = Hyperparameters::from_file_str(&hp.to_file_string()).unwrap();
        assert_eq!(back, hp);
        assert!(Hyperparameters::from_file_str("threshold=1.5").is_err());
    }

    #[test]
    fn distribution_roundtrip() {
        let p = ClusterPartition::from_labels(Engine::Dbscan, vec![1, 2, 3], &[0, NOISE, 0]);
        let mut buf = Vec::new();
        write_clusters_distribution(&mut buf, &p).unwrap();
        assert_eq!(read_clusters_distribution(&buf[..]).unwrap(), p);
    }

    #[test]
    fn rand_index_basics() {
        assert_eq!(rand_index(&[0, 0, 1], &[5, 5, 2]), 1.0);
        assert_eq!(rand_index(&[0, 0], &[0, 1]), 0.0);
    }
}
