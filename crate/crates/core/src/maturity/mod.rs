//! Maturity scoring: process performance indicators, the city ERM-L, the
//! answer-quality indicator with deciles, and regional breakdowns.

mod cem;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterPartition;
use crate::encoding::SampleStatistics;
use crate::ingest::{City, WorkingSet};
use crate::model::Region;

pub use cem::{evaluate_cem, Capability, CapabilityEvaluationMatrix, Practice, ProcessArea};

#[derive(Debug, Error, PartialEq)]
pub enum MaturityError {
    #[error("weights of {process} sum to {sum}, not 1")]
    WeightSumViolation { process: ProcessArea, sum: f64 },
    #[error("malformed capability evaluation matrix: {0}")]
    MalformedCem(String),
    #[error("malformed PI mapping: {0}")]
    MalformedMapping(String),
    #[error("sample {0} has no city record")]
    MissingCity(u64),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Per-city process performance indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessPIVector {
    pub sample_id: u64,
    pub dm: u8,
    /// City-wide inventory, government inventory, external cross-check.
    pub da: [u8; 3],
    pub dp: u8,
    pub dan: u8,
    pub rb: u8,
    pub rp: u8,
    pub dep: u8,
    pub mon: u8,
}

impl ProcessPIVector {
    pub fn zero(sample_id: u64) -> Self {
        Self {
            sample_id,
            dm: 0,
            da: [0; 3],
            dp: 0,
            dan: 0,
            rb: 0,
            rp: 0,
            dep: 0,
            mon: 0,
        }
    }

    pub fn max(sample_id: u64) -> Self {
        Self {
            sample_id,
            dm: 1,
            da: [1; 3],
            dp: 1,
            dan: 5,
            rb: 1,
            rp: 1,
            dep: 1,
            mon: 1,
        }
    }

    /// Indicators in process order with their range maxima.
    pub fn entries(&self) -> [(u8, u8); 10] {
        [
            (self.dm, 1),
            (self.da[0], 1),
            (self.da[1], 1),
            (self.da[2], 1),
            (self.dp, 1),
            (self.dan, 5),
            (self.rb, 1),
            (self.rp, 1),
            (self.dep, 1),
            (self.mon, 1),
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.entries().iter().all(|(v, max)| v <= max)
    }

    /// The three acquisition digits as printed, e.g. `110`.
    pub fn da_text(&self) -> String {
        self.da.iter().map(|d| d.to_string()).collect()
    }
}

token_enum!(
    /// Maturity level of a city's emissions reporting.
    ERMLevel, "maturity level", {
        Unavailable => "UNAVAILABLE",
        Initial => "INITIAL",
        Managed => "MANAGED",
        Established => "ESTABLISHED",
        Predictable => "PREDICTABLE",
        Optimized => "OPTIMIZED",
    }
);

impl ERMLevel {
    pub fn level(self) -> u8 {
        self as u8
    }

    pub fn from_level(level: u8) -> Option<Self> {
        Self::ALL.get(level as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ERMLevel::Unavailable => "Unavailable",
            ERMLevel::Initial => "Initial",
            ERMLevel::Managed => "Managed",
            ERMLevel::Established => "Established",
            ERMLevel::Predictable => "Predictable",
            ERMLevel::Optimized => "Optimized",
        }
    }
}

/// Gated level rule calibrated on published city vectors.
pub fn derive_erml(pi: &ProcessPIVector) -> ERMLevel {
    if pi.dm == 0 || pi.da == [0, 0, 0] {
        ERMLevel::Unavailable
    } else if pi.dp == 0 {
        ERMLevel::Initial
    } else if pi.dan < 2 {
        ERMLevel::Managed
    } else if pi.rp == 0 || pi.mon == 0 || pi.dan < 3 {
        ERMLevel::Established
    } else if pi.entries().iter().any(|(v, max)| v < max) {
        ERMLevel::Predictable
    } else {
        ERMLevel::Optimized
    }
}

/// Question patterns used to extract indicators from disclosure data. A
/// pattern ending in `*` matches by prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiMapping {
    pub version: String,
    pub data_modeling: Vec<String>,
    pub citywide_inventory: Vec<String>,
    pub government_inventory: Vec<String>,
    #[serde(default = "one")]
    pub min_external_matches: usize,
    pub report_building: Vec<String>,
    pub report_publishing: Vec<String>,
    pub deployment: Vec<String>,
    pub monitoring: Vec<String>,
}

fn one() -> usize {
    1
}

impl PiMapping {
    pub fn from_toml_str(text: &str) -> Result<Self, MaturityError> {
        toml::from_str(text).map_err(|e| MaturityError::MalformedMapping(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MaturityError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MaturityError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }
}

fn pattern_matches(patterns: &[String], question: &str) -> bool {
    patterns.iter().any(|p| match p.strip_suffix('*') {
        Some(prefix) => question.starts_with(prefix),
        None => p == question,
    })
}

/// Model questions with at least one non-empty answer from `sample_id`.
pub fn answered_questions(ws: &WorkingSet, sample_id: u64) -> BTreeSet<String> {
    ws.records_of(sample_id)
        .filter(|r| !r.response_answer.trim().is_empty())
        .map(|r| r.question_number.clone())
        .collect()
}

/// Model fields (question, column) with at least one non-empty answer.
pub fn answered_fields(ws: &WorkingSet, sample_id: u64) -> usize {
    ws.records_of(sample_id)
        .filter(|r| !r.response_answer.trim().is_empty())
        .filter(|r| {
            ws.model
                .field(&r.question_number, r.column_number)
                .is_some()
        })
        .map(|r| (r.question_number.as_str(), r.column_number))
        .collect::<BTreeSet<_>>()
        .len()
}

/// Extract the indicator vector of every city from its disclosure data.
pub fn derive_pi_from_data(ws: &WorkingSet, mapping: &PiMapping) -> Vec<ProcessPIVector> {
    let total = ws.model.questions.len().max(1);
    let discarded: BTreeSet<u64> = ws.discarded.iter().map(|d| d.sample_id).collect();
    ws.cities
        .iter()
        .map(|city| {
            let id = city.sample_id;
            let answered = answered_questions(ws, id);
            let any = |patterns: &[String]| {
                u8::from(answered.iter().any(|q| pattern_matches(patterns, q)))
            };
            let externals = ws.externals.iter().filter(|e| e.sample_id == id).count();
            ProcessPIVector {
                sample_id: id,
                dm: any(&mapping.data_modeling),
                da: [
                    any(&mapping.citywide_inventory),
                    any(&mapping.government_inventory),
                    u8::from(externals >= mapping.min_external_matches.max(1)),
                ],
                dp: u8::from(!answered.is_empty() && !discarded.contains(&id)),
                dan: (5 * answered.len() / total).min(5) as u8,
                rb: any(&mapping.report_building),
                rp: any(&mapping.report_publishing),
                dep: any(&mapping.deployment),
                mon: any(&mapping.monitoring),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityIndicator {
    pub sample_id: u64,
    pub ind: f64,
    /// 1 is the best tenth of the population.
    pub decile: u8,
}

/// Answer-quality score: field coverage plus dictionary-word share of the
/// free-text answers.
pub fn quality_indicator(
    stats: &SampleStatistics,
    answered_fields: usize,
    total_fields: usize,
) -> f64 {
    let coverage = answered_fields as f64 / total_fields.max(1) as f64;
    let richness = stats.wd_r as f64 / stats.wc_r.max(1) as f64;
    0.7 * coverage.min(1.0) + 0.3 * richness.min(1.0)
}

/// Rank by descending score. A sample's decile is floor(10 * rank / n) + 1,
/// where tied scores share the rank of the first of them. Output keeps the
/// input order.
pub fn assign_deciles(scores: &[(u64, f64)]) -> Vec<QualityIndicator> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .1
            .total_cmp(&scores[a].1)
            .then(scores[a].0.cmp(&scores[b].0))
    });
    let mut decile = vec![0u8; n];
    let mut rank = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos == 0 || scores[i].1 != scores[order[pos - 1]].1 {
            rank = pos;
        }
        decile[i] = (10 * rank / n + 1) as u8;
    }
    scores
        .iter()
        .zip(decile)
        .map(|(&(sample_id, ind), decile)| QualityIndicator {
            sample_id,
            ind,
            decile,
        })
        .collect()
}

/// Score and rank every city of the working set.
pub fn quality_indicators(ws: &WorkingSet, stats: &[SampleStatistics]) -> Vec<QualityIndicator> {
    let total = ws.model.fields().len();
    let scores: Vec<(u64, f64)> = stats
        .iter()
        .map(|s| {
            (
                s.sample_id,
                quality_indicator(s, answered_fields(ws, s.sample_id), total),
            )
        })
        .collect();
    assign_deciles(&scores)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionalRow {
    pub region: Region,
    pub cluster: usize,
    pub samples: usize,
    /// Count per decile, index 0 is decile 1.
    pub deciles: [usize; 10],
}

/// Region x cluster counts with their decile histograms. Regions or
/// clusters without samples produce no row.
pub fn regional_breakdown(
    partition: &ClusterPartition,
    inds: &[QualityIndicator],
    cities: &[City],
) -> Result<Vec<RegionalRow>, MaturityError> {
    let region_of: BTreeMap<u64, Region> = cities.iter().map(|c| (c.sample_id, c.region)).collect();
    let decile_of: BTreeMap<u64, u8> = inds.iter().map(|q| (q.sample_id, q.decile)).collect();
    let mut table: BTreeMap<(Region, usize), RegionalRow> = BTreeMap::new();
    for (id, label) in partition.assignments() {
        let region = *region_of.get(&id).ok_or(MaturityError::MissingCity(id))?;
        let row = table.entry((region, label)).or_insert(RegionalRow {
            region,
            cluster: label,
            samples: 0,
            deciles: [0; 10],
        });
        row.samples += 1;
        if let Some(&d) = decile_of.get(&id) {
            row.deciles[usize::from(d.clamp(1, 10)) - 1] += 1;
        }
    }
    Ok(table.into_values().collect())
}

pub const ERML_HEADER: [&str; 11] = [
    "CDP Id",
    "City Name",
    "ERM-L",
    "Data Modeling",
    "Data Acquisition",
    "Data Processing",
    "Data Analysis",
    "Report Building",
    "Report Publishing",
    "Deployment",
    "Monitoring",
];

/// ERM-L report in the layout of the published city table.
pub fn write_erml_report<W: Write>(
    w: W,
    pis: &[ProcessPIVector],
    cities: &[City],
) -> csv::Result<()> {
    let names: BTreeMap<u64, &str> = cities
        .iter()
        .map(|c| (c.sample_id, c.name.as_str()))
        .collect();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ERML_HEADER)?;
    for pi in pis {
        out.write_record([
            pi.sample_id.to_string(),
            names.get(&pi.sample_id).copied().unwrap_or("").to_string(),
            derive_erml(pi).level().to_string(),
            pi.dm.to_string(),
            pi.da_text(),
            pi.dp.to_string(),
            pi.dan.to_string(),
            pi.rb.to_string(),
            pi.rp.to_string(),
            pi.dep.to_string(),
            pi.mon.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_quality_report<W: Write>(w: W, inds: &[QualityIndicator]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["SampleId", "IND", "Decile"])?;
    for q in inds {
        out.write_record([
            q.sample_id.to_string(),
            format!("{:.6}", q.ind),
            q.decile.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Regional report; the noise group is written as `NOISE`.
pub fn write_regional_report<W: Write>(w: W, rows: &[RegionalRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![
        "Region".to_string(),
        "Cluster".to_string(),
        "Samples".to_string(),
    ];
    header.extend((1..=10).map(|d| format!("D{d}")));
    out.write_record(&header)?;
    for r in rows {
        let cluster = if r.cluster == crate::cluster::NOISE {
            "NOISE".to_string()
        } else {
            r.cluster.to_string()
        };
        let mut rec = vec![r.region.to_string(), cluster, r.samples.to_string()];
        rec.extend(r.deciles.iter().map(|d| d.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pi(v: (u8, [u8; 3], u8, u8, u8, u8, u8, u8)) -> ProcessPIVector {
        ProcessPIVector {
            sample_id: 1,
            dm: v.0,
            da: v.1,
            dp: v.2,
            dan: v.3,
            rb: v.4,
            rp: v.5,
            dep: v.6,
            mon: v.7,
        }
    }

    #[test]
    fn level_examples() {
        assert_eq!(
            derive_erml(&pi((1, [1, 1, 1], 1, 4, 1, 0, 1, 1))),
            ERMLevel::Established
        );
        assert_eq!(
            derive_erml(&pi((0, [1, 0, 0], 0, 2, 0, 0, 1, 1))),
            ERMLevel::Unavailable
        );
        assert_eq!(derive_erml(&ProcessPIVector::max(1)), ERMLevel::Optimized);
        assert_eq!(
            derive_erml(&ProcessPIVector::zero(1)),
            ERMLevel::Unavailable
        );
        assert_eq!(ERMLevel::from_level(4), Some(ERMLevel::Predictable));
        assert_eq!(ERMLevel::Managed.name(), "Managed");
    }

    #[test]
    fn deciles_share_rank_on_ties() {
        let q = assign_deciles(&[(1, 0.5), (2, 0.9), (3, 0.5), (4, 0.1)]);
        let d: Vec<u8> = q.iter().map(|q| q.decile).collect();
        // ranks 1, 0, 1, 3 over n = 4
        assert_eq!(d, vec![3, 1, 3, 8]);
    }

    #[test]
    fn ind_endpoints() {
        let mut s = SampleStatistics {
            sample_id: 1,
            ..Default::default()
        };
        assert_eq!(quality_indicator(&s, 0, 10), 0.0);
        s.wc_r = 7;
        s.wd_r = 7;
        assert_eq!(quality_indicator(&s, 10, 10), 1.0);
    }

    #[test]
    fn pattern_prefix() {
        let p = vec!["1.*".to_string(), "7.4".to_string()];
        assert!(pattern_matches(&p, "1.1a"));
        assert!(pattern_matches(&p, "7.4"));
        assert!(!pattern_matches(&p, "10.1"));
        assert!(!pattern_matches(&p, "7.41"));
    }
}
