//! Sampling support for the grounded-theory and case-study rounds.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterPartition, NOISE};
use crate::ingest::{write_disclosures, AnswerRecord, WorkingSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QualitativeError {
    #[error("cluster {0} has no unseen cities left")]
    ClusterExhausted(usize),
    #[error("every other cluster has been visited")]
    AllClustersVisited,
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub round_number: usize,
    pub sampled: Vec<u64>,
    pub questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitativeRoundLog {
    pub cluster_id: usize,
    pub members: Vec<u64>,
    pub rounds: Vec<Round>,
    pub cumulative_fraction: f64,
    /// Case-study visits: cluster -> cities inspected there.
    pub case_visits: BTreeMap<usize, Vec<u64>>,
}

impl QualitativeRoundLog {
    pub fn new(cluster_id: usize, mut members: Vec<u64>) -> Self {
        members.sort_unstable();
        Self {
            cluster_id,
            members,
            rounds: Vec::new(),
            cumulative_fraction: 0.0,
            case_visits: BTreeMap::new(),
        }
    }

    pub fn seen(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self
            .rounds
            .iter()
            .flat_map(|r| r.sampled.iter().copied())
            .collect();
        s.sort_unstable();
        s
    }

    pub fn is_complete(&self) -> bool {
        self.cumulative_fraction > 0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: Round,
    pub complete: bool,
}

/// Draw ceil(fraction x |cluster|) unseen members for the next round. The
/// round is complete once more than half of the cluster has been seen.
pub fn grounded_sample(
    log: &mut QualitativeRoundLog,
    fraction_per_round: f64,
    questions: &[String],
    seed: u64,
) -> Result<RoundOutcome, QualitativeError> {
    if log.members.is_empty() {
        return Err(QualitativeError::EmptyCluster(log.cluster_id));
    }
    let seen = log.seen();
    let mut unseen: Vec<u64> = log
        .members
        .iter()
        .copied()
        .filter(|m| seen.binary_search(m).is_err())
        .collect();
    if unseen.is_empty() {
        return Err(QualitativeError::ClusterExhausted(log.cluster_id));
    }
    let size = log.members.len();
    let want = ((fraction_per_round * size as f64) - 1e-9).ceil().max(1.0) as usize;
    let round_number = log.rounds.len() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ round_number as u64);
    unseen.shuffle(&mut rng);
    let mut sampled: Vec<u64> = unseen.into_iter().take(want).collect();
    sampled.sort_unstable();

    let round = Round {
        round_number,
        sampled,
        questions: questions.to_vec(),
    };
    log.rounds.push(round.clone());
    log.cumulative_fraction = log.seen().len() as f64 / size as f64;
    Ok(RoundOutcome {
        round,
        complete: log.is_complete(),
    })
}

/// Pick one city from the lowest-index cluster, other than the one under
/// analysis, that has no case-study visit yet.
pub fn case_study_select(
    partition: &ClusterPartition,
    log: &mut QualitativeRoundLog,
    seed: u64,
) -> Result<u64, QualitativeError> {
    let target = (0..partition.cluster_count)
        .filter(|&c| c != log.cluster_id && c != NOISE)
        .find(|c| !log.case_visits.contains_key(c))
        .ok_or(QualitativeError::AllClustersVisited)?;
    let members = partition.members(target);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ target as u64);
    let city = *members
        .choose(&mut rng)
        .ok_or(QualitativeError::EmptyCluster(target))?;
    log.case_visits.entry(target).or_default().push(city);
    Ok(city)
}

fn answers_of<'a>(records: &[&'a AnswerRecord], question: &str) -> String {
    let mut rows: Vec<&&AnswerRecord> = records
        .iter()
        .filter(|r| r.question_number == question)
        .collect();
    rows.sort_by_key(|r| (r.column_number, r.row_number));
    rows.iter()
        .map(|r| r.response_answer.trim())
        .filter(|a| !a.is_empty())
        .collect::<Vec<_>>()
        .join(" | ")
}

/// Comparison matrix: one row per sampled city, one column per question,
/// holding the city's answers.
pub fn write_comparison_matrix<W: Write>(
    w: W,
    ws: &WorkingSet,
    cities: &[u64],
    questions: &[String],
) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["SampleId".to_string(), "City".to_string()];
    header.extend(questions.iter().cloned());
    out.write_record(&header)?;
    for &id in cities {
        let records: Vec<&AnswerRecord> = ws.records_of(id).collect();
        let mut row = vec![
            id.to_string(),
            ws.city(id).map(|c| c.name.clone()).unwrap_or_default(),
        ];
        row.extend(questions.iter().map(|q| answers_of(&records, q)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Case-study dossier: every record of one city in input format.
pub fn write_dossier<W: Write>(w: W, ws: &WorkingSet, city: u64) -> std::io::Result<()> {
    write_disclosures(w, ws.records_of(city))
}
