//! Capability evaluation matrix.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MaturityError, ProcessPIVector};

token_enum!(
    /// Capability scored for every practice.
    Capability, "capability", {
        Reliability => "RELIABILITY",
        Usability => "USABILITY",
        Integration => "INTEGRATION",
        Auditability => "AUDITABILITY",
        Reproducibility => "REPRODUCIBILITY",
    }
);

token_enum!(
    /// Process areas, with data acquisition split into its three sub-items.
    ProcessArea, "process area", {
        DataModeling => "DATA_MODELING",
        DataAcquisitionCitywide => "DATA_ACQUISITION_CITYWIDE",
        DataAcquisitionGovernment => "DATA_ACQUISITION_GOVERNMENT",
        DataAcquisitionExternal => "DATA_ACQUISITION_EXTERNAL",
        DataProcessing => "DATA_PROCESSING",
        DataAnalysis => "DATA_ANALYSIS",
        ReportBuilding => "REPORT_BUILDING",
        ReportPublishing => "REPORT_PUBLISHING",
        Deployment => "DEPLOYMENT",
        Monitoring => "MONITORING",
    }
);

impl ProcessArea {
    /// Upper bound of the process's performance indicator.
    pub fn range_max(self) -> u8 {
        match self {
            ProcessArea::DataAnalysis => 5,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Practice {
    pub id: String,
    pub process: ProcessArea,
    pub weight: f64,
    /// Levels in [`Capability::ALL`] order.
    pub levels: [u8; 5],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CapabilityEvaluationMatrix {
    pub practices: Vec<Practice>,
    pub goal_fulfillment: BTreeMap<ProcessArea, u8>,
}

const GOALS_MARKER: &str = "[goals]";

fn level(s: &str, what: &str) -> Result<u8, MaturityError> {
    match s.trim().parse::<u8>() {
        Ok(v) if v <= 5 => Ok(v),
        _ => Err(MaturityError::MalformedCem(format!(
            "{what}: `{s}` is not a level 0-5"
        ))),
    }
}

impl CapabilityEvaluationMatrix {
    /// Parse the CEM file: a practices CSV, then a `[goals]` line followed
    /// by a `process,goal` CSV.
    pub fn from_csv_str(text: &str) -> Result<Self, MaturityError> {
        let (practices_part, goals_part) = match text.find(GOALS_MARKER) {
            Some(i) => (&text[..i], &text[i + GOALS_MARKER.len()..]),
            None => (text, ""),
        };
        let malformed = |e: csv::Error| MaturityError::MalformedCem(e.to_string());
        let mut cem = CapabilityEvaluationMatrix::default();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(practices_part.as_bytes());
        for rec in rdr.records() {
            let rec = rec.map_err(malformed)?;
            if rec.len() != 8 {
                return Err(MaturityError::MalformedCem(format!(
                    "practice row has {} fields",
                    rec.len()
                )));
            }
            let process: ProcessArea = rec[1]
                .parse()
                .map_err(|e: crate::ParseTokenError| MaturityError::MalformedCem(e.to_string()))?;
            let weight: f64 = rec[2]
                .parse()
                .ok()
                .filter(|w: &f64| *w > 0.0)
                .ok_or_else(|| MaturityError::MalformedCem(format!("bad weight `{}`", &rec[2])))?;
            let mut levels = [0u8; 5];
            for (k, slot) in levels.iter_mut().enumerate() {
                *slot = level(&rec[3 + k], &rec[0])?;
            }
            cem.practices.push(Practice {
                id: rec[0].to_string(),
                process,
                weight,
                levels,
            });
        }
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(goals_part.trim_start().as_bytes());
        if !goals_part.trim().is_empty() {
            for rec in rdr.records() {
                let rec = rec.map_err(malformed)?;
                let process: ProcessArea =
                    rec.get(0)
                        .unwrap_or("")
                        .parse()
                        .map_err(|e: crate::ParseTokenError| {
                            MaturityError::MalformedCem(e.to_string())
                        })?;
                cem.goal_fulfillment
                    .insert(process, level(rec.get(1).unwrap_or(""), "goal")?);
            }
        }
        Ok(cem)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MaturityError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MaturityError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_csv_str(&text)
    }

    pub fn validate(&self) -> Result<(), MaturityError> {
        let mut sums: BTreeMap<ProcessArea, f64> = BTreeMap::new();
        for p in &self.practices {
            *sums.entry(p.process).or_default() += p.weight;
            if p.levels.iter().any(|&l| l > 5) {
                return Err(MaturityError::MalformedCem(format!(
                    "{}: level above 5",
                    p.id
                )));
            }
        }
        for (process, sum) in sums {
            if (sum - 1.0).abs() > 1e-9 {
                return Err(MaturityError::WeightSumViolation { process, sum });
            }
        }
        if self.goal_fulfillment.values().any(|&g| g > 5) {
            return Err(MaturityError::MalformedCem("goal above 5".into()));
        }
        Ok(())
    }

    /// Raw score of one process: weighted mean capability plus goal, 0-10.
    pub fn raw_score(&self, process: ProcessArea) -> f64 {
        let weighted: f64 = self
            .practices
            .iter()
            .filter(|p| p.process == process)
            .map(|p| p.weight * p.levels.iter().map(|&l| f64::from(l)).sum::<f64>() / 5.0)
            .sum();
        weighted + f64::from(self.goal_fulfillment.get(&process).copied().unwrap_or(0))
    }
}

/// Score every process and rescale it into its indicator range.
pub fn evaluate_cem(
    cem: &CapabilityEvaluationMatrix,
    sample_id: u64,
) -> Result<ProcessPIVector, MaturityError> {
    cem.validate()?;
    let pi = |p: ProcessArea| -> u8 {
        let scaled = cem.raw_score(p) / 10.0 * f64::from(p.range_max());
        (scaled.round() as u8).min(p.range_max())
    };
    use ProcessArea as P;
    Ok(ProcessPIVector {
        sample_id,
        dm: pi(P::DataModeling),
        da: [
            pi(P::DataAcquisitionCitywide),
            pi(P::DataAcquisitionGovernment),
            pi(P::DataAcquisitionExternal),
        ],
        dp: pi(P::DataProcessing),
        dan: pi(P::DataAnalysis),
        rb: pi(P::ReportBuilding),
        rp: pi(P::ReportPublishing),
        dep: pi(P::Deployment),
        mon: pi(P::Monitoring),
    })
}
