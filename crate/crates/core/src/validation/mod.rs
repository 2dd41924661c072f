//! Cross-engine agreement (prevalence matrix, mpi) and the iteration
//! decision.

mod qualitative;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterPartition, Engine, NOISE};

pub use qualitative::{
    case_study_select, grounded_sample, write_comparison_matrix, write_dossier, QualitativeError,
    QualitativeRoundLog, Round, RoundOutcome,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidationError {
    #[error("partitions cover different sample sets")]
    SampleSetMismatch,
}

/// Dice agreement between the clusters of C (rows) and V (columns). A noise
/// group, if present, is the last row/column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceMatrix {
    pub c_engine: Engine,
    pub v_engine: Engine,
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
    pub b: Vec<Vec<usize>>,
    pub c: Vec<usize>,
    pub v: Vec<usize>,
    pub p: Vec<Vec<f64>>,
}

impl PrevalenceMatrix {
    pub fn m(&self) -> usize {
        self.row_labels.len()
    }

    pub fn n(&self) -> usize {
        self.col_labels.len()
    }

    pub fn transpose(&self) -> Self {
        let t = |x: &Vec<Vec<usize>>| -> Vec<Vec<usize>> {
            (0..self.n())
                .map(|j| (0..self.m()).map(|i| x[i][j]).collect())
                .collect()
        };
        Self {
            c_engine: self.v_engine,
            v_engine: self.c_engine,
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
            b: t(&self.b),
            c: self.v.clone(),
            v: self.c.clone(),
            p: (0..self.n())
                .map(|j| (0..self.m()).map(|i| self.p[i][j]).collect())
                .collect(),
        }
    }
}

fn groups(p: &ClusterPartition) -> Vec<usize> {
    let mut g: Vec<usize> = (0..p.cluster_count).collect();
    if p.noise_count() > 0 {
        g.push(NOISE);
    }
    g
}

pub fn prevalence_matrix(
    cp: &ClusterPartition,
    vp: &ClusterPartition,
) -> Result<PrevalenceMatrix, ValidationError> {
    let mut a: Vec<(u64, usize)> = cp
        .sample_ids
        .iter()
        .copied()
        .zip(cp.labels.iter().copied())
        .collect();
    let mut b: Vec<(u64, usize)> = vp
        .sample_ids
        .iter()
        .copied()
        .zip(vp.labels.iter().copied())
        .collect();
    a.sort_unstable();
    b.sort_unstable();
    if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.0 != y.0) {
        return Err(ValidationError::SampleSetMismatch);
    }
    let rows = groups(cp);
    let cols = groups(vp);
    let index = |labels: &[usize], l: usize| {
        labels
            .iter()
            .position(|&x| x == l)
            .expect("label in group list")
    };
    let mut counts = vec![vec![0usize; cols.len()]; rows.len()];
    for (x, y) in a.iter().zip(&b) {
        counts[index(&rows, x.1)][index(&cols, y.1)] += 1;
    }
    let c: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
    let v: Vec<usize> = (0..cols.len())
        .map(|j| counts.iter().map(|r| r[j]).sum())
        .collect();
    let p = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &bij)| {
                    let denom = c[i] + v[j];
                    if denom == 0 {
                        0.0
                    } else {
                        2.0 * bij as f64 / denom as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(PrevalenceMatrix {
        c_engine: cp.engine,
        v_engine: vp.engine,
        row_labels: rows,
        col_labels: cols,
        b: counts,
        c,
        v,
        p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MpiMode {
    /// Arithmetic mean over all cells.
    #[default]
    Mean,
    /// The printed formula: sum over 1 < i < m, 1 < j < n of P[i][j] / (i j),
    /// 1-based.
    Literal,
}

pub fn mean_prevalence_index(pm: &PrevalenceMatrix, mode: MpiMode) -> f64 {
    let (m, n) = (pm.m(), pm.n());
    if m == 0 || n == 0 {
        return 0.0;
    }
    match mode {
        MpiMode::Mean => pm.p.iter().flatten().sum::<f64>() / (m * n) as f64,
        MpiMode::Literal => {
            let mut s = 0.0;
            for i in 2..m {
                for j in 2..n {
                    s += pm.p[i - 1][j - 1] / (i * j) as f64;
                }
            }
            s
        }
    }
}

/// Samples in the intersections of every cell with P >= `threshold`.
pub fn select_high_prevalence_samples(
    pm: &PrevalenceMatrix,
    cp: &ClusterPartition,
    vp: &ClusterPartition,
    threshold: f64,
) -> Vec<u64> {
    let v = vp.assignments();
    let mut out: Vec<u64> = cp
        .sample_ids
        .iter()
        .zip(&cp.labels)
        .filter(|(id, &cl)| {
            let Some(&vl) = v.get(id) else {
                return false;
            };
            let i = pm.row_labels.iter().position(|&l| l == cl);
            let j = pm.col_labels.iter().position(|&l| l == vl);
            matches!((i, j), (Some(i), Some(j)) if pm.p[i][j] >= threshold)
        })
        .map(|(&id, _)| id)
        .collect();
    out.sort_unstable();
    out
}

/// Prevalence matrix file: header row of `engine:cluster` columns, one row
/// per C cluster, and a trailing mpi line.
pub fn write_prevalence_matrix<W: Write>(
    mut w: W,
    pm: &PrevalenceMatrix,
    mpi: f64,
) -> std::io::Result<()> {
    let name = |e: Engine, l: usize| {
        if l == NOISE {
            format!("{e}:NOISE")
        } else {
            format!("{e}:{l}")
        }
    };
    let mut header = vec![format!("{}\\{}", pm.c_engine, pm.v_engine)];
    header.extend(pm.col_labels.iter().map(|&l| name(pm.v_engine, l)));
    writeln!(w, "{}", header.join(","))?;
    for (i, &l) in pm.row_labels.iter().enumerate() {
        let cells: Vec<String> = pm.p[i].iter().map(|x| format!("{x:.6}")).collect();
        writeln!(w, "{},{}", name(pm.c_engine, l), cells.join(","))?;
    }
    writeln!(w, "mpi,{mpi:.6}")
}

/// Symmetric best-match agreement between two partitions: the mean of the
/// row maxima and of the column maxima of their prevalence matrix, averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub best_match: f64,
    pub margin: f64,
}

impl AgreementSummary {
    pub fn from_matrix(pm: &PrevalenceMatrix, margin: f64) -> Self {
        let mean = |xs: Vec<f64>| {
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().sum::<f64>() / xs.len() as f64
            }
        };
        let rows = mean(
            pm.p.iter()
                .map(|r| r.iter().copied().fold(0.0, f64::max))
                .collect(),
        );
        let cols = mean(
            (0..pm.n())
                .map(|j| pm.p.iter().map(|r| r[j]).fold(0.0, f64::max))
                .collect(),
        );
        Self {
            best_match: (rows + cols) / 2.0,
            margin,
        }
    }

    /// The two validation engines do not point to a clear result.
    pub fn inconclusive(&self) -> bool {
        self.best_match < 1.0 - self.margin
    }
}

token_enum!(
    /// Outcome of one validation step.
    NextStep, "iteration path", {
        NewConfig => "NEW_CONFIG",
        DrillDown => "DRILL_DOWN",
        ToQualitative => "TO_QUALITATIVE",
        RunDbscan => "RUN_DBSCAN",
    }
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationState {
    pub iteration_number: usize,
    pub config_id: String,
    mpi_history: Vec<f64>,
    /// Samples the current iteration clustered.
    pub current_samples: Vec<u64>,
    /// High-prevalence selection proposed by the current iteration.
    pub selected_samples: Option<Vec<u64>>,
    pub dbscan_run: bool,
    pub chosen_path: Option<NextStep>,
}

impl IterationState {
    pub fn new(config_id: impl Into<String>, samples: Vec<u64>) -> Self {
        Self {
            iteration_number: 1,
            config_id: config_id.into(),
            mpi_history: Vec::new(),
            current_samples: samples,
            selected_samples: None,
            dbscan_run: false,
            chosen_path: None,
        }
    }

    pub fn mpi_history(&self) -> &[f64] {
        &self.mpi_history
    }

    pub fn record_mpi(&mut self, mpi: f64) {
        self.mpi_history.push(mpi);
    }

    /// mpi of the previous completed iteration; 0 before the first.
    pub fn previous_mpi(&self) -> f64 {
        self.mpi_history.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationPolicy {
    pub promotion_bar: f64,
    pub agreement_margin: f64,
}

impl Default for IterationPolicy {
    fn default() -> Self {
        Self {
            promotion_bar: 0.8,
            agreement_margin: 0.1,
        }
    }
}

/// Choose the next path. Checked in order: inconclusive engines with DBSCAN
/// not yet run, promotion bar reached, mpi not worse than the previous
/// iteration with a strictly narrower non-empty selection, else a new
/// configuration.
pub fn decide_next_step(
    state: &IterationState,
    latest_mpi: f64,
    agreement: &AgreementSummary,
    policy: &IterationPolicy,
) -> NextStep {
    if agreement.inconclusive() && !state.dbscan_run {
        return NextStep::RunDbscan;
    }
    if latest_mpi >= policy.promotion_bar {
        return NextStep::ToQualitative;
    }
    let narrows = state
        .selected_samples
        .as_ref()
        .is_some_and(|s| !s.is_empty() && s.len() < state.current_samples.len());
    if latest_mpi >= state.previous_mpi() && narrows {
        return NextStep::DrillDown;
    }
    NextStep::NewConfig
}
