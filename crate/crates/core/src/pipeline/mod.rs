//! Phase orchestration: ingest, filter, preprocess, cluster, validate,
//! qualitative, maturity and report, with the drill-down iteration loop,
//! error gating between phases and a digest manifest of every output.

mod config;
mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::cluster::{
    cluswisard_auto, cluswisard_fit, dbscan_fit, feature_vectors, hierarchical_fit, kmeans_fit,
    knee_eps, standardize, write_clusters_distribution, write_samples_distribution,
    ClusterPartition, Hyperparameters, Setting,
};
use crate::encoding::{
    collect_statistics, encode_working_set, write_binary, write_consolidation, write_info,
    write_questions_list, write_statistics, write_textual, Dictionary, Encoded, EncodingConfig,
};
use crate::filter::{apply_filter, parse_filter, FilterError};
use crate::ingest::{
    join_externals, parse_disclosure_csv, parse_externals_csv, write_disclosures, NameNormalizer,
    WorkingSet,
};
use crate::issues::{IssueLog, Level};
use crate::maturity::{
    derive_erml, derive_pi_from_data, evaluate_cem, quality_indicators, regional_breakdown,
    write_erml_report, write_quality_report, write_regional_report, CapabilityEvaluationMatrix,
    PiMapping, ProcessArea,
};
use crate::model::{load_model, ModelDefinition};
use crate::validation::{
    case_study_select, decide_next_step, grounded_sample, mean_prevalence_index, prevalence_matrix,
    select_high_prevalence_samples, write_comparison_matrix, write_dossier,
    write_prevalence_matrix, AgreementSummary, IterationState, NextStep, PrevalenceMatrix,
    QualitativeError, QualitativeRoundLog,
};

pub use config::{HyperparameterOverrides, Inputs, Overrides, RunConfiguration};
pub use manifest::{
    sha256_hex, verify_manifest, IterationRecord, RunManifest, StepRecord, VerifyReport,
    MANIFEST_FILE,
};

/// Exit code for a loop that used up `max_iterations` without a terminal path.
pub const EXIT_NON_CONVERGENCE: i32 = 4;

pub const PROCESSING_LOG: &str = "processing.log";

token_enum!(
    /// Pipeline phase, in execution order.
    Phase, "phase", {
        Ingest => "ingest",
        Filter => "filter",
        Preprocess => "preprocess",
        Cluster => "cluster",
        Validate => "validate",
        Qualitative => "qualitative",
        Maturity => "maturity",
        Report => "report",
    }
);

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("phase `{phase}` cannot run now: {reason}")]
    PhaseOrderViolation { phase: Phase, reason: String },
    #[error("phase `{phase}` blocked: {errors} error(s) were logged by `{upstream}`")]
    UpstreamErrorGate {
        phase: Phase,
        upstream: Phase,
        errors: usize,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error("cannot access {path}: {reason}")]
    Io { path: String, reason: String },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, e: impl ToString) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }

    /// 2 for configuration and ordering problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::PhaseOrderViolation { .. } => 2,
            _ => 3,
        }
    }
}

fn data(e: impl ToString) -> PipelineError {
    PipelineError::Data(e.to_string())
}

/// What one executed phase produced.
#[derive(Debug, Clone)]
pub struct PhaseReport {
    pub phase: Phase,
    pub iteration: Option<usize>,
    pub files: Vec<String>,
    pub issues: IssueLog,
}

/// Line-oriented processing log with logical timestamps, so reruns
/// produce identical bytes.
#[derive(Debug, Default)]
struct ProcessingLog {
    lines: Vec<String>,
}

impl ProcessingLog {
    fn note(&mut self, level: Level, phase: Phase, msg: &str) {
        let n = self.lines.len() + 1;
        self.lines
            .push(format!("{n:06} {:<5} {phase} {msg}", level.to_string()));
    }

    fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

/// Working data of one clustering iteration.
#[derive(Debug)]
struct Iteration {
    number: usize,
    ws: WorkingSet,
    encoded: Option<Encoded>,
    features: Vec<Vec<f64>>,
    hp: Option<Hyperparameters>,
    wisard: Option<ClusterPartition>,
    hierarchical: Option<ClusterPartition>,
    kmeans: Option<ClusterPartition>,
}

impl Iteration {
    fn new(number: usize, ws: WorkingSet) -> Self {
        Self {
            number,
            ws,
            encoded: None,
            features: Vec::new(),
            hp: None,
            wisard: None,
            hierarchical: None,
            kmeans: None,
        }
    }

    fn dir(&self, phase: Phase) -> String {
        format!("{phase}/iter-{:02}", self.number)
    }
}

pub struct Pipeline {
    cfg: RunConfiguration,
    run_dir: PathBuf,
    manifest: RunManifest,
    plog: ProcessingLog,
    step_files: Vec<String>,
    model: Option<Arc<ModelDefinition>>,
    dictionary: Option<Dictionary>,
    ingested: Option<WorkingSet>,
    filtered: Option<WorkingSet>,
    iterations: Vec<Iteration>,
    state: Option<IterationState>,
}

impl Pipeline {
    /// A fresh pipeline; nothing is written until the first phase runs.
    pub fn new(cfg: RunConfiguration) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let run_dir = cfg.run_dir();
        let manifest = RunManifest::new(cfg.snapshot());
        Ok(Self {
            cfg,
            run_dir,
            manifest,
            plog: ProcessingLog::default(),
            step_files: Vec::new(),
            model: None,
            dictionary: None,
            ingested: None,
            filtered: None,
            iterations: Vec::new(),
            state: None,
        })
    }

    /// Continue a run from its manifest on disk by replaying the recorded
    /// steps. A manifest written under a different configuration is ignored.
    pub fn resume(cfg: RunConfiguration) -> Result<Self, PipelineError> {
        let mut p = Self::new(cfg)?;
        if let Some(previous) = RunManifest::load(&p.run_dir)? {
            if previous.config == p.manifest.config {
                for step in &previous.steps {
                    p.run_phase(step.phase)?;
                }
            } else {
                log::warn!(
                    "manifest in {} belongs to another configuration; starting over",
                    p.run_dir.display()
                );
            }
        }
        Ok(p)
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn config(&self) -> &RunConfiguration {
        &self.cfg
    }

    /// Phases that may run next.
    pub fn allowed_next(&self) -> Vec<Phase> {
        let mut out = vec![Phase::Ingest];
        let last = self.manifest.steps.last().map(|s| s.phase);
        match last {
            Some(Phase::Ingest) => out.push(Phase::Filter),
            Some(Phase::Filter) => out.push(Phase::Preprocess),
            Some(Phase::Preprocess) => out.push(Phase::Cluster),
            Some(Phase::Cluster) => out.push(Phase::Validate),
            Some(Phase::Validate) => {
                if self.pending_drill_down() {
                    out.push(Phase::Preprocess);
                }
                out.push(Phase::Qualitative);
            }
            Some(Phase::Qualitative) => out.push(Phase::Maturity),
            Some(Phase::Maturity) => out.push(Phase::Report),
            Some(Phase::Report) | None => {}
        }
        out
    }

    fn pending_drill_down(&self) -> bool {
        let validated = self.manifest.iterations.len();
        self.manifest.outcome == Some(NextStep::DrillDown) && self.iterations.len() > validated
    }

    /// Run one phase after checking order and the upstream error gate.
    pub fn run_phase(&mut self, phase: Phase) -> Result<PhaseReport, PipelineError> {
        if !self.allowed_next().contains(&phase) {
            let last = self
                .manifest
                .steps
                .last()
                .map_or("nothing".to_string(), |s| s.phase.to_string());
            return Err(PipelineError::PhaseOrderViolation {
                phase,
                reason: format!(
                    "last completed step is {last}; allowed next: {:?}",
                    self.allowed_names()
                ),
            });
        }
        if phase != Phase::Ingest {
            if let Some(s) = self.manifest.steps.iter().find(|s| s.errors > 0) {
                return Err(PipelineError::UpstreamErrorGate {
                    phase,
                    upstream: s.phase,
                    errors: s.errors,
                });
            }
        }

        log::info!("phase {phase} started");
        self.step_files.clear();
        let mut issues = IssueLog::new();
        let iteration = match phase {
            Phase::Ingest => {
                self.ingest(&mut issues)?;
                None
            }
            Phase::Filter => {
                self.filter()?;
                None
            }
            Phase::Preprocess => Some(self.preprocess(&mut issues)?),
            Phase::Cluster => Some(self.cluster()?),
            Phase::Validate => Some(self.validate()?),
            Phase::Qualitative => {
                self.qualitative()?;
                None
            }
            Phase::Maturity => {
                self.maturity()?;
                None
            }
            Phase::Report => {
                self.report()?;
                None
            }
        };

        for issue in issues.entries() {
            let text = issue.to_string();
            let body = text.split_once('[').map_or(text.as_str(), |(_, rest)| rest);
            self.plog.note(issue.level, phase, &format!("[{body}"));
        }
        let summary = format!(
            "completed{}: {} file(s), {} info, {} warning(s), {} error(s)",
            iteration.map_or(String::new(), |i| format!(" iteration {i}")),
            self.step_files.len(),
            issues.count(Level::Info),
            issues.count(Level::Warn),
            issues.count(Level::Error)
        );
        self.plog.note(Level::Info, phase, &summary);
        log::info!("phase {phase} {summary}");
        self.manifest.steps.push(StepRecord {
            phase,
            iteration,
            infos: issues.count(Level::Info),
            warnings: issues.count(Level::Warn),
            errors: issues.count(Level::Error),
        });
        let files = self.step_files.clone();
        let log_text = self.plog.render();
        self.emit(PROCESSING_LOG, log_text.as_bytes())?;
        self.save_manifest()?;
        Ok(PhaseReport {
            phase,
            iteration,
            files,
            issues,
        })
    }

    fn allowed_names(&self) -> Vec<&'static str> {
        self.allowed_next().iter().map(|p| p.as_str()).collect()
    }

    /// Run every phase, iterating preprocess, cluster and validate while
    /// the loop drills down. Non-convergence is reported through
    /// [`RunManifest::converged`].
    pub fn run_all(&mut self) -> Result<RunManifest, PipelineError> {
        self.run_phase(Phase::Ingest)?;
        self.run_phase(Phase::Filter)?;
        loop {
            self.run_phase(Phase::Preprocess)?;
            self.run_phase(Phase::Cluster)?;
            self.run_phase(Phase::Validate)?;
            if !self.pending_drill_down() {
                break;
            }
        }
        self.run_phase(Phase::Qualitative)?;
        self.run_phase(Phase::Maturity)?;
        self.run_phase(Phase::Report)?;
        Ok(self.manifest.clone())
    }

    fn emit(&mut self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.run_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
        self.manifest
            .files
            .insert(rel.to_string(), sha256_hex(bytes));
        if rel != PROCESSING_LOG {
            self.step_files.push(rel.to_string());
        }
        Ok(())
    }

    fn save_manifest(&self) -> Result<(), PipelineError> {
        let path = self.run_dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.manifest.to_json()).map_err(|e| PipelineError::io(&path, e))
    }

    fn model(&self) -> &Arc<ModelDefinition> {
        self.model.as_ref().expect("ingest ran")
    }

    fn current(&self) -> &Iteration {
        self.iterations.last().expect("filter ran")
    }

    fn current_mut(&mut self) -> &mut Iteration {
        self.iterations.last_mut().expect("filter ran")
    }

    /// Remove the previous output tree of this configuration. A directory
    /// without a manifest is never touched.
    fn reset_run_dir(&mut self) -> Result<(), PipelineError> {
        let dir = &self.run_dir;
        if dir.exists() {
            let ours = dir.join(MANIFEST_FILE).is_file();
            let empty = std::fs::read_dir(dir)
                .map_err(|e| PipelineError::io(dir, e))?
                .next()
                .is_none();
            if !ours && !empty {
                return Err(PipelineError::Config(format!(
                    "{} exists and holds no {MANIFEST_FILE}; refusing to overwrite it",
                    dir.display()
                )));
            }
            std::fs::remove_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        self.manifest = RunManifest::new(self.cfg.snapshot());
        self.plog = ProcessingLog::default();
        self.ingested = None;
        self.filtered = None;
        self.iterations.clear();
        self.state = None;
        Ok(())
    }

    fn ingest(&mut self, issues: &mut IssueLog) -> Result<(), PipelineError> {
        self.reset_run_dir()?;
        let inputs = self.cfg.inputs.clone();
        let model = load_model(self.cfg.resolve(&inputs.model))
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let model = Arc::new(model);
        let dict_path = self.cfg.resolve(&inputs.dictionary);
        let dictionary =
            Dictionary::load(&dict_path).map_err(|e| PipelineError::io(&dict_path, e))?;

        let (mut ws, log) =
            parse_disclosure_csv(self.cfg.resolve(&inputs.disclosures), Arc::clone(&model))
                .map_err(data)?;
        issues.extend(log);
        if ws.cities.is_empty() {
            return Err(PipelineError::Data(format!(
                "{} holds no `{}` {} disclosure rows",
                inputs.disclosures.display(),
                model.form_id,
                model.reporting_year
            )));
        }
        if let Some(ext) = &inputs.externals {
            let rows = parse_externals_csv(self.cfg.resolve(ext), issues).map_err(data)?;
            ws = join_externals(ws, &rows, &NameNormalizer::new(), issues);
        }

        let mut cities = csv::Writer::from_writer(Vec::new());
        cities
            .write_record(["SampleId", "Name", "Country", "Region"])
            .map_err(data)?;
        for c in &ws.cities {
            cities
                .write_record([
                    c.sample_id.to_string(),
                    c.name.clone(),
                    c.country.clone(),
                    c.region.to_string(),
                ])
                .map_err(data)?;
        }
        let mut externals = csv::Writer::from_writer(Vec::new());
        externals
            .write_record(["SampleId", "Kind", "Value"])
            .map_err(data)?;
        for e in &ws.externals {
            externals
                .write_record([
                    e.sample_id.to_string(),
                    e.kind.to_string(),
                    e.value.to_string(),
                ])
                .map_err(data)?;
        }
        let mut discarded = csv::Writer::from_writer(Vec::new());
        discarded
            .write_record(["SampleId", "Question", "Reason"])
            .map_err(data)?;
        for d in &ws.discarded {
            discarded
                .write_record([
                    d.sample_id.to_string(),
                    d.question_number.clone(),
                    d.reason.clone(),
                ])
                .map_err(data)?;
        }
        self.emit("ingest/cities.csv", &cities.into_inner().map_err(data)?)?;
        self.emit(
            "ingest/externals.csv",
            &externals.into_inner().map_err(data)?,
        )?;
        self.emit(
            "ingest/discarded.csv",
            &discarded.into_inner().map_err(data)?,
        )?;

        self.plog.note(
            Level::Info,
            Phase::Ingest,
            &format!(
                "{} cities, {} records, {} externals",
                ws.cities.len(),
                ws.records.len(),
                ws.externals.len()
            ),
        );
        self.model = Some(model);
        self.dictionary = Some(dictionary);
        self.ingested = Some(ws);
        Ok(())
    }

    fn filter(&mut self) -> Result<(), PipelineError> {
        let ws = self.ingested.as_ref().expect("ingest ran");
        let (filtered, rendered) = match self.cfg.filter.as_deref().map(str::trim) {
            Some(text) if !text.is_empty() => {
                let expr = parse_filter(text).map_err(|e| PipelineError::Config(e.to_string()))?;
                let out = apply_filter(&expr, ws, &self.cfg.base_dir).map_err(|e| match e {
                    FilterError::UnreadableSampleFile { .. } => data(e),
                    other => PipelineError::Config(other.to_string()),
                })?;
                (out, expr.to_string())
            }
            _ => (ws.clone(), String::new()),
        };
        if filtered.records.is_empty() {
            return Err(PipelineError::Data("the filter leaves no records".into()));
        }
        let mut buf = Vec::new();
        write_disclosures(&mut buf, &filtered.records).map_err(data)?;
        self.emit("filter/filtered.csv", &buf)?;
        self.emit("filter/expression.txt", format!("{rendered}\n").as_bytes())?;
        self.plog.note(
            Level::Info,
            Phase::Filter,
            &format!(
                "{} cities, {} records kept",
                filtered.cities.len(),
                filtered.records.len()
            ),
        );
        let ids = filtered.cities.iter().map(|c| c.sample_id).collect();
        self.state = Some(IterationState::new(self.cfg.config_id.clone(), ids));
        self.iterations = vec![Iteration::new(1, filtered.clone())];
        self.filtered = Some(filtered);
        Ok(())
    }

    fn preprocess(&mut self, issues: &mut IssueLog) -> Result<usize, PipelineError> {
        let cfg = EncodingConfig {
            base_year: self.cfg.base_year,
            max_dist: self.cfg.max_dist,
        };
        let it = self.current();
        let encoded = encode_working_set(&it.ws, &cfg, issues);
        if encoded.plan.field_order.is_empty() || encoded.samples.is_empty() {
            return Err(PipelineError::Data(format!(
                "iteration {} has nothing to encode",
                it.number
            )));
        }
        let stats = collect_statistics(&it.ws, self.dictionary.as_ref().expect("ingest ran"));
        let dir = it.dir(Phase::Preprocess);
        let number = it.number;

        let mut textual = Vec::new();
        write_textual(&mut textual, &encoded.plan, &encoded.samples).map_err(data)?;
        let mut binary = Vec::new();
        write_binary(&mut binary, &encoded.samples).map_err(data)?;
        let mut consolidation = Vec::new();
        write_consolidation(&mut consolidation, &encoded.plan).map_err(data)?;
        let mut questions = Vec::new();
        write_questions_list(&mut questions, &encoded.plan, self.model()).map_err(data)?;
        let mut info = Vec::new();
        write_info(&mut info, &encoded.plan, encoded.samples.len()).map_err(data)?;
        let mut statistics = Vec::new();
        write_statistics(&mut statistics, &stats).map_err(data)?;
        self.emit(&format!("{dir}/textual.csv"), &textual)?;
        self.emit(&format!("{dir}/binary.bin"), &binary)?;
        self.emit(&format!("{dir}/consolidation.csv"), &consolidation)?;
        self.emit(&format!("{dir}/questions.txt"), &questions)?;
        self.emit(&format!("{dir}/info.txt"), &info)?;
        self.emit(&format!("{dir}/statistics.csv"), &statistics)?;

        let it = self.current_mut();
        let strings: Vec<Vec<String>> = encoded
            .samples
            .iter()
            .map(|s| s.textual.iter().map(|f| f.text()).collect())
            .collect();
        it.features = standardize(&feature_vectors(&encoded.plan, &strings));
        it.encoded = Some(encoded);
        Ok(number)
    }

    fn cluster(&mut self) -> Result<usize, PipelineError> {
        let it = self.current();
        let encoded = it.encoded.as_ref().expect("preprocess ran");
        let ids: Vec<u64> = encoded.samples.iter().map(|s| s.sample_id).collect();
        let pictures: Vec<Vec<bool>> = encoded.samples.iter().map(|s| s.bits.clone()).collect();
        let dir = it.dir(Phase::Cluster);
        let number = it.number;

        let mut hp = self.cfg.hyperparameters();
        let mut discover = None;
        if hp.threshold == Setting::Auto || hp.discriminator_limit == Setting::Auto {
            let (chosen, report) = cluswisard_auto(&ids, &pictures, &hp).map_err(data)?;
            hp = chosen;
            discover = Some(report);
        }
        let fit = cluswisard_fit(&ids, &pictures, &hp).map_err(data)?;
        let n = ids.len();
        let k = hp.k.unwrap_or(fit.partition.cluster_count).clamp(1, n);
        let hier = hierarchical_fit(&ids, &it.features, k).map_err(data)?;
        let km = kmeans_fit(&ids, &it.features, k, hp.seed).map_err(data)?;

        if let Some(report) = discover {
            let mut grid = String::from("threshold,discriminator_limit,agreement\n");
            for (t, l, a) in &report.grid {
                let _ = writeln!(grid, "{t:.1},{l},{a:.6}");
            }
            self.emit(&format!("{dir}/discover.csv"), grid.as_bytes())?;
        }
        self.emit(
            &format!("{dir}/hyperparameters.txt"),
            hp.to_file_string().as_bytes(),
        )?;
        for p in [&fit.partition, &hier, &km.partition] {
            let mut buf = Vec::new();
            write_clusters_distribution(&mut buf, p).map_err(data)?;
            self.emit(
                &format!("{dir}/clusters_{}.csv", p.engine.as_str().to_lowercase()),
                &buf,
            )?;
        }
        let mut buf = Vec::new();
        write_samples_distribution(&mut buf, &fit.distribution).map_err(data)?;
        self.emit(&format!("{dir}/samples_cluswisard.csv"), &buf)?;
        let mut inertia = String::from("iteration,inertia\n");
        for (i, v) in km.inertia_history.iter().enumerate() {
            let _ = writeln!(inertia, "{},{v:.6}", i + 1);
        }
        self.emit(&format!("{dir}/kmeans_inertia.csv"), inertia.as_bytes())?;

        self.plog.note(
            Level::Info,
            Phase::Cluster,
            &format!(
                "iteration {number}: {n} samples, ClusWiSARD threshold={} limit={} -> {} clusters, k={k}",
                hp.threshold, hp.discriminator_limit, fit.partition.cluster_count
            ),
        );
        let it = self.current_mut();
        it.hp = Some(hp);
        it.wisard = Some(fit.partition);
        it.hierarchical = Some(hier);
        it.kmeans = Some(km.partition);
        Ok(number)
    }

    fn validate(&mut self) -> Result<usize, PipelineError> {
        let mode = self.cfg.mpi_mode;
        let policy = self.cfg.policy();
        let it = self.current();
        let number = it.number;
        let dir = it.dir(Phase::Validate);
        let wisard = it.wisard.clone().expect("cluster ran");
        let hier = it.hierarchical.clone().expect("cluster ran");
        let km = it.kmeans.clone().expect("cluster ran");
        let hp = it.hp.clone().expect("cluster ran");
        let feats = it.features.clone();

        let mut matrices: Vec<(PrevalenceMatrix, f64)> = Vec::new();
        for v in [&hier, &km] {
            let pm = prevalence_matrix(&wisard, v).map_err(data)?;
            let mpi = mean_prevalence_index(&pm, mode);
            matrices.push((pm, mpi));
        }
        let engines_pm = prevalence_matrix(&hier, &km).map_err(data)?;
        let agreement = AgreementSummary::from_matrix(&engines_pm, policy.agreement_margin);

        let mut state = self.state.take().expect("filter ran");
        state.current_samples = wisard.sample_ids.clone();
        state.dbscan_run = false;
        let (mut gating, mut selected) = gate(&matrices, &wisard, &[&hier, &km]);
        state.selected_samples = Some(selected.clone());
        let mut path = decide_next_step(&state, gating, &agreement, &policy);

        let mut dbscan = None;
        if path == NextStep::RunDbscan {
            let eps = hp.eps.unwrap_or_else(|| knee_eps(&feats, hp.min_pts));
            let db = dbscan_fit(&wisard.sample_ids, &feats, eps, hp.min_pts).map_err(data)?;
            let pm = prevalence_matrix(&wisard, &db).map_err(data)?;
            let mpi = mean_prevalence_index(&pm, mode);
            matrices.push((pm, mpi));
            (gating, selected) = gate(&matrices, &wisard, &[&hier, &km, &db]);
            state.selected_samples = Some(selected.clone());
            state.dbscan_run = true;
            self.plog.note(
                Level::Info,
                Phase::Validate,
                &format!(
                    "iteration {number}: engines inconclusive, DBSCAN eps={eps:.6} -> {} clusters",
                    db.cluster_count
                ),
            );
            path = decide_next_step(&state, gating, &agreement, &policy);
            dbscan = Some(db);
        }
        state.record_mpi(gating);
        state.chosen_path = Some(path);

        for (pm, mpi) in &matrices {
            let mut buf = Vec::new();
            write_prevalence_matrix(&mut buf, pm, *mpi).map_err(data)?;
            self.emit(
                &format!(
                    "{dir}/prevalence_{}.csv",
                    pm.v_engine.as_str().to_lowercase()
                ),
                &buf,
            )?;
        }
        let mut buf = Vec::new();
        write_prevalence_matrix(
            &mut buf,
            &engines_pm,
            mean_prevalence_index(&engines_pm, mode),
        )
        .map_err(data)?;
        self.emit(&format!("{dir}/agreement_hierarchical_kmeans.csv"), &buf)?;
        if let Some(db) = &dbscan {
            let mut buf = Vec::new();
            write_clusters_distribution(&mut buf, db).map_err(data)?;
            self.emit(&format!("{dir}/clusters_dbscan.csv"), &buf)?;
        }
        let mut sel = String::new();
        for id in &selected {
            let _ = writeln!(sel, "{id}");
        }
        self.emit(&format!("{dir}/selected_samples.txt"), sel.as_bytes())?;

        let mut mpi_by_engine = BTreeMap::new();
        let mut decision = String::new();
        for (pm, mpi) in &matrices {
            mpi_by_engine.insert(pm.v_engine.to_string(), *mpi);
            let _ = writeln!(
                decision,
                "mpi_{}={mpi:.6}",
                pm.v_engine.as_str().to_lowercase()
            );
        }
        let _ = writeln!(decision, "gating_mpi={gating:.6}");
        let _ = writeln!(decision, "previous_mpi={:.6}", previous_of(&state));
        let _ = writeln!(decision, "best_match={:.6}", agreement.best_match);
        let _ = writeln!(decision, "inconclusive={}", agreement.inconclusive());
        let _ = writeln!(decision, "selected={}", selected.len());
        let _ = writeln!(decision, "path={path}");
        self.emit(&format!("{dir}/decision.txt"), decision.as_bytes())?;

        let mut clusters = BTreeMap::new();
        for p in [Some(&wisard), Some(&hier), Some(&km), dbscan.as_ref()]
            .into_iter()
            .flatten()
        {
            clusters.insert(p.engine.to_string(), p.cluster_count);
        }
        self.manifest.iterations.push(IterationRecord {
            iteration: number,
            samples: wisard.len(),
            hyperparameters: hp.to_file_string(),
            clusters,
            mpi: mpi_by_engine,
            gating_mpi: gating,
            best_match: agreement.best_match,
            selected: selected.len(),
            path,
        });
        self.manifest.outcome = Some(path);
        self.plog.note(
            Level::Info,
            Phase::Validate,
            &format!(
                "iteration {number}: gating mpi {gating:.6}, best match {:.6} -> {path}",
                agreement.best_match
            ),
        );

        let drill = path == NextStep::DrillDown;
        self.manifest.converged = !drill;
        if drill {
            if number < self.cfg.max_iterations {
                let keep: BTreeSet<u64> = selected.iter().copied().collect();
                let filtered = self.filtered.as_ref().expect("filter ran");
                let records = filtered
                    .records
                    .iter()
                    .filter(|r| keep.contains(&r.sample_id))
                    .cloned()
                    .collect();
                let next = filtered.with_records(records);
                state.iteration_number = number + 1;
                state.current_samples = selected;
                state.selected_samples = None;
                state.dbscan_run = false;
                self.iterations.push(Iteration::new(number + 1, next));
            } else {
                self.plog.note(
                    Level::Warn,
                    Phase::Validate,
                    &format!(
                        "max_iterations {} reached while drilling down",
                        self.cfg.max_iterations
                    ),
                );
            }
        }
        self.state = Some(state);
        Ok(number)
    }

    fn qualitative(&mut self) -> Result<(), PipelineError> {
        let seed = self.cfg.seed;
        let fraction = self.cfg.grounded_fraction;
        let it = self.current();
        let partition = it.wisard.clone().expect("cluster ran");
        let mut questions: Vec<String> = Vec::new();
        for f in &it
            .encoded
            .as_ref()
            .expect("preprocess ran")
            .plan
            .field_order
        {
            if questions.last() != Some(&f.question_number) {
                questions.push(f.question_number.clone());
            }
        }
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        for c in 0..partition.cluster_count {
            let dir = format!("qualitative/cluster-{c:02}");
            let mut log = QualitativeRoundLog::new(c, partition.members(c));
            loop {
                let out = grounded_sample(&mut log, fraction, &questions, seed).map_err(data)?;
                let mut buf = Vec::new();
                write_comparison_matrix(&mut buf, &it.ws, &out.round.sampled, &questions)
                    .map_err(data)?;
                files.push((
                    format!("{dir}/round-{:02}.csv", out.round.round_number),
                    buf,
                ));
                if out.complete {
                    break;
                }
            }
            loop {
                match case_study_select(&partition, &mut log, seed) {
                    Ok(city) => {
                        let target = partition.label_of(city).unwrap_or_default();
                        let mut buf = Vec::new();
                        write_dossier(&mut buf, &it.ws, city).map_err(data)?;
                        files.push((format!("{dir}/case-{target:02}-{city}.csv"), buf));
                    }
                    Err(QualitativeError::AllClustersVisited) => break,
                    Err(e) => return Err(data(e)),
                }
            }
            let mut json = serde_json::to_string_pretty(&log).map_err(data)?;
            json.push('\n');
            files.push((format!("{dir}/rounds.json"), json.into_bytes()));
        }
        let n = partition.cluster_count;
        for (rel, bytes) in files {
            self.emit(&rel, &bytes)?;
        }
        self.plog.note(
            Level::Info,
            Phase::Qualitative,
            &format!("{n} cluster(s) sampled"),
        );
        Ok(())
    }

    fn maturity(&mut self) -> Result<(), PipelineError> {
        let inputs = self.cfg.inputs.clone();
        let mapping = PiMapping::load(self.cfg.resolve(&inputs.pi_mapping))
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let ws = self.ingested.as_ref().expect("ingest ran");
        let pis = derive_pi_from_data(ws, &mapping);
        let stats = collect_statistics(ws, self.dictionary.as_ref().expect("ingest ran"));
        let inds = quality_indicators(ws, &stats);
        let partition = self.iterations[0].wisard.as_ref().expect("cluster ran");
        let regional = regional_breakdown(partition, &inds, &ws.cities).map_err(data)?;

        let mut erml = Vec::new();
        write_erml_report(&mut erml, &pis, &ws.cities).map_err(data)?;
        let mut quality = Vec::new();
        write_quality_report(&mut quality, &inds).map_err(data)?;
        let mut region = Vec::new();
        write_regional_report(&mut region, &regional).map_err(data)?;
        let mut statistics = Vec::new();
        write_statistics(&mut statistics, &stats).map_err(data)?;
        let cem = match &inputs.cem {
            Some(p) => {
                let cem = CapabilityEvaluationMatrix::load(self.cfg.resolve(p)).map_err(data)?;
                let pi = evaluate_cem(&cem, 0).map_err(data)?;
                let mut s = String::from("Process,Raw,PI,Max\n");
                for (&process, (v, max)) in ProcessArea::ALL.iter().zip(pi.entries()) {
                    let _ = writeln!(s, "{process},{:.6},{v},{max}", cem.raw_score(process));
                }
                Some(s)
            }
            None => None,
        };
        let mut levels = [0usize; 6];
        for pi in &pis {
            levels[usize::from(derive_erml(pi).level())] += 1;
        }

        self.emit("maturity/erml.csv", &erml)?;
        self.emit("maturity/quality.csv", &quality)?;
        self.emit("maturity/regional.csv", &region)?;
        self.emit("maturity/statistics.csv", &statistics)?;
        if let Some(s) = cem {
            self.emit("maturity/cem.csv", s.as_bytes())?;
        }
        self.plog.note(
            Level::Info,
            Phase::Maturity,
            &format!("ERM-L histogram {levels:?} (mapping {})", mapping.version),
        );
        Ok(())
    }

    fn report(&mut self) -> Result<(), PipelineError> {
        let m = &self.manifest;
        let mut s = String::new();
        let _ = writeln!(s, "config_id={}", self.cfg.config_id);
        let _ = writeln!(s, "seed={}", self.cfg.seed);
        let _ = writeln!(s, "iterations={}", m.iterations.len());
        let _ = writeln!(
            s,
            "outcome={}",
            m.outcome.map_or("none".to_string(), |p| p.to_string())
        );
        let _ = writeln!(s, "converged={}", m.converged);
        for r in &m.iterations {
            let clusters: Vec<String> =
                r.clusters.iter().map(|(e, c)| format!("{e}:{c}")).collect();
            let _ = writeln!(
                s,
                "iteration {}: samples={} clusters={} gating_mpi={:.6} best_match={:.6} selected={} path={}",
                r.iteration,
                r.samples,
                clusters.join(","),
                r.gating_mpi,
                r.best_match,
                r.selected,
                r.path
            );
        }
        if let Some(ws) = &self.ingested {
            let mapping = PiMapping::load(self.cfg.resolve(&self.cfg.inputs.pi_mapping))
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            let mut levels = [0usize; 6];
            for pi in derive_pi_from_data(ws, &mapping) {
                levels[usize::from(derive_erml(&pi).level())] += 1;
            }
            for (level, count) in levels.iter().enumerate() {
                let _ = writeln!(s, "erml_{level}={count}");
            }
        }
        let (w, e) = m
            .steps
            .iter()
            .fold((0, 0), |(w, e), st| (w + st.warnings, e + st.errors));
        let _ = writeln!(s, "warnings={w}");
        let _ = writeln!(s, "errors={e}");
        self.emit("report/summary.txt", s.as_bytes())
    }
}

fn previous_of(state: &IterationState) -> f64 {
    let h = state.mpi_history();
    if h.len() >= 2 {
        h[h.len() - 2]
    } else {
        0.0
    }
}

/// Gating mpi is the minimum over the validation matrices; the selection
/// comes from the gating matrix with its mpi as the cell threshold.
fn gate(
    matrices: &[(PrevalenceMatrix, f64)],
    c: &ClusterPartition,
    vs: &[&ClusterPartition],
) -> (f64, Vec<u64>) {
    let (idx, mpi) = matrices.iter().enumerate().map(|(i, (_, m))| (i, *m)).fold(
        (0, f64::INFINITY),
        |best, cur| if cur.1 < best.1 { cur } else { best },
    );
    let selected = select_high_prevalence_samples(&matrices[idx].0, c, vs[idx], mpi);
    (mpi, selected)
}

/// Load the configuration, apply overrides and run every phase.
pub fn run_all(cfg: RunConfiguration) -> Result<RunManifest, PipelineError> {
    Pipeline::new(cfg)?.run_all()
}
