//! Fixed-column disclosure CSV ingestion, external indicator joins and the
//! normalized working set.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::{char::is_combining_mark, UnicodeNormalization};

use crate::issues::IssueLog;
use crate::model::{validate_answer, ModelDefinition, Region, ValidationOutcome};

/// Column headers of the disclosure CSV, in order.
pub const DISCLOSURE_HEADER: [&str; 18] = [
    "Questionnaire",
    "Year Reported to CDP",
    "Account Number",
    "Organisation",
    "Country",
    "CDP Region",
    "Parent Section",
    "Section",
    "Question Number",
    "Question Name",
    "Column Number",
    "Column Name",
    "Row Number",
    "Row Name",
    "Response Answer",
    "Comments",
    "File Name",
    "Last update",
];

pub const EXTERNALS_HEADER: [&str; 3] = ["key", "indicator_kind", "value"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing or misplaced column `{0}`")]
    MissingColumn(String),
    #[error("cannot read {path}: {reason}")]
    UnreadableFile { path: String, reason: String },
}

/// One normalized cell of a disclosure form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub questionnaire: String,
    pub year_reported: i32,
    pub sample_id: u64,
    pub organisation: String,
    pub country: String,
    pub region: Region,
    pub parent_section: String,
    pub section: String,
    pub question_number: String,
    pub question_name: String,
    pub column_number: u32,
    pub column_name: String,
    pub row_number: u32,
    pub row_name: String,
    pub response_answer: String,
    pub comments: String,
    pub file_name: String,
    pub last_update: String,
}

impl AnswerRecord {
    pub fn is_direct(&self) -> bool {
        self.column_number == 0 && self.row_number == 0
    }

    pub fn key(&self) -> (u64, &str, u32, u32) {
        (
            self.sample_id,
            &self.question_number,
            self.column_number,
            self.row_number,
        )
    }

    fn to_row(&self) -> [String; 18] {
        [
            self.questionnaire.clone(),
            self.year_reported.to_string(),
            self.sample_id.to_string(),
            self.organisation.clone(),
            self.country.clone(),
            self.region.to_string(),
            self.parent_section.clone(),
            self.section.clone(),
            self.question_number.clone(),
            self.question_name.clone(),
            self.column_number.to_string(),
            self.column_name.clone(),
            self.row_number.to_string(),
            self.row_name.clone(),
            self.response_answer.clone(),
            self.comments.clone(),
            self.file_name.clone(),
            self.last_update.clone(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct City {
    pub sample_id: u64,
    pub name: String,
    pub country: String,
    pub region: Region,
}

token_enum!(
    /// Kind of an externally sourced city indicator.
    IndicatorKind, "indicator kind", {
        Gdp => "GDP",
        Shdi => "SHDI",
        Sci => "SCI",
        TotalEmissions2019 => "TOTAL_EMISSIONS_2019",
        HasPlan => "HAS_PLAN",
        HasTarget => "HAS_TARGET",
    }
);

/// An external indicator row before it is matched to a city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalIndicatorRow {
    pub key: String,
    pub kind: IndicatorKind,
    pub value: f64,
}

/// An external indicator attached to a city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalIndicator {
    pub sample_id: u64,
    pub kind: IndicatorKind,
    pub value: f64,
}

/// Answer records that were discarded during ingestion because they could not
/// be recovered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardedRecord {
    pub sample_id: u64,
    pub question_number: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct WorkingSet {
    pub model: Arc<ModelDefinition>,
    /// Sorted by sample id.
    pub cities: Vec<City>,
    pub records: Vec<AnswerRecord>,
    /// Sorted by (sample id, kind).
    pub externals: Vec<ExternalIndicator>,
    pub discarded: Vec<DiscardedRecord>,
}

impl WorkingSet {
    pub fn empty(model: Arc<ModelDefinition>) -> Self {
        Self {
            model,
            cities: Vec::new(),
            records: Vec::new(),
            externals: Vec::new(),
            discarded: Vec::new(),
        }
    }

    pub fn city(&self, sample_id: u64) -> Option<&City> {
        self.cities
            .binary_search_by_key(&sample_id, |c| c.sample_id)
            .ok()
            .map(|i| &self.cities[i])
    }

    pub fn records_of(&self, sample_id: u64) -> impl Iterator<Item = &AnswerRecord> {
        self.records
            .iter()
            .filter(move |r| r.sample_id == sample_id)
    }

    /// A copy holding only `records`, with cities and externals restricted
    /// to the samples still present.
    pub fn with_records(&self, records: Vec<AnswerRecord>) -> Self {
        let ids: HashSet<u64> = records.iter().map(|r| r.sample_id).collect();
        Self {
            model: Arc::clone(&self.model),
            cities: self
                .cities
                .iter()
                .filter(|c| ids.contains(&c.sample_id))
                .cloned()
                .collect(),
            records,
            externals: self
                .externals
                .iter()
                .filter(|e| ids.contains(&e.sample_id))
                .cloned()
                .collect(),
            discarded: self
                .discarded
                .iter()
                .filter(|d| ids.contains(&d.sample_id))
                .cloned()
                .collect(),
        }
    }
}

fn unreadable(path: &Path, reason: impl ToString) -> IngestError {
    IngestError::UnreadableFile {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Parse a disclosure CSV file against `model`.
pub fn parse_disclosure_csv(
    path: impl AsRef<Path>,
    model: Arc<ModelDefinition>,
) -> Result<(WorkingSet, IssueLog), IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| unreadable(path, e))?;
    read_disclosures(file, model).map_err(|e| match e {
        IngestError::UnreadableFile { reason, .. } => unreadable(path, reason),
        other => other,
    })
}

/// Parse disclosure CSV content from any reader.
pub fn read_disclosures<R: Read>(
    reader: R,
    model: Arc<ModelDefinition>,
) -> Result<(WorkingSet, IssueLog), IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::UnreadableFile {
            path: String::new(),
            reason: e.to_string(),
        })?
        .clone();
    for (i, expected) in DISCLOSURE_HEADER.iter().enumerate() {
        match headers.get(i) {
            Some(h) if h.trim().trim_start_matches('\u{feff}') == *expected => {}
            _ => return Err(IngestError::MissingColumn(expected.to_string())),
        }
    }

    let mut log = IssueLog::new();
    let mut cities: BTreeMap<u64, City> = BTreeMap::new();
    let mut records = Vec::new();
    let mut seen: HashSet<(u64, String, u32, u32)> = HashSet::new();
    let mut discarded = Vec::new();
    let mut out_of_scope = 0usize;

    for (line, row) in rdr.records().enumerate() {
        let line = line + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                log.error("malformed-row", None, format!("line {line}: {e}"));
                continue;
            }
        };
        if row.len() != DISCLOSURE_HEADER.len() {
            log.error(
                "malformed-row",
                None,
                format!("line {line}: expected 18 fields, found {}", row.len()),
            );
            continue;
        }
        let field = |i: usize| row.get(i).unwrap_or("").to_string();
        let rec = match parse_row(&row) {
            Ok(r) => r,
            Err(msg) => {
                log.error("malformed-row", None, format!("line {line}: {msg}"));
                continue;
            }
        };
        if rec.questionnaire != model.form_id || rec.year_reported != model.reporting_year {
            out_of_scope += 1;
            continue;
        }

        match cities.get(&rec.sample_id) {
            Some(c) if c.region != rec.region || c.name != rec.organisation => {
                log.warn(
                    "inconsistent-city",
                    Some(rec.sample_id),
                    format!(
                        "line {line}: city attributes differ from first occurrence ({} / {})",
                        rec.organisation, rec.region
                    ),
                );
            }
            Some(_) => {}
            None => {
                cities.insert(
                    rec.sample_id,
                    City {
                        sample_id: rec.sample_id,
                        name: rec.organisation.clone(),
                        country: rec.country.clone(),
                        region: rec.region,
                    },
                );
            }
        }

        let Some(question) = model.question(&rec.question_number) else {
            log.warn(
                "unknown-question",
                Some(rec.sample_id),
                format!("line {line}: question `{}` not in model", field(8)),
            );
            continue;
        };
        let Some(leaf) = question.leaf(rec.column_number) else {
            log.warn(
                "unknown-column",
                Some(rec.sample_id),
                format!(
                    "line {line}: question `{}` has no column {}",
                    rec.question_number, rec.column_number
                ),
            );
            continue;
        };
        if let ValidationOutcome::Fatal(reason) = validate_answer(leaf, &rec.response_answer) {
            log.warn(
                "record-discarded",
                Some(rec.sample_id),
                format!(
                    "line {line}: question `{}` column {} row {}: {reason}",
                    rec.question_number, rec.column_number, rec.row_number
                ),
            );
            discarded.push(DiscardedRecord {
                sample_id: rec.sample_id,
                question_number: rec.question_number.clone(),
                reason: reason.to_string(),
            });
            continue;
        }
        let key = (
            rec.sample_id,
            rec.question_number.clone(),
            rec.column_number,
            rec.row_number,
        );
        if !seen.insert(key) {
            log.warn(
                "duplicate-record",
                Some(rec.sample_id),
                format!(
                    "line {line}: duplicate answer for `{}` column {} row {}; first kept",
                    rec.question_number, rec.column_number, rec.row_number
                ),
            );
            continue;
        }
        records.push(rec);
    }

    if out_of_scope > 0 {
        log.info(
            "out-of-scope",
            None,
            format!(
                "{out_of_scope} rows outside `{}` / {} skipped",
                model.form_id, model.reporting_year
            ),
        );
    }

    Ok((
        WorkingSet {
            model,
            cities: cities.into_values().collect(),
            records,
            externals: Vec::new(),
            discarded,
        },
        log,
    ))
}

fn parse_row(row: &csv::StringRecord) -> Result<AnswerRecord, String> {
    let get = |i: usize| row.get(i).unwrap_or("").to_string();
    let num = |i: usize| -> Result<u64, String> {
        row.get(i).unwrap_or("").trim().parse::<u64>().map_err(|_| {
            format!(
                "`{}` is not a non-negative integer ({})",
                get(i),
                DISCLOSURE_HEADER[i]
            )
        })
    };
    let sample_id = num(2)?;
    if sample_id == 0 {
        return Err("account number must be positive".into());
    }
    let year = num(1)?;
    let region: Region = get(5)
        .parse()
        .map_err(|e: crate::ParseTokenError| e.to_string())?;
    Ok(AnswerRecord {
        questionnaire: get(0).trim().to_string(),
        year_reported: i32::try_from(year).map_err(|_| "year out of range".to_string())?,
        sample_id,
        organisation: get(3).trim().to_string(),
        country: get(4).trim().to_string(),
        region,
        parent_section: get(6),
        section: get(7),
        question_number: get(8).trim().to_string(),
        question_name: get(9),
        column_number: u32::try_from(num(10)?).map_err(|_| "column number too large")?,
        column_name: get(11),
        row_number: u32::try_from(num(12)?).map_err(|_| "row number too large")?,
        row_name: get(13),
        response_answer: get(14),
        comments: get(15),
        file_name: get(16),
        last_update: get(17),
    })
}

/// Write records in the disclosure CSV layout.
pub fn write_disclosures<'a, W: Write>(
    writer: W,
    records: impl IntoIterator<Item = &'a AnswerRecord>,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DISCLOSURE_HEADER)?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush()
}

/// Parse an external indicator table of `(key, indicator_kind, value)` rows.
/// Rows that cannot be parsed are logged as errors and skipped.
pub fn parse_externals_csv(
    path: impl AsRef<Path>,
    log: &mut IssueLog,
) -> Result<Vec<ExternalIndicatorRow>, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| unreadable(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = rdr.headers().map_err(|e| unreadable(path, e))?.clone();
    for (i, expected) in EXTERNALS_HEADER.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(expected) {
            return Err(IngestError::MissingColumn(expected.to_string()));
        }
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let line = line + 2;
        let parsed = row.map_err(|e| e.to_string()).and_then(|row| {
            let key = row.get(0).unwrap_or("").trim().to_string();
            let kind: IndicatorKind = row
                .get(1)
                .unwrap_or("")
                .parse()
                .map_err(|e: crate::ParseTokenError| e.to_string())?;
            let value: f64 = row
                .get(2)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| format!("bad value `{}`", row.get(2).unwrap_or("")))?;
            if key.is_empty() || !value.is_finite() {
                return Err("empty key or non-finite value".to_string());
            }
            Ok(ExternalIndicatorRow { key, kind, value })
        });
        match parsed {
            Ok(r) => out.push(r),
            Err(msg) => log.error(
                "malformed-external",
                None,
                format!("{}:{line}: {msg}", path.display()),
            ),
        }
    }
    Ok(out)
}

/// City-name normalization used for joins: case-fold, trim, collapse
/// whitespace, strip diacritics and optionally append a configured state.
#[derive(Debug, Clone, Default)]
pub struct NameNormalizer {
    states: HashMap<String, String>,
}

impl NameNormalizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Configure `state` to be appended to the bare city `name`.
    pub fn with_state(mut self, name: &str, state: &str) -> Self {
        self.states.insert(fold(name), fold(state));
        self
    }

    pub fn normalize(&self, name: &str) -> String {
        let folded = fold(name);
        match self.states.get(&folded) {
            Some(state) if !folded.contains(',') => format!("{folded}, {state}"),
            _ => folded,
        }
    }
}

fn fold(s: &str) -> String {
    let stripped: String = s.nfd().filter(|c| !is_combining_mark(*c)).collect();
    stripped
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Attach external indicator rows to cities: by sample id first, then by
/// normalized city name. Unmatched rows are logged, never fatal; a repeated
/// `(city, kind)` pair keeps the last row.
pub fn join_externals(
    mut ws: WorkingSet,
    rows: &[ExternalIndicatorRow],
    normalizer: &NameNormalizer,
    log: &mut IssueLog,
) -> WorkingSet {
    let mut by_name: HashMap<String, Vec<u64>> = HashMap::new();
    for c in &ws.cities {
        by_name
            .entry(normalizer.normalize(&c.name))
            .or_default()
            .push(c.sample_id);
    }
    let mut attached: BTreeMap<(u64, IndicatorKind), f64> = ws
        .externals
        .iter()
        .map(|e| ((e.sample_id, e.kind), e.value))
        .collect();

    for row in rows {
        let by_id = row
            .key
            .trim()
            .parse::<u64>()
            .ok()
            .filter(|id| ws.city(*id).is_some());
        let target = match by_id {
            Some(id) => Some(id),
            None => match by_name
                .get(&normalizer.normalize(&row.key))
                .map(Vec::as_slice)
            {
                Some([id]) => Some(*id),
                Some(ids) if ids.len() > 1 => {
                    log.warn(
                        "ambiguous-external",
                        None,
                        format!("`{}` matches {} cities; row skipped", row.key, ids.len()),
                    );
                    continue;
                }
                _ => None,
            },
        };
        let Some(id) = target else {
            log.warn(
                "unmatched-external",
                None,
                format!("{} row for `{}` matches no city", row.kind, row.key),
            );
            continue;
        };
        if attached.insert((id, row.kind), row.value).is_some() {
            log.warn(
                "duplicate-external",
                Some(id),
                format!("{} for `{}` repeated; last value kept", row.kind, row.key),
            );
        }
    }

    ws.externals = attached
        .into_iter()
        .map(|((sample_id, kind), value)| ExternalIndicator {
            sample_id,
            kind,
            value,
        })
        .collect();
    ws
}

/// Read a samples file: one decimal sample id per line, `#` comments allowed.
pub fn read_samples_file(path: impl AsRef<Path>) -> Result<Vec<u64>, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| unreadable(path, e))?;
    parse_samples(&text).map_err(|msg| unreadable(path, msg))
}

pub fn parse_samples(text: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        out.push(
            content
                .parse::<u64>()
                .map_err(|_| format!("line {}: `{content}` is not a sample id", i + 1))?,
        );
    }
    Ok(out)
}
