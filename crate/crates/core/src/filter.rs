//! Include/exclude filter expressions over answer records.
//!
//! Grammar:
//!
//! ```text
//! expr    := clause (';' clause)*
//! clause  := ('I:' | 'E:') key '=' pattern (',' pattern)*
//! key     := column header | '#FieldType' | '#SampleId'
//! pattern := literal | prefix '*' | '@' path        (@ only for #SampleId)
//! ```
//!
//! Clauses run left to right; an INCLUDE clause keeps the records matching
//! any of its patterns, an EXCLUDE clause removes them.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ingest::{read_samples_file, AnswerRecord, WorkingSet, DISCLOSURE_HEADER};
use crate::model::ModelDefinition;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("filter syntax error: {0}")]
    FilterSyntax(String),
    #[error("unknown filter key `{0}`")]
    UnknownKey(String),
    #[error("cannot read sample file {path}: {reason}")]
    UnreadableSampleFile { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Include,
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterKey {
    Column(String),
    FieldType,
    SampleId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Literal(String),
    Prefix(String),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterClause {
    pub mode: Mode,
    pub key: FilterKey,
    pub patterns: Vec<Pattern>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterExpression {
    pub clauses: Vec<FilterClause>,
}

fn syntax(msg: impl Into<String>) -> FilterError {
    FilterError::FilterSyntax(msg.into())
}

/// Parse a filter string.
pub fn parse_filter(text: &str) -> Result<FilterExpression, FilterError> {
    // Non-breaking spaces survive copy/paste from rendered tables.
    let text = text.replace("&nbsp;", " ").replace('\u{a0}', " ");
    let text = text.trim().trim_matches('"');
    let mut clauses = Vec::new();
    for raw in text.split(';') {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        clauses.push(parse_clause(raw)?);
    }
    if clauses.is_empty() {
        return Err(syntax("expression has no clauses"));
    }
    Ok(FilterExpression { clauses })
}

fn parse_clause(raw: &str) -> Result<FilterClause, FilterError> {
    let (mode, rest) = if let Some(rest) = raw.strip_prefix("I:") {
        (Mode::Include, rest)
    } else if let Some(rest) = raw.strip_prefix("E:") {
        (Mode::Exclude, rest)
    } else {
        return Err(syntax(format!("clause `{raw}` lacks an I: or E: prefix")));
    };
    let (key, patterns) = rest
        .split_once('=')
        .ok_or_else(|| syntax(format!("clause `{raw}` lacks `=`")))?;
    let key = key.trim();
    let key = match key {
        "" => return Err(syntax(format!("clause `{raw}` has an empty key"))),
        "#FieldType" => FilterKey::FieldType,
        "#SampleId" => FilterKey::SampleId,
        k if k.starts_with('#') => return Err(syntax(format!("unknown meta key `{k}`"))),
        k => FilterKey::Column(k.to_string()),
    };
    let mut out = Vec::new();
    for p in patterns.split(',') {
        let p = p.trim();
        if p.is_empty() {
            return Err(syntax(format!("clause `{raw}` has an empty pattern")));
        }
        let pattern = if let Some(path) = p.strip_prefix('@') {
            if key != FilterKey::SampleId {
                return Err(syntax(format!(
                    "`@` file patterns are only valid for #SampleId (in `{raw}`)"
                )));
            }
            if path.is_empty() {
                return Err(syntax("empty `@` path"));
            }
            Pattern::File(PathBuf::from(path))
        } else if let Some(stem) = p.strip_suffix('*') {
            Pattern::Prefix(stem.to_string())
        } else {
            Pattern::Literal(p.to_string())
        };
        out.push(pattern);
    }
    Ok(FilterClause {
        mode,
        key,
        patterns: out,
    })
}

impl fmt::Display for FilterExpression {
    /// Canonical rendering; `parse_filter` of the output yields `self`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            f.write_str(match c.mode {
                Mode::Include => "I:",
                Mode::Exclude => "E:",
            })?;
            match &c.key {
                FilterKey::Column(k) => f.write_str(k)?,
                FilterKey::FieldType => f.write_str("#FieldType")?,
                FilterKey::SampleId => f.write_str("#SampleId")?,
            }
            f.write_str("=")?;
            for (j, p) in c.patterns.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                match p {
                    Pattern::Literal(s) => f.write_str(s)?,
                    Pattern::Prefix(s) => write!(f, "{s}*")?,
                    Pattern::File(path) => write!(f, "@{}", path.display())?,
                }
            }
        }
        Ok(())
    }
}

fn column_value(r: &AnswerRecord, header: usize) -> String {
    match header {
        0 => r.questionnaire.clone(),
        1 => r.year_reported.to_string(),
        2 => r.sample_id.to_string(),
        3 => r.organisation.clone(),
        4 => r.country.clone(),
        5 => r.region.to_string(),
        6 => r.parent_section.clone(),
        7 => r.section.clone(),
        8 => r.question_number.clone(),
        9 => r.question_name.clone(),
        10 => r.column_number.to_string(),
        11 => r.column_name.clone(),
        12 => r.row_number.to_string(),
        13 => r.row_name.clone(),
        14 => r.response_answer.clone(),
        15 => r.comments.clone(),
        16 => r.file_name.clone(),
        _ => r.last_update.clone(),
    }
}

enum Matcher {
    Column(usize, Vec<Pattern>),
    FieldType(Vec<Pattern>),
    SampleId(Vec<Pattern>, HashSet<u64>),
}

fn text_matches(patterns: &[Pattern], value: &str) -> bool {
    patterns.iter().any(|p| match p {
        Pattern::Literal(s) => value == s,
        Pattern::Prefix(s) => value.starts_with(s.as_str()),
        Pattern::File(_) => false,
    })
}

impl Matcher {
    fn matches(&self, r: &AnswerRecord, model: &ModelDefinition) -> bool {
        match self {
            Matcher::Column(i, patterns) => text_matches(patterns, &column_value(r, *i)),
            Matcher::FieldType(patterns) => {
                let Some(q) = model.question(&r.question_number) else {
                    return false;
                };
                text_matches(patterns, q.kind.as_str())
                    || q.leaf(r.column_number)
                        .is_some_and(|leaf| text_matches(patterns, leaf.kind.as_str()))
            }
            Matcher::SampleId(patterns, ids) => {
                ids.contains(&r.sample_id) || text_matches(patterns, &r.sample_id.to_string())
            }
        }
    }
}

/// Apply `expr` to `ws`. `@path` sample files are resolved against `base_dir`.
pub fn apply_filter(
    expr: &FilterExpression,
    ws: &WorkingSet,
    base_dir: &Path,
) -> Result<WorkingSet, FilterError> {
    let mut sample_files: HashMap<PathBuf, Vec<u64>> = HashMap::new();
    let mut matchers = Vec::with_capacity(expr.clauses.len());
    for clause in &expr.clauses {
        let m = match &clause.key {
            FilterKey::Column(name) => {
                let idx = DISCLOSURE_HEADER
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| FilterError::UnknownKey(name.clone()))?;
                Matcher::Column(idx, clause.patterns.clone())
            }
            FilterKey::FieldType => Matcher::FieldType(clause.patterns.clone()),
            FilterKey::SampleId => {
                let mut ids = HashSet::new();
                for p in &clause.patterns {
                    if let Pattern::File(rel) = p {
                        let path = base_dir.join(rel);
                        if !sample_files.contains_key(&path) {
                            let list = read_samples_file(&path).map_err(|e| {
                                FilterError::UnreadableSampleFile {
                                    path: path.display().to_string(),
                                    reason: e.to_string(),
                                }
                            })?;
                            sample_files.insert(path.clone(), list);
                        }
                        ids.extend(sample_files[&path].iter().copied());
                    }
                }
                Matcher::SampleId(clause.patterns.clone(), ids)
            }
        };
        matchers.push((clause.mode, m));
    }

    let kept = ws
        .records
        .iter()
        .filter(|r| {
            matchers.iter().all(|(mode, m)| {
                let hit = m.matches(r, &ws.model);
                match mode {
                    Mode::Include => hit,
                    Mode::Exclude => !hit,
                }
            })
        })
        .cloned()
        .collect();
    Ok(ws.with_records(kept))
}
