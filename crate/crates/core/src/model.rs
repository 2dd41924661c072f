//! Disclosure data model: forms, sections, questions, field types and answer
//! options, plus validation of raw answers against it.
//!
//! The model is loaded from a versioned TOML file (see `data/model/` and the
//! README for the grammar). It is immutable after load.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Code reserved for "not found / not answered" select options.
pub const NOT_FOUND: u32 = 0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed model definition: {0}")]
    MalformedDefinition(String),
    #[error("duplicate question number `{0}`")]
    DuplicateQuestion(String),
    #[error("question `{question}` references unknown section `{section}`")]
    DanglingSection { question: String, section: String },
    #[error("cannot read model definition {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

token_enum!(
    /// Value domain of a field.
    QuestionDomainKind, "question domain", {
        Date => "DATE",
        Year => "YEAR",
        Number => "NUMBER",
        Integer => "INTEGER",
        Text => "TEXT",
    }
);

token_enum!(
    /// Structural type of a question.
    QuestionTypeKind, "question type", {
        Nullable => "NULLABLE",
        NotNull => "NOT_NULL",
        SingleSelect => "SINGLE_SELECT",
        MultiSelect => "MULTI_SELECT",
        Table => "TABLE",
        Yn => "YN",
    }
);

token_enum!(
    /// CDP reporting region.
    Region, "region", {
        Noram => "NORAM",
        Latam => "LATAM",
        Euro => "EURO",
        Seasoc => "SEASOC",
        Af => "AF",
        Swas => "SWAS",
        Eas => "EAS",
        Me => "ME",
    }
);

impl QuestionTypeKind {
    pub fn is_select(self) -> bool {
        matches!(self, Self::SingleSelect | Self::MultiSelect | Self::Yn)
    }
}

/// Encoding-relevant kind of a leaf field, derived from type and domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldKind {
    SingleSelect,
    MultiSelect,
    Text,
    Number,
    Integer,
    Year,
    Date,
}

impl FieldKind {
    pub fn is_select(self) -> bool {
        matches!(self, Self::SingleSelect | Self::MultiSelect)
    }

    /// Kinds encoded with a min/max scaled thermometer.
    pub fn is_numeric(self) -> bool {
        matches!(self, Self::Number | Self::Integer | Self::Year | Self::Date)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub code: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub number: String,
    pub name: String,
    pub section_id: String,
    pub parent_section: String,
    pub kind: QuestionTypeKind,
    pub domain: QuestionDomainKind,
    pub options: Vec<AnswerOption>,
    pub range_checked: bool,
    pub range_min: Option<f64>,
    pub range_max: Option<f64>,
    /// Sub-questions of a TABLE question; column `i` of the input file is
    /// `columns[i - 1]`.
    pub columns: Vec<Question>,
}

impl Question {
    /// `None` for TABLE questions, which have no value of their own.
    pub fn field_kind(&self) -> Option<FieldKind> {
        use QuestionDomainKind as D;
        use QuestionTypeKind as T;
        Some(match self.kind {
            T::Table => return None,
            T::SingleSelect | T::Yn => FieldKind::SingleSelect,
            T::MultiSelect => FieldKind::MultiSelect,
            T::Nullable | T::NotNull => match self.domain {
                D::Text => FieldKind::Text,
                D::Number => FieldKind::Number,
                D::Integer => FieldKind::Integer,
                D::Year => FieldKind::Year,
                D::Date => FieldKind::Date,
            },
        })
    }

    pub fn option_code(&self, text: &str) -> Option<u32> {
        self.options.iter().find(|o| o.text == text).map(|o| o.code)
    }

    pub fn option_text(&self, code: u32) -> Option<&str> {
        self.options
            .iter()
            .find(|o| o.code == code)
            .map(|o| o.text.as_str())
    }

    /// The leaf question answering `column_number`: the question itself for
    /// column 0 of a non-TABLE question, a sub-question for TABLE columns.
    pub fn leaf(&self, column_number: u32) -> Option<&Question> {
        match (self.kind, column_number) {
            (QuestionTypeKind::Table, 0) => None,
            (QuestionTypeKind::Table, c) => self.columns.get(c as usize - 1),
            (_, 0) => Some(self),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub id: String,
    pub description: String,
}

/// One leaf field of the model, addressed by question and column.
#[derive(Debug, Clone, Copy)]
pub struct FieldRef<'a> {
    pub question_number: &'a str,
    pub column_number: u32,
    pub question: &'a Question,
    pub leaf: &'a Question,
    pub kind: FieldKind,
}

#[derive(Debug, Clone)]
pub struct ModelDefinition {
    pub form_id: String,
    pub reporting_year: i32,
    pub sections: Vec<Section>,
    pub questions: Vec<Question>,
    index: HashMap<String, usize>,
}

impl ModelDefinition {
    pub fn question(&self, number: &str) -> Option<&Question> {
        self.index.get(number).map(|&i| &self.questions[i])
    }

    /// All leaf fields in model order: `(q, 0)` for plain questions and
    /// `(q, 1..=n)` for TABLE columns.
    pub fn fields(&self) -> Vec<FieldRef<'_>> {
        let mut out = Vec::new();
        for q in &self.questions {
            if q.kind == QuestionTypeKind::Table {
                for (i, col) in q.columns.iter().enumerate() {
                    out.push(FieldRef {
                        question_number: &q.number,
                        column_number: i as u32 + 1,
                        question: q,
                        leaf: col,
                        kind: col.field_kind().expect("columns are never TABLE"),
                    });
                }
            } else {
                out.push(FieldRef {
                    question_number: &q.number,
                    column_number: 0,
                    question: q,
                    leaf: q,
                    kind: q.field_kind().expect("non-TABLE question"),
                });
            }
        }
        out
    }

    pub fn field(&self, question_number: &str, column_number: u32) -> Option<FieldRef<'_>> {
        let q = self.question(question_number)?;
        let leaf = q.leaf(column_number)?;
        Some(FieldRef {
            question_number: &q.number,
            column_number,
            question: q,
            leaf,
            kind: leaf.field_kind()?,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let raw: RawModel =
            toml::from_str(text).map_err(|e| ModelError::MalformedDefinition(e.to_string()))?;
        raw.build()
    }
}

/// Load and validate a model definition file.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelDefinition, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ModelDefinition::from_toml_str(&text)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    form_id: String,
    reporting_year: i32,
    #[serde(default)]
    #[allow(dead_code)]
    version: Option<u32>,
    #[serde(default)]
    sections: Vec<RawSection>,
    #[serde(default)]
    questions: Vec<RawQuestion>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSection {
    id: String,
    description: String,
    #[serde(default)]
    parent: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuestion {
    number: String,
    name: String,
    section: String,
    #[serde(rename = "type")]
    kind: QuestionTypeKind,
    #[serde(default = "default_domain")]
    domain: QuestionDomainKind,
    #[serde(default)]
    options: Vec<String>,
    #[serde(default)]
    range: Option<[f64; 2]>,
    #[serde(default)]
    columns: Vec<RawColumn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawColumn {
    name: String,
    #[serde(rename = "type")]
    kind: QuestionTypeKind,
    #[serde(default = "default_domain")]
    domain: QuestionDomainKind,
    #[serde(default)]
    options: Vec<String>,
    #[serde(default)]
    range: Option<[f64; 2]>,
}

fn default_domain() -> QuestionDomainKind {
    QuestionDomainKind::Text
}

fn malformed(msg: impl Into<String>) -> ModelError {
    ModelError::MalformedDefinition(msg.into())
}

fn build_options(
    number: &str,
    kind: QuestionTypeKind,
    options: Vec<String>,
) -> Result<Vec<AnswerOption>, ModelError> {
    let options = if kind == QuestionTypeKind::Yn {
        if !options.is_empty() && options != ["Yes", "No"] {
            return Err(malformed(format!(
                "question `{number}`: YN options must be exactly [\"Yes\", \"No\"]"
            )));
        }
        vec!["Yes".to_string(), "No".to_string()]
    } else {
        options
    };
    if kind.is_select() == options.is_empty() {
        return Err(malformed(format!(
            "question `{number}`: options must be present exactly for select types (type {kind})"
        )));
    }
    let mut seen = HashSet::new();
    for text in &options {
        if !seen.insert(text.as_str()) {
            return Err(malformed(format!(
                "question `{number}`: duplicate option text `{text}`"
            )));
        }
    }
    Ok(options
        .into_iter()
        .enumerate()
        .map(|(i, text)| AnswerOption {
            code: i as u32 + 1,
            text,
        })
        .collect())
}

fn check_range(number: &str, range: Option<[f64; 2]>) -> Result<(), ModelError> {
    if let Some([lo, hi]) = range {
        if !(lo < hi) {
            return Err(malformed(format!(
                "question `{number}`: range min {lo} must be below max {hi}"
            )));
        }
    }
    Ok(())
}

impl RawModel {
    fn build(self) -> Result<ModelDefinition, ModelError> {
        let mut section_parent = HashMap::new();
        for s in &self.sections {
            let parent = s.parent.clone().unwrap_or_else(|| s.description.clone());
            if section_parent.insert(s.id.clone(), parent).is_some() {
                return Err(malformed(format!("duplicate section `{}`", s.id)));
            }
        }

        let mut questions = Vec::with_capacity(self.questions.len());
        let mut index = HashMap::new();
        for rq in self.questions {
            if rq.number.trim().is_empty() {
                return Err(malformed("empty question number"));
            }
            let parent = section_parent
                .get(&rq.section)
                .ok_or_else(|| ModelError::DanglingSection {
                    question: rq.number.clone(),
                    section: rq.section.clone(),
                })?
                .clone();
            if index.contains_key(&rq.number) {
                return Err(ModelError::DuplicateQuestion(rq.number));
            }
            check_range(&rq.number, rq.range)?;

            let is_table = rq.kind == QuestionTypeKind::Table;
            if is_table && rq.columns.is_empty() {
                return Err(malformed(format!(
                    "TABLE question `{}` has no columns",
                    rq.number
                )));
            }
            if !is_table && !rq.columns.is_empty() {
                return Err(malformed(format!(
                    "question `{}` has columns but is not a TABLE",
                    rq.number
                )));
            }
            let options = if is_table {
                if !rq.options.is_empty() {
                    return Err(malformed(format!(
                        "TABLE question `{}` cannot carry options",
                        rq.number
                    )));
                }
                Vec::new()
            } else {
                build_options(&rq.number, rq.kind, rq.options)?
            };

            let mut columns = Vec::with_capacity(rq.columns.len());
            for col in rq.columns {
                if col.kind == QuestionTypeKind::Table {
                    return Err(malformed(format!(
                        "question `{}`: nested TABLE column `{}`",
                        rq.number, col.name
                    )));
                }
                check_range(&rq.number, col.range)?;
                columns.push(Question {
                    number: rq.number.clone(),
                    name: col.name,
                    section_id: rq.section.clone(),
                    parent_section: parent.clone(),
                    kind: col.kind,
                    domain: col.domain,
                    options: build_options(&rq.number, col.kind, col.options)?,
                    range_checked: col.range.is_some(),
                    range_min: col.range.map(|r| r[0]),
                    range_max: col.range.map(|r| r[1]),
                    columns: Vec::new(),
                });
            }

            index.insert(rq.number.clone(), questions.len());
            questions.push(Question {
                number: rq.number,
                name: rq.name,
                section_id: rq.section,
                parent_section: parent,
                kind: rq.kind,
                domain: rq.domain,
                options,
                range_checked: rq.range.is_some(),
                range_min: rq.range.map(|r| r[0]),
                range_max: rq.range.map(|r| r[1]),
                columns,
            });
        }

        Ok(ModelDefinition {
            form_id: self.form_id,
            reporting_year: self.reporting_year,
            sections: self
                .sections
                .into_iter()
                .map(|s| Section {
                    id: s.id,
                    description: s.description,
                })
                .collect(),
            questions,
            index,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecoverableReason {
    OptionMismatch,
    EmptySelection,
    InvalidNumber,
    OutOfRange,
    InvalidYear,
    InvalidDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FatalReason {
    EmptyNotNull,
    TableDirectAnswer,
}

impl fmt::Display for RecoverableReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::OptionMismatch => "option-mismatch",
            Self::EmptySelection => "empty-selection",
            Self::InvalidNumber => "invalid-number",
            Self::OutOfRange => "out-of-range",
            Self::InvalidYear => "invalid-year",
            Self::InvalidDate => "invalid-date",
        })
    }
}

impl fmt::Display for FatalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EmptyNotNull => "empty-not-null",
            Self::TableDirectAnswer => "table-direct-answer",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationOutcome {
    Ok,
    Recoverable(RecoverableReason),
    Fatal(FatalReason),
}

/// Classify a raw answer for `q`. Recoverable outcomes are repaired by the
/// mitigation step; fatal ones cause the record to be discarded.
pub fn validate_answer(q: &Question, raw: &str) -> ValidationOutcome {
    use QuestionDomainKind as D;
    use QuestionTypeKind as T;
    use ValidationOutcome::*;

    let value = raw.trim();
    match q.kind {
        T::Table => Fatal(FatalReason::TableDirectAnswer),
        T::SingleSelect | T::MultiSelect | T::Yn => {
            if value.is_empty() {
                Recoverable(RecoverableReason::EmptySelection)
            } else if q.option_code(value).is_some() {
                Ok
            } else {
                Recoverable(RecoverableReason::OptionMismatch)
            }
        }
        T::Nullable | T::NotNull => {
            if value.is_empty() {
                return if q.kind == T::NotNull {
                    Fatal(FatalReason::EmptyNotNull)
                } else {
                    Ok
                };
            }
            match q.domain {
                D::Text => Ok,
                D::Number | D::Integer => match value.parse::<f64>() {
                    Result::Ok(v) if v.is_finite() => {
                        if q.domain == D::Integer && v.fract() != 0.0 {
                            Recoverable(RecoverableReason::InvalidNumber)
                        } else if out_of_range(q, v) {
                            Recoverable(RecoverableReason::OutOfRange)
                        } else {
                            Ok
                        }
                    }
                    _ => Recoverable(RecoverableReason::InvalidNumber),
                },
                D::Year => {
                    if value.len() == 4 && value.bytes().all(|b| b.is_ascii_digit()) {
                        Ok
                    } else {
                        Recoverable(RecoverableReason::InvalidYear)
                    }
                }
                D::Date => {
                    if parse_iso_date(value).is_some() {
                        Ok
                    } else {
                        Recoverable(RecoverableReason::InvalidDate)
                    }
                }
            }
        }
    }
}

fn out_of_range(q: &Question, v: f64) -> bool {
    q.range_checked
        && (q.range_min.is_some_and(|lo| v < lo) || q.range_max.is_some_and(|hi| v > hi))
}

/// Parse `YYYY-MM-DD`, optionally followed by a time part (`T...` or ` ...`).
pub fn parse_iso_date(s: &str) -> Option<(i32, u32, u32)> {
    let s = s.trim();
    let date = s.split(['T', ' ']).next()?;
    let mut parts = date.split('-');
    let (y, m, d) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || y.len() != 4 || m.len() != 2 || d.len() != 2 {
        return None;
    }
    let y: i32 = y.parse().ok()?;
    let m: u32 = m.parse().ok()?;
    let d: u32 = d.parse().ok()?;
    if !(1..=12).contains(&m) || d == 0 || d > days_in_month(y, m) {
        return None;
    }
    Some((y, m, d))
}

fn days_in_month(y: i32, m: u32) -> u32 {
    match m {
        2 if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    }
}
