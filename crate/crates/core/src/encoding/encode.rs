//! Textual and binary encodings of a working set.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::dl::{match_option, OptionMatch};
use super::mitigation::{coerce_numeric, range_check, NumericFlag};
use crate::ingest::{AnswerRecord, WorkingSet};
use crate::issues::IssueLog;
use crate::model::{parse_iso_date, FieldKind, ModelDefinition, Question, QuestionTypeKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub base_year: i32,
    pub max_dist: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            base_year: 2019,
            max_dist: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub question_number: String,
    pub column_number: u32,
    pub kind: FieldKind,
    pub option_count: usize,
}

impl FieldSpec {
    /// Column label used in the textual file: `5.0a[2]` for TABLE columns.
    pub fn label(&self) -> String {
        if self.column_number == 0 {
            self.question_number.clone()
        } else {
            format!("{}[{}]", self.question_number, self.column_number)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Samples with at least one answered row.
    pub nonempty: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingPlan {
    pub slot_size: usize,
    pub base_year: i32,
    pub field_order: Vec<FieldSpec>,
    /// Aligned with `field_order`; `Some` for numeric fields with answers.
    pub numeric_stats: Vec<Option<NumericStats>>,
}

impl EncodingPlan {
    pub fn bit_len(&self) -> usize {
        self.field_order.len() * self.slot_size
    }
}

/// Converted rows of one field for one sample, in row order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldText {
    pub rows: Vec<String>,
    pub answered: Vec<bool>,
}

impl FieldText {
    fn unanswered() -> Self {
        Self {
            rows: vec!["0".into()],
            answered: vec![false],
        }
    }

    pub fn text(&self) -> String {
        self.rows.join(":")
    }

    pub fn is_answered(&self) -> bool {
        self.answered.iter().any(|&a| a)
    }

    /// Values of the answered rows.
    fn answered_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows
            .iter()
            .zip(&self.answered)
            .filter(|(_, &a)| a)
            .filter_map(|(r, _)| r.parse::<f64>().ok())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSample {
    pub sample_id: u64,
    pub textual: Vec<FieldText>,
    pub bits: Vec<bool>,
}

impl EncodedSample {
    pub fn bit_string(&self) -> String {
        self.bits
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub plan: EncodingPlan,
    pub samples: Vec<EncodedSample>,
}

/// Decimal rendering with at most six fractional digits.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        let i = v as i64;
        return i.to_string();
    }
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Convert one mitigated-or-raw row. Returns the textual cell and whether
/// it counts as answered.
fn convert_row(
    raw: &str,
    leaf: &Question,
    kind: FieldKind,
    cfg: &EncodingConfig,
    sample_id: u64,
    log: &mut IssueLog,
) -> (String, bool) {
    let raw = raw.trim();
    let label = &leaf.number;
    if kind.is_select() {
        if raw.is_empty() {
            return ("0".into(), false);
        }
        return match match_option(raw, leaf, cfg.max_dist) {
            OptionMatch::Exact(c) => (c.to_string(), true),
            OptionMatch::Corrected { code, distance } => {
                log.info(
                    "option-corrected",
                    Some(sample_id),
                    format!(
                        "{label}: `{raw}` -> `{}` (distance {distance})",
                        leaf.option_text(code).unwrap_or_default()
                    ),
                );
                (code.to_string(), true)
            }
            OptionMatch::NotFound {
                best_distance,
                tied,
            } => {
                log.warn(
                    "option-not-found",
                    Some(sample_id),
                    format!("{label}: `{raw}` (best distance {best_distance}, tied {tied})"),
                );
                ("0".into(), false)
            }
        };
    }
    if kind == FieldKind::Text {
        let answered = !raw.is_empty();
        return (if answered { "1" } else { "0" }.into(), answered);
    }
    if raw.is_empty() {
        return ("0".into(), false);
    }
    if kind == FieldKind::Date {
        return match parse_iso_date(raw) {
            Some((y, m, d)) => (format!("{y:04}{m:02}{d:02}"), true),
            None => {
                log.warn(
                    "numeric-defaulted",
                    Some(sample_id),
                    format!("{label}: invalid date `{raw}`"),
                );
                ("0".into(), false)
            }
        };
    }

    let (mut v, flag) = coerce_numeric(raw, leaf);
    if flag == NumericFlag::Defaulted {
        log.warn(
            "numeric-defaulted",
            Some(sample_id),
            format!("{label}: `{raw}` is not a number"),
        );
        return ("0".into(), false);
    }
    if leaf.range_checked {
        let (repaired, flag) = range_check(leaf, v);
        match flag {
            NumericFlag::Answered => {}
            NumericFlag::Corrected => log.info(
                "range-corrected",
                Some(sample_id),
                format!("{label}: {v} rescaled to {repaired}"),
            ),
            NumericFlag::Defaulted => {
                log.warn(
                    "numeric-defaulted",
                    Some(sample_id),
                    format!("{label}: {v} is out of range"),
                );
                return ("0".into(), false);
            }
        }
        v = repaired;
    }
    match kind {
        FieldKind::Number => {
            if v < 0.0 {
                log.warn(
                    "negative-number",
                    Some(sample_id),
                    format!("{label}: {v} defaulted to 0"),
                );
                return ("0".into(), false);
            }
            (format_number((1.0 + v).log10()), true)
        }
        FieldKind::Year => (format_number(f64::from(cfg.base_year) - v), true),
        _ => (format_number(v), true),
    }
}

/// Textual value of one field for one sample from its records.
pub fn to_textual(
    rows: &[&AnswerRecord],
    leaf: &Question,
    kind: FieldKind,
    cfg: &EncodingConfig,
    log: &mut IssueLog,
) -> FieldText {
    if rows.is_empty() {
        return FieldText::unanswered();
    }
    let mut sorted: Vec<&AnswerRecord> = rows.to_vec();
    sorted.sort_by_key(|r| r.row_number);
    let mut out = FieldText {
        rows: Vec::with_capacity(sorted.len()),
        answered: Vec::with_capacity(sorted.len()),
    };
    for r in sorted {
        let (text, answered) = convert_row(&r.response_answer, leaf, kind, cfg, r.sample_id, log);
        out.rows.push(text);
        out.answered.push(answered);
    }
    out
}

fn integer_digits(text: &str) -> usize {
    let int = text.split('.').next().unwrap_or("");
    int.chars().filter(|c| c.is_ascii_digit()).count().max(1)
}

/// Global slot size: the maximum over option counts of select fields,
/// integer-part digit counts of numeric textual values, and 1 for TEXT.
pub fn compute_slot_size(fields: &[FieldSpec], samples: &[Vec<FieldText>]) -> usize {
    let mut slot = 1;
    for (i, f) in fields.iter().enumerate() {
        let candidate = match f.kind {
            k if k.is_select() => f.option_count,
            FieldKind::Text => 1,
            _ => samples
                .iter()
                .flat_map(|s| s[i].rows.iter())
                .map(|r| integer_digits(r))
                .max()
                .unwrap_or(1),
        };
        slot = slot.max(candidate);
    }
    slot
}

/// Number of set bits of a numeric thermometer.
pub fn thermometer_count(v: f64, min: f64, max: f64, slot: usize) -> usize {
    if max <= min || v <= min {
        0
    } else if v >= max {
        slot
    } else {
        ((slot as f64 * (v - min) / (max - min)).floor() as usize).min(slot)
    }
}

/// Bit picture of one sample under `plan`.
pub fn to_binary(textual: &[FieldText], plan: &EncodingPlan) -> Vec<bool> {
    let slot = plan.slot_size;
    let mut bits = vec![false; plan.bit_len()];
    for (i, (field, text)) in plan.field_order.iter().zip(textual).enumerate() {
        let seg = &mut bits[i * slot..(i + 1) * slot];
        for (row, _) in text.rows.iter().zip(&text.answered).filter(|(_, &a)| a) {
            match field.kind {
                FieldKind::MultiSelect => {
                    let code: usize = row.parse().unwrap_or(0);
                    if code == 0 || code > field.option_count {
                        continue;
                    }
                    let s = slot / field.option_count;
                    seg[(code - 1) * s..code * s].fill(true);
                }
                FieldKind::SingleSelect => {
                    let code: usize = row.parse().unwrap_or(0);
                    seg[..code.min(slot)].fill(true);
                }
                FieldKind::Text => {
                    if row == "1" {
                        seg.fill(true);
                    }
                }
                _ => {
                    let (Some(stats), Ok(v)) = (plan.numeric_stats[i], row.parse::<f64>()) else {
                        continue;
                    };
                    let n = thermometer_count(v, stats.min, stats.max, slot);
                    seg[..n].fill(true);
                }
            }
        }
    }
    bits
}

fn field_spec(model: &ModelDefinition, qn: &str, col: u32) -> Option<FieldSpec> {
    let f = model.field(qn, col)?;
    Some(FieldSpec {
        question_number: f.question_number.to_string(),
        column_number: col,
        kind: f.kind,
        option_count: f.leaf.options.len(),
    })
}

/// Encode every city of `ws`: textual pass, statistics, slot size, bits.
pub fn encode_working_set(ws: &WorkingSet, cfg: &EncodingConfig, log: &mut IssueLog) -> Encoded {
    let model = &ws.model;
    let mut present: BTreeMap<(String, u32), ()> = BTreeMap::new();
    for r in &ws.records {
        present.insert((r.question_number.clone(), r.column_number), ());
    }
    let field_order: Vec<FieldSpec> = model
        .fields()
        .into_iter()
        .filter(|f| present.contains_key(&(f.question_number.to_string(), f.column_number)))
        .filter_map(|f| field_spec(model, f.question_number, f.column_number))
        .collect();
    let index: BTreeMap<(&str, u32), usize> = field_order
        .iter()
        .enumerate()
        .map(|(i, f)| ((f.question_number.as_str(), f.column_number), i))
        .collect();

    let mut textual: Vec<Vec<FieldText>> = Vec::with_capacity(ws.cities.len());
    for city in &ws.cities {
        let mut grouped: Vec<Vec<&AnswerRecord>> = vec![Vec::new(); field_order.len()];
        for r in ws.records_of(city.sample_id) {
            if let Some(&i) = index.get(&(r.question_number.as_str(), r.column_number)) {
                grouped[i].push(r);
            }
        }
        let row: Vec<FieldText> = field_order
            .iter()
            .zip(&grouped)
            .map(|(f, rows)| {
                let leaf = model
                    .question(&f.question_number)
                    .and_then(|q| q.leaf(f.column_number))
                    .expect("field_order only holds model fields");
                to_textual(rows, leaf, f.kind, cfg, log)
            })
            .collect();
        textual.push(row);
    }

    let numeric_stats = field_order
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if !f.kind.is_numeric() {
                return None;
            }
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            let (mut sum, mut n, mut nonempty) = (0.0, 0usize, 0usize);
            for sample in &textual {
                let ft = &sample[i];
                if ft.is_answered() {
                    nonempty += 1;
                }
                for v in ft.answered_values() {
                    min = min.min(v);
                    max = max.max(v);
                    sum += v;
                    n += 1;
                }
            }
            (n > 0).then(|| NumericStats {
                min,
                max,
                mean: sum / n as f64,
                nonempty,
            })
        })
        .collect();

    let slot_size = compute_slot_size(&field_order, &textual);
    let plan = EncodingPlan {
        slot_size,
        base_year: cfg.base_year,
        field_order,
        numeric_stats,
    };
    let samples = ws
        .cities
        .iter()
        .zip(textual)
        .map(|(city, textual)| EncodedSample {
            sample_id: city.sample_id,
            bits: to_binary(&textual, &plan),
            textual,
        })
        .collect();
    Encoded { plan, samples }
}

/// Processed textual file: one row per sample, one column per field.
pub fn write_textual<W: Write>(
    w: W,
    plan: &EncodingPlan,
    samples: &[EncodedSample],
) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["SampleId".to_string()];
    header.extend(plan.field_order.iter().map(FieldSpec::label));
    out.write_record(&header)?;
    for s in samples {
        let mut row = vec![s.sample_id.to_string()];
        row.extend(s.textual.iter().map(FieldText::text));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Read back the textual file as (sample id, per-field values).
pub fn read_textual<R: io::Read>(r: R) -> csv::Result<Vec<(u64, Vec<String>)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).and_then(|s| s.parse().ok()).unwrap_or(0);
        out.push((id, rec.iter().skip(1).map(str::to_string).collect()));
    }
    Ok(out)
}

/// `.bin` file: `sample_id,bits` per line.
pub fn write_binary<W: Write>(mut w: W, samples: &[EncodedSample]) -> io::Result<()> {
    for s in samples {
        writeln!(w, "{},{}", s.sample_id, s.bit_string())?;
    }
    Ok(())
}

pub fn read_binary(text: &str) -> Result<Vec<(u64, Vec<bool>)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, bits) = line
            .split_once(',')
            .ok_or_else(|| format!("line {}: missing comma", n + 1))?;
        let id: u64 = id
            .trim()
            .parse()
            .map_err(|_| format!("line {}: bad sample id", n + 1))?;
        let bits = bits
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(format!("line {}: bad bit `{c}`", n + 1)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push((id, bits));
    }
    Ok(out)
}

/// Consolidation file: min, max, mean and non-empty count per numeric field.
pub fn write_consolidation<W: Write>(w: W, plan: &EncodingPlan) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["Field", "Kind", "Min", "Max", "Mean", "NonEmpty"])?;
    for (f, stats) in plan.field_order.iter().zip(&plan.numeric_stats) {
        if !f.kind.is_numeric() {
            continue;
        }
        let (min, max, mean, n) = match stats {
            Some(s) => (
                format_number(s.min),
                format_number(s.max),
                format_number(s.mean),
                s.nonempty,
            ),
            None => (String::new(), String::new(), String::new(), 0),
        };
        out.write_record([
            f.label(),
            format!("{:?}", f.kind),
            min,
            max,
            mean,
            n.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Questions list: one question per line, TABLE columns and MULTI_SELECT
/// options indented beneath.
pub fn write_questions_list<W: Write>(
    mut w: W,
    plan: &EncodingPlan,
    model: &ModelDefinition,
) -> io::Result<()> {
    let mut last: Option<&str> = None;
    for f in &plan.field_order {
        let Some(q) = model.question(&f.question_number) else {
            continue;
        };
        if last != Some(q.number.as_str()) {
            writeln!(w, "{}\t{}", q.number, q.name)?;
            last = Some(q.number.as_str());
        }
        let leaf = if q.kind == QuestionTypeKind::Table {
            let Some(col) = q.leaf(f.column_number) else {
                continue;
            };
            writeln!(w, "  [{}]\t{}", f.column_number, col.name)?;
            col
        } else {
            q
        };
        if leaf.kind == QuestionTypeKind::MultiSelect {
            for o in &leaf.options {
                writeln!(w, "    {}: {}", o.code, o.text)?;
            }
        }
    }
    Ok(())
}

/// Information data file with the frozen plan parameters.
pub fn write_info<W: Write>(mut w: W, plan: &EncodingPlan, samples: usize) -> io::Result<()> {
    writeln!(w, "slot_size={}", plan.slot_size)?;
    writeln!(w, "base_year={}", plan.base_year)?;
    writeln!(w, "fields={}", plan.field_order.len())?;
    writeln!(w, "samples={samples}")?;
    writeln!(w, "bits_per_sample={}", plan.bit_len())
}
