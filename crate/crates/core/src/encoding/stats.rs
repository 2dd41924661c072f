//! Per-city answer and comment statistics.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::WorkingSet;
use crate::model::{FieldKind, ModelDefinition, QuestionTypeKind};

/// Word list used for the dictionary-word counts.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    words: HashSet<String>,
}

impl Dictionary {
    pub fn from_text(text: &str) -> Self {
        let words = text
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Self { words }
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::from_text(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleStatistics {
    pub sample_id: u64,
    pub table: u64,
    pub select: u64,
    pub text: u64,
    pub number: u64,
    pub integer: u64,
    pub year: u64,
    pub date: u64,
    pub cc_r: u64,
    pub cc_c: u64,
    pub wc_r: u64,
    pub wc_c: u64,
    pub wu_r: u64,
    pub wu_c: u64,
    pub wd_r: u64,
    pub wd_c: u64,
}

/// Whitespace-separated tokens with leading/trailing punctuation removed.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
}

/// (characters, words, unique words, dictionary words) of one text.
pub fn text_counts(text: &str, dict: &Dictionary) -> (u64, u64, u64, u64) {
    let mut wc = 0;
    let mut wd = 0;
    let mut unique = HashSet::new();
    for w in words(text) {
        wc += 1;
        if dict.contains(w) {
            wd += 1;
        }
        unique.insert(w.to_lowercase());
    }
    (text.chars().count() as u64, wc, unique.len() as u64, wd)
}

fn type_slot<'a>(
    s: &'a mut SampleStatistics,
    model: &ModelDefinition,
    qn: &str,
) -> Option<&'a mut u64> {
    let q = model.question(qn)?;
    if q.kind == QuestionTypeKind::Table {
        return Some(&mut s.table);
    }
    Some(match q.field_kind()? {
        FieldKind::SingleSelect | FieldKind::MultiSelect => &mut s.select,
        FieldKind::Text => &mut s.text,
        FieldKind::Number => &mut s.number,
        FieldKind::Integer => &mut s.integer,
        FieldKind::Year => &mut s.year,
        FieldKind::Date => &mut s.date,
    })
}

/// Statistics for every city of `ws`, in sample id order. Field-type counts
/// are non-empty answer records grouped by the type of their question.
pub fn collect_statistics(ws: &WorkingSet, dict: &Dictionary) -> Vec<SampleStatistics> {
    ws.cities
        .iter()
        .map(|city| {
            let mut s = SampleStatistics {
                sample_id: city.sample_id,
                ..Default::default()
            };
            for r in ws.records_of(city.sample_id) {
                let answer = r.response_answer.trim();
                if !answer.is_empty() {
                    if let Some(slot) = type_slot(&mut s, &ws.model, &r.question_number) {
                        *slot += 1;
                    }
                }
                let (cc, wc, wu, wd) = text_counts(&r.response_answer, dict);
                s.cc_r += cc;
                s.wc_r += wc;
                s.wu_r += wu;
                s.wd_r += wd;
                let (cc, wc, wu, wd) = text_counts(&r.comments, dict);
                s.cc_c += cc;
                s.wc_c += wc;
                s.wu_c += wu;
                s.wd_c += wd;
            }
            s
        })
        .collect()
}

pub const STATISTICS_HEADER: [&str; 16] = [
    "SampleId", "TABLE", "SELECT", "TEXT", "NUMBER", "INTEGER", "YEAR", "DATE", "CC_R", "CC_C",
    "WC_R", "WC_C", "WU_R", "WU_C", "WD_R", "WD_C",
];

pub fn write_statistics<W: Write>(w: W, stats: &[SampleStatistics]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(STATISTICS_HEADER)?;
    for s in stats {
        out.write_record(
            [
                s.sample_id,
                s.table,
                s.select,
                s.text,
                s.number,
                s.integer,
                s.year,
                s.date,
                s.cc_r,
                s.cc_c,
                s.wc_r,
                s.wc_c,
                s.wu_r,
                s.wu_c,
                s.wd_r,
                s.wd_c,
            ]
            .map(|v| v.to_string()),
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_one_answer() {
        let dict = Dictionary::from_text("individual\ncity\ncommitment\n");
        assert_eq!(
            text_counts("Individual city Commitment", &dict),
            (26, 3, 3, 3)
        );
        assert_eq!(text_counts("", &dict), (0, 0, 0, 0));
        assert_eq!(text_counts("city, City; (city)!", &dict), (19, 3, 1, 3));
        assert_eq!(text_counts("-- 2019 --", &dict), (10, 1, 1, 0));
    }
}
