//! Restricted Damerau-Levenshtein distance and option correction.

use crate::model::{Question, NOT_FOUND};

/// Restricted Damerau-Levenshtein (optimal string alignment) distance over
/// Unicode scalar values: insert, delete, substitute and adjacent
/// transposition, all at unit cost.
pub fn dl_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    let width = m + 1;
    let mut d = vec![0usize; (n + 1) * width];
    for i in 0..=n {
        d[i * width] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (d[(i - 1) * width + j] + 1)
                .min(d[i * width + j - 1] + 1)
                .min(d[(i - 1) * width + j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[(i - 2) * width + j - 2] + 1);
            }
            d[i * width + j] = best;
        }
    }
    d[n * width + m]
}

/// How a raw select answer resolved against a question's options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionMatch {
    Exact(u32),
    Corrected {
        code: u32,
        distance: usize,
    },
    /// No option within the distance budget, or the minimum was tied.
    NotFound {
        best_distance: usize,
        tied: bool,
    },
}

impl OptionMatch {
    pub fn code(self) -> u32 {
        match self {
            OptionMatch::Exact(c) | OptionMatch::Corrected { code: c, .. } => c,
            OptionMatch::NotFound { .. } => NOT_FOUND,
        }
    }
}

pub fn match_option(raw: &str, q: &Question, max_dist: usize) -> OptionMatch {
    let raw = raw.trim();
    if let Some(code) = q.option_code(raw) {
        return OptionMatch::Exact(code);
    }
    let mut best: Option<(usize, u32)> = None;
    let mut tied = false;
    for opt in &q.options {
        let d = dl_distance(raw, &opt.text);
        match best {
            Some((bd, _)) if d > bd => {}
            Some((bd, _)) if d == bd => tied = true,
            _ => {
                best = Some((d, opt.code));
                tied = false;
            }
        }
    }
    match best {
        Some((d, code)) if d <= max_dist && !tied => OptionMatch::Corrected { code, distance: d },
        Some((d, _)) => OptionMatch::NotFound {
            best_distance: d,
            tied,
        },
        None => OptionMatch::NotFound {
            best_distance: usize::MAX,
            tied: false,
        },
    }
}

/// The option code closest to `raw`, or [`NOT_FOUND`] when the minimum
/// distance exceeds `max_dist` or is shared by several options.
pub fn correct_option(raw: &str, q: &Question, max_dist: usize) -> u32 {
    match_option(raw, q, max_dist).code()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnswerOption, QuestionDomainKind, QuestionTypeKind};

    fn select(options: &[&str]) -> Question {
        Question {
            number: "1.1a".into(),
            name: "q".into(),
            section_id: "1".into(),
            parent_section: "p".into(),
            kind: QuestionTypeKind::MultiSelect,
            domain: QuestionDomainKind::Text,
            options: options
                .iter()
                .enumerate()
                .map(|(i, t)| AnswerOption {
                    code: i as u32 + 1,
                    text: t.to_string(),
                })
                .collect(),
            range_checked: false,
            range_min: None,
            range_max: None,
            columns: vec![],
        }
    }

    #[test]
    fn basic_distances() {
        assert_eq!(dl_distance("abc", "abc"), 0);
        assert_eq!(dl_distance("ca", "ac"), 1);
        assert_eq!(dl_distance("", "abc"), 3);
        assert_eq!(dl_distance("kitten", "sitting"), 3);
        // OSA, not unrestricted: "ca" -> "abc" needs 3 edits here.
        assert_eq!(dl_distance("ca", "abc"), 3);
        assert_eq!(dl_distance("Larger – covers", "Larger - covers"), 1);
    }

    #[test]
    fn ties_and_budget() {
        let q = select(&["abcd", "abce", "zzzz"]);
        assert_eq!(correct_option("abcx", &q, 3), NOT_FOUND);
        assert_eq!(
            match_option("abcx", &q, 3),
            OptionMatch::NotFound {
                best_distance: 1,
                tied: true
            }
        );
        assert_eq!(
            correct_option("zzzzzz", &select(&["Yes", "No"]), 3),
            NOT_FOUND
        );
        assert_eq!(correct_option("zzzy", &q, 3), 3);
        assert_eq!(match_option(" abcd ", &q, 0), OptionMatch::Exact(1));
    }
}
