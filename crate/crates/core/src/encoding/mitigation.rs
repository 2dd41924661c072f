//! Numeric coercion and range repair for recoverable answers.

use serde::{Deserialize, Serialize};

use crate::model::{Question, QuestionDomainKind};

/// Outcome attached to a mitigated numeric value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NumericFlag {
    Answered,
    /// Repaired by a power-of-10 rescale.
    Corrected,
    /// Unusable; the value is replaced by 0 and treated as unanswered.
    Defaulted,
}

const CURRENCY: [char; 6] = ['$', '€', '£', '¥', '₹', '₩'];

/// Parse a free-form number. Whitespace, currency marks and a trailing `%`
/// are dropped, and thousands separators are resolved:
///
/// * both `.` and `,` present: the rightmost one is the decimal mark;
/// * a single kind of separator occurring once with at most two trailing
///   digits is the decimal mark;
/// * otherwise the separators group thousands.
pub fn parse_locale_number(raw: &str) -> Option<f64> {
    let mut s: String = raw
        .chars()
        .filter(|c| !c.is_whitespace() && !CURRENCY.contains(c))
        .collect();
    // Currency codes glued to a symbol, like "R$" or "US$".
    if let Some(pos) = raw.find('$') {
        let prefix = raw[..pos].trim();
        if !prefix.is_empty() && prefix.len() <= 3 && prefix.chars().all(|c| c.is_ascii_uppercase())
        {
            s = s[prefix.len()..].to_string();
        }
    }
    let s = s.strip_suffix('%').unwrap_or(&s);
    if s.is_empty() {
        return None;
    }
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }

    let (sign, body) = match s.strip_prefix('-') {
        Some(b) => ("-", b),
        None => ("", s.strip_prefix('+').unwrap_or(s)),
    };
    if body.is_empty()
        || !body
            .chars()
            .all(|c| c.is_ascii_digit() || c == '.' || c == ',')
    {
        return None;
    }
    let last_dot = body.rfind('.');
    let last_comma = body.rfind(',');
    let decimal = match (last_dot, last_comma) {
        (Some(d), Some(c)) => Some(d.max(c)),
        (Some(p), None) | (None, Some(p)) => {
            let sep = body.as_bytes()[p];
            let occurrences = body.bytes().filter(|&b| b == sep).count();
            let trailing = body.len() - p - 1;
            (occurrences == 1 && trailing <= 2).then_some(p)
        }
        (None, None) => None,
    };
    let mut digits = String::with_capacity(body.len() + 1);
    digits.push_str(sign);
    for (i, ch) in body.char_indices() {
        if ch.is_ascii_digit() {
            digits.push(ch);
        } else if Some(i) == decimal {
            digits.push('.');
        }
    }
    digits.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Coerce the raw text of a NUMBER/INTEGER/YEAR answer. INTEGER and YEAR
/// answers must come out integral.
pub fn coerce_numeric(raw: &str, q: &Question) -> (f64, NumericFlag) {
    let integral = matches!(
        q.domain,
        QuestionDomainKind::Integer | QuestionDomainKind::Year
    );
    match parse_locale_number(raw) {
        Some(v) if !integral || v.fract() == 0.0 => (v, NumericFlag::Answered),
        _ => (0.0, NumericFlag::Defaulted),
    }
}

/// Repair values outside the question's range by the power-of-10 rescale
/// with the smallest exponent magnitude in -6..=6 that lands inside.
pub fn range_check(q: &Question, value: f64) -> (f64, NumericFlag) {
    let (Some(lo), Some(hi)) = (q.range_min, q.range_max) else {
        return (value, NumericFlag::Answered);
    };
    if !q.range_checked || (lo..=hi).contains(&value) {
        return (value, NumericFlag::Answered);
    }
    for magnitude in 1..=6 {
        let factor = 10f64.powi(magnitude);
        for scaled in [value / factor, value * factor] {
            if (lo..=hi).contains(&scaled) {
                return (scaled, NumericFlag::Corrected);
            }
        }
    }
    (0.0, NumericFlag::Defaulted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locale_table() {
        let cases: &[(&str, Option<f64>)] = &[
            ("1,234.5", Some(1234.5)),
            ("1.234,5", Some(1234.5)),
            ("1,234", Some(1234.0)),
            ("12,5", Some(12.5)),
            ("1.5", Some(1.5)),
            ("1.234.567", Some(1234567.0)),
            ("6,000,000", Some(6_000_000.0)),
            ("R$ 1.000,00", Some(1000.0)),
            ("US$2,500", Some(2500.0)),
            ("€ 12", Some(12.0)),
            ("45%", Some(45.0)),
            ("-3,5", Some(-3.5)),
            ("n/a", None),
            ("", None),
            ("12abc", None),
            (",", None),
        ];
        for (raw, want) in cases {
            assert_eq!(parse_locale_number(raw), *want, "{raw}");
        }
    }
}
