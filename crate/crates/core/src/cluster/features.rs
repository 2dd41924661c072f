//! Numeric feature vectors for the validation engines, read from the same
//! textual values that feed the bit pictures.

use crate::encoding::EncodingPlan;
use crate::model::FieldKind;

/// Raw features per sample. Numeric, single-select and TEXT fields give one
/// feature each (max over TABLE rows); MULTI_SELECT fields give one 0/1
/// indicator per option.
pub fn feature_vectors(plan: &EncodingPlan, textual: &[Vec<String>]) -> Vec<Vec<f64>> {
    textual
        .iter()
        .map(|sample| {
            let mut out = Vec::new();
            for (field, text) in plan.field_order.iter().zip(sample) {
                let values = text
                    .split(':')
                    .map(|v| v.trim().parse::<f64>().unwrap_or(0.0));
                if field.kind == FieldKind::MultiSelect {
                    let mut ind = vec![0.0; field.option_count];
                    for v in values {
                        let code = v as usize;
                        if code >= 1 && code <= field.option_count {
                            ind[code - 1] = 1.0;
                        }
                    }
                    out.extend(ind);
                } else {
                    let m = values.fold(f64::NEG_INFINITY, f64::max);
                    out.push(if m.is_finite() { m } else { 0.0 });
                }
            }
            out
        })
        .collect()
}

/// Z-score every column; constant columns become 0.
pub fn standardize(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = vectors.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = vectors[0].len();
    let mut out = vectors.to_vec();
    for c in 0..dim {
        let mean = vectors.iter().map(|v| v[c]).sum::<f64>() / n as f64;
        let var = vectors.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        for row in out.iter_mut() {
            row[c] = if sd > 1e-12 {
                (row[c] - mean) / sd
            } else {
                0.0
            };
        }
    }
    out
}
