//! Text normalization, the answer-match rule, and the harmonic mean.

use crate::error::Error;

/// Canonical text form for matching: whitespace trimmed and collapsed,
/// lowercased, trailing sentence punctuation removed.
pub fn normalize_text(s: &str) -> String {
    let lowered = s.to_lowercase();
    let collapsed: Vec<&str> = lowered.split_whitespace().collect();
    collapsed.join(" ").trim_end_matches(['.', '!', '?']).trim_end().to_string()
}

/// Whether a generated answer counts as correct: its normalized form must
/// start with the normalized target. Generative backends emit
/// continuations, so demanding equality would punish benign trailing text.
pub fn answer_match(prediction: &str, target: &str) -> Result<bool, Error> {
    let target = normalize_text(target);
    if target.is_empty() {
        return Err(Error::InvalidInput("match target normalizes to the empty string".into()));
    }
    Ok(normalize_text(prediction).starts_with(&target))
}

/// Harmonic mean of two or three percentages, defined as 0 when any
/// component is 0 (a total failure anywhere ruins the balance).
pub fn harmonic_mean(values: &[f64]) -> Result<f64, Error> {
    if !(values.len() == 2 || values.len() == 3) {
        return Err(Error::InvalidInput(format!(
            "harmonic mean is defined over 2 or 3 values, got {}",
            values.len()
        )));
    }
    for value in values {
        if !(0.0..=100.0).contains(value) {
            return Err(Error::InvalidInput(format!("percentage {value} outside [0, 100]")));
        }
    }
    if values.iter().any(|v| *v == 0.0) {
        return Ok(0.0);
    }
    Ok(values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>())
}
