//! Deterministic keyword-value judge.
//!
//! Parses `key: value` lines plus inline "<name> is <value>" phrasing out of
//! a free-text answer, checks inclusion of every queried field, and verifies
//! values against the expected comparison. The judge is an implementation of
//! the pluggable (answer, fields) -> verdict interface; a remote judge can be
//! slotted in without touching callers.

use serde::{Deserialize, Serialize};

use crate::benchmark::dataset::{AnswerField, FieldValue};

/// Per-field judgment plus totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub fields: Vec<FieldVerdict>,
    pub included: usize,
    pub correct: usize,
    pub queried: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldVerdict {
    pub name: String,
    pub included: bool,
    pub correct: bool,
    pub reported: Option<String>,
}

impl JudgeVerdict {
    pub fn inclusion_rate(&self) -> f64 {
        self.included as f64 / self.queried as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.queried as f64
    }
}

/// The pluggable judge contract.
pub trait AnswerJudge {
    fn judge(&self, answer: &str, expected: &[AnswerField]) -> JudgeVerdict;
}

/// The default deterministic parser-judge.
pub struct KeywordJudge;

impl AnswerJudge for KeywordJudge {
    fn judge(&self, answer: &str, expected: &[AnswerField]) -> JudgeVerdict {
        judge_answer(answer, expected)
    }
}

fn normalize_name(name: &str) -> String {
    let collapsed = name
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    collapsed
        .strip_prefix("the ")
        .map(str::to_string)
        .unwrap_or(collapsed)
}

/// Extract (name, value) pairs from the answer text: one per `key: value`
/// line, plus inline "<name> is <value>" sentences.
fn extract_pairs(answer: &str) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for line in answer.lines() {
        if let Some((key, value)) = line.split_once(':') {
            let key = key.trim();
            let value = value.trim();
            if !key.is_empty() && !value.is_empty() {
                pairs.push((normalize_name(key), value.to_string()));
            }
        }
        for sentence in line.split(['.', ';']) {
            if let Some((subject, value)) = sentence.split_once(" is ") {
                let subject = subject.trim().trim_start_matches("the ").trim();
                let value = value.trim().trim_end_matches('.');
                if !subject.is_empty() && !value.is_empty() {
                    pairs.push((normalize_name(subject), value.to_string()));
                }
            }
        }
    }
    pairs
}

/// Abstention phrases count as included but never correct.
fn is_abstention(value: &str) -> bool {
    let v = value.to_lowercase();
    ["cannot find", "not applicable", "unknown", "n/a", "not available"]
        .iter()
        .any(|a| v.contains(a))
}

fn parse_number(value: &str) -> Option<f64> {
    let cleaned: String = value
        .chars()
        .filter(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
        .collect();
    cleaned.parse().ok()
}

fn parse_vector(value: &str) -> Option<[f64; 3]> {
    let inner = value.trim().trim_start_matches(['(', '[']).trim_end_matches([')', ']']);
    let parts: Vec<f64> = inner
        .split(',')
        .filter_map(|p| p.trim().parse().ok())
        .collect();
    if parts.len() == 3 {
        Some([parts[0], parts[1], parts[2]])
    } else {
        None
    }
}

fn value_correct(reported: &str, expected: &FieldValue) -> bool {
    match expected {
        FieldValue::ExactString { value } => {
            reported.trim().eq_ignore_ascii_case(value.trim())
        }
        FieldValue::Numeric {
            value,
            rel_tol,
            abs_tol,
        } => match parse_number(reported) {
            Some(r) => {
                let err = (r - value).abs();
                err <= *abs_tol || err <= rel_tol * value.abs()
            }
            None => false,
        },
        FieldValue::Vector { value, abs_tol } => match parse_vector(reported) {
            Some(r) => (0..3).all(|a| (r[a] - value[a]).abs() <= *abs_tol),
            None => false,
        },
        FieldValue::StringSet { values } => {
            let reported_set: std::collections::BTreeSet<String> = reported
                .split(',')
                .map(|s| s.trim().to_lowercase())
                .filter(|s| !s.is_empty())
                .collect();
            let expected_set: std::collections::BTreeSet<String> =
                values.iter().map(|s| s.trim().to_lowercase()).collect();
            reported_set == expected_set
        }
    }
}

/// Judge a free-text answer against the expected fields. Deterministic:
/// identical inputs always produce identical verdicts.
pub fn judge_answer(answer: &str, expected: &[AnswerField]) -> JudgeVerdict {
    let pairs = extract_pairs(answer);
    let mut fields = Vec::with_capacity(expected.len());
    for field in expected {
        let mut names: Vec<String> = vec![normalize_name(&field.name)];
        names.extend(field.aliases.iter().map(|a| normalize_name(a)));
        let reported = pairs
            .iter()
            .find(|(k, _)| names.iter().any(|n| k == n))
            .map(|(_, v)| v.clone());
        let (included, correct) = match &reported {
            None => (false, false),
            Some(v) if is_abstention(v) => (true, false),
            Some(v) => (true, value_correct(v, &field.value)),
        };
        fields.push(FieldVerdict {
            name: field.name.clone(),
            included,
            correct,
            reported,
        });
    }
    let included = fields.iter().filter(|f| f.included).count();
    let correct = fields.iter().filter(|f| f.correct).count();
    JudgeVerdict {
        included,
        correct,
        queried: expected.len(),
        fields,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(defs: &[(&str, FieldValue)]) -> Vec<AnswerField> {
        defs.iter()
            .map(|(name, value)| AnswerField {
                name: name.to_string(),
                aliases: vec![],
                value: value.clone(),
            })
            .collect()
    }

    #[test]
    fn three_of_four_fields() {
        let expected = fields(&[
            ("a", FieldValue::Numeric { value: 1.0, rel_tol: 0.01, abs_tol: 0.0 }),
            ("b", FieldValue::Numeric { value: 2.0, rel_tol: 0.01, abs_tol: 0.0 }),
            ("c", FieldValue::Numeric { value: 3.0, rel_tol: 0.01, abs_tol: 0.0 }),
            ("d", FieldValue::Numeric { value: 4.0, rel_tol: 0.01, abs_tol: 0.0 }),
        ]);
        let verdict = judge_answer("a: 1\nb: 2\nc: 3", &expected);
        assert_eq!(verdict.inclusion_rate(), 0.75);
        assert_eq!(verdict.accuracy(), 0.75);
    }

    #[test]
    fn abstention_is_included_but_incorrect() {
        let expected = fields(&[(
            "lesion_count",
            FieldValue::Numeric { value: 2.0, rel_tol: 0.0, abs_tol: 1e-9 },
        )]);
        let verdict = judge_answer("lesion_count: cannot find", &expected);
        assert_eq!(verdict.included, 1);
        assert_eq!(verdict.correct, 0);
    }

    #[test]
    fn exact_echo_scores_perfect() {
        let expected = fields(&[
            ("lobe", FieldValue::ExactString { value: "Left Frontal".into() }),
            ("volume_mm3", FieldValue::Numeric { value: 120.0, rel_tol: 0.01, abs_tol: 0.0 }),
        ]);
        let verdict = judge_answer("lobe: Left Frontal\nvolume_mm3: 120", &expected);
        assert_eq!(verdict.inclusion_rate(), 1.0);
        assert_eq!(verdict.accuracy(), 1.0);
    }

    #[test]
    fn inline_is_phrasing_parses() {
        let expected = fields(&[(
            "lesion count",
            FieldValue::Numeric { value: 3.0, rel_tol: 0.0, abs_tol: 1e-9 },
        )]);
        let verdict = judge_answer("The lesion count is 3.", &expected);
        assert_eq!(verdict.included, 1);
        assert_eq!(verdict.correct, 1);
    }

    #[test]
    fn vectors_and_sets() {
        let expected = fields(&[
            (
                "centroid",
                FieldValue::Vector { value: [1.0, 2.0, 3.0], abs_tol: 1.0 },
            ),
            (
                "labels",
                FieldValue::StringSet {
                    values: vec!["edema".into(), "enhancing tumor".into()],
                },
            ),
        ]);
        let verdict = judge_answer(
            "centroid: (1.4, 2.2, 2.5)\nlabels: Enhancing Tumor, edema",
            &expected,
        );
        assert_eq!(verdict.accuracy(), 1.0);
        // Out of tolerance on one axis.
        let bad = judge_answer("centroid: (1.4, 2.2, 4.5)\nlabels: edema", &expected);
        assert_eq!(bad.correct, 0);
        assert_eq!(bad.included, 2);
    }

    #[test]
    fn correct_implies_included() {
        let expected = fields(&[("x", FieldValue::ExactString { value: "y".into() })]);
        for answer in ["x: y", "x: z", "nothing relevant", "x: unknown"] {
            let verdict = judge_answer(answer, &expected);
            for f in &verdict.fields {
                assert!(!f.correct || f.included);
            }
        }
    }

    #[test]
    fn field_names_match_case_insensitively_with_aliases() {
        let expected = vec![AnswerField {
            name: "segmentation_path".into(),
            aliases: vec!["output path".into()],
            value: FieldValue::ExactString { value: "outputs/x.nii".into() },
        }];
        let verdict = judge_answer("Output Path: outputs/x.nii", &expected);
        assert_eq!(verdict.correct, 1);
    }

    #[test]
    fn unparseable_answer_includes_nothing() {
        let expected = fields(&[("a", FieldValue::ExactString { value: "1".into() })]);
        let verdict = judge_answer("", &expected);
        assert_eq!(verdict.included, 0);
        assert_eq!(verdict.inclusion_rate(), 0.0);
    }
}
