//! Strict-but-lenient parsing of structured model answers.
//!
//! Leniency: surrounding prose and code fences are ignored, party names are
//! case-folded ("democrat" is accepted), and a confidence given as a numeric
//! string is coerced. Hard rejections: unknown parties and confidences
//! outside 1..=5 (never clamped).

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::corpus::{Category, PartyLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalformedReason {
    NoJson,
    MissingParty,
    UnknownParty,
    MissingConfidence,
    InvalidConfidence,
    ConfidenceOutOfRange,
    UnknownCategory,
    /// Transport failures that exhausted their retries.
    Transport,
}

impl MalformedReason {
    pub fn as_str(self) -> &'static str {
        match self {
            MalformedReason::NoJson => "no_json",
            MalformedReason::MissingParty => "missing_party",
            MalformedReason::UnknownParty => "unknown_party",
            MalformedReason::MissingConfidence => "missing_confidence",
            MalformedReason::InvalidConfidence => "invalid_confidence",
            MalformedReason::ConfidenceOutOfRange => "confidence_out_of_range",
            MalformedReason::UnknownCategory => "unknown_category",
            MalformedReason::Transport => "transport",
        }
    }
}

impl fmt::Display for MalformedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A model answer that did not satisfy the response schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalformedResponse {
    pub reason: MalformedReason,
    pub raw: String,
}

/// A well-formed text-level prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub party: PartyLabel,
    /// Always within 1..=5.
    pub confidence: u8,
    pub raw: String,
    pub model_id: String,
    pub template_version: String,
}

pub type InferenceResult = Result<Prediction, MalformedResponse>;

/// Byte ranges of balanced `{...}` spans starting at each `{`, respecting
/// JSON string escapes.
fn balanced_span(s: &str, start: usize) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Every JSON object embedded in `s`, in order of appearance. Objects nested
/// inside an earlier match are not reported separately.
pub fn extract_json_objects(s: &str) -> Vec<Map<String, Value>> {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(off) = s[pos..].find('{') {
        let start = pos + off;
        match balanced_span(s, start).and_then(|end| {
            serde_json::from_str::<Map<String, Value>>(&s[start..end]).ok().map(|m| (m, end))
        }) {
            Some((map, end)) => {
                out.push(map);
                pos = end;
            }
            None => pos = start + 1,
        }
    }
    out
}

/// The first JSON object in `s`.
pub fn first_json_object(s: &str) -> Option<Map<String, Value>> {
    let mut pos = 0;
    while let Some(off) = s[pos..].find('{') {
        let start = pos + off;
        if let Some(end) = balanced_span(s, start) {
            if let Ok(map) = serde_json::from_str::<Map<String, Value>>(&s[start..end]) {
                return Some(map);
            }
        }
        pos = start + 1;
    }
    None
}

fn field<'a>(map: &'a Map<String, Value>, name: &str) -> Option<&'a Value> {
    map.get(name)
        .or_else(|| map.iter().find(|(k, _)| k.trim().eq_ignore_ascii_case(name)).map(|(_, v)| v))
}

fn coerce_confidence(v: &Value) -> Result<u8, MalformedReason> {
    let n: i64 = match v {
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i,
            (None, Some(f)) if f.fract() == 0.0 && f.abs() < 1e6 => f as i64,
            _ => return Err(MalformedReason::InvalidConfidence),
        },
        Value::String(s) => s.trim().parse::<i64>().map_err(|_| MalformedReason::InvalidConfidence)?,
        _ => return Err(MalformedReason::InvalidConfidence),
    };
    if (1..=5).contains(&n) {
        Ok(n as u8)
    } else {
        Err(MalformedReason::ConfidenceOutOfRange)
    }
}

/// Party and confidence from a raw answer, or the reason it is malformed.
pub fn parse_answer(raw: &str) -> Result<(PartyLabel, u8), MalformedReason> {
    let obj = first_json_object(raw).ok_or(MalformedReason::NoJson)?;
    let party = match field(&obj, "party") {
        Some(Value::String(s)) => PartyLabel::parse(s).ok_or(MalformedReason::UnknownParty)?,
        Some(_) => return Err(MalformedReason::UnknownParty),
        None => return Err(MalformedReason::MissingParty),
    };
    let confidence = coerce_confidence(field(&obj, "confidence").ok_or(MalformedReason::MissingConfidence)?)?;
    Ok((party, confidence))
}

/// Parses a raw model answer into a [`Prediction`] carrying its provenance.
pub fn parse_prediction(raw: &str, model_id: &str, template_version: &str) -> InferenceResult {
    match parse_answer(raw) {
        Ok((party, confidence)) => Ok(Prediction {
            party,
            confidence,
            raw: raw.to_string(),
            model_id: model_id.to_string(),
            template_version: template_version.to_string(),
        }),
        Err(reason) => Err(MalformedResponse { reason, raw: raw.to_string() }),
    }
}

/// Parses a category answer (`{"category": "..."}`) with the same closed-set
/// discipline.
pub fn parse_category(raw: &str) -> Result<Category, MalformedReason> {
    let obj = first_json_object(raw).ok_or(MalformedReason::NoJson)?;
    match field(&obj, "category") {
        Some(Value::String(s)) => Category::parse_lenient(s).ok_or(MalformedReason::UnknownCategory),
        _ => Err(MalformedReason::UnknownCategory),
    }
}
