use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tokenize::Tokenizer;
use super::types::{RawComment, Source, TextUnit, UserRecord};
use super::CorpusError;
use crate::rng::substream;

pub const DEFAULT_MIN_TOKENS: usize = 10;
pub const DEFAULT_MAX_TOKENS: usize = 1000;

/// One line of `rejects.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub record: serde_json::Value,
    pub reason: String,
}

/// Keeps reddit users whose mean source-community comment score is strictly
/// above `threshold`. Order is preserved.
pub fn filter_users_by_mean_score(users: &[UserRecord], threshold: f64) -> Result<Vec<UserRecord>, CorpusError> {
    let mut kept = Vec::with_capacity(users.len());
    for u in users {
        if u.source != Source::Reddit {
            return Err(CorpusError::SourceMismatch { user_id: u.user_id.clone(), expected: Source::Reddit });
        }
        let score = u.mean_comment_score.ok_or_else(|| CorpusError::MissingScore(u.user_id.clone()))?;
        if score > threshold {
            kept.push(u.clone());
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, Default)]
pub struct LengthFilterOutcome {
    pub kept: Vec<RawComment>,
    pub rejects: Vec<Reject>,
}

/// Keeps comments whose token count lies in the closed interval `[min, max]`.
/// Comments the tokenizer cannot handle are dropped into the reject report.
pub fn filter_by_token_length(
    comments: &[RawComment],
    min: usize,
    max: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<LengthFilterOutcome, CorpusError> {
    if max <= min {
        return Err(CorpusError::InvalidBounds { min, max });
    }
    let mut out = LengthFilterOutcome::default();
    for c in comments {
        let reason = match tokenizer.count(&c.body) {
            Ok(n) if n < min => format!("too_short:{n}"),
            Ok(n) if n > max => format!("too_long:{n}"),
            Ok(_) => {
                out.kept.push(c.clone());
                continue;
            }
            Err(e) => format!("tokenizer_error:{}", e.0),
        };
        out.rejects.push(Reject { record: serde_json::to_value(c).unwrap_or_default(), reason });
    }
    Ok(out)
}

/// Caps every user at `cap` units, sampling uniformly without replacement
/// for users above the cap. Retained units keep their input order.
pub fn undersample_active_users(texts: &[TextUnit], cap: usize, seed: u64) -> Result<Vec<TextUnit>, CorpusError> {
    if cap < 1 {
        return Err(CorpusError::InvalidCap);
    }
    let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in texts.iter().enumerate() {
        by_user.entry(t.user_id.as_str()).or_default().push(i);
    }
    let mut keep: HashSet<usize> = HashSet::with_capacity(texts.len());
    for (user, idxs) in by_user {
        if idxs.len() <= cap {
            keep.extend(idxs);
        } else {
            let mut rng = substream(seed, &format!("undersample/{user}"));
            keep.extend(sample(&mut rng, idxs.len(), cap).into_iter().map(|j| idxs[j]));
        }
    }
    Ok(texts.iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, t)| t.clone()).collect())
}
