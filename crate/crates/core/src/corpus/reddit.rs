//! Comment-style corpus construction: seed-community labelling and
//! per-(user, subreddit) concatenation.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::tokenize::Tokenizer;
use super::types::{Category, PartyLabel, RawComment, Source, TextUnit, UserRecord};
use super::CorpusError;

/// Separator between a user's comments inside one subreddit unit.
pub const COMMENT_SEPARATOR: &str = "\n";

/// Canonical subreddit key: no `r/` prefix, lower-case.
pub fn normalize_subreddit(name: &str) -> String {
    let trimmed = name.trim();
    let stripped = trimmed
        .strip_prefix("/r/")
        .or_else(|| trimmed.strip_prefix("r/"))
        .unwrap_or(trimmed);
    stripped.to_lowercase()
}

/// Default seed communities and the labels they confer.
pub fn default_seed_labels() -> BTreeMap<String, PartyLabel> {
    BTreeMap::from([
        ("conservative".to_string(), PartyLabel::Republican),
        ("democrats".to_string(), PartyLabel::Democratic),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedLabelling {
    pub users: Vec<UserRecord>,
    /// Users who commented in communities of both parties; left unlabelled.
    pub ambiguous: Vec<String>,
}

/// Labels users by the seed community they commented in and records their
/// mean comment score there. Output is sorted by user id.
pub fn label_users_from_seed_comments(
    comments: &[RawComment],
    seed_labels: &BTreeMap<String, PartyLabel>,
) -> SeedLabelling {
    let seeds: HashMap<String, PartyLabel> =
        seed_labels.iter().map(|(k, v)| (normalize_subreddit(k), *v)).collect();
    let mut per_user: BTreeMap<&str, (HashSet<PartyLabel>, i64, usize)> = BTreeMap::new();
    for c in comments {
        if let Some(&party) = seeds.get(&normalize_subreddit(&c.subreddit)) {
            let entry = per_user.entry(c.user_id.as_str()).or_default();
            entry.0.insert(party);
            entry.1 += c.score;
            entry.2 += 1;
        }
    }
    let mut users = Vec::new();
    let mut ambiguous = Vec::new();
    for (user, (parties, total, n)) in per_user {
        if parties.len() != 1 {
            ambiguous.push(user.to_string());
            continue;
        }
        users.push(UserRecord {
            user_id: user.to_string(),
            party: *parties.iter().next().expect("one party"),
            source: Source::Reddit,
            mean_comment_score: Some(total as f64 / n as f64),
        });
    }
    SeedLabelling { users, ambiguous }
}

#[derive(Debug, Clone, Default)]
pub struct SubredditTexts {
    pub texts: Vec<TextUnit>,
    /// Subreddits that had no category assignment and fell back to
    /// `Miscellaneous`.
    pub uncategorized: Vec<String>,
}

/// Drops comments posted in `seed_subreddits` and concatenates the rest per
/// (user, subreddit) in chronological order, one [`TextUnit`] per pair.
///
/// `categories` maps normalized subreddit names to their category; missing
/// entries fall back to `Miscellaneous` and are reported.
pub fn build_subreddit_texts(
    comments: &[RawComment],
    seed_subreddits: &HashSet<String>,
    categories: &HashMap<String, Category>,
    tokenizer: &dyn Tokenizer,
) -> Result<SubredditTexts, CorpusError> {
    let seeds: HashSet<String> = seed_subreddits.iter().map(|s| normalize_subreddit(s)).collect();
    let mut groups: BTreeMap<(&str, String), Vec<&RawComment>> = BTreeMap::new();
    for c in comments {
        let sub = normalize_subreddit(&c.subreddit);
        if seeds.contains(&sub) {
            continue;
        }
        groups.entry((c.user_id.as_str(), sub)).or_default().push(c);
    }
    let mut out = SubredditTexts::default();
    let mut missing = HashSet::new();
    for ((user, sub), mut members) in groups {
        // stable: equal timestamps keep input order
        members.sort_by_key(|c| c.created_at);
        let body = members.iter().map(|c| c.body.as_str()).collect::<Vec<_>>().join(COMMENT_SEPARATOR);
        let category = match categories.get(&sub) {
            Some(c) => *c,
            None => {
                if missing.insert(sub.clone()) {
                    log::warn!("subreddit {sub} has no category; using Miscellaneous");
                    out.uncategorized.push(sub.clone());
                }
                Category::Miscellaneous
            }
        };
        let token_count = tokenizer.count(&body)?;
        out.texts.push(TextUnit {
            text_id: format!("{user}@{sub}"),
            user_id: user.to_string(),
            category,
            group_key: sub,
            body,
            token_count,
            created_at: members.first().map(|c| c.created_at),
        });
    }
    Ok(out)
}
