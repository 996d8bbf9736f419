use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde_json::{Map, Value};

use super::tokenize::Tokenizer;
use super::types::{Category, CorpusManifest, PartyLabel, Source, TextLine, TextUnit, UserRecord};
use super::CorpusError;

pub const USERS_FILE: &str = "users.jsonl";
pub const TEXTS_FILE: &str = "texts.jsonl";

/// A validated corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub users: Vec<UserRecord>,
    pub texts: Vec<TextUnit>,
    pub manifest: CorpusManifest,
}

impl Corpus {
    pub fn new(source: Source, users: Vec<UserRecord>, texts: Vec<TextUnit>) -> Self {
        let manifest = CorpusManifest::compute(source, &users, &texts);
        Corpus { users, texts, manifest }
    }

    pub fn source(&self) -> Source {
        self.manifest.source
    }

    /// Replaces the text table and recomputes the manifest.
    pub fn with_texts(self, texts: Vec<TextUnit>) -> Self {
        Corpus::new(self.manifest.source, self.users, texts)
    }

    pub fn gold(&self) -> HashMap<&str, PartyLabel> {
        self.users.iter().map(|u| (u.user_id.as_str(), u.party)).collect()
    }
}

struct Fields<'a> {
    file: &'a str,
    line: usize,
    map: Map<String, Value>,
}

impl Fields<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> CorpusError {
        CorpusError::Malformed {
            file: self.file.to_string(),
            line: self.line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn string(&self, field: &str) -> Result<String, CorpusError> {
        match self.map.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(self.err(field, format!("expected string, got {other}"))),
            None => Err(self.err(field, "missing field")),
        }
    }

    fn opt_f64(&self, field: &str) -> Result<Option<f64>, CorpusError> {
        match self.map.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => n
                .as_f64()
                .map(Some)
                .ok_or_else(|| self.err(field, "number out of range")),
            Some(other) => Err(self.err(field, format!("expected number or null, got {other}"))),
        }
    }

    fn opt_u64(&self, field: &str) -> Result<Option<u64>, CorpusError> {
        match self.map.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => n
                .as_u64()
                .map(Some)
                .ok_or_else(|| self.err(field, "expected nonnegative integer")),
            Some(other) => Err(self.err(field, format!("expected integer, got {other}"))),
        }
    }

    fn opt_timestamp(&self, field: &str) -> Result<Option<DateTime<Utc>>, CorpusError> {
        match self.map.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => DateTime::parse_from_rfc3339(s)
                .map(|t| Some(t.with_timezone(&Utc)))
                .map_err(|e| self.err(field, format!("invalid ISO-8601 timestamp: {e}"))),
            Some(other) => Err(self.err(field, format!("expected timestamp string, got {other}"))),
        }
    }
}

/// Reads a JSONL file, handing each non-blank line's object to `f` with its
/// 1-based line number.
fn read_objects<T>(
    path: &Path,
    mut f: impl FnMut(Fields<'_>) -> Result<T, CorpusError>,
) -> Result<Vec<T>, CorpusError> {
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("?").to_string();
    let reader = BufReader::new(File::open(path).map_err(|e| CorpusError::io(path, e))?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            file: file_name.clone(),
            line: idx + 1,
            field: "<line>".into(),
            message: e.to_string(),
        })?;
        let Value::Object(map) = value else {
            return Err(CorpusError::Malformed {
                file: file_name.clone(),
                line: idx + 1,
                field: "<line>".into(),
                message: "expected a JSON object".into(),
            });
        };
        out.push(f(Fields { file: &file_name, line: idx + 1, map })?);
    }
    Ok(out)
}

pub(crate) fn parse_users(path: &Path) -> Result<Vec<UserRecord>, CorpusError> {
    let mut seen = HashSet::new();
    read_objects(path, |fields| {
        let user_id = fields.string("user_id")?;
        let party_raw = fields.string("party")?;
        let party = PartyLabel::parse(&party_raw)
            .ok_or_else(|| fields.err("party", format!("unknown party {party_raw:?}")))?;
        let source_raw = fields.string("source")?;
        let source: Source = source_raw.parse().map_err(|e: String| fields.err("source", e))?;
        let mean_comment_score = fields.opt_f64("mean_comment_score")?;
        if !seen.insert(user_id.clone()) {
            return Err(CorpusError::DuplicateUser(user_id));
        }
        Ok(UserRecord { user_id, party, source, mean_comment_score })
    })
}

struct RawText {
    line: usize,
    text_id: String,
    user_id: String,
    category: Category,
    group_key: String,
    body: String,
    created_at: Option<DateTime<Utc>>,
    round: Option<u64>,
}

fn parse_texts(path: &Path) -> Result<Vec<RawText>, CorpusError> {
    let mut seen = HashSet::new();
    read_objects(path, |fields| {
        let text_id = fields.string("text_id")?;
        let user_id = fields.string("user_id")?;
        let category_raw = fields.string("category")?;
        let category = Category::parse(&category_raw).ok_or_else(|| CorpusError::UnknownCategory {
            line: fields.line,
            name: category_raw.clone(),
        })?;
        let group_key = fields.string("group_key")?;
        let body = fields.string("body")?;
        if body.trim().is_empty() {
            return Err(fields.err("body", "empty body"));
        }
        let created_at = fields.opt_timestamp("created_at")?;
        let round = fields.opt_u64("round")?;
        if !seen.insert(text_id.clone()) {
            return Err(CorpusError::DuplicateTextId(text_id));
        }
        Ok(RawText { line: fields.line, text_id, user_id, category, group_key, body, created_at, round })
    })
}

/// Separator between a debater's rounds when they are joined into one unit.
pub const ROUND_SEPARATOR: &str = "\n\n";

/// Canonical id of a debate-style unit.
pub fn ddo_text_id(debate_id: &str, user_id: &str) -> String {
    format!("{debate_id}:{user_id}")
}

/// Loads `users.jsonl` and `texts.jsonl` from `dir`.
///
/// For `ddo`, text lines are individual arguments (optionally carrying a
/// `round` number); all of a debater's arguments in one debate are joined in
/// round order into a single unit. For `reddit`, lines are already one unit
/// per (user, subreddit).
pub fn load_corpus(dir: &Path, source: Source, tokenizer: &dyn Tokenizer) -> Result<Corpus, CorpusError> {
    let users = parse_users(&dir.join(USERS_FILE))?;
    for u in &users {
        if u.source != source {
            return Err(CorpusError::SourceMismatch { user_id: u.user_id.clone(), expected: source });
        }
    }
    let known: HashSet<&str> = users.iter().map(|u| u.user_id.as_str()).collect();
    let raw = parse_texts(&dir.join(TEXTS_FILE))?;
    for r in &raw {
        if !known.contains(r.user_id.as_str()) {
            return Err(CorpusError::UnknownUser { line: r.line, user_id: r.user_id.clone() });
        }
    }

    let texts = match source {
        Source::Ddo => join_debate_rounds(raw, tokenizer)?,
        Source::Reddit => {
            let mut pairs = HashSet::new();
            let mut out = Vec::with_capacity(raw.len());
            for r in raw {
                if !pairs.insert((r.user_id.clone(), r.group_key.clone())) {
                    return Err(CorpusError::DuplicateUnit { user_id: r.user_id, group_key: r.group_key });
                }
                let token_count = tokenizer.count(&r.body)?;
                out.push(TextUnit {
                    text_id: r.text_id,
                    user_id: r.user_id,
                    category: r.category,
                    group_key: r.group_key,
                    body: r.body,
                    token_count,
                    created_at: r.created_at,
                });
            }
            out
        }
    };
    Ok(Corpus::new(source, users, texts))
}

fn join_debate_rounds(raw: Vec<RawText>, tokenizer: &dyn Tokenizer) -> Result<Vec<TextUnit>, CorpusError> {
    // Preserve first-appearance order of (debate, user) pairs.
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: HashMap<(String, String), Vec<RawText>> = HashMap::new();
    for r in raw {
        let key = (r.group_key.clone(), r.user_id.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let mut out = Vec::with_capacity(order.len());
    for key in order {
        let mut parts = groups.remove(&key).unwrap_or_default();
        parts.sort_by_key(|p| (p.round.unwrap_or(0), p.line));
        let category = parts[0].category;
        if let Some(bad) = parts.iter().find(|p| p.category != category) {
            return Err(CorpusError::InconsistentCategory { group_key: key.0, line: bad.line });
        }
        let created_at = parts.iter().filter_map(|p| p.created_at).min();
        let body = parts.iter().map(|p| p.body.as_str()).collect::<Vec<_>>().join(ROUND_SEPARATOR);
        let token_count = tokenizer.count(&body)?;
        out.push(TextUnit {
            text_id: ddo_text_id(&key.0, &key.1),
            user_id: key.1,
            category,
            group_key: key.0,
            body,
            token_count,
            created_at,
        });
    }
    Ok(out)
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CorpusError::io(parent, e))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| CorpusError::io(path, e))?);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| CorpusError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("?").to_string();
    let reader = BufReader::new(File::open(path).map_err(|e| CorpusError::io(path, e))?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            file: file_name.clone(),
            line: idx + 1,
            field: "<line>".into(),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Writes `users.jsonl` and `texts.jsonl` into `dir`.
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    write_jsonl(&dir.join(USERS_FILE), &corpus.users)?;
    write_jsonl(&dir.join(TEXTS_FILE), corpus.texts.iter().map(TextLine::from))
}

/// Group key → title (debate title or subreddit description), read from a
/// JSONL file of `{"group_key": str, "title": str}` lines.
pub fn load_titles(path: &Path) -> Result<BTreeMap<String, String>, CorpusError> {
    #[derive(serde::Deserialize)]
    struct TitleLine {
        group_key: String,
        title: String,
    }
    Ok(read_jsonl::<TitleLine>(path)?.into_iter().map(|t| (t.group_key, t.title)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WhitespaceTokenizer;
    use std::fs;

    fn fixture(users: &str, texts: &str) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(USERS_FILE), users).unwrap();
        fs::write(dir.path().join(TEXTS_FILE), texts).unwrap();
        dir
    }

    const USERS: &str = r#"{"user_id":"A","party":"Republican","source":"ddo","mean_comment_score":null}
{"user_id":"B","party":"Democrat","source":"ddo","mean_comment_score":null}
"#;

    #[test]
    fn two_line_fixture_loads() {
        let dir = fixture(
            USERS,
            r#"{"text_id":"t1","user_id":"A","category":"Economics","group_key":"d1","body":"lower taxes now","created_at":null}
{"text_id":"t2","user_id":"B","category":"Music","group_key":"d2","body":"more jazz","created_at":"2015-03-01T12:00:00Z"}
"#,
        );
        let c = load_corpus(dir.path(), Source::Ddo, &WhitespaceTokenizer).unwrap();
        assert_eq!(c.users.len(), 2);
        assert_eq!(c.texts.len(), 2);
        assert_eq!(c.manifest.n_users_by_party[&PartyLabel::Republican], 1);
        assert_eq!(c.manifest.n_users_by_party[&PartyLabel::Democratic], 1);
        assert_eq!(c.texts[0].token_count, 3);
        assert!(c.manifest.is_consistent(&c.users, &c.texts));
    }

    #[test]
    fn debate_rounds_join_in_round_order() {
        let dir = fixture(
            USERS,
            r#"{"text_id":"a2","user_id":"A","category":"Politics","group_key":"d1","body":"second","created_at":null,"round":2}
{"text_id":"b1","user_id":"B","category":"Politics","group_key":"d1","body":"rebuttal","created_at":null,"round":1}
{"text_id":"a1","user_id":"A","category":"Politics","group_key":"d1","body":"first","created_at":null,"round":1}
"#,
        );
        let c = load_corpus(dir.path(), Source::Ddo, &WhitespaceTokenizer).unwrap();
        assert_eq!(c.texts.len(), 2);
        let a = c.texts.iter().find(|t| t.user_id == "A").unwrap();
        assert_eq!(a.body, "first\n\nsecond");
        assert_eq!(a.text_id, "d1:A");
    }

    #[test]
    fn unknown_category_is_rejected() {
        let dir = fixture(
            USERS,
            r#"{"text_id":"t1","user_id":"A","category":"Cooking","group_key":"d1","body":"x","created_at":null}"#,
        );
        let err = load_corpus(dir.path(), Source::Ddo, &WhitespaceTokenizer).unwrap_err();
        assert!(err.to_string().contains("unknown category"), "{err}");
    }

    #[test]
    fn duplicate_text_id_is_rejected() {
        let dir = fixture(
            USERS,
            r#"{"text_id":"t1","user_id":"A","category":"Arts","group_key":"d1","body":"x","created_at":null}
{"text_id":"t1","user_id":"B","category":"Arts","group_key":"d1","body":"y","created_at":null}"#,
        );
        let err = load_corpus(dir.path(), Source::Ddo, &WhitespaceTokenizer).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateTextId(ref id) if id == "t1"));
    }

    #[test]
    fn malformed_line_names_line_and_field() {
        let dir = fixture(
            USERS,
            r#"{"text_id":"t1","user_id":"A","category":"Arts","group_key":"d1","body":"x","created_at":null}
{"text_id":"t2","user_id":"B","category":"Arts","group_key":"d1","body":7,"created_at":null}"#,
        );
        let err = load_corpus(dir.path(), Source::Ddo, &WhitespaceTokenizer).unwrap_err();
        match err {
            CorpusError::Malformed { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "body");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn reddit_units_must_be_unique_per_user_and_subreddit() {
        let users = r#"{"user_id":"A","party":"Republican","source":"reddit","mean_comment_score":2.0}"#;
        let dir = fixture(
            users,
            r#"{"text_id":"t1","user_id":"A","category":"Cars","group_key":"cars","body":"x","created_at":null}
{"text_id":"t2","user_id":"A","category":"Cars","group_key":"cars","body":"y","created_at":null}"#,
        );
        let err = load_corpus(dir.path(), Source::Reddit, &WhitespaceTokenizer).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateUnit { .. }));
    }

    #[test]
    fn write_then_reload_is_identity() {
        let dir = fixture(
            USERS,
            r#"{"text_id":"t1","user_id":"A","category":"Economics","group_key":"d1","body":"tax  été \n end","created_at":"2015-03-01T12:00:00Z"}
{"text_id":"t2","user_id":"B","category":"Music","group_key":"d2","body":"jazz","created_at":null}"#,
        );
        let c = load_corpus(dir.path(), Source::Ddo, &WhitespaceTokenizer).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_corpus(out.path(), &c).unwrap();
        let again = load_corpus(out.path(), Source::Ddo, &WhitespaceTokenizer).unwrap();
        assert_eq!(again.users, c.users);
        assert_eq!(again.texts, c.texts);
        assert_eq!(again.texts[0].body.as_bytes(), c.texts[0].body.as_bytes());
    }
}
