use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Binary party label. Parsing accepts "Democrat" and "Democratic"
/// case-insensitively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyLabel {
    Republican,
    Democratic,
}

impl PartyLabel {
    pub const BOTH: [PartyLabel; 2] = [PartyLabel::Republican, PartyLabel::Democratic];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "republican" => Some(PartyLabel::Republican),
            "democratic" | "democrat" => Some(PartyLabel::Democratic),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PartyLabel::Republican => "Republican",
            PartyLabel::Democratic => "Democratic",
        }
    }

    pub fn other(self) -> Self {
        match self {
            PartyLabel::Republican => PartyLabel::Democratic,
            PartyLabel::Democratic => PartyLabel::Republican,
        }
    }

    /// 1 for Republican, 0 for Democratic (the alignment-score axis).
    pub fn indicator(self) -> u32 {
        match self {
            PartyLabel::Republican => 1,
            PartyLabel::Democratic => 0,
        }
    }

    /// Row/column index in a confusion matrix.
    pub fn index(self) -> usize {
        match self {
            PartyLabel::Republican => 0,
            PartyLabel::Democratic => 1,
        }
    }
}

impl fmt::Display for PartyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PartyLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PartyLabel::parse(s).ok_or_else(|| format!("unknown party {s:?}"))
    }
}

impl Serialize for PartyLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PartyLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        PartyLabel::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown party {s:?}")))
    }
}

macro_rules! categories {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// The closed set of 23 topical categories.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Category {
            $($variant),+
        }

        impl Category {
            pub const ALL: [Category; 23] = [$(Category::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(Category::$variant => $name),+
                }
            }
        }
    };
}

categories! {
    Politics => "Politics",
    Religion => "Religion",
    Economics => "Economics",
    Science => "Science",
    Society => "Society",
    Health => "Health",
    Sports => "Sports",
    Music => "Music",
    Fashion => "Fashion",
    Movies => "Movies",
    Tv => "TV",
    Games => "Games",
    Arts => "Arts",
    Cars => "Cars",
    Education => "Education",
    Entertainment => "Entertainment",
    Funny => "Funny",
    Miscellaneous => "Miscellaneous",
    News => "News",
    People => "People",
    Philosophy => "Philosophy",
    PlacesTravel => "Places-Travel",
    Technology => "Technology",
}

fn fold_name(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

impl Category {
    pub fn is_political(self) -> bool {
        self == Category::Politics
    }

    /// Exact name match (case-insensitive).
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        Category::ALL.iter().copied().find(|c| c.name().eq_ignore_ascii_case(s))
    }

    /// Lenient match used for model output: ignores case and punctuation and
    /// accepts a few spelling variants ("Game", "Places & Travel", "Television").
    pub fn parse_lenient(s: &str) -> Option<Self> {
        if let Some(c) = Category::parse(s) {
            return Some(c);
        }
        let folded = fold_name(s);
        let alias = match folded.as_str() {
            "game" => Some(Category::Games),
            "placesandtravel" | "travel" => Some(Category::PlacesTravel),
            "television" => Some(Category::Tv),
            "movie" | "film" => Some(Category::Movies),
            "misc" => Some(Category::Miscellaneous),
            _ => None,
        };
        alias.or_else(|| Category::ALL.iter().copied().find(|c| fold_name(c.name()) == folded))
    }

    pub fn general() -> impl Iterator<Item = Category> {
        Category::ALL.into_iter().filter(|c| !c.is_political())
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Category::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Ddo,
    Reddit,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Ddo => "ddo",
            Source::Reddit => "reddit",
        }
    }
}

impl FromStr for Source {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ddo" => Ok(Source::Ddo),
            "reddit" => Ok(Source::Reddit),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

/// A user with a gold party label. One line of `users.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub party: PartyLabel,
    pub source: Source,
    /// Mean score of the user's comments in the source community (reddit only).
    pub mean_comment_score: Option<f64>,
}

/// One inference unit: a debater's arguments in one debate, or one user's
/// comments in one subreddit.
#[derive(Debug, Clone, PartialEq)]
pub struct TextUnit {
    pub text_id: String,
    pub user_id: String,
    pub category: Category,
    /// Debate id (ddo) or subreddit name (reddit).
    pub group_key: String,
    pub body: String,
    pub token_count: usize,
    pub created_at: Option<DateTime<Utc>>,
}

/// Wire form of a [`TextUnit`]; one line of `texts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextLine {
    pub text_id: String,
    pub user_id: String,
    pub category: Category,
    pub group_key: String,
    pub body: String,
    pub created_at: Option<DateTime<Utc>>,
}

impl From<&TextUnit> for TextLine {
    fn from(t: &TextUnit) -> Self {
        TextLine {
            text_id: t.text_id.clone(),
            user_id: t.user_id.clone(),
            category: t.category,
            group_key: t.group_key.clone(),
            body: t.body.clone(),
            created_at: t.created_at,
        }
    }
}

/// A raw comment as fetched from a listing; one line of `raw_comments.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawComment {
    pub user_id: String,
    pub subreddit: String,
    pub body: String,
    pub score: i64,
    pub created_at: DateTime<Utc>,
}

/// Summary counts for a loaded corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub source: Source,
    pub n_users_by_party: BTreeMap<PartyLabel, usize>,
    pub n_texts: usize,
    pub categories_present: BTreeSet<Category>,
}

impl CorpusManifest {
    pub fn compute(source: Source, users: &[UserRecord], texts: &[TextUnit]) -> Self {
        let mut n_users_by_party = BTreeMap::new();
        for p in PartyLabel::BOTH {
            n_users_by_party.insert(p, 0);
        }
        for u in users {
            *n_users_by_party.entry(u.party).or_insert(0) += 1;
        }
        CorpusManifest {
            source,
            n_users_by_party,
            n_texts: texts.len(),
            categories_present: texts.iter().map(|t| t.category).collect(),
        }
    }

    /// True when the stored counts match a recomputation.
    pub fn is_consistent(&self, users: &[UserRecord], texts: &[TextUnit]) -> bool {
        *self == CorpusManifest::compute(self.source, users, texts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn party_parsing_is_lenient_on_case_and_democrat() {
        assert_eq!(PartyLabel::parse("democrat"), Some(PartyLabel::Democratic));
        assert_eq!(PartyLabel::parse("DEMOCRATIC"), Some(PartyLabel::Democratic));
        assert_eq!(PartyLabel::parse(" Republican "), Some(PartyLabel::Republican));
        assert_eq!(PartyLabel::parse("Independent"), None);
    }

    #[test]
    fn category_set_is_closed() {
        assert_eq!(Category::ALL.len(), 23);
        assert_eq!(Category::parse("TV"), Some(Category::Tv));
        assert_eq!(Category::parse("places-travel"), Some(Category::PlacesTravel));
        assert_eq!(Category::parse("Cooking"), None);
        assert_eq!(Category::parse_lenient("Places & Travel"), Some(Category::PlacesTravel));
        assert_eq!(Category::parse_lenient("game"), Some(Category::Games));
        let political: Vec<_> = Category::ALL.iter().filter(|c| c.is_political()).collect();
        assert_eq!(political, vec![&Category::Politics]);
        assert_eq!(Category::general().count(), 22);
    }

    #[test]
    fn manifest_serializes_party_keys_as_names() {
        let m = CorpusManifest::compute(Source::Ddo, &[], &[]);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"Republican\":0"), "{json}");
        let back: CorpusManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
