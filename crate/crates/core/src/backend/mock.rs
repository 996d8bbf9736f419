//! Deterministic stand-in for an LLM.
//!
//! Alignment rule: the party is the majority among planted marker tokens in
//! the text and the confidence is `min(5, 1 + marker count)`. Texts with no
//! marker majority get a hash-determined party. Categorization looks the
//! first known keyword up in a fixed table.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::{BackendError, CompletionBackend, CompletionRequest, Task};
use crate::corpus::{Category, PartyLabel};
use crate::lexical::tokenize_words;

pub const REPUBLICAN_MARKERS: [&str; 20] = [
    "liberty", "patriot", "border", "taxpayer", "firearm", "sovereignty", "deregulation", "freedom",
    "constitution", "faith", "unborn", "militia", "entrepreneur", "tradition", "sheriff", "rancher",
    "veteran", "homeschool", "pipeline", "flag",
];

pub const DEMOCRATIC_MARKERS: [&str; 20] = [
    "climate", "equity", "unionize", "medicare", "diversity", "renewable", "inclusion", "reproductive",
    "welfare", "immigrant", "progressive", "solar", "transit", "wages", "tenant", "activism", "vaccine",
    "refugee", "pluralism", "feminism",
];

const CATEGORY_KEYWORDS: &[(&str, Category)] = &[
    ("guitar", Category::Music),
    ("band", Category::Music),
    ("song", Category::Music),
    ("songs", Category::Music),
    ("album", Category::Music),
    ("music", Category::Music),
    ("concert", Category::Music),
    ("watch", Category::Fashion),
    ("watches", Category::Fashion),
    ("clothing", Category::Fashion),
    ("sneakers", Category::Fashion),
    ("fashion", Category::Fashion),
    ("style", Category::Fashion),
    ("car", Category::Cars),
    ("cars", Category::Cars),
    ("engine", Category::Cars),
    ("automotive", Category::Cars),
    ("tax", Category::Economics),
    ("economy", Category::Economics),
    ("economics", Category::Economics),
    ("finance", Category::Economics),
    ("investing", Category::Economics),
    ("stocks", Category::Economics),
    ("politics", Category::Politics),
    ("political", Category::Politics),
    ("election", Category::Politics),
    ("congress", Category::Politics),
    ("government", Category::Politics),
    ("religion", Category::Religion),
    ("church", Category::Religion),
    ("bible", Category::Religion),
    ("god", Category::Religion),
    ("science", Category::Science),
    ("physics", Category::Science),
    ("biology", Category::Science),
    ("astronomy", Category::Science),
    ("health", Category::Health),
    ("fitness", Category::Health),
    ("medicine", Category::Health),
    ("diet", Category::Health),
    ("sports", Category::Sports),
    ("football", Category::Sports),
    ("basketball", Category::Sports),
    ("soccer", Category::Sports),
    ("movie", Category::Movies),
    ("movies", Category::Movies),
    ("film", Category::Movies),
    ("tv", Category::Tv),
    ("television", Category::Tv),
    ("sitcom", Category::Tv),
    ("game", Category::Games),
    ("games", Category::Games),
    ("gaming", Category::Games),
    ("art", Category::Arts),
    ("painting", Category::Arts),
    ("drawing", Category::Arts),
    ("school", Category::Education),
    ("education", Category::Education),
    ("college", Category::Education),
    ("teachers", Category::Education),
    ("entertainment", Category::Entertainment),
    ("celebrity", Category::Entertainment),
    ("celebrities", Category::Entertainment),
    ("funny", Category::Funny),
    ("memes", Category::Funny),
    ("humor", Category::Funny),
    ("jokes", Category::Funny),
    ("news", Category::News),
    ("headlines", Category::News),
    ("people", Category::People),
    ("philosophy", Category::Philosophy),
    ("ethics", Category::Philosophy),
    ("travel", Category::PlacesTravel),
    ("city", Category::PlacesTravel),
    ("tourism", Category::PlacesTravel),
    ("technology", Category::Technology),
    ("tech", Category::Technology),
    ("programming", Category::Technology),
    ("software", Category::Technology),
    ("society", Category::Society),
    ("culture", Category::Society),
];

/// Marker vocabulary used by both the mock and the synthetic generator.
#[derive(Debug, Clone)]
pub struct MarkerTable {
    party_of: HashMap<String, PartyLabel>,
}

impl Default for MarkerTable {
    fn default() -> Self {
        let mut party_of = HashMap::new();
        for m in REPUBLICAN_MARKERS {
            party_of.insert(m.to_string(), PartyLabel::Republican);
        }
        for m in DEMOCRATIC_MARKERS {
            party_of.insert(m.to_string(), PartyLabel::Democratic);
        }
        MarkerTable { party_of }
    }
}

impl MarkerTable {
    pub fn party_of(&self, token: &str) -> Option<PartyLabel> {
        self.party_of.get(token).copied()
    }

    pub fn markers(party: PartyLabel) -> &'static [&'static str] {
        match party {
            PartyLabel::Republican => &REPUBLICAN_MARKERS,
            PartyLabel::Democratic => &DEMOCRATIC_MARKERS,
        }
    }

    /// (Republican count, Democratic count) of marker tokens in `text`.
    pub fn count(&self, text: &str) -> (usize, usize) {
        let mut counts = (0, 0);
        for tok in tokenize_words(text) {
            match self.party_of(&tok) {
                Some(PartyLabel::Republican) => counts.0 += 1,
                Some(PartyLabel::Democratic) => counts.1 += 1,
                None => {}
            }
        }
        counts
    }
}

/// Pure mock backend.
#[derive(Debug, Clone)]
pub struct MockBackend {
    model_id: String,
    markers: MarkerTable,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend { model_id: "mock-planted-v1".into(), markers: MarkerTable::default() }
    }
}

impl MockBackend {
    pub fn new(model_id: impl Into<String>) -> Self {
        MockBackend { model_id: model_id.into(), ..MockBackend::default() }
    }

    /// The (party, confidence) the mock assigns to `text`.
    pub fn judge(&self, text: &str) -> (PartyLabel, u8) {
        let (rep, dem) = self.markers.count(text);
        let party = match rep.cmp(&dem) {
            std::cmp::Ordering::Greater => PartyLabel::Republican,
            std::cmp::Ordering::Less => PartyLabel::Democratic,
            std::cmp::Ordering::Equal => {
                if Sha256::digest(text.as_bytes())[0] & 1 == 0 {
                    PartyLabel::Republican
                } else {
                    PartyLabel::Democratic
                }
            }
        };
        let confidence = (1 + rep + dem).min(5) as u8;
        (party, confidence)
    }

    pub fn categorize(&self, description: &str) -> Category {
        let table: HashMap<&str, Category> = CATEGORY_KEYWORDS.iter().copied().collect();
        tokenize_words(description)
            .iter()
            .find_map(|t| table.get(t.as_str()).copied())
            .unwrap_or(Category::Miscellaneous)
    }
}

impl CompletionBackend for MockBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        Ok(match request.task {
            Task::Alignment => {
                let (party, confidence) = self.judge(request.text);
                format!("{{\"party\": \"{}\", \"confidence\": {}}}", party.as_str(), confidence)
            }
            Task::Categorize => format!("{{\"category\": \"{}\"}}", self.categorize(request.text).name()),
        })
    }

    fn is_network(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_marker_and_capped_confidence() {
        let m = MockBackend::default();
        assert_eq!(m.judge("liberty and border talk"), (PartyLabel::Republican, 3));
        assert_eq!(m.judge("climate climate liberty"), (PartyLabel::Democratic, 4));
        assert_eq!(m.judge("climate equity solar wages transit tenant"), (PartyLabel::Democratic, 5));
        let (_, c) = m.judge("nothing to see here");
        assert_eq!(c, 1);
        assert_eq!(m.judge("liberty climate"), m.judge("liberty climate"));
    }

    #[test]
    fn keyword_categories() {
        let m = MockBackend::default();
        assert_eq!(m.categorize("guitar talk"), Category::Music);
        assert_eq!(m.categorize("Watches: discussion of wristwatches"), Category::Fashion);
        assert_eq!(m.categorize("zzz qqq"), Category::Miscellaneous);
    }

    #[test]
    fn marker_lists_are_disjoint_and_clean() {
        let table = MarkerTable::default();
        assert_eq!(table.party_of.len(), 40);
        let template = crate::backend::PromptTemplate::builtin("alignment_few_shot").unwrap();
        assert_eq!(table.count(template.body()), (0, 0));
    }
}
