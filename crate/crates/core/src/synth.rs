//! Planted-marker synthetic corpora.
//!
//! Every text gets a political intensity `k ~ Bin(6, π_c)` from its
//! category's politicization `π_c`. It carries `k` party marker tokens whose
//! majority points to the author's true party with probability
//! `MARKER_ACCURACY[k]`. Under the mock backend the confidence is
//! `min(5, 1 + k)`, so accuracy rises with confidence by construction.
//! Each text also draws "tone" words from bands near `k`, which ties
//! word-level confidence to word-level accuracy.
//!
//! Users have a home category. The chance that a user also posts in
//! Politics grows with the home category's `π`, so user overlap with
//! Politics tracks politicization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::RangeInclusive;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{DEMOCRATIC_MARKERS, REPUBLICAN_MARKERS};
use crate::corpus::{write_corpus, write_jsonl, Category, Corpus, CorpusError, PartyLabel, Source, TextUnit, UserRecord};
use crate::lexical::default_stopwords;
use crate::rng::substream;

/// Probability that a text's marker majority matches the author's party,
/// indexed by marker count. With no markers the mock guesses.
pub const MARKER_ACCURACY: [f64; 7] = [0.5, 0.62, 0.72, 0.80, 0.86, 0.90, 0.93];

pub const MAX_INTENSITY: usize = 6;

/// Civic vocabulary: the topic words of Politics and of planted-political texts.
pub const CIVIC_WORDS: [&str; 40] = [
    "senate", "ballot", "legislation", "congress", "governor", "policy", "election", "campaign", "voter",
    "caucus", "parliament", "amendment", "bill", "veto", "filibuster", "lobby", "partisan", "senator",
    "district", "referendum", "statute", "cabinet", "primary", "delegate", "constituent", "budget", "mandate",
    "incumbent", "electorate", "judiciary", "impeachment", "coalition", "ordinance", "treasury", "minister",
    "diplomat", "tariff", "sanction", "federal", "statehouse",
];

const GROUPS_PER_CATEGORY: usize = 5;
const TOPIC_WORDS: usize = 40;
const BAND_WORDS: usize = 30;
const FILLER_WORDS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub seed: u64,
    pub min_texts_per_user: usize,
    pub max_texts_per_user: usize,
    pub politics_pi: f64,
    /// Politicization of general categories is spread evenly over this range.
    pub general_pi: (f64, f64),
    /// Share of general texts that are planted-political: `base + slope * π_c`.
    pub planted_base: f64,
    pub planted_slope: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 2000,
            seed: 17,
            min_texts_per_user: 5,
            max_texts_per_user: 15,
            politics_pi: 0.65,
            general_pi: (0.05, 0.55),
            planted_base: 0.01,
            planted_slope: 0.06,
        }
    }
}

/// Ground truth for one generated text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextTruth {
    pub intensity: usize,
    /// Marker majority points to the author's party.
    pub markers_correct: bool,
    /// General-category text written with civic vocabulary.
    pub planted_political: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub users: Vec<UserRecord>,
    pub texts: Vec<TextUnit>,
    pub titles: BTreeMap<String, String>,
    pub truth: BTreeMap<String, TextTruth>,
    pub pi: BTreeMap<Category, f64>,
}

#[derive(Serialize)]
struct TitleLine<'a> {
    group_key: &'a str,
    title: &'a str,
}

#[derive(Serialize)]
struct TruthLine<'a> {
    text_id: &'a str,
    #[serde(flatten)]
    truth: &'a TextTruth,
}

impl SynthCorpus {
    pub fn corpus(&self) -> Corpus {
        Corpus::new(Source::Reddit, self.users.clone(), self.texts.clone())
    }

    pub fn titles_map(&self) -> HashMap<String, String> {
        self.titles.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub fn gold(&self) -> HashMap<String, PartyLabel> {
        self.users.iter().map(|u| (u.user_id.clone(), u.party)).collect()
    }

    /// Writes `users.jsonl`, `texts.jsonl`, `titles.jsonl` and `truth.jsonl`.
    pub fn write(&self, dir: &Path) -> Result<(), CorpusError> {
        write_corpus(dir, &self.corpus())?;
        write_jsonl(&dir.join("titles.jsonl"), self.titles.iter().map(|(g, t)| TitleLine { group_key: g, title: t }))?;
        write_jsonl(&dir.join("truth.jsonl"), self.truth.iter().map(|(id, t)| TruthLine { text_id: id, truth: t }))
    }
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Pronounceable pseudo-words, unique across calls via `taken`.
fn pseudo_words(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| format!("{}{}", ONSETS[rng.gen_range(0..ONSETS.len())], VOWELS[rng.gen_range(0..VOWELS.len())]))
            .collect();
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Vocab {
    topic: BTreeMap<Category, Vec<String>>,
    bands: Vec<Vec<String>>,
    filler: Vec<String>,
}

fn vocab(seed: u64) -> Vocab {
    let mut rng = substream(seed, "synth-vocab");
    let mut taken: BTreeSet<String> = default_stopwords();
    taken.extend(REPUBLICAN_MARKERS.iter().chain(&DEMOCRATIC_MARKERS).chain(&CIVIC_WORDS).map(|s| s.to_string()));
    let mut topic = BTreeMap::new();
    for c in Category::ALL {
        let words = if c.is_political() {
            CIVIC_WORDS.iter().map(|s| s.to_string()).collect()
        } else {
            pseudo_words(&mut rng, TOPIC_WORDS, &mut taken)
        };
        topic.insert(c, words);
    }
    let bands = (0..=MAX_INTENSITY).map(|_| pseudo_words(&mut rng, BAND_WORDS, &mut taken)).collect();
    let filler = pseudo_words(&mut rng, FILLER_WORDS, &mut taken);
    Vocab { topic, bands, filler }
}

fn group_key(c: Category, j: usize) -> String {
    format!("{}_{j}", c.name().to_lowercase().replace('-', ""))
}

fn binomial(rng: &mut ChaCha8Rng, n: usize, p: f64) -> usize {
    (0..n).filter(|_| rng.gen::<f64>() < p).count()
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &'a [String], n: RangeInclusive<usize>, out: &mut Vec<&'a str>) {
    let n = rng.gen_range(n);
    for _ in 0..n {
        out.push(&words[rng.gen_range(0..words.len())]);
    }
}

fn pick_static(rng: &mut ChaCha8Rng, words: &[&'static str], n: usize, out: &mut Vec<&'static str>) {
    for _ in 0..n {
        out.push(words[rng.gen_range(0..words.len())]);
    }
}

struct TextSpec {
    category: Category,
    intensity: usize,
    planted: bool,
}

fn write_text(rng: &mut ChaCha8Rng, v: &Vocab, spec: &TextSpec, party: PartyLabel, pi: f64) -> (String, bool) {
    let mut words: Vec<&str> = Vec::new();
    let civic = &v.topic[&Category::Politics];
    if spec.category.is_political() {
        pick(rng, civic, 6..=12, &mut words);
    } else if spec.planted {
        pick(rng, civic, 6..=12, &mut words);
        pick(rng, &v.topic[&spec.category], 1..=2, &mut words);
    } else {
        pick(rng, &v.topic[&spec.category], 6..=12, &mut words);
        let n_civic = binomial(rng, 4, pi);
        pick(rng, civic, n_civic..=n_civic, &mut words);
    }
    let k = spec.intensity;
    let lo = k.saturating_sub(1);
    let hi = (k + 1).min(MAX_INTENSITY);
    for _ in 0..rng.gen_range(6..=10) {
        let band = rng.gen_range(lo..=hi);
        pick(rng, &v.bands[band], 1..=1, &mut words);
    }
    pick(rng, &v.filler, 4..=8, &mut words);

    let correct = k > 0 && rng.gen::<f64>() < MARKER_ACCURACY[k];
    let mut markers = Vec::new();
    if k > 0 {
        let lead = if correct { party } else { party.other() };
        let minority = rng.gen_range(0..=(k - 1) / 2);
        let lead_markers: Vec<&'static str> = match lead {
            PartyLabel::Republican => REPUBLICAN_MARKERS.to_vec(),
            PartyLabel::Democratic => DEMOCRATIC_MARKERS.to_vec(),
        };
        let other_markers: Vec<&'static str> = match lead {
            PartyLabel::Republican => DEMOCRATIC_MARKERS.to_vec(),
            PartyLabel::Democratic => REPUBLICAN_MARKERS.to_vec(),
        };
        pick_static(rng, &lead_markers, k - minority, &mut markers);
        pick_static(rng, &other_markers, minority, &mut markers);
    }
    words.extend(markers);
    words.shuffle(rng);
    // a little connective tissue so texts read less like word lists
    let glue = ["the", "and", "of", "to", "in"];
    let mut body = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            body.push(' ');
            if i % 4 == 0 {
                body.push_str(glue[rng.gen_range(0..glue.len())]);
                body.push(' ');
            }
        }
        body.push_str(w);
    }
    (body, correct)
}

/// Generates a planted-marker corpus; fully determined by `cfg`.
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let v = vocab(cfg.seed);
    let general: Vec<Category> = Category::ALL.iter().copied().filter(|c| !c.is_political()).collect();
    let mut order = general.clone();
    order.shuffle(&mut substream(cfg.seed, "synth-pi"));
    let mut pi = BTreeMap::new();
    pi.insert(Category::Politics, cfg.politics_pi);
    let (lo, hi) = cfg.general_pi;
    for (i, c) in order.iter().enumerate() {
        pi.insert(*c, lo + (hi - lo) * i as f64 / (order.len() - 1) as f64);
    }

    let mut titles = BTreeMap::new();
    let mut trng = substream(cfg.seed, "synth-titles");
    let civic = &v.topic[&Category::Politics];
    for c in Category::ALL {
        for j in 0..GROUPS_PER_CATEGORY {
            let mut words = Vec::new();
            if c.is_political() {
                pick(&mut trng, civic, 5..=5, &mut words);
            } else {
                pick(&mut trng, &v.topic[&c], 4..=4, &mut words);
                let n = binomial(&mut trng, 3, pi[&c]);
                pick(&mut trng, civic, n..=n, &mut words);
            }
            titles.insert(group_key(c, j), format!("discussion of {}", words.join(" ")));
        }
    }

    let mut rng = substream(cfg.seed, "synth-texts");
    let mut users = Vec::with_capacity(cfg.n_users);
    let mut texts = Vec::new();
    let mut truth = BTreeMap::new();
    let width = cfg.n_users.max(1).to_string().len();
    for u in 0..cfg.n_users {
        let user_id = format!("synth_u{u:0width$}");
        let party = if rng.gen::<bool>() { PartyLabel::Republican } else { PartyLabel::Democratic };
        users.push(UserRecord { user_id: user_id.clone(), party, source: Source::Reddit, mean_comment_score: None });
        let home = general[rng.gen_range(0..general.len())];
        let political = rng.gen::<f64>() < (0.15 + 1.2 * pi[&home]).min(0.95);
        let n_texts = rng.gen_range(cfg.min_texts_per_user..=cfg.max_texts_per_user);
        let mut cats = Vec::with_capacity(n_texts);
        if political {
            cats.extend(std::iter::repeat_n(Category::Politics, rng.gen_range(1..=2)));
        }
        while cats.len() < n_texts {
            cats.push(if rng.gen::<f64>() < 0.6 { home } else { general[rng.gen_range(0..general.len())] });
        }
        let mut used: BTreeSet<String> = BTreeSet::new();
        for c in cats {
            // one unit per (user, group); skip when every group is taken
            let free: Vec<String> = (0..GROUPS_PER_CATEGORY).map(|j| group_key(c, j)).filter(|g| !used.contains(g)).collect();
            let Some(g) = free.choose(&mut rng).cloned() else { continue };
            used.insert(g.clone());
            let p = pi[&c];
            let planted = !c.is_political() && rng.gen::<f64>() < cfg.planted_base + cfg.planted_slope * p;
            let intensity = binomial(&mut rng, MAX_INTENSITY, if planted { 0.7 } else { p });
            let spec = TextSpec { category: c, intensity, planted };
            let (body, markers_correct) = write_text(&mut rng, &v, &spec, party, p);
            let text_id = format!("{user_id}:{g}");
            truth.insert(text_id.clone(), TextTruth { intensity, markers_correct, planted_political: planted });
            texts.push(TextUnit {
                text_id,
                user_id: user_id.clone(),
                category: c,
                group_key: g,
                token_count: body.split_whitespace().count(),
                body,
                created_at: None,
            });
        }
    }
    SynthCorpus { users, texts, titles, truth, pi }
}

/// A two-class corpus where each document carries 5 to 10 words unique to
/// its class plus shared noise; balanced labels in alternating order.
pub fn separable_corpus(n_docs: usize, seed: u64) -> (Vec<String>, Vec<usize>) {
    let mut rng = substream(seed, "synth-separable");
    let mut taken = default_stopwords();
    let class_words = [pseudo_words(&mut rng, 20, &mut taken), pseudo_words(&mut rng, 20, &mut taken)];
    let noise = pseudo_words(&mut rng, 60, &mut taken);
    let mut docs = Vec::with_capacity(n_docs);
    let mut labels = Vec::with_capacity(n_docs);
    for i in 0..n_docs {
        let y = i % 2;
        let mut words: Vec<&str> = Vec::new();
        pick(&mut rng, &class_words[y], 5..=10, &mut words);
        pick(&mut rng, &noise, 5..=10, &mut words);
        words.shuffle(&mut rng);
        docs.push(words.join(" "));
        labels.push(y);
    }
    (docs, labels)
}
