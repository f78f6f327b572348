//! Noun prompts for open-vocabulary detection.
//!
//! The heuristic extractor tokenizes, lower-cases, drops tokens found in
//! the bundled stop-word and verb lists, and singularizes plurals with the
//! `ies -> y`, sibilant `es` and plain `s` rules. A POS-tag route keeps
//! `NOUN`/`PROPN` tokens returned by the gateway instead.

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub const DEFAULT_PROMPT_CAP: usize = 12;

const STOPWORDS: &str = include_str!("../data/stopwords.txt");
const VERBS: &str = include_str!("../data/verbs.txt");

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("description text is empty")]
    EmptyText,
    #[error("no nouns left after filtering")]
    EmptyPromptSet,
    #[error("part-of-speech tagging failed: {0}")]
    Tagger(String),
}

/// Ordered, de-duplicated, lower-case nouns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptSet {
    nouns: Vec<String>,
}

impl PromptSet {
    pub fn nouns(&self) -> &[String] {
        &self.nouns
    }

    pub fn len(&self) -> usize {
        self.nouns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nouns.is_empty()
    }

    pub fn joined(&self) -> String {
        self.nouns.join(" ")
    }
}

/// Parses a word list: one token per line, `#` starts a comment.
pub fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

fn bundled_stopwords() -> &'static HashSet<String> {
    static LIST: OnceLock<HashSet<String>> = OnceLock::new();
    LIST.get_or_init(|| parse_word_list(STOPWORDS))
}

fn bundled_verbs() -> &'static HashSet<String> {
    static LIST: OnceLock<HashSet<String>> = OnceLock::new();
    LIST.get_or_init(|| parse_word_list(VERBS))
}

/// Source of part-of-speech tags, e.g. the gateway's `/v1/pos` endpoint.
pub trait PosTagger {
    /// `(token, universal POS tag)` pairs in text order.
    fn tag(&self, text: &str) -> Result<Vec<(String, String)>, PromptError>;
}

pub enum ExtractionMode<'a> {
    Heuristic,
    GatewayPos(&'a dyn PosTagger),
}

/// Singularizes by rule only; no lemmatization.
pub fn singularize(word: &str) -> String {
    let len = word.chars().count();
    if len <= 3 || !word.is_ascii() {
        return word.to_string();
    }
    if len > 4 && word.ends_with("ies") {
        return format!("{}y", &word[..word.len() - 3]);
    }
    for suffix in ["sses", "xes", "zes", "ches", "shes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    if word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") && !word.ends_with("is") {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

#[derive(Clone, Debug)]
pub struct NounExtractor {
    stopwords: HashSet<String>,
    verbs: HashSet<String>,
    cap: usize,
}

impl Default for NounExtractor {
    fn default() -> Self {
        Self::new(DEFAULT_PROMPT_CAP)
    }
}

impl NounExtractor {
    /// Uses the bundled lists.
    pub fn new(cap: usize) -> Self {
        Self {
            stopwords: bundled_stopwords().clone(),
            verbs: bundled_verbs().clone(),
            cap,
        }
    }

    pub fn with_lists(stopwords: HashSet<String>, verbs: HashSet<String>, cap: usize) -> Self {
        Self { stopwords, verbs, cap }
    }

    fn excluded(&self, token: &str) -> bool {
        token.chars().count() < 2
            || token.chars().all(|c| c.is_ascii_digit())
            || self.stopwords.contains(token)
            || self.verbs.contains(token)
    }

    fn collect<I: Iterator<Item = String>>(&self, candidates: I) -> Result<PromptSet, PromptError> {
        let mut seen = HashSet::new();
        let mut nouns = Vec::new();
        for token in candidates {
            if self.excluded(&token) {
                continue;
            }
            let noun = singularize(&token);
            if self.excluded(&noun) {
                continue;
            }
            if seen.insert(noun.clone()) {
                nouns.push(noun);
                if nouns.len() == self.cap {
                    break;
                }
            }
        }
        if nouns.is_empty() {
            return Err(PromptError::EmptyPromptSet);
        }
        Ok(PromptSet { nouns })
    }

    pub fn heuristic(&self, text: &str) -> Result<PromptSet, PromptError> {
        if text.trim().is_empty() {
            return Err(PromptError::EmptyText);
        }
        self.collect(tokens(text))
    }

    /// Keeps `NOUN` and `PROPN` tokens, then applies the same normalization.
    pub fn from_tags(&self, tags: &[(String, String)]) -> Result<PromptSet, PromptError> {
        let nouns = tags
            .iter()
            .filter(|(_, tag)| tag == "NOUN" || tag == "PROPN")
            .flat_map(|(tok, _)| tokens(tok).collect::<Vec<_>>());
        self.collect(nouns)
    }

    pub fn extract(&self, text: &str, mode: ExtractionMode<'_>) -> Result<PromptSet, PromptError> {
        match mode {
            ExtractionMode::Heuristic => self.heuristic(text),
            ExtractionMode::GatewayPos(tagger) => {
                if text.trim().is_empty() {
                    return Err(PromptError::EmptyText);
                }
                self.from_tags(&tagger.tag(text)?)
            }
        }
    }
}

/// Extracts with the bundled lists and the default cap.
pub fn extract_nouns(text: &str, mode: ExtractionMode<'_>) -> Result<PromptSet, PromptError> {
    NounExtractor::default().extract(text, mode)
}

/// Tags every token the heuristic would keep as `NOUN`, everything else as `X`.
/// Backs the mock `/v1/pos` endpoint.
pub fn heuristic_pos_tags(text: &str) -> Vec<(String, String)> {
    let ex = NounExtractor::new(usize::MAX);
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            let lower = t.to_lowercase();
            let keep = !ex.excluded(&lower) && !ex.excluded(&singularize(&lower));
            (t.to_string(), if keep { "NOUN" } else { "X" }.to_string())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nouns(text: &str) -> Vec<String> {
        extract_nouns(text, ExtractionMode::Heuristic).unwrap().nouns().to_vec()
    }

    #[test]
    fn street_sentence() {
        assert_eq!(
            nouns("A street with cars parked on the side and a few pedestrians walking on the sidewalk."),
            ["street", "car", "side", "pedestrian", "sidewalk"]
        );
    }

    #[test]
    fn cyclist_sentence() {
        assert_eq!(nouns("A cyclist is riding down a city street."), ["cyclist", "city", "street"]);
    }

    #[test]
    fn other_report_sentences() {
        assert_eq!(
            nouns("A street with a bus stop and a building with flags."),
            ["street", "bus", "stop", "building", "flag"]
        );
        assert_eq!(nouns("A street scene with cars driving down the road."), ["street", "car", "road"]);
    }

    #[test]
    fn stop_word_only_text() {
        assert_eq!(extract_nouns("the", ExtractionMode::Heuristic), Err(PromptError::EmptyPromptSet));
        assert_eq!(extract_nouns("   ", ExtractionMode::Heuristic), Err(PromptError::EmptyText));
    }

    #[test]
    fn plural_rules() {
        for (plural, single) in [
            ("cars", "car"),
            ("bodies", "body"),
            ("boxes", "box"),
            ("benches", "bench"),
            ("glasses", "glass"),
            ("bus", "bus"),
            ("glass", "glass"),
            ("gas", "gas"),
            ("ties", "tie"),
        ] {
            assert_eq!(singularize(plural), single, "{plural}");
        }
    }

    #[test]
    fn cap_truncates() {
        let ex = NounExtractor::new(2);
        let set = ex.heuristic("cars trucks buses bikes").unwrap();
        assert_eq!(set.nouns(), ["car", "truck"]);
    }

    struct FixedTagger;
    impl PosTagger for FixedTagger {
        fn tag(&self, _text: &str) -> Result<Vec<(String, String)>, PromptError> {
            Ok(vec![
                ("A".into(), "DET".into()),
                ("Cyclists".into(), "NOUN".into()),
                ("ride".into(), "VERB".into()),
                ("Trier".into(), "PROPN".into()),
                ("cyclists".into(), "NOUN".into()),
            ])
        }
    }

    #[test]
    fn pos_mode_keeps_nouns() {
        let set = extract_nouns("A Cyclists ride Trier", ExtractionMode::GatewayPos(&FixedTagger)).unwrap();
        assert_eq!(set.nouns(), ["cyclist", "trier"]);
    }

    #[test]
    fn word_list_comments() {
        let l = parse_word_list("# header\nfoo\n  Bar  # trailing\n\n");
        assert_eq!(l.len(), 2);
        assert!(l.contains("bar"));
    }

    #[test]
    fn mock_pos_tags_agree_with_heuristic() {
        let text = "A street with cars parked on the side.";
        let ex = NounExtractor::default();
        assert_eq!(ex.from_tags(&heuristic_pos_tags(text)).unwrap(), ex.heuristic(text).unwrap());
    }

    proptest! {
        #[test]
        fn idempotent_on_joined_output(words in proptest::collection::vec("[a-zA-Z]{1,9}", 1..14)) {
            let text = words.join(" ");
            if let Ok(first) = extract_nouns(&text, ExtractionMode::Heuristic) {
                let again = extract_nouns(&first.joined(), ExtractionMode::Heuristic).unwrap();
                prop_assert_eq!(again, first);
            }
        }

        #[test]
        fn case_invariant(text in "[a-zA-Z ,.]{1,60}") {
            prop_assert_eq!(
                extract_nouns(&text.to_uppercase(), ExtractionMode::Heuristic),
                extract_nouns(&text.to_lowercase(), ExtractionMode::Heuristic)
            );
        }

        #[test]
        fn bounded_by_token_count(text in "[a-z ]{1,80}") {
            if let Ok(set) = extract_nouns(&text, ExtractionMode::Heuristic) {
                prop_assert!(set.len() <= text.split_whitespace().count());
            }
        }
    }
}
