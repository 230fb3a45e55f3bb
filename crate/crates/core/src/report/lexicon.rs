//! Phrase lexicon driving the rule-based report parser.

use std::collections::BTreeMap;
use std::ops::Range;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Modality, ParseError};

const DEFAULT_JSON: &str = include_str!("default_lexicon.json");

/// Raw lexicon as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconSpec {
    pub certainty: BTreeMap<String, f64>,
    pub count_words: BTreeMap<String, u32>,
    pub number_words: BTreeMap<String, u32>,
    pub lesion_nouns: Vec<String>,
    pub findings: BTreeMap<Modality, Vec<String>>,
    pub negation_pre: Vec<String>,
    pub negation_post: Vec<String>,
    pub scope_breaks: Vec<String>,
    pub approx: Vec<String>,
    pub size_exclusions: Vec<String>,
    pub cohort_extra_axial: Vec<String>,
    pub cohort_intra_axial: Vec<String>,
}

/// Case-insensitive matcher over a phrase list. Phrase words may be separated
/// by any run of whitespace in the text.
#[derive(Debug, Clone)]
pub(crate) struct PhraseSet {
    re: Option<Regex>,
}

pub(crate) struct PhraseMatch<'t> {
    pub range: Range<usize>,
    pub text: &'t str,
}

impl PhraseSet {
    fn new<S: AsRef<str>>(phrases: &[S]) -> Result<Self, ParseError> {
        let mut sorted: Vec<&str> = phrases
            .iter()
            .map(|p| p.as_ref().trim())
            .filter(|p| !p.is_empty())
            .collect();
        if sorted.is_empty() {
            return Ok(Self { re: None });
        }
        // Longest first so that leftmost-first alternation prefers "ring enhancement"
        // over "enhancement".
        sorted.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        sorted.dedup();
        let alts: Vec<String> = sorted.iter().map(|p| phrase_pattern(p)).collect();
        let pattern = format!("(?i)(?:{})", alts.join("|"));
        let re = Regex::new(&pattern).map_err(|e| ParseError::Lexicon(e.to_string()))?;
        Ok(Self { re: Some(re) })
    }

    pub fn find_iter<'s, 't: 's>(&'s self, text: &'t str) -> impl Iterator<Item = PhraseMatch<'t>> + 's {
        self.re.iter().flat_map(move |re| {
            re.find_iter(text).map(|m| PhraseMatch {
                range: m.range(),
                text: m.as_str(),
            })
        })
    }

    pub fn any_in(&self, text: &str) -> bool {
        self.re.as_ref().is_some_and(|re| re.is_match(text))
    }
}

fn phrase_pattern(phrase: &str) -> String {
    let words: Vec<String> = phrase.split_whitespace().map(regex::escape).collect();
    let body = words.join(r"\s+");
    let word_char = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
    let lead = if word_char(phrase.chars().next()) { r"\b" } else { "" };
    let trail = if word_char(phrase.chars().last()) { r"\b" } else { "" };
    format!("{lead}{body}{trail}")
}

/// Lowercased, whitespace-collapsed form used as a map key.
pub(crate) fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A loaded, compiled lexicon. Read-only after construction.
#[derive(Debug, Clone)]
pub struct Lexicon {
    spec: LexiconSpec,
    pub(crate) certainty: PhraseSet,
    pub(crate) count_words: PhraseSet,
    pub(crate) findings: BTreeMap<Modality, PhraseSet>,
    pub(crate) negation_pre: PhraseSet,
    pub(crate) negation_post: PhraseSet,
    pub(crate) scope_breaks: PhraseSet,
    pub(crate) approx: PhraseSet,
    pub(crate) size_exclusions: PhraseSet,
    pub(crate) extra_axial: PhraseSet,
    pub(crate) intra_axial: PhraseSet,
    pub(crate) numeral: Regex,
    certainty_values: BTreeMap<String, f64>,
    count_values: BTreeMap<String, u32>,
    number_values: BTreeMap<String, u32>,
    lesion_nouns: Vec<String>,
}

impl Lexicon {
    pub fn from_spec(spec: LexiconSpec) -> Result<Self, ParseError> {
        for (k, v) in &spec.certainty {
            if !(0.0..=1.0).contains(v) {
                return Err(ParseError::Lexicon(format!(
                    "certainty for {k:?} must lie in [0, 1], got {v}"
                )));
            }
        }
        for (k, v) in spec.count_words.iter().chain(&spec.number_words) {
            if *v < 1 {
                return Err(ParseError::Lexicon(format!("count for {k:?} must be >= 1")));
            }
        }
        let number_alts: Vec<String> = spec.number_words.keys().map(|w| regex::escape(w)).collect();
        let numeral = Regex::new(&format!(
            r"(?i)\b(\d+|{})\b",
            if number_alts.is_empty() { "\\d+".to_string() } else { number_alts.join("|") }
        ))
        .map_err(|e| ParseError::Lexicon(e.to_string()))?;
        let findings = spec
            .findings
            .iter()
            .map(|(m, list)| Ok((*m, PhraseSet::new(list)?)))
            .collect::<Result<_, ParseError>>()?;
        Ok(Self {
            certainty: PhraseSet::new(&spec.certainty.keys().collect::<Vec<_>>())?,
            count_words: PhraseSet::new(&spec.count_words.keys().collect::<Vec<_>>())?,
            findings,
            negation_pre: PhraseSet::new(&spec.negation_pre)?,
            negation_post: PhraseSet::new(&spec.negation_post)?,
            scope_breaks: PhraseSet::new(&spec.scope_breaks)?,
            approx: PhraseSet::new(&spec.approx)?,
            size_exclusions: PhraseSet::new(&spec.size_exclusions)?,
            extra_axial: PhraseSet::new(&spec.cohort_extra_axial)?,
            intra_axial: PhraseSet::new(&spec.cohort_intra_axial)?,
            numeral,
            certainty_values: spec.certainty.iter().map(|(k, v)| (normalize(k), *v)).collect(),
            count_values: spec.count_words.iter().map(|(k, v)| (normalize(k), *v)).collect(),
            number_values: spec.number_words.iter().map(|(k, v)| (normalize(k), *v)).collect(),
            lesion_nouns: spec.lesion_nouns.iter().map(|n| normalize(n)).collect(),
            spec,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, ParseError> {
        let spec: LexiconSpec =
            serde_json::from_str(json).map_err(|e| ParseError::Lexicon(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn spec(&self) -> &LexiconSpec {
        &self.spec
    }

    pub(crate) fn certainty_of(&self, phrase: &str) -> f64 {
        self.certainty_values.get(&normalize(phrase)).copied().unwrap_or(1.0)
    }

    pub(crate) fn count_of(&self, phrase: &str) -> Option<u32> {
        self.count_values.get(&normalize(phrase)).copied()
    }

    pub(crate) fn number_of(&self, token: &str) -> Option<u32> {
        match token.parse::<u64>() {
            Ok(n) => Some(n.min(u32::MAX as u64) as u32),
            Err(_) => self.number_values.get(&normalize(token)).copied(),
        }
    }

    pub(crate) fn is_lesion_noun(&self, word: &str) -> bool {
        let w = normalize(word);
        self.lesion_nouns.contains(&w)
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_json(DEFAULT_JSON).expect("embedded lexicon is valid")
    }
}

/// The embedded default lexicon as JSON text.
pub fn default_lexicon_json() -> &'static str {
    DEFAULT_JSON
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phrases_match_across_whitespace_and_case() {
        let set = PhraseSet::new(&["skull base", "falx"]).unwrap();
        let hits: Vec<_> = set.find_iter("SKULL \n  base and Falx.").map(|m| m.text).collect();
        assert_eq!(hits, ["SKULL \n  base", "Falx"]);
    }

    #[test]
    fn longest_phrase_wins() {
        let set = PhraseSet::new(&["enhancement", "ring enhancement"]).unwrap();
        let hits: Vec<_> = set.find_iter("thin ring enhancement").map(|m| m.text).collect();
        assert_eq!(hits, ["ring enhancement"]);
    }

    #[test]
    fn word_boundaries() {
        let set = PhraseSet::new(&["no", "non"]).unwrap();
        assert!(!set.any_in("noted nonspecific"));
        assert!(set.any_in("non-enhancing"));
    }

    #[test]
    fn rejects_out_of_range_certainty() {
        let mut spec = Lexicon::default().spec().clone();
        spec.certainty.insert("maybe".into(), 1.5);
        assert!(matches!(Lexicon::from_spec(spec), Err(ParseError::Lexicon(_))));
    }
}
