use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;

use super::lexicon::{normalize, Lexicon, PhraseSet};
use super::{Cohort, CohortCue, Modality, ParseError, Polarity, QualCue};

/// Sentence ranges: split on `;`, newlines, and `.` unless it sits between digits.
pub(crate) fn sentences(text: &str) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        let boundary = match b {
            b';' | b'\n' => true,
            b'.' => {
                let digit_before = i > 0 && bytes[i - 1].is_ascii_digit();
                let digit_after = bytes.get(i + 1).is_some_and(u8::is_ascii_digit);
                !(digit_before && digit_after)
            }
            _ => false,
        };
        if boundary {
            out.push(start..i);
            start = i + 1;
        }
    }
    out.push(start..text.len());
    out.retain(|r| !text[r.clone()].trim().is_empty());
    out
}

/// Clause boundaries inside a sentence: commas and scope-breaking conjunctions.
fn clause_breaks(sentence: &str, lexicon: &Lexicon) -> Vec<Range<usize>> {
    let mut breaks: Vec<Range<usize>> = sentence
        .match_indices(',')
        .map(|(i, s)| i..i + s.len())
        .chain(lexicon.scope_breaks.find_iter(sentence).map(|m| m.range))
        .collect();
    breaks.sort_by_key(|r| r.start);
    breaks
}

fn clause_of(span: &Range<usize>, breaks: &[Range<usize>], len: usize) -> Range<usize> {
    let start = breaks
        .iter()
        .filter(|b| b.end <= span.start)
        .map(|b| b.end)
        .max()
        .unwrap_or(0);
    let end = breaks
        .iter()
        .filter(|b| b.start >= span.end)
        .map(|b| b.start)
        .min()
        .unwrap_or(len);
    start..end
}

fn negated(span: &Range<usize>, sentence: &str, breaks: &[Range<usize>], lexicon: &Lexicon) -> bool {
    let clause = clause_of(span, breaks, sentence.len());
    let pre = lexicon
        .negation_pre
        .find_iter(sentence)
        .any(|m| m.range.start >= clause.start && m.range.end <= span.start);
    let post = lexicon
        .negation_post
        .find_iter(sentence)
        .any(|m| m.range.start >= span.end && m.range.end <= clause.end);
    pre || post
}

/// Minimum certainty over the qualifiers in a sentence; 1.0 when there are none.
fn sentence_certainty(sentence: &str, lexicon: &Lexicon) -> f64 {
    lexicon
        .certainty
        .find_iter(sentence)
        .map(|m| lexicon.certainty_of(m.text))
        .fold(1.0, f64::min)
}

fn head_word(phrase: &str) -> String {
    normalize(phrase).rsplit(' ').next().unwrap_or_default().to_string()
}

struct FindingHit {
    head: String,
    polarity: Polarity,
    certainty: f64,
    sentence: Range<usize>,
}

/// Qualitative cues of one sequence section.
///
/// Findings are collected per sentence. When a section holds both affirmed
/// and negated findings, the absence reading is kept only if it negates the
/// same head word as an affirmed finding; otherwise presence wins.
pub fn parse_modality_section(modality: Modality, text: &str, lexicon: &Lexicon) -> Vec<QualCue> {
    let Some(findings) = lexicon.findings.get(&modality) else {
        return Vec::new();
    };
    let mut hits = Vec::new();
    for range in sentences(text) {
        let sentence = &text[range.clone()];
        let breaks = clause_breaks(sentence, lexicon);
        let certainty = sentence_certainty(sentence, lexicon);
        for m in findings.find_iter(sentence) {
            let polarity = if negated(&m.range, sentence, &breaks, lexicon) {
                Polarity::Absent
            } else {
                Polarity::Present
            };
            hits.push(FindingHit {
                head: head_word(m.text),
                polarity,
                certainty,
                sentence: range.clone(),
            });
        }
    }
    if hits.is_empty() {
        return Vec::new();
    }

    let heads = |p: Polarity| -> Vec<&str> {
        hits.iter().filter(|h| h.polarity == p).map(|h| h.head.as_str()).collect()
    };
    let (present, absent) = (heads(Polarity::Present), heads(Polarity::Absent));
    let polarity = if absent.is_empty() {
        Polarity::Present
    } else if present.is_empty() || absent.iter().any(|a| present.contains(a)) {
        Polarity::Absent
    } else {
        Polarity::Present
    };
    let chosen: Vec<&FindingHit> = hits.iter().filter(|h| h.polarity == polarity).collect();
    let certainty = chosen.iter().map(|h| h.certainty).fold(0.0, f64::max);
    let evidence = text[chosen[0].sentence.clone()].trim().to_string();

    vec![QualCue {
        substructure: modality.aligned_substructure(),
        polarity,
        certainty,
        source_modality: modality,
        evidence_span: evidence,
    }]
}

const UNIT_WORDS: &[&str] = &[
    "mm", "cm", "millimeter", "millimeters", "centimeter", "centimeters", "x", "×", "%",
];

/// Is the numeral at `end` followed (within three words) by a lesion noun?
fn counts_lesions(after: &str, lexicon: &Lexicon) -> bool {
    for raw in after.split_whitespace().take(4) {
        let word = raw.trim_end_matches([',', ':', ')']);
        if word.len() != raw.len() && !lexicon.is_lesion_noun(word) {
            return false;
        }
        let w = word.to_lowercase();
        if UNIT_WORDS.contains(&w.as_str()) {
            return false;
        }
        if lexicon.is_lesion_noun(&w) {
            return true;
        }
    }
    false
}

/// Minimal lesion count with the certainty of its sentence.
pub(crate) fn parse_count_with_certainty(text: &str, lexicon: &Lexicon) -> Option<(u32, f64)> {
    let mut explicit: Option<(u32, f64)> = None;
    let mut qualitative: Option<(u32, f64)> = None;
    for range in sentences(text) {
        let sentence = &text[range];
        let certainty = sentence_certainty(sentence, lexicon);
        for m in lexicon.numeral.find_iter(sentence) {
            let Some(n) = lexicon.number_of(m.as_str()) else { continue };
            if n >= 1 && counts_lesions(&sentence[m.end()..], lexicon) && explicit.is_none_or(|(e, _)| n > e) {
                explicit = Some((n, certainty));
            }
        }
        for m in lexicon.count_words.find_iter(sentence) {
            if let Some(n) = lexicon.count_of(m.text) {
                if n >= 1 && qualitative.is_none_or(|(q, _)| n > q) {
                    qualitative = Some((n, certainty));
                }
            }
        }
    }
    explicit.or(qualitative)
}

/// Minimal lesion count: explicit numerals before qualitative words.
pub fn parse_count(text: &str, lexicon: &Lexicon) -> Option<u32> {
    parse_count_with_certainty(text, lexicon).map(|(n, _)| n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measurement {
    /// Three axes in mm, in the order written.
    Dims([f64; 3]),
    /// A single largest diameter in mm (1D, or the larger axis of a 2D measurement).
    Diameter(f64),
}

impl Measurement {
    pub fn max_dim(&self) -> f64 {
        match *self {
            Measurement::Dims(d) => d.iter().copied().fold(f64::MIN, f64::max),
            Measurement::Diameter(d) => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeCue {
    pub measurement: Measurement,
    pub certainty: f64,
    pub approx: bool,
}

fn size_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let num = r"(\d+(?:\.\d+)?)";
        let unit = r"(mm|cm|millimeters?|centimeters?)";
        let by = r"\s*(?:mm|cm)?\s*[x×*]\s*";
        Regex::new(&format!(
            r"(?i)\b{num}{by}{num}(?:{by}{num})?\s*{unit}\b|\b{num}\s*{unit}\b"
        ))
        .expect("size pattern compiles")
    })
}

fn last_words(s: &str, n: usize) -> String {
    let words: Vec<&str> = s.split_whitespace().collect();
    words[words.len().saturating_sub(n)..].join(" ")
}

fn first_words(s: &str, n: usize) -> String {
    s.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

/// Largest lesion measurement in `text`, in mm.
///
/// Accepts `AxBxC`, `AxB` and single values with `mm` or `cm`. Measurements
/// next to exclusion words (e.g. "midline shift") are skipped. With several
/// candidates the one with the largest maximal dimension wins.
pub fn parse_size(text: &str, lexicon: &Lexicon) -> Result<Option<SizeCue>, ParseError> {
    let mut best: Option<SizeCue> = None;
    for range in sentences(text) {
        let sentence = &text[range];
        let certainty = sentence_certainty(sentence, lexicon);
        for caps in size_regex().captures_iter(sentence) {
            let whole = caps.get(0).unwrap();
            let window = format!(
                "{} {}",
                last_words(&sentence[..whole.start()], 3),
                first_words(&sentence[whole.end()..], 2)
            );
            if lexicon.size_exclusions.any_in(&window) {
                continue;
            }
            let (values, unit): (Vec<&str>, &str) = match caps.get(4) {
                Some(u) => (
                    [1, 2, 3].iter().filter_map(|&g| caps.get(g)).map(|m| m.as_str()).collect(),
                    u.as_str(),
                ),
                None => (vec![caps.get(5).unwrap().as_str()], caps.get(6).unwrap().as_str()),
            };
            let scale = if unit.to_lowercase().starts_with('c') { 10.0 } else { 1.0 };
            let mut mm = Vec::with_capacity(3);
            for v in values {
                let x: f64 = v.parse().expect("digits");
                if x <= 0.0 {
                    return Err(ParseError::MalformedMeasurement(whole.as_str().to_string()));
                }
                mm.push(x * scale);
            }
            let measurement = match mm.as_slice() {
                [a, b, c] => Measurement::Dims([*a, *b, *c]),
                [a, b] => Measurement::Diameter(a.max(*b)),
                [a] => Measurement::Diameter(*a),
                _ => unreachable!(),
            };
            let approx = lexicon
                .approx
                .find_iter(sentence)
                .any(|m| m.range.end <= whole.start());
            let cue = SizeCue { measurement, certainty, approx };
            if best.is_none_or(|b| measurement.max_dim() > b.measurement.max_dim()) {
                best = Some(cue);
            }
        }
    }
    Ok(best)
}

fn affirmed_hits(set: &PhraseSet, text: &str, lexicon: &Lexicon) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for range in sentences(text) {
        let sentence = &text[range.clone()];
        let breaks = clause_breaks(sentence, lexicon);
        for m in set.find_iter(sentence) {
            if !negated(&m.range, sentence, &breaks, lexicon) {
                out.push((range.start + m.range.start, m.text.to_string()));
            }
        }
    }
    out
}

/// Votes extra-axial (MEN) against intra-axial (MET) location words.
pub fn classify_cohort(global_text: &str, lexicon: &Lexicon) -> CohortCue {
    let men = affirmed_hits(&lexicon.extra_axial, global_text, lexicon);
    let met = affirmed_hits(&lexicon.intra_axial, global_text, lexicon);
    let (cohort, hits) = match men.len().cmp(&met.len()) {
        std::cmp::Ordering::Greater => (Cohort::MEN, men),
        std::cmp::Ordering::Less => (Cohort::MET, met),
        std::cmp::Ordering::Equal => (Cohort::Unknown, Vec::new()),
    };
    CohortCue {
        cohort,
        evidence_spans: hits.into_iter().map(|(_, t)| t).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Substructure;

    fn lex() -> Lexicon {
        Lexicon::default()
    }

    fn one(m: Modality, text: &str) -> (Substructure, Polarity, f64) {
        let cues = parse_modality_section(m, text, &lex());
        assert_eq!(cues.len(), 1, "{text:?} -> {cues:?}");
        (cues[0].substructure, cues[0].polarity, cues[0].certainty)
    }

    #[test]
    fn sentence_split_keeps_decimals() {
        let t = "Mass 4.5 cm. Edema; shift\nend";
        let parts: Vec<&str> = sentences(t).into_iter().map(|r| t[r].trim()).collect();
        assert_eq!(parts, ["Mass 4.5 cm", "Edema", "shift", "end"]);
    }

    #[test]
    fn modality_examples() {
        assert_eq!(one(Modality::T1c, "no enhancement"), (Substructure::ET, Polarity::Absent, 1.0));
        assert_eq!(one(Modality::T1c, "ring enhancement"), (Substructure::ET, Polarity::Present, 1.0));
        assert_eq!(
            one(Modality::Flair, "mild hyperintense signal, possible edema"),
            (Substructure::ED, Polarity::Present, 0.5)
        );
        assert_eq!(one(Modality::T1, "hypointense core"), (Substructure::TC, Polarity::Present, 1.0));
        assert_eq!(one(Modality::T2, "heterogeneous signal"), (Substructure::TC, Polarity::Present, 1.0));
        assert!(parse_modality_section(Modality::T1c, "unremarkable", &lex()).is_empty());
    }

    #[test]
    fn negation_forms() {
        assert_eq!(one(Modality::T1c, "non-enhancing mass").1, Polarity::Absent);
        assert_eq!(one(Modality::Flair, "edema is not seen").1, Polarity::Absent);
        assert_eq!(one(Modality::Flair, "enhancing mass without surrounding edema").1, Polarity::Absent);
        assert_eq!(one(Modality::T1c, "enhancing mass without edema").1, Polarity::Present);
        // Negation scope ends at a comma.
        assert_eq!(one(Modality::Flair, "no midline shift, hyperintense signal").1, Polarity::Present);
    }

    #[test]
    fn precedence_between_presence_and_absence() {
        // Different head words: presence wins.
        assert_eq!(one(Modality::Flair, "hyperintense signal. No edema.").1, Polarity::Present);
        // Same head word negated: absence wins.
        assert_eq!(one(Modality::Flair, "possible edema. No edema.").1, Polarity::Absent);
        assert_eq!(one(Modality::T1c, "ring enhancement. no enhancement").1, Polarity::Absent);
    }

    #[test]
    fn certainty_levels() {
        for (q, v) in [("mild", 0.7), ("slight", 0.7), ("possible", 0.5), ("probable", 0.5), ("equivocal", 0.3), ("questionable", 0.3)] {
            assert_eq!(one(Modality::Flair, &format!("{q} edema")).2, v);
        }
        // Strongest sentence wins across sentences.
        assert_eq!(one(Modality::Flair, "possible edema. Extensive edema.").2, 1.0);
    }

    #[test]
    fn count_examples() {
        let l = lex();
        assert_eq!(parse_count("multiple lesions", &l), Some(2));
        assert_eq!(parse_count("a single lesion", &l), Some(1));
        assert_eq!(parse_count("three enhancing lesions", &l), Some(3));
        assert_eq!(parse_count("no lesions", &l), None);
        assert_eq!(parse_count("0 lesions", &l), None);
        assert_eq!(parse_count("a 47 mm lesion", &l), None);
        assert_eq!(parse_count("measuring 45x39x47 mm lesion", &l), None);
        // Numerals beat qualitative words.
        assert_eq!(parse_count("multiple lesions, 5 nodules in total", &l), Some(5));
        assert_eq!(parse_count("innumerable foci", &l), Some(5));
    }

    #[test]
    fn number_word_table() {
        let l = lex();
        for (word, n) in &l.spec().number_words {
            assert_eq!(parse_count(&format!("{word} small lesions"), &l), Some(*n), "{word}");
            assert_eq!(parse_count(&format!("{n} lesions"), &l), Some(*n));
        }
    }

    #[test]
    fn size_examples() {
        let l = lex();
        let s = parse_size("measuring 45x39x47 mm", &l).unwrap().unwrap();
        assert_eq!(s.measurement, Measurement::Dims([45.0, 39.0, 47.0]));
        assert_eq!((s.certainty, s.approx), (1.0, false));

        let s = parse_size("approximately 2 cm", &l).unwrap().unwrap();
        assert_eq!(s.measurement, Measurement::Diameter(20.0));
        assert_eq!((s.certainty, s.approx), (1.0, true));

        assert_eq!(parse_size("", &l).unwrap(), None);
        let s = parse_size("4.5 x 3 cm", &l).unwrap().unwrap();
        assert_eq!(s.measurement, Measurement::Diameter(45.0));
        let s = parse_size("12 mm x 30 mm x 8 mm", &l).unwrap().unwrap();
        assert_eq!(s.measurement, Measurement::Dims([12.0, 30.0, 8.0]));
    }

    #[test]
    fn largest_size_wins_and_shift_is_ignored() {
        let l = lex();
        let s = parse_size("one 8 mm nodule and a 2.1 cm mass. 9 mm midline shift", &l).unwrap().unwrap();
        assert_eq!(s.measurement, Measurement::Diameter(21.0));
        let s = parse_size("midline shift of 12 mm; possible 5 mm focus", &l).unwrap().unwrap();
        assert_eq!(s.measurement, Measurement::Diameter(5.0));
        assert_eq!(s.certainty, 0.5);
    }

    #[test]
    fn non_positive_size_is_malformed() {
        assert!(matches!(parse_size("0 mm", &lex()), Err(ParseError::MalformedMeasurement(_))));
        assert!(matches!(parse_size("3x0x2 mm", &lex()), Err(ParseError::MalformedMeasurement(_))));
    }

    #[test]
    fn cohort_examples() {
        let l = lex();
        let c = classify_cohort("dural-based mass along the falx cerebri", &l);
        assert_eq!(c.cohort, Cohort::MEN);
        assert_eq!(c.evidence_spans, ["dural-based", "falx"]);
        assert_eq!(classify_cohort("multiple parenchymal lesions with surrounding edema", &l).cohort, Cohort::MET);
        let c = classify_cohort("lesion noted", &l);
        assert_eq!(c.cohort, Cohort::Unknown);
        assert!(c.evidence_spans.is_empty());
        // Tie.
        assert_eq!(classify_cohort("falx; parenchymal", &l).cohort, Cohort::Unknown);
        // Negated location words do not vote.
        assert_eq!(classify_cohort("falx mass, no parenchymal invasion", &l).cohort, Cohort::MEN);
    }
}
