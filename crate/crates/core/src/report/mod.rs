//! Rule-based parsing of hierarchical radiology reports into structured cues.
//!
//! A report has one global-findings section and up to four sequence sections
//! (T1, T1c, T2, FLAIR). Sequence sections yield qualitative presence/absence
//! cues for the substructure their sequence images; the global section yields
//! the partial quantitative cues (largest lesion size, minimal lesion count)
//! and the cohort (extra- vs intra-axial) cue.

mod lexicon;
mod rules;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexicon::{default_lexicon_json, Lexicon, LexiconSpec};
pub use rules::{classify_cohort, parse_count, parse_modality_section, parse_size, Measurement, SizeCue};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("malformed measurement: {0}")]
    MalformedMeasurement(String),
    #[error("invalid lexicon: {0}")]
    Lexicon(String),
    #[error("invalid cue set: {0}")]
    InvalidCues(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    T1,
    T1c,
    T2,
    #[serde(rename = "FLAIR")]
    Flair,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::T1, Modality::T1c, Modality::T2, Modality::Flair];

    /// The substructure whose probability map a finding on this sequence constrains.
    pub fn aligned_substructure(self) -> Substructure {
        match self {
            Modality::T1c => Substructure::ET,
            Modality::Flair => Substructure::ED,
            Modality::T1 | Modality::T2 => Substructure::TC,
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            Modality::T1 => "T1",
            Modality::T1c => "T1C",
            Modality::T2 => "T2",
            Modality::Flair => "FLAIR",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::T1 => "T1",
            Modality::T1c => "T1c",
            Modality::T2 => "T2",
            Modality::Flair => "FLAIR",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Substructure {
    ET,
    ED,
    TC,
    /// Derived: union of the other three. Never produced by a sequence section.
    WT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Present,
    Absent,
    Unstated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Cohort {
    /// Meningioma: extra-axial, dural-based.
    MEN,
    /// Metastases: intra-axial, parenchymal.
    MET,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualCue {
    pub substructure: Substructure,
    pub polarity: Polarity,
    pub certainty: f64,
    #[serde(rename = "modality")]
    pub source_modality: Modality,
    #[serde(rename = "evidence")]
    pub evidence_span: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuantCue {
    pub largest_dims_mm: Option<[f64; 3]>,
    pub largest_diameter_mm: Option<f64>,
    pub min_count: Option<u32>,
    #[serde(default)]
    pub approx: bool,
    pub size_certainty: f64,
    pub count_certainty: f64,
}

impl QuantCue {
    pub fn has_size(&self) -> bool {
        self.largest_dims_mm.is_some() || self.largest_diameter_mm.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CohortCue {
    #[serde(rename = "label")]
    pub cohort: Cohort,
    #[serde(rename = "evidence")]
    pub evidence_spans: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CueSet {
    pub qual_cues: Vec<QualCue>,
    pub quant: QuantCue,
    pub cohort: CohortCue,
}

impl CueSet {
    /// Pretty JSON with a trailing newline; key order is fixed by field order.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("cue sets always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self, ParseError> {
        let cues: CueSet =
            serde_json::from_str(json).map_err(|e| ParseError::InvalidCues(e.to_string()))?;
        cues.validate()?;
        Ok(cues)
    }

    /// Checks the structural invariants (used for cue sets produced elsewhere).
    pub fn validate(&self) -> Result<(), ParseError> {
        let bad = |m: String| Err(ParseError::InvalidCues(m));
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.qual_cues {
            if c.source_modality.aligned_substructure() != c.substructure {
                return bad(format!("{} cannot constrain {:?}", c.source_modality, c.substructure));
            }
            if !(0.0..=1.0).contains(&c.certainty) {
                return bad(format!("certainty {} outside [0, 1]", c.certainty));
            }
            if c.polarity == Polarity::Unstated && c.certainty != 0.0 {
                return bad("unstated cue with non-zero certainty".into());
            }
            if !seen.insert((c.substructure, c.source_modality)) {
                return bad(format!("duplicate cue for {:?}/{}", c.substructure, c.source_modality));
            }
        }
        let q = &self.quant;
        if q.largest_dims_mm.is_some() && q.largest_diameter_mm.is_some() {
            return bad("both dims and diameter set".into());
        }
        let sizes = q.largest_dims_mm.into_iter().flatten().chain(q.largest_diameter_mm);
        for v in sizes {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("non-positive size {v}"));
            }
        }
        if q.min_count == Some(0) {
            return bad("min_count must be >= 1".into());
        }
        for c in [q.size_certainty, q.count_certainty] {
            if !(0.0..=1.0).contains(&c) {
                return bad(format!("certainty {c} outside [0, 1]"));
            }
        }
        if self.cohort.cohort == Cohort::Unknown && !self.cohort.evidence_spans.is_empty() {
            return bad("unknown cohort with evidence".into());
        }
        Ok(())
    }

    /// All qualitative cues that constrain `sub`.
    pub fn cues_for(&self, sub: Substructure) -> impl Iterator<Item = &QualCue> {
        self.qual_cues.iter().filter(move |c| c.substructure == sub)
    }
}

/// A report split into its global section and sequence sections.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportDocument {
    pub global_text: String,
    pub modality_texts: BTreeMap<Modality, String>,
}

impl ReportDocument {
    /// Splits on `[GLOBAL]`, `[T1]`, `[T1C]`, `[T2]`, `[FLAIR]` header lines
    /// (case-insensitive). Text outside any header counts as global.
    pub fn from_text(text: &str) -> Self {
        let mut doc = ReportDocument::default();
        let mut current: Option<Modality> = None;
        for line in text.lines() {
            if let Some(section) = header_of(line) {
                current = section;
                continue;
            }
            let target = match current {
                None => &mut doc.global_text,
                Some(m) => doc.modality_texts.entry(m).or_default(),
            };
            if !target.is_empty() {
                target.push('\n');
            }
            target.push_str(line);
        }
        doc
    }

    /// Renders the document with section headers; `from_text` inverts it.
    pub fn to_text(&self) -> String {
        let mut out = format!("[GLOBAL]\n{}\n", self.global_text);
        for (m, t) in &self.modality_texts {
            out.push_str(&format!("[{}]\n{}\n", m.header(), t));
        }
        out
    }

    pub fn is_blank(&self) -> bool {
        self.global_text.trim().is_empty() && self.modality_texts.values().all(|t| t.trim().is_empty())
    }
}

fn header_of(line: &str) -> Option<Option<Modality>> {
    let t = line.trim();
    let inner = t.strip_prefix('[')?.strip_suffix(']')?;
    match inner.to_ascii_uppercase().as_str() {
        "GLOBAL" => Some(None),
        "T1" => Some(Some(Modality::T1)),
        "T1C" => Some(Some(Modality::T1c)),
        "T2" => Some(Some(Modality::T2)),
        "FLAIR" => Some(Some(Modality::Flair)),
        _ => None,
    }
}

/// Parses a whole report. Quantitative and cohort cues come from the global
/// section only; size mentions inside sequence sections are ignored.
pub fn parse_report(doc: &ReportDocument, lexicon: &Lexicon) -> Result<CueSet, ParseError> {
    if doc.is_blank() {
        return Err(ParseError::MalformedDocument("all sections are empty".into()));
    }
    let mut qual_cues = Vec::new();
    for (modality, text) in &doc.modality_texts {
        qual_cues.extend(parse_modality_section(*modality, text, lexicon));
    }

    let mut quant = QuantCue::default();
    if let Some(size) = parse_size(&doc.global_text, lexicon)? {
        match size.measurement {
            Measurement::Dims(d) => quant.largest_dims_mm = Some(d),
            Measurement::Diameter(d) => quant.largest_diameter_mm = Some(d),
        }
        quant.approx = size.approx;
        quant.size_certainty = size.certainty;
    }
    if let Some((n, certainty)) = rules::parse_count_with_certainty(&doc.global_text, lexicon) {
        quant.min_count = Some(n);
        quant.count_certainty = certainty;
    }

    Ok(CueSet {
        qual_cues,
        quant,
        cohort: classify_cohort(&doc.global_text, lexicon),
    })
}

/// Convenience: split raw text into sections and parse with `lexicon`.
pub fn parse_report_text(text: &str, lexicon: &Lexicon) -> Result<CueSet, ParseError> {
    parse_report(&ReportDocument::from_text(text), lexicon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> Lexicon {
        Lexicon::default()
    }

    #[test]
    fn global_quantitative_example() {
        let doc = ReportDocument {
            global_text: "multiple punctate parenchymal lesions, largest measuring 45x39x47 mm".into(),
            ..Default::default()
        };
        let cues = parse_report(&doc, &lex()).unwrap();
        assert_eq!(cues.quant.largest_dims_mm, Some([45.0, 39.0, 47.0]));
        assert_eq!(cues.quant.min_count, Some(2));
        assert_eq!(cues.cohort.cohort, Cohort::MET);
        assert!(cues.qual_cues.is_empty());
    }

    #[test]
    fn nothing_to_extract() {
        let doc = ReportDocument {
            global_text: "unremarkable study".into(),
            ..Default::default()
        };
        let cues = parse_report(&doc, &lex()).unwrap();
        assert!(cues.qual_cues.iter().all(|c| c.polarity == Polarity::Unstated));
        assert_eq!(cues.quant, QuantCue::default());
        assert_eq!(cues.cohort, CohortCue::default());
    }

    #[test]
    fn flair_edema() {
        let mut doc = ReportDocument::from_text("[GLOBAL]\nmass\n[FLAIR]\nsurrounding extensive edema");
        doc.modality_texts.insert(Modality::T1, String::new());
        let cues = parse_report(&doc, &lex()).unwrap();
        assert_eq!(cues.qual_cues.len(), 1);
        let c = &cues.qual_cues[0];
        assert_eq!(
            (c.substructure, c.polarity, c.certainty, c.source_modality),
            (Substructure::ED, Polarity::Present, 1.0, Modality::Flair)
        );
        assert_eq!(c.evidence_span, "surrounding extensive edema");
    }

    #[test]
    fn blank_document_is_malformed() {
        let doc = ReportDocument::from_text("[GLOBAL]\n  \n[T1]\n\n");
        assert!(matches!(parse_report(&doc, &lex()), Err(ParseError::MalformedDocument(_))));
    }

    #[test]
    fn headerless_text_is_global() {
        let doc = ReportDocument::from_text("no enhancement\nsecond line");
        assert_eq!(doc.global_text, "no enhancement\nsecond line");
        assert!(doc.modality_texts.is_empty());
    }

    #[test]
    fn headers_are_case_insensitive() {
        let doc = ReportDocument::from_text("[global]\na\n[t1c]\nb\n[Flair]\nc");
        assert_eq!(doc.modality_texts[&Modality::T1c], "b");
        assert_eq!(doc.modality_texts[&Modality::Flair], "c");
        assert_eq!(ReportDocument::from_text(&doc.to_text()), doc);
    }

    #[test]
    fn json_key_order_is_fixed() {
        let cues = parse_report_text("[GLOBAL]\nfalx mass 2 cm\n[T1C]\nno enhancement", &lex()).unwrap();
        let json = cues.to_json();
        let order = [
            "\"qual_cues\"", "\"substructure\"", "\"polarity\"", "\"certainty\"", "\"modality\"",
            "\"evidence\"", "\"quant\"", "\"largest_dims_mm\"", "\"largest_diameter_mm\"",
            "\"min_count\"", "\"approx\"", "\"size_certainty\"", "\"count_certainty\"",
            "\"cohort\"", "\"label\"",
        ];
        let pos: Vec<usize> = order.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{json}");
        assert!(json.contains("\"largest_dims_mm\": null"));
        assert_eq!(CueSet::from_json(&json).unwrap(), cues);
    }

    #[test]
    fn validate_catches_misaligned_cues() {
        let mut cues = CueSet::default();
        cues.qual_cues.push(QualCue {
            substructure: Substructure::ET,
            polarity: Polarity::Present,
            certainty: 1.0,
            source_modality: Modality::Flair,
            evidence_span: "x".into(),
        });
        assert!(cues.validate().is_err());
        cues.qual_cues[0].substructure = Substructure::ED;
        assert!(cues.validate().is_ok());
        cues.quant.min_count = Some(0);
        assert!(cues.validate().is_err());
    }
}
