//! Report templates for phantoms.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::report::{Cohort, Modality, ReportDocument};

use super::PhantomSpec;

const NUMBER_WORDS: [&str; 13] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
];

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options[rng.random_range(0..options.len())]
}

/// Millimetres without trailing zeros ("12", "4.5").
pub(crate) fn format_mm(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().collect::<String>() + c.as_str())
}

fn hedge(sentence: &str, uncertain: bool) -> String {
    if uncertain {
        let mut c = sentence.chars();
        let first = c.next().map(|f| f.to_lowercase().collect::<String>()).unwrap_or_default();
        format!("Possible {first}{}", c.as_str())
    } else {
        sentence.to_string()
    }
}

pub(crate) fn render(spec: &PhantomSpec, largest: [f64; 3], rng: &mut ChaCha8Rng) -> ReportDocument {
    let n = spec.lesions.len();
    let count = if n == 1 {
        "A single".to_string()
    } else if spec.numeral_count && n < NUMBER_WORDS.len() {
        capitalize(NUMBER_WORDS[n])
    } else {
        "Multiple".to_string()
    };
    let size = format!(
        "{}x{}x{} mm",
        format_mm(largest[0]),
        format_mm(largest[1]),
        format_mm(largest[2])
    );
    let any_et = spec.lesions.iter().any(|l| l.has_et);
    let any_ed = spec.lesions.iter().any(|l| l.has_ed);

    let global = match spec.cohort {
        Cohort::MEN => {
            let site = pick(rng, &["along the falx", "at the skull base", "over the convexity"]);
            let noun = if n == 1 { "mass" } else { "masses" };
            let measure = if n == 1 { "It measures" } else { "The largest measures" };
            format!("{count} extra-axial dural-based {noun} {site}. {measure} {size}.")
        }
        _ => {
            let noun = if n == 1 { "lesion" } else { "lesions" };
            let tail = if n == 1 { "suspicious for metastasis" } else { "consistent with metastases" };
            let measure = if n == 1 { "It measures" } else { "The largest measures" };
            format!("{count} intra-axial parenchymal {noun} {tail}. {measure} {size}.")
        }
    };

    let uncertain = |m: Modality| spec.uncertain == Some(m);
    let t1 = hedge(pick(rng, &["Hypointense core.", "The lesion core is hypointense."]), uncertain(Modality::T1));
    let t2 = hedge(
        pick(rng, &["Heterogeneous signal within the core.", "Mixed signal in the tumor core."]),
        uncertain(Modality::T2),
    );
    let t1c = match (any_et, spec.cohort) {
        (true, Cohort::MEN) => hedge(
            pick(rng, &["Marked uniform enhancement.", "Avid homogeneous enhancement."]),
            uncertain(Modality::T1c),
        ),
        (true, _) => hedge(
            pick(rng, &["Ring enhancement.", "Peripheral rim enhancement."]),
            uncertain(Modality::T1c),
        ),
        (false, _) => pick(rng, &["No enhancement.", "No abnormal enhancement."]).to_string(),
    };
    let flair = if any_ed {
        hedge(
            pick(rng, &["Surrounding extensive edema.", "Perilesional edema with hyperintense signal."]),
            uncertain(Modality::Flair),
        )
    } else {
        pick(rng, &["No surrounding edema.", "No perilesional edema."]).to_string()
    };

    ReportDocument {
        global_text: global,
        modality_texts: [
            (Modality::T1, t1),
            (Modality::T1c, t1c),
            (Modality::T2, t2),
            (Modality::Flair, flair),
        ]
        .into_iter()
        .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mm_formatting() {
        assert_eq!(format_mm(12.0), "12");
        assert_eq!(format_mm(4.5), "4.5");
        assert_eq!(format_mm(0.25), "0.25");
    }

    #[test]
    fn hedging() {
        assert_eq!(hedge("Ring enhancement.", true), "Possible ring enhancement.");
        assert_eq!(hedge("Ring enhancement.", false), "Ring enhancement.");
    }
}
