//! Browser bindings: parse a report, score it against a bundled phantom, run a small fit.
//!
//! Every export returns a JSON string. The plain `*_json` functions hold the logic so they can be
//! tested natively.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use reportsup::fitter::{fit_case_from_spec, fit_field, Objective, Terms};
use reportsup::loss::{report_loss, LossConfig, LossWeights};
use reportsup::phantom::{bundled_suite, generate, ground_truth_probmaps, Phantom, PhantomSpec};
use reportsup::report::{parse_report_text, Lexicon};

fn spec(index: usize) -> Result<PhantomSpec, String> {
    let suite = bundled_suite();
    let n = suite.len();
    suite.into_iter().nth(index).ok_or_else(|| format!("phantom index {index} out of range (0..{n})"))
}

fn phantom(index: usize) -> Result<Phantom, String> {
    generate(&spec(index)?).map_err(|e| e.to_string())
}

pub fn suite_size_json() -> usize {
    bundled_suite().len()
}

pub fn parse_json(text: &str) -> Result<String, String> {
    parse_report_text(text, &Lexicon::default())
        .map(|c| c.to_json())
        .map_err(|e| e.to_string())
}

/// Labels, report text and the report loss of the phantom's own ground truth.
pub fn phantom_json(index: usize) -> Result<String, String> {
    let ph = phantom(index)?;
    let text = ph.report.to_text();
    let score: Value = serde_json::from_str(&score_json(index, &text)?).unwrap();
    Ok(json!({
        "dims": ph.labels.dims(),
        "labels": ph.labels.data(),
        "report": text,
        "score": score,
    })
    .to_string())
}

/// Report loss of the phantom's ground-truth maps under an arbitrary report text.
pub fn score_json(index: usize, text: &str) -> Result<String, String> {
    let ph = phantom(index)?;
    let cues = parse_report_text(text, &Lexicon::default()).map_err(|e| e.to_string())?;
    let maps = ground_truth_probmaps(&ph.labels);
    let b = report_loss(&cues, &maps, &ph.masks, &LossWeights::default(), &LossConfig::default())
        .map_err(|e| e.to_string())?;
    Ok(json!({ "cues": cues, "breakdown": b }).to_string())
}

/// Fit a uniform field to the phantom's report. `terms` uses bit 1 exist, 2 count, 4 prior.
pub fn fit_json(index: usize, steps: usize, lr: f64, terms: u8) -> Result<String, String> {
    let case = fit_case_from_spec(&spec(index)?, &Lexicon::default()).map_err(|e| e.to_string())?;
    let (w, cfg) = (LossWeights::default(), LossConfig::default());
    let obj = Objective::new(&case.cues, &case.masks, &w, &cfg, Terms::from_bits(terms));
    let (report, field) = fit_field(&case.field0, &obj, steps, lr).map_err(|e| e.to_string())?;
    let wt = field.probs().wt();
    Ok(json!({
        "dims": field.dims(),
        "trace": report.loss_trace,
        "iterations": report.iterations,
        "status": report.constraint_status,
        "whole_tumour": wt.data(),
        "dural": case.masks.dural.data(),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn suite_size() -> usize {
    suite_size_json()
}

#[wasm_bindgen]
pub fn parse(text: &str) -> Result<String, JsValue> {
    parse_json(text).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn phantom_view(index: usize) -> Result<String, JsValue> {
    phantom_json(index).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn score(index: usize, text: &str) -> Result<String, JsValue> {
    score_json(index, text).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn fit(index: usize, steps: usize, lr: f64, terms: u8) -> Result<String, JsValue> {
    fit_json(index, steps, lr, terms).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn phantom_view_scores_zero_on_its_own_report() {
        let v = value(&phantom_json(0).unwrap());
        assert_eq!(v["labels"].as_array().unwrap().len(), 32 * 32 * 32);
        assert!(v["score"]["breakdown"]["report_total"].as_f64().unwrap() <= 1e-6);
    }

    #[test]
    fn editing_the_report_changes_the_score() {
        let v = value(&phantom_json(1).unwrap());
        let edited = format!("{}\nFLAIR: No edema.\nT1c: No enhancement.", v["report"].as_str().unwrap());
        let s = value(&score_json(1, &edited).unwrap());
        assert!(s["breakdown"]["report_total"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn fit_trace_is_monotone() {
        let v = value(&fit_json(2, 100, 0.5, 7).unwrap());
        let trace: Vec<f64> = v["trace"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(trace.windows(2).all(|p| p[1] <= p[0]));
        assert_eq!(v["whole_tumour"].as_array().unwrap().len(), 512);
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(phantom_json(999).is_err());
        assert!(parse_json("   ").is_err());
        assert!(fit_json(0, 0, 0.5, 7).is_err());
    }
}
