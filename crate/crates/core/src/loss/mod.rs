//! Report-supervision losses.
//!
//! `report_loss` composes, for one case:
//!
//! ```text
//! L_report = Σ_k L_exist(k) + w_size·L_size + w_count·L_count + w_prior·L_prior
//! ```
//!
//! where the existence terms act on the sequence-aligned substructure maps and
//! size/count act on the connected components of the thresholded whole-tumor map.
//! `total_loss` mixes mask-supervised and report-supervised batches.

mod seg;
mod terms;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::components::{label_components, Connectivity, SizeMode};
use crate::grid::{threshold, AnatomyMasks, GridError, ProbMaps, VoxelGrid};
use crate::report::{CueSet, Substructure};

pub use seg::{cross_entropy, dice_term, seg_loss, soft_dice, CE_CLAMP, DICE_SMOOTH};
pub use terms::{count_loss, exist_loss, prior_loss, reported_size, size_loss, volume_hard, volume_soft};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("dims mismatch: {0}")]
    DimsMismatch(String),
    #[error("both the masked and the report batch are empty")]
    BothBatchesEmpty,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid config: {0}")]
    Config(String),
}

impl From<GridError> for LossError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::DimsMismatch(m) => LossError::DimsMismatch(m),
            other => LossError::InvalidInput(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_r: f64,
    pub w_size: f64,
    pub w_count: f64,
    pub w_prior: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_r: 0.2,
            w_size: 1.0,
            w_count: 0.5,
            w_prior: 0.2,
        }
    }
}

/// Hard evaluates existence on thresholded volumes; Soft on summed probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Variant {
    #[default]
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub tau: f64,
    pub connectivity: Connectivity,
    pub size_mode: SizeMode,
    pub size_one_sided: bool,
    pub variant: Variant,
    pub weights: LossWeights,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            connectivity: Connectivity::TwentySix,
            size_mode: SizeMode::MaxExtent,
            size_one_sided: false,
            variant: Variant::Hard,
            weights: LossWeights::default(),
        }
    }
}

impl LossConfig {
    pub fn from_json(json: &str) -> Result<Self, LossError> {
        let cfg: LossConfig = serde_json::from_str(json).map_err(|e| LossError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(LossError::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        let w = self.weights;
        if [w.w_r, w.w_size, w.w_count, w.w_prior].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(LossError::Config("weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerClass {
    #[serde(rename = "ET")]
    pub et: f64,
    #[serde(rename = "ED")]
    pub ed: f64,
    #[serde(rename = "TC")]
    pub tc: f64,
}

impl PerClass {
    pub fn get(&self, sub: Substructure) -> f64 {
        match sub {
            Substructure::ET => self.et,
            Substructure::ED => self.ed,
            Substructure::TC => self.tc,
            Substructure::WT => self.et + self.ed + self.tc,
        }
    }

    pub fn sum(&self) -> f64 {
        self.et + self.ed + self.tc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownMeta {
    pub tau: f64,
    pub connectivity: Connectivity,
    pub variant: Variant,
    pub size_one_sided: bool,
    /// Terms that carry gradient in this variant.
    pub differentiable_terms: Vec<String>,
}

/// Itemized report loss for one case. `size` and `count` are already scaled by
/// their cue certainties; existence terms by their per-cue certainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub exist_per_class: PerClass,
    pub size: f64,
    pub count: f64,
    pub prior: f64,
    pub report_total: f64,
    pub size_mode: SizeMode,
    pub weights: LossWeights,
    pub metadata: BreakdownMeta,
}

impl LossBreakdown {
    /// The weighted total from the stored parts.
    pub fn recompute_total(&self) -> f64 {
        compose_total(&self.exist_per_class, self.size, self.count, self.prior, &self.weights)
    }
}

fn compose_total(exist: &PerClass, size: f64, count: f64, prior: f64, w: &LossWeights) -> f64 {
    exist.sum() + w.w_size * size + w.w_count * count + w.w_prior * prior
}

/// Existence terms for every qualitative cue, summed per class.
pub fn exist_terms<T: Copy + Into<f64>>(cues: &CueSet, maps: &ProbMaps<T>, tau: f64, variant: Variant) -> PerClass {
    let volume = |g: &VoxelGrid<T>| match variant {
        Variant::Hard => volume_hard(g, tau),
        Variant::Soft => volume_soft(g),
    };
    let mut out = PerClass::default();
    for (sub, grid, slot) in [
        (Substructure::ET, &maps.et, &mut out.et),
        (Substructure::ED, &maps.ed, &mut out.ed),
        (Substructure::TC, &maps.tc, &mut out.tc),
    ] {
        let mut cues_k = cues.cues_for(sub).peekable();
        if cues_k.peek().is_none() {
            continue;
        }
        let v = volume(grid);
        *slot = cues_k.map(|c| exist_loss(c.polarity, c.certainty, v)).sum();
    }
    out
}

pub fn report_loss<T: Copy + Into<f64>>(
    cues: &CueSet,
    maps: &ProbMaps<T>,
    masks: &AnatomyMasks,
    weights: &LossWeights,
    cfg: &LossConfig,
) -> Result<LossBreakdown, LossError> {
    cfg.validate()?;
    maps.et.ensure_same_geometry(&masks.dural)?;
    let wt = maps.wt();
    let comps = label_components(&threshold(&wt, cfg.tau), cfg.connectivity)
        .expect("threshold output is binary");

    let exist_per_class = exist_terms(cues, maps, cfg.tau, cfg.variant);
    let size = cues.quant.size_certainty * size_loss(&cues.quant, &comps, cfg.size_mode, cfg.size_one_sided);
    let count = cues.quant.count_certainty * count_loss(cues.quant.min_count, &comps);
    let prior = prior_loss(&wt, masks, cues.cohort.cohort)?;
    let report_total = compose_total(&exist_per_class, size, count, prior, weights);

    let differentiable_terms = match cfg.variant {
        Variant::Hard => vec!["prior".to_string()],
        Variant::Soft => vec!["exist".to_string(), "prior".to_string()],
    };
    Ok(LossBreakdown {
        exist_per_class,
        size,
        count,
        prior,
        report_total,
        size_mode: cfg.size_mode,
        weights: *weights,
        metadata: BreakdownMeta {
            tau: cfg.tau,
            connectivity: cfg.connectivity,
            variant: cfg.variant,
            size_one_sided: cfg.size_one_sided,
            differentiable_terms,
        },
    })
}

/// A mask-supervised case: predictions and a label volume.
pub type MaskedCase<'a, T> = (&'a ProbMaps<T>, &'a VoxelGrid<u8>);
/// A report-supervised case.
pub type ReportCase<'a, T> = (&'a ProbMaps<T>, &'a CueSet, &'a AnatomyMasks);

/// `mean(L_seg over masked) + w_r * mean(L_report over report cases)`.
/// An empty batch contributes nothing. Summation is sequential in batch order.
pub fn total_loss<T: Copy + Into<f64>>(
    batch_masked: &[MaskedCase<'_, T>],
    batch_report: &[ReportCase<'_, T>],
    weights: &LossWeights,
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    if batch_masked.is_empty() && batch_report.is_empty() {
        return Err(LossError::BothBatchesEmpty);
    }
    let mut total = 0.0;
    if !batch_masked.is_empty() {
        let mut sum = 0.0;
        for (pred, truth) in batch_masked {
            sum += seg_loss(pred, truth)?;
        }
        total += sum / batch_masked.len() as f64;
    }
    if !batch_report.is_empty() {
        let mut sum = 0.0;
        for (maps, cues, masks) in batch_report {
            sum += report_loss(cues, maps, masks, weights, cfg)?.report_total;
        }
        total += weights.w_r * sum / batch_report.len() as f64;
    }
    Ok(total)
}
