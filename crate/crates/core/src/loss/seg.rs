//! Supervised segmentation loss: soft Dice over the three foreground classes
//! plus voxel-mean cross-entropy over {background, ET, ED, TC}.

use crate::grid::{label, ProbMaps, VoxelGrid};

use super::LossError;

pub const DICE_SMOOTH: f64 = 1.0;
pub const CE_CLAMP: f64 = 1e-7;

pub fn soft_dice<T: Copy + Into<f64>>(pred: &VoxelGrid<T>, truth: &VoxelGrid<u8>, class: u8) -> f64 {
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let p: f64 = p.into();
        let g = f64::from(u8::from(t == class));
        inter += p * g;
        sp += p;
        sg += g;
    }
    (2.0 * inter + DICE_SMOOTH) / (sp + sg + DICE_SMOOTH)
}

pub fn dice_term<T: Copy + Into<f64>>(pred: &ProbMaps<T>, truth: &VoxelGrid<u8>) -> f64 {
    [(&pred.et, label::ET), (&pred.ed, label::ED), (&pred.tc, label::TC)]
        .iter()
        .map(|(p, c)| 1.0 - soft_dice(p, truth, *c))
        .sum::<f64>()
        / 3.0
}

pub fn cross_entropy<T: Copy + Into<f64>>(pred: &ProbMaps<T>, truth: &VoxelGrid<u8>) -> Result<f64, LossError> {
    let mut total = 0.0;
    for (i, &t) in truth.data().iter().enumerate() {
        let (et, ed, tc) = (pred.et.data()[i].into(), pred.ed.data()[i].into(), pred.tc.data()[i].into());
        let p = match t {
            label::BACKGROUND => 1.0 - et - ed - tc,
            label::ET => et,
            label::ED => ed,
            label::TC => tc,
            other => return Err(LossError::InvalidInput(format!("unknown label {other} at voxel {i}"))),
        };
        total -= p.clamp(CE_CLAMP, 1.0 - CE_CLAMP).ln();
    }
    Ok(total / truth.len() as f64)
}

/// `mean_k (1 - Dice_k) + CE`.
pub fn seg_loss<T: Copy + Into<f64>>(pred: &ProbMaps<T>, truth: &VoxelGrid<u8>) -> Result<f64, LossError> {
    pred.et.ensure_same_geometry(truth)?;
    Ok(dice_term(pred, truth) + cross_entropy(pred, truth)?)
}
