//! First-order fitting loop.
//!
//! Steps follow the gradient rescaled so its largest component moves by `lr`.
//! A trial step that raises the loss is halved until it does not, so the
//! recorded trace never increases.

use serde::{Deserialize, Serialize};

use crate::components::label_components;
use crate::grid::threshold;
use crate::loss::{prior_loss, report_loss, volume_hard, LossBreakdown};
use crate::report::{Polarity, Substructure};

use super::{FitError, LogitField, Objective};

const MAX_HALVINGS: usize = 30;
/// Final prior mass must fall below this fraction of the initial mass.
pub const PRIOR_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExistSatisfied {
    #[serde(rename = "ET")]
    pub et: bool,
    #[serde(rename = "ED")]
    pub ed: bool,
    #[serde(rename = "TC")]
    pub tc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintStatus {
    pub exist_satisfied: ExistSatisfied,
    pub count_satisfied: bool,
    pub component_count: usize,
    pub prior_initial: f64,
    pub prior_value: f64,
    pub prior_satisfied: bool,
    pub all_satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub accepted_steps: usize,
    pub loss_trace: Vec<f64>,
    pub final_breakdown: LossBreakdown,
    pub constraint_status: ConstraintStatus,
}

/// Hard checks of every parsed constraint on `field`: present classes have a
/// voxel at or above tau, absent classes have none, the whole-tumor component
/// count reaches the reported minimum, and the prior mass has dropped below 1%
/// of `prior_initial` (or is zero).
pub fn constraint_status(field: &LogitField, obj: &Objective, prior_initial: f64) -> ConstraintStatus {
    let maps = field.probs();
    let tau = obj.cfg.tau;
    let exist_ok = |sub: Substructure, grid| {
        let v = volume_hard(grid, tau);
        obj.cues.cues_for(sub).all(|c| match c.polarity {
            Polarity::Present => c.certainty == 0.0 || v >= 1.0,
            Polarity::Absent => c.certainty == 0.0 || v == 0.0,
            Polarity::Unstated => true,
        })
    };
    let exist_satisfied = ExistSatisfied {
        et: exist_ok(Substructure::ET, &maps.et),
        ed: exist_ok(Substructure::ED, &maps.ed),
        tc: exist_ok(Substructure::TC, &maps.tc),
    };
    let wt = maps.wt();
    let comps = label_components(&threshold(&wt, tau), obj.cfg.connectivity).expect("binary");
    let count_satisfied = obj.cues.quant.min_count.is_none_or(|n| comps.count >= n as usize);
    let prior_value = prior_loss(&wt, obj.masks, obj.cues.cohort.cohort).expect("same geometry");
    let prior_satisfied = prior_value == 0.0 || prior_value < PRIOR_FRACTION * prior_initial;
    let all_satisfied = exist_satisfied.et && exist_satisfied.ed && exist_satisfied.tc && count_satisfied && prior_satisfied;
    ConstraintStatus {
        exist_satisfied,
        count_satisfied,
        component_count: comps.count,
        prior_initial,
        prior_value,
        prior_satisfied,
        all_satisfied,
    }
}

pub fn fit(field0: &LogitField, obj: &Objective, steps: usize, lr: f64) -> Result<FitReport, FitError> {
    fit_field(field0, obj, steps, lr).map(|(r, _)| r)
}

/// Runs up to `steps` iterations and returns the report with the final field.
/// Stops early once the gradient vanishes or no trial step lowers the loss.
pub fn fit_field(field0: &LogitField, obj: &Objective, steps: usize, lr: f64) -> Result<(FitReport, LogitField), FitError> {
    if steps == 0 {
        return Err(FitError::InvalidInput("steps must be at least 1".into()));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(FitError::InvalidInput(format!("lr must be positive, got {lr}")));
    }
    if !field0.is_finite() {
        return Err(FitError::InvalidInput("initial field has non-finite logits".into()));
    }
    field0.et.ensure_same_geometry(&obj.masks.dural)?;
    obj.cfg.validate()?;

    let prior_initial = prior_loss(&field0.probs().wt(), obj.masks, obj.cues.cohort.cohort)?;
    let mut field = field0.clone();
    let (mut loss, mut g) = obj.loss_and_grad(&field);
    if !loss.is_finite() {
        return Err(FitError::DivergenceDetected { step: 0 });
    }
    let mut trace = vec![loss];
    let mut accepted = 0;
    let mut iterations = 0;
    for step in 1..=steps {
        if g.channels().iter().all(|c| c.data().iter().all(|&v| v == 0.0)) {
            break;
        }
        iterations = step;
        let peak = g.channels().iter().flat_map(|c| c.data()).fold(0.0f64, |m, v| m.max(v.abs()));
        let mut direction = g.clone();
        for ch in direction.channels_mut() {
            ch.data_mut().iter_mut().for_each(|d| *d /= peak);
        }
        let mut scale = lr;
        let mut next = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = field.clone();
            for (t, d) in trial.channels_mut().into_iter().zip(direction.channels()) {
                for (v, dv) in t.data_mut().iter_mut().zip(d.data()) {
                    *v -= scale * dv;
                }
            }
            let l = obj.loss(&trial);
            if !(l.is_finite() && trial.is_finite()) {
                return Err(FitError::DivergenceDetected { step });
            }
            if l <= loss {
                next = Some((trial, l));
                break;
            }
            scale *= 0.5;
        }
        match next {
            Some((trial, l)) => {
                field = trial;
                loss = l;
                accepted += 1;
                trace.push(loss);
                g = obj.loss_and_grad(&field).1;
            }
            None => {
                trace.push(loss);
                break;
            }
        }
    }
    let maps = field.probs();
    let final_breakdown = report_loss(obj.cues, &maps, obj.masks, obj.weights, obj.cfg)?;
    let constraint_status = constraint_status(&field, obj, prior_initial);
    Ok((
        FitReport {
            iterations,
            accepted_steps: accepted,
            loss_trace: trace,
            final_breakdown,
            constraint_status,
        },
        field,
    ))
}
