//! Constraint-satisfaction ablation over a phantom suite.

use serde::{Deserialize, Serialize};

use crate::grid::AnatomyMasks;
use crate::loss::{LossConfig, LossWeights};
use crate::phantom::{anatomy_masks, generate, PhantomError, PhantomSpec};
use crate::report::{parse_report, CueSet, Lexicon};

use super::{fit_field, FitError, FitReport, LogitField, Objective, Terms};

/// Fits run on a small grid with the same anatomy layout as the phantoms.
pub const FIT_DIMS: [usize; 3] = [8, 8, 8];
pub const FIT_SHELL: usize = 2;

/// One fitting problem: cues parsed from a phantom's report, fit-grid anatomy
/// and a seeded near-uniform start.
#[derive(Debug, Clone, PartialEq)]
pub struct FitCase {
    pub cues: CueSet,
    pub masks: AnatomyMasks,
    pub field0: LogitField,
}

pub fn fit_case_from_spec(spec: &PhantomSpec, lexicon: &Lexicon) -> Result<FitCase, FitError> {
    let phantom = generate(spec).map_err(|PhantomError::SpecInvalid(m)| FitError::InvalidInput(m))?;
    let cues = parse_report(&phantom.report, lexicon).map_err(|e| FitError::InvalidInput(e.to_string()))?;
    Ok(FitCase {
        cues,
        masks: anatomy_masks(FIT_DIMS, [1.0; 3], FIT_SHELL),
        field0: LogitField::uniform(FIT_DIMS, [1.0; 3], spec.seed)?,
    })
}

pub fn fit_cases(suite: &[PhantomSpec], lexicon: &Lexicon) -> Result<Vec<FitCase>, FitError> {
    suite.iter().map(|s| fit_case_from_spec(s, lexicon)).collect()
}

/// A named cumulative subset of loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subset {
    pub name: &'static str,
    pub terms: Terms,
}

impl Subset {
    pub const CUMULATIVE: [Subset; 3] = [
        Subset {
            name: "exist",
            terms: Terms {
                exist: true,
                count: false,
                prior: false,
            },
        },
        Subset {
            name: "exist+global",
            terms: Terms {
                exist: true,
                count: true,
                prior: false,
            },
        },
        Subset {
            name: "exist+global+prior",
            terms: Terms::ALL,
        },
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub subset: String,
    pub n_phantoms: usize,
    pub satisfied_fraction: f64,
    /// Mean of the full soft objective at the final fields.
    pub mean_final_loss: f64,
}

/// Fits every case with `terms` active and returns the reports with the
/// full-objective value of each final field.
pub fn run_suite(
    cases: &[FitCase],
    terms: Terms,
    weights: &LossWeights,
    cfg: &LossConfig,
    steps: usize,
    lr: f64,
) -> Result<Vec<(FitReport, f64)>, FitError> {
    cases
        .iter()
        .map(|case| {
            let obj = Objective::new(&case.cues, &case.masks, weights, cfg, terms);
            let (report, field) = fit_field(&case.field0, &obj, steps, lr)?;
            let full = Objective { terms: Terms::ALL, ..obj }.loss(&field);
            Ok((report, full))
        })
        .collect()
}

pub fn ablation_run(
    cases: &[FitCase],
    subsets: &[Subset],
    weights: &LossWeights,
    cfg: &LossConfig,
    steps: usize,
    lr: f64,
) -> Result<Vec<AblationRow>, FitError> {
    if cases.is_empty() {
        return Err(FitError::EmptySuite);
    }
    subsets
        .iter()
        .map(|s| {
            let runs = run_suite(cases, s.terms, weights, cfg, steps, lr)?;
            let n = runs.len() as f64;
            let satisfied = runs.iter().filter(|(r, _)| r.constraint_status.all_satisfied).count();
            Ok(AblationRow {
                subset: s.name.to_string(),
                n_phantoms: runs.len(),
                satisfied_fraction: satisfied as f64 / n,
                mean_final_loss: runs.iter().map(|(_, l)| l).sum::<f64>() / n,
            })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("subset,n_phantoms,satisfied_fraction,mean_final_loss\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6e}\n",
            r.subset, r.n_phantoms, r.satisfied_fraction, r.mean_final_loss
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Cohort;

    #[test]
    fn empty_suite_is_an_error() {
        let r = ablation_run(&[], &Subset::CUMULATIVE, &LossWeights::default(), &LossConfig::default(), 10, 0.5);
        assert_eq!(r, Err(FitError::EmptySuite));
    }

    #[test]
    fn count_only_case_needs_the_count_term() {
        let mut cues = CueSet::default();
        cues.quant.min_count = Some(2);
        cues.quant.count_certainty = 1.0;
        cues.cohort.cohort = Cohort::Unknown;
        let case = FitCase {
            cues,
            masks: anatomy_masks(FIT_DIMS, [1.0; 3], FIT_SHELL),
            field0: LogitField::uniform(FIT_DIMS, [1.0; 3], 11).unwrap(),
        };
        let (w, cfg) = (LossWeights::default(), LossConfig::default());
        for s in Subset::CUMULATIVE {
            let runs = run_suite(std::slice::from_ref(&case), s.terms, &w, &cfg, 200, 0.5).unwrap();
            assert_eq!(runs[0].0.constraint_status.count_satisfied, s.terms.count, "{}", s.name);
        }
    }

    #[test]
    fn csv_layout() {
        let rows = vec![AblationRow {
            subset: "exist".into(),
            n_phantoms: 2,
            satisfied_fraction: 0.5,
            mean_final_loss: 1.25,
        }];
        assert_eq!(
            ablation_csv(&rows),
            "subset,n_phantoms,satisfied_fraction,mean_final_loss\nexist,2,0.5,1.250000e0\n"
        );
    }
}
