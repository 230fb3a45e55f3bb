//! Finite-difference check of the analytic gradient on random fields and cues.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::components::Connectivity;
use crate::grid::VoxelGrid;
use crate::loss::LossConfig;
use crate::phantom::anatomy_masks;
use crate::report::{Cohort, CohortCue, CueSet, Modality, Polarity, QualCue, QuantCue};

use super::{LogitField, Objective, Terms};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub n_coords: usize,
    pub n_configs: usize,
    pub dims: [usize; 3],
    pub h: f64,
    pub tolerance: f64,
    /// Coordinates whose whole-tumor probability lies this close to tau are skipped.
    pub tau_exclusion: f64,
    /// Gradients below this magnitude on both sides count as flat.
    pub flat: f64,
    /// Base loss settings; connectivity alternates between configurations.
    pub loss: LossConfig,
    /// Negative control: perturbs the analytic gradient so the check must fail.
    pub corrupt_gradient: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            n_coords: 1000,
            n_configs: 20,
            dims: [6, 6, 6],
            h: 1e-4,
            tolerance: 1e-4,
            tau_exclusion: 1e-3,
            flat: 1e-8,
            loss: LossConfig::default(),
            corrupt_gradient: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCoordinate {
    pub config: usize,
    pub voxel: [usize; 3],
    pub class: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub configs: usize,
    pub coords_checked: usize,
    pub coords_flat: usize,
    pub coords_near_tau: usize,
    pub max_rel_error: f64,
    pub worst: Option<WorstCoordinate>,
    pub passed: bool,
}

/// Extra configurations drawn when sparse ones leave the coordinate target unmet.
const MAX_CONFIG_FACTOR: usize = 5;
const CLASS_NAMES: [&str; 3] = ["ET", "ED", "TC"];

fn random_cues(rng: &mut ChaCha8Rng) -> CueSet {
    let mut qual_cues = Vec::new();
    for m in [Modality::T1c, Modality::Flair, Modality::T2] {
        let polarity = match rng.random_range(0..3) {
            0 => continue,
            1 => Polarity::Present,
            _ => Polarity::Absent,
        };
        qual_cues.push(QualCue {
            substructure: m.aligned_substructure(),
            polarity,
            certainty: rng.random_range(0.2..=1.0),
            source_modality: m,
            evidence_span: String::new(),
        });
    }
    let count = rng.random_bool(0.8).then(|| rng.random_range(1..=5));
    let quant = QuantCue {
        min_count: count,
        count_certainty: if count.is_some() { rng.random_range(0.2..=1.0) } else { 0.0 },
        ..QuantCue::default()
    };
    let cohort = [Cohort::MEN, Cohort::MET, Cohort::Unknown][rng.random_range(0..3)];
    CueSet {
        qual_cues,
        quant,
        cohort: CohortCue {
            cohort,
            evidence_spans: Vec::new(),
        },
    }
}

/// Compares the analytic gradient with central differences over
/// at least `n_configs` random field/cue configurations, sampling coordinates
/// without replacement, until `n_coords` non-flat coordinates have been checked. Term subsets cycle through the seven
/// non-empty on/off combinations and connectivity alternates between 6 and 26.
pub fn gradcheck(opts: &GradcheckOptions) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let masks = anatomy_masks(opts.dims, [1.0; 3], 1);
    let weights = opts.loss.weights;
    let mut report = GradcheckReport {
        configs: opts.n_configs,
        coords_checked: 0,
        coords_flat: 0,
        coords_near_tau: 0,
        max_rel_error: 0.0,
        worst: None,
        passed: true,
    };
    let n_configs = opts.n_configs.max(1);
    let quota = opts.n_coords.div_ceil(n_configs);
    let mut config = 0;
    while config < n_configs || (report.coords_checked < opts.n_coords && config < MAX_CONFIG_FACTOR * n_configs) {
        let cfg = LossConfig {
            connectivity: if config % 2 == 0 { Connectivity::TwentySix } else { Connectivity::Six },
            ..opts.loss.clone()
        };
        let terms = Terms::from_bits((config % 7 + 1) as u8);
        let cues = random_cues(&mut rng);
        let mut field = LogitField::constant(opts.dims, [1.0; 3], 0.0).expect("valid dims");
        for ch in field.channels_mut() {
            for v in ch.data_mut() {
                *v = rng.random_range(-2.0..2.0);
            }
        }
        let obj = Objective::new(&cues, &masks, &weights, &cfg, terms);
        let (_, mut analytic) = obj.loss_and_grad(&field);
        if opts.corrupt_gradient {
            for ch in analytic.channels_mut() {
                ch.data_mut().iter_mut().for_each(|v| *v *= 1.01);
            }
        }
        let wt = field.softmax().wt;
        let mut order: Vec<usize> = (0..3 * field.len()).collect();
        order.shuffle(&mut rng);
        let mut checked = 0;
        for coord in order {
            if checked == quota {
                break;
            }
            let (class, voxel) = (coord / field.len(), coord % field.len());
            if (wt[voxel] - cfg.tau).abs() < opts.tau_exclusion {
                report.coords_near_tau += 1;
                continue;
            }
            let numeric = central_difference(&obj, &mut field, class, voxel, opts.h);
            let a = analytic.channels()[class].data()[voxel];
            let scale = a.abs().max(numeric.abs());
            if scale <= opts.flat {
                report.coords_flat += 1;
                continue;
            }
            report.coords_checked += 1;
            checked += 1;
            let rel = (a - numeric).abs() / scale;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                let grid: &VoxelGrid<f64> = &field.et;
                report.worst = Some(WorstCoordinate {
                    config,
                    voxel: grid.coords(voxel),
                    class: CLASS_NAMES[class].to_string(),
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
        config += 1;
    }
    report.configs = config;
    report.passed = report.coords_checked > 0 && report.max_rel_error < opts.tolerance;
    report
}

fn central_difference(obj: &Objective, field: &mut LogitField, class: usize, voxel: usize, h: f64) -> f64 {
    let orig = field.channels()[class].data()[voxel];
    field.channels_mut()[class].data_mut()[voxel] = orig + h;
    let up = obj.loss(field);
    field.channels_mut()[class].data_mut()[voxel] = orig - h;
    let down = obj.loss(field);
    field.channels_mut()[class].data_mut()[voxel] = orig;
    (up - down) / (2.0 * h)
}
