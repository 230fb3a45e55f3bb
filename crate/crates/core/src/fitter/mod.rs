//! Direct optimization of a logit field against the soft report objective.
//!
//! The field holds one logit per voxel for ET, ED and TC; the background logit
//! is pinned at 0, so probabilities come from a four-way softmax.

mod ablation;
mod gradcheck;
mod objective;
mod optim;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::{label, GridError, ProbMaps, VoxelGrid};
use crate::loss::LossError;

pub use ablation::{
    ablation_csv, ablation_run, fit_case_from_spec, fit_cases, run_suite, AblationRow, FitCase, Subset,
    FIT_DIMS, FIT_SHELL,
};
pub use gradcheck::{gradcheck, GradcheckOptions, GradcheckReport, WorstCoordinate};
pub use objective::{grad, soft_report_loss, Objective, Terms, PRESENCE_MARGIN};
pub use optim::{constraint_status, fit, fit_field, ConstraintStatus, ExistSatisfied, FitReport};

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("loss became non-finite at step {step}")]
    DivergenceDetected { step: usize },
    #[error("invalid fit input: {0}")]
    InvalidInput(String),
    #[error("empty phantom suite")]
    EmptySuite,
    #[error(transparent)]
    Loss(#[from] LossError),
}

impl From<GridError> for FitError {
    fn from(e: GridError) -> Self {
        FitError::Loss(e.into())
    }
}

/// Base logit of the "uniform" starting field.
pub const UNIFORM_LOGIT: f64 = -2.0;
/// Half-width of the seeded jitter added to the uniform start.
pub const UNIFORM_JITTER: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LogitField {
    pub et: VoxelGrid<f64>,
    pub ed: VoxelGrid<f64>,
    pub tc: VoxelGrid<f64>,
}

/// Per-voxel softmax outputs, flattened.
pub(crate) struct Softmax {
    pub p: [Vec<f64>; 3],
    pub bg: Vec<f64>,
    pub wt: Vec<f64>,
}

impl LogitField {
    pub fn new(et: VoxelGrid<f64>, ed: VoxelGrid<f64>, tc: VoxelGrid<f64>) -> Result<Self, GridError> {
        et.ensure_same_geometry(&ed)?;
        et.ensure_same_geometry(&tc)?;
        Ok(Self { et, ed, tc })
    }

    pub fn constant(dims: [usize; 3], spacing: [f64; 3], value: f64) -> Result<Self, GridError> {
        let g = VoxelGrid::filled(dims, spacing, value)?;
        Ok(Self {
            et: g.clone(),
            ed: g.clone(),
            tc: g,
        })
    }

    /// Near-uniform start: every logit at `UNIFORM_LOGIT` plus seeded jitter,
    /// which breaks the symmetry between classes and voxels.
    pub fn uniform(dims: [usize; 3], spacing: [f64; 3], seed: u64) -> Result<Self, GridError> {
        let mut field = Self::constant(dims, spacing, UNIFORM_LOGIT)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for ch in field.channels_mut() {
            for v in ch.data_mut() {
                *v += rng.random_range(-UNIFORM_JITTER..UNIFORM_JITTER);
            }
        }
        Ok(field)
    }

    /// Logits `+magnitude` on the labeled class and `-magnitude` elsewhere.
    pub fn from_labels(labels: &VoxelGrid<u8>, magnitude: f64) -> Self {
        let ch = |c: u8| labels.map(|v| if v == c { magnitude } else { -magnitude });
        Self {
            et: ch(label::ET),
            ed: ch(label::ED),
            tc: ch(label::TC),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.et.dims()
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.et.spacing()
    }

    pub fn len(&self) -> usize {
        self.et.len()
    }

    pub fn is_empty(&self) -> bool {
        self.et.is_empty()
    }

    pub fn channels(&self) -> [&VoxelGrid<f64>; 3] {
        [&self.et, &self.ed, &self.tc]
    }

    pub fn channels_mut(&mut self) -> [&mut VoxelGrid<f64>; 3] {
        [&mut self.et, &mut self.ed, &mut self.tc]
    }

    pub fn is_finite(&self) -> bool {
        self.channels().iter().all(|c| c.data().iter().all(|v| v.is_finite()))
    }

    pub fn max_abs_diff(&self, other: &LogitField) -> f64 {
        let mut m = 0.0f64;
        for (a, b) in self.channels().iter().zip(other.channels()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                m = m.max((x - y).abs());
            }
        }
        m
    }

    pub(crate) fn softmax(&self) -> Softmax {
        let n = self.len();
        let mut p = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut bg = vec![0.0; n];
        let mut wt = vec![0.0; n];
        let [a, b, c] = self.channels().map(|g| g.data());
        for i in 0..n {
            let z = [a[i], b[i], c[i]];
            let m = z.iter().copied().fold(0.0f64, f64::max);
            let e = z.map(|v| (v - m).exp());
            let e0 = (-m).exp();
            let s = e0 + e[0] + e[1] + e[2];
            for k in 0..3 {
                p[k][i] = e[k] / s;
            }
            bg[i] = e0 / s;
            wt[i] = p[0][i] + p[1][i] + p[2][i];
        }
        Softmax { p, bg, wt }
    }

    pub fn probs(&self) -> ProbMaps<f64> {
        let Softmax { p: [et, ed, tc], .. } = self.softmax();
        let (dims, spacing) = (self.dims(), self.spacing());
        let grid = |v| VoxelGrid::new(dims, spacing, v).expect("same length");
        ProbMaps::new(grid(et), grid(ed), grid(tc)).expect("same geometry")
    }
}
