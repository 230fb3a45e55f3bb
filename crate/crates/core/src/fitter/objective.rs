//! Soft report objective and its analytic gradient.
//!
//! Terms, with `p_k` the class probabilities and `wt = p_ET + p_ED + p_TC`:
//!
//! - presence: `λ·max(0, 1 - max_x p_k(x) / (tau + margin))`
//! - absence: `λ·Σ_x p_k(x)`
//! - count: `w_count·λ·max(0, N - soft_count)`, where soft_count sums
//!   `min(1, mass)` over the hard components of `wt >= tau` plus `min(1, wt)` over
//!   `N - |C|` seed voxels that would form new components
//! - prior: `w_prior·Σ_x wt(x)·M(x)` over the compartment the cohort should avoid
//!
//! The size term is left out: it only changes through threshold crossings.

use serde::{Deserialize, Serialize};

use crate::components::label_components;
use crate::grid::{threshold, AnatomyMasks, VoxelGrid};
use crate::loss::{LossConfig, LossWeights};
use crate::report::{Cohort, CueSet, Polarity, Substructure};

use super::{LogitField, Softmax};

/// Presence is pushed until the top voxel clears `tau` by this much.
pub const PRESENCE_MARGIN: f64 = 0.1;

/// Which loss terms take part in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terms {
    pub exist: bool,
    pub count: bool,
    pub prior: bool,
}

impl Terms {
    pub const ALL: Terms = Terms {
        exist: true,
        count: true,
        prior: true,
    };
    pub const NONE: Terms = Terms {
        exist: false,
        count: false,
        prior: false,
    };

    pub fn from_bits(bits: u8) -> Terms {
        Terms {
            exist: bits & 1 != 0,
            count: bits & 2 != 0,
            prior: bits & 4 != 0,
        }
    }
}

impl Default for Terms {
    fn default() -> Self {
        Terms::ALL
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub cues: &'a CueSet,
    pub masks: &'a AnatomyMasks,
    pub weights: &'a LossWeights,
    pub cfg: &'a LossConfig,
    pub terms: Terms,
}

pub(crate) struct Eval {
    pub loss: f64,
    /// dL/dp_k per voxel.
    pub dp: [Vec<f64>; 3],
    /// dL/dwt per voxel.
    pub dwt: Vec<f64>,
}

const CLASSES: [Substructure; 3] = [Substructure::ET, Substructure::ED, Substructure::TC];

impl<'a> Objective<'a> {
    pub fn new(
        cues: &'a CueSet,
        masks: &'a AnatomyMasks,
        weights: &'a LossWeights,
        cfg: &'a LossConfig,
        terms: Terms,
    ) -> Self {
        Self {
            cues,
            masks,
            weights,
            cfg,
            terms,
        }
    }

    /// The compartment the cohort should avoid.
    pub fn penalized(&self) -> Option<&'a VoxelGrid<u8>> {
        match self.cues.cohort.cohort {
            Cohort::MEN => Some(&self.masks.parench),
            Cohort::MET => Some(&self.masks.dural),
            Cohort::Unknown => None,
        }
    }

    /// Voxels where presence and count may recruit new mass. With the prior
    /// active, the penalized compartment is off limits.
    fn recruitable(&self) -> Vec<bool> {
        match (self.terms.prior, self.penalized()) {
            (true, Some(m)) => m.data().iter().map(|&v| v == 0).collect(),
            _ => vec![true; self.masks.dural.len()],
        }
    }

    pub fn loss(&self, field: &LogitField) -> f64 {
        self.evaluate(&field.softmax(), field, false).loss
    }

    pub fn loss_and_grad(&self, field: &LogitField) -> (f64, LogitField) {
        let sm = field.softmax();
        let ev = self.evaluate(&sm, field, true);
        let mut g = LogitField::constant(field.dims(), field.spacing(), 0.0).expect("valid geometry");
        let [ga, gb, gc] = g.channels_mut().map(|c| c.data_mut());
        for i in 0..field.len() {
            let p = [sm.p[0][i], sm.p[1][i], sm.p[2][i]];
            let s: f64 = (0..3).map(|k| ev.dp[k][i] * p[k]).sum();
            let w = ev.dwt[i] * sm.bg[i];
            ga[i] = p[0] * (ev.dp[0][i] - s + w);
            gb[i] = p[1] * (ev.dp[1][i] - s + w);
            gc[i] = p[2] * (ev.dp[2][i] - s + w);
        }
        (ev.loss, g)
    }

    pub(crate) fn evaluate(&self, sm: &Softmax, field: &LogitField, want_grad: bool) -> Eval {
        let n = field.len();
        let zeros = || if want_grad { vec![0.0; n] } else { Vec::new() };
        let mut ev = Eval {
            loss: 0.0,
            dp: [zeros(), zeros(), zeros()],
            dwt: zeros(),
        };
        let recruitable = self.recruitable();
        if self.terms.exist {
            for (k, sub) in CLASSES.into_iter().enumerate() {
                self.exist_class(k, sub, sm, &recruitable, want_grad, &mut ev);
            }
        }
        if self.terms.count {
            self.count(sm, field, &recruitable, want_grad, &mut ev);
        }
        if self.terms.prior {
            if let Some(mask) = self.penalized() {
                let w = self.weights.w_prior;
                let mut mass = 0.0;
                for (i, &m) in mask.data().iter().enumerate() {
                    if m != 0 {
                        mass += sm.wt[i];
                        if want_grad {
                            ev.dwt[i] += w;
                        }
                    }
                }
                ev.loss += w * mass;
            }
        }
        ev
    }

    fn exist_class(&self, k: usize, sub: Substructure, sm: &Softmax, recruitable: &[bool], want_grad: bool, ev: &mut Eval) {
        let p = &sm.p[k];
        let target = self.cfg.tau + PRESENCE_MARGIN;
        // Top voxel among recruitable ones (lowest index on ties), any voxel if none.
        let top = || {
            let pick = |allowed: &dyn Fn(usize) -> bool| {
                (0..p.len()).filter(|&i| allowed(i)).fold(None, |best: Option<usize>, i| match best {
                    Some(b) if p[b] >= p[i] => Some(b),
                    _ => Some(i),
                })
            };
            pick(&|i| recruitable[i]).or_else(|| pick(&|_| true)).expect("non-empty grid")
        };
        let mut volume = None;
        for cue in self.cues.cues_for(sub) {
            let lambda = cue.certainty;
            match cue.polarity {
                Polarity::Present => {
                    let t = top();
                    let short = 1.0 - p[t] / target;
                    if short > 0.0 {
                        ev.loss += lambda * short;
                        if want_grad {
                            ev.dp[k][t] -= lambda / target;
                        }
                    }
                }
                Polarity::Absent => {
                    let v = *volume.get_or_insert_with(|| p.iter().sum::<f64>());
                    ev.loss += lambda * v;
                    if want_grad {
                        ev.dp[k].iter_mut().for_each(|d| *d += lambda);
                    }
                }
                Polarity::Unstated => {}
            }
        }
    }

    fn count(&self, sm: &Softmax, field: &LogitField, recruitable: &[bool], want_grad: bool, ev: &mut Eval) {
        let Some(n_qual) = self.cues.quant.min_count else {
            return;
        };
        let scale = self.weights.w_count * self.cues.quant.count_certainty;
        if n_qual == 0 || scale == 0.0 {
            return;
        }
        let wt = VoxelGrid::new(field.dims(), field.spacing(), sm.wt.clone()).expect("same length");
        let comps = label_components(&threshold(&wt, self.cfg.tau), self.cfg.connectivity)
            .expect("threshold output is binary");
        let labels = comps.labels.data();
        let mut mass = vec![0.0; comps.count];
        for (i, &l) in labels.iter().enumerate() {
            if l != 0 {
                mass[l as usize - 1] += sm.wt[i];
            }
        }
        let missing = (n_qual as usize).saturating_sub(comps.count);
        let seeds = pick_seeds(&wt, labels, recruitable, self.cfg, missing);
        let soft_count: f64 =
            mass.iter().map(|&m| m.min(1.0)).sum::<f64>() + seeds.iter().map(|&s| sm.wt[s].min(1.0)).sum::<f64>();
        let short = n_qual as f64 - soft_count;
        if short <= 0.0 {
            return;
        }
        ev.loss += scale * short;
        if want_grad {
            for (i, &l) in labels.iter().enumerate() {
                if l != 0 && mass[l as usize - 1] < 1.0 {
                    ev.dwt[i] -= scale;
                }
            }
            for &s in &seeds {
                ev.dwt[s] -= scale;
            }
        }
    }
}

/// Up to `want` sub-threshold voxels, highest `wt` first (lowest index on ties),
/// none adjacent to an existing component or to another seed.
fn pick_seeds(wt: &VoxelGrid<f64>, labels: &[u32], recruitable: &[bool], cfg: &LossConfig, want: usize) -> Vec<usize> {
    if want == 0 {
        return Vec::new();
    }
    let dims = wt.dims();
    let offsets = cfg.connectivity.offsets();
    let mut blocked = vec![false; wt.len()];
    let block_around = |i: usize, blocked: &mut Vec<bool>| {
        blocked[i] = true;
        let c = wt.coords(i);
        for d in &offsets {
            let q = [0, 1, 2].map(|a| c[a] as isize + d[a]);
            if (0..3).all(|a| q[a] >= 0 && q[a] < dims[a] as isize) {
                blocked[wt.index(q[0] as usize, q[1] as usize, q[2] as usize)] = true;
            }
        }
    };
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            block_around(i, &mut blocked);
        }
    }
    let w = wt.data();
    let mut candidates: Vec<usize> = (0..w.len())
        .filter(|&i| recruitable[i] && !blocked[i] && w[i] < cfg.tau)
        .collect();
    candidates.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut seeds = Vec::with_capacity(want);
    for i in candidates {
        if seeds.len() == want {
            break;
        }
        if !blocked[i] {
            seeds.push(i);
            block_around(i, &mut blocked);
        }
    }
    seeds
}

pub fn soft_report_loss(
    field: &LogitField,
    cues: &CueSet,
    masks: &AnatomyMasks,
    weights: &LossWeights,
    cfg: &LossConfig,
    terms: Terms,
) -> f64 {
    Objective::new(cues, masks, weights, cfg, terms).loss(field)
}

pub fn grad(
    field: &LogitField,
    cues: &CueSet,
    masks: &AnatomyMasks,
    weights: &LossWeights,
    cfg: &LossConfig,
    terms: Terms,
) -> LogitField {
    Objective::new(cues, masks, weights, cfg, terms).loss_and_grad(field).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{anatomy_masks, generate, LesionSpec, PhantomSpec};
    use crate::report::{parse_report, CohortCue, Lexicon, Modality, QualCue, QuantCue};

    fn cue(sub: Substructure, polarity: Polarity, certainty: f64) -> QualCue {
        let source_modality = match sub {
            Substructure::ET => Modality::T1c,
            Substructure::ED => Modality::Flair,
            _ => Modality::T2,
        };
        QualCue {
            substructure: sub,
            polarity,
            certainty,
            source_modality,
            evidence_span: String::new(),
        }
    }

    fn cues(qual: Vec<QualCue>) -> CueSet {
        CueSet {
            qual_cues: qual,
            quant: QuantCue::default(),
            cohort: CohortCue::default(),
        }
    }

    fn setup(dims: [usize; 3]) -> (AnatomyMasks, LossWeights, LossConfig) {
        (anatomy_masks(dims, [1.0; 3], 1), LossWeights::default(), LossConfig::default())
    }

    #[test]
    fn very_negative_field_with_three_presence_cues_costs_three() {
        let (masks, w, cfg) = setup([4, 4, 4]);
        let c = cues(CLASSES.iter().map(|&s| cue(s, Polarity::Present, 1.0)).collect());
        let f = LogitField::constant([4, 4, 4], [1.0; 3], -40.0).unwrap();
        let l = soft_report_loss(&f, &c, &masks, &w, &cfg, Terms::ALL);
        assert!((l - 3.0).abs() < 1e-12, "{l}");
    }

    #[test]
    fn zero_certainty_gives_zero() {
        let (masks, w, cfg) = setup([4, 4, 4]);
        let mut c = cues(vec![
            cue(Substructure::ET, Polarity::Present, 0.0),
            cue(Substructure::ED, Polarity::Absent, 0.0),
        ]);
        c.quant.min_count = Some(3);
        c.quant.count_certainty = 0.0;
        let f = LogitField::uniform([4, 4, 4], [1.0; 3], 1).unwrap();
        assert_eq!(soft_report_loss(&f, &c, &masks, &w, &cfg, Terms::ALL), 0.0);
        let g = grad(&f, &c, &masks, &w, &cfg, Terms::ALL);
        assert!(g.channels().iter().all(|ch| ch.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn no_cues_means_zero_gradient() {
        let (masks, w, cfg) = setup([5, 5, 5]);
        let f = LogitField::uniform([5, 5, 5], [1.0; 3], 9).unwrap();
        let c = CueSet::default();
        assert_eq!(soft_report_loss(&f, &c, &masks, &w, &cfg, Terms::ALL), 0.0);
        let g = grad(&f, &c, &masks, &w, &cfg, Terms::ALL);
        assert!(g.channels().iter().all(|ch| ch.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn absent_single_voxel_matches_softmax_derivative() {
        let masks = AnatomyMasks::empty([1, 1, 1], [1.0; 3]).unwrap();
        let (w, cfg) = (LossWeights::default(), LossConfig::default());
        let lambda = 0.7;
        let c = cues(vec![cue(Substructure::ET, Polarity::Absent, lambda)]);
        let z = [0.3, -1.2, 0.8];
        let f = LogitField::new(
            VoxelGrid::new([1, 1, 1], [1.0; 3], vec![z[0]]).unwrap(),
            VoxelGrid::new([1, 1, 1], [1.0; 3], vec![z[1]]).unwrap(),
            VoxelGrid::new([1, 1, 1], [1.0; 3], vec![z[2]]).unwrap(),
        )
        .unwrap();
        // Closed form: p_ET = e^z0 / (1 + Σ e^zj); ∂p_ET/∂z_j = p_ET (δ_0j - p_j).
        let s = 1.0 + z.iter().map(|v: &f64| v.exp()).sum::<f64>();
        let p = z.map(|v| v.exp() / s);
        let expected = [p[0] * (1.0 - p[0]), -p[0] * p[1], -p[0] * p[2]].map(|v| lambda * v);
        let (l, g) = Objective::new(&c, &masks, &w, &cfg, Terms::ALL).loss_and_grad(&f);
        assert!((l - lambda * p[0]).abs() < 1e-15);
        for (k, ch) in g.channels().iter().enumerate() {
            assert!((ch.data()[0] - expected[k]).abs() < 1e-15, "class {k}");
        }
    }

    #[test]
    fn presence_acts_on_the_top_recruitable_voxel() {
        let (masks, w, cfg) = setup([5, 5, 5]);
        let mut c = cues(vec![cue(Substructure::ED, Polarity::Present, 1.0)]);
        c.cohort.cohort = Cohort::MEN;
        let mut f = LogitField::constant([5, 5, 5], [1.0; 3], -3.0).unwrap();
        let inside = masks.parench.data().iter().position(|&m| m == 1).unwrap();
        let outside = masks.dural.data().iter().position(|&m| m == 1).unwrap();
        f.ed.data_mut()[inside] = -1.0;
        f.ed.data_mut()[outside] = -2.0;
        let g = grad(&f, &c, &masks, &w, &cfg, Terms::ALL);
        assert!(g.ed.data()[outside] < 0.0);
        assert!(g.ed.data()[inside] > 0.0, "only the prior acts inside");
        let g = grad(&f, &c, &masks, &w, &cfg, Terms { prior: false, ..Terms::ALL });
        assert!(g.ed.data()[inside] < 0.0);
        assert_eq!(g.ed.data()[outside], 0.0);
    }

    #[test]
    fn count_seeds_are_separated() {
        let dims = [6, 6, 1];
        let masks = AnatomyMasks::empty(dims, [1.0; 3]).unwrap();
        let cfg = LossConfig::default();
        let mut wt = VoxelGrid::filled(dims, [1.0; 3], 0.1).unwrap();
        wt.set(0, 0, 0, 0.9);
        wt.set(1, 1, 0, 0.4);
        wt.set(3, 0, 0, 0.3);
        wt.set(4, 0, 0, 0.29);
        let labels: Vec<u32> = wt.data().iter().map(|&v| u32::from(v >= 0.5)).collect();
        let seeds = pick_seeds(&wt, &labels, &vec![true; wt.len()], &cfg, 3);
        let s0 = wt.index(3, 0, 0);
        assert_eq!(seeds[0], s0, "(1,1) touches the component");
        assert!(!seeds.contains(&wt.index(4, 0, 0)), "adjacent to the first seed");
        assert_eq!(seeds.len(), 3);
        let _ = masks;
    }

    #[test]
    fn ground_truth_field_is_nearly_free() {
        let spec = PhantomSpec {
            dims: [24, 24, 24],
            spacing: [1.0; 3],
            cohort: Cohort::MET,
            lesions: vec![
                LesionSpec {
                    center: [8, 12, 12],
                    semi_axes_mm: [2.0; 3],
                    has_et: true,
                    has_ed: true,
                    ed_rim_mm: 1.0,
                },
                LesionSpec {
                    center: [16, 12, 12],
                    semi_axes_mm: [2.0; 3],
                    has_et: true,
                    has_ed: false,
                    ed_rim_mm: 0.0,
                },
            ],
            seed: 5,
            shell_voxels: 2,
            numeral_count: false,
            uncertain: None,
        };
        let ph = generate(&spec).unwrap();
        let c = parse_report(&ph.report, &Lexicon::default()).unwrap();
        let f = LogitField::from_labels(&ph.labels, 20.0);
        let (w, cfg) = (LossWeights::default(), LossConfig::default());
        let l = soft_report_loss(&f, &c, &ph.masks, &w, &cfg, Terms::ALL);
        assert!(l <= 1e-3, "{l}");
    }
}
