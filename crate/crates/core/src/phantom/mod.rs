//! Synthetic brain phantoms with matching template reports.
//!
//! The brain is a sphere of radius `0.4 * min extent` centred in the grid; the
//! outer `shell_voxels` of it form the dural (extra-axial) compartment and the
//! rest is parenchyma. Lesions are ellipsoids: a tumor-core centre, an optional
//! enhancing shell (ring for metastases, near-solid for meningiomas) and an
//! optional edema rim, clipped to the compartment their cohort belongs to.

mod suite;
mod template;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::components::{label_components, Connectivity};
use crate::grid::{label, AnatomyMasks, ProbMaps, VoxelGrid};
use crate::report::{Cohort, Modality, ReportDocument};

pub use suite::{bundled_suite, bundled_suite_json, random_suite, SUITE_SEED};

#[derive(Debug, Error, PartialEq)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    SpecInvalid(String),
}

fn default_shell() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionSpec {
    /// Voxel coordinates of the lesion centre.
    pub center: [usize; 3],
    pub semi_axes_mm: [f64; 3],
    pub has_et: bool,
    pub has_ed: bool,
    #[serde(default)]
    pub ed_rim_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub cohort: Cohort,
    pub lesions: Vec<LesionSpec>,
    pub seed: u64,
    #[serde(default = "default_shell")]
    pub shell_voxels: usize,
    /// Write the lesion count as a number word instead of "single"/"multiple".
    #[serde(default)]
    pub numeral_count: bool,
    /// Prefix "Possible" to this sequence's sentence when it asserts a finding.
    #[serde(default)]
    pub uncertain: Option<Modality>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub labels: VoxelGrid<u8>,
    pub masks: AnatomyMasks,
    pub report: ReportDocument,
    /// Bounding-box extents (mm) of the lesion with the largest maximal extent.
    pub largest_extents_mm: [f64; 3],
}

/// Ratio of the TC core to the lesion axes for each enhancement pattern.
const RING_CORE: f64 = 0.6;
const SOLID_CORE: f64 = 0.35;

fn brain_geometry(dims: [usize; 3], spacing: [f64; 3]) -> ([f64; 3], f64) {
    let center = [0, 1, 2].map(|k| (dims[k] as f64 - 1.0) / 2.0 * spacing[k]);
    let radius = 0.4 * (0..3).map(|k| dims[k] as f64 * spacing[k]).fold(f64::MAX, f64::min);
    (center, radius)
}

fn position_mm(c: [usize; 3], spacing: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|k| c[k] as f64 * spacing[k])
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

/// Dural shell and parenchyma masks for a grid.
pub fn anatomy_masks(dims: [usize; 3], spacing: [f64; 3], shell_voxels: usize) -> AnatomyMasks {
    let (center, radius) = brain_geometry(dims, spacing);
    let inner = radius - shell_voxels as f64 * spacing.iter().copied().fold(f64::MAX, f64::min);
    let mut dural = VoxelGrid::filled(dims, spacing, 0u8).expect("valid geometry");
    let mut parench = dural.clone();
    for i in 0..dural.len() {
        let d = dist(position_mm(dural.coords(i), spacing), center);
        if d < inner {
            parench.data_mut()[i] = 1;
        } else if d < radius {
            dural.data_mut()[i] = 1;
        }
    }
    AnatomyMasks::new(dural, parench).expect("disjoint by construction")
}

/// One-hot probability maps from a label volume.
pub fn ground_truth_probmaps(labels: &VoxelGrid<u8>) -> ProbMaps<f32> {
    let ch = |c: u8| labels.map(|v| f32::from(u8::from(v == c)));
    ProbMaps::new(ch(label::ET), ch(label::ED), ch(label::TC)).expect("same geometry")
}

fn validate(spec: &PhantomSpec, masks: &AnatomyMasks) -> Result<(), PhantomError> {
    let bad = |m: String| Err(PhantomError::SpecInvalid(m));
    if spec.dims.contains(&0) || spec.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return bad(format!("bad geometry {:?} @ {:?}", spec.dims, spec.spacing));
    }
    if spec.cohort == Cohort::Unknown {
        return bad("cohort must be MEN or MET".into());
    }
    if spec.lesions.is_empty() {
        return bad("at least one lesion is required".into());
    }
    for (i, l) in spec.lesions.iter().enumerate() {
        if l.semi_axes_mm.iter().any(|&a| !(a > 0.0 && a.is_finite())) || !(l.ed_rim_mm >= 0.0) {
            return bad(format!("lesion {i}: semi-axes must be positive and rim non-negative"));
        }
        if l.has_ed && l.ed_rim_mm <= 0.0 {
            return bad(format!("lesion {i}: edema requires a positive rim"));
        }
        for k in 0..3 {
            let reach = ((l.semi_axes_mm[k] + l.ed_rim_mm) / spec.spacing[k]).ceil() as usize;
            if l.center[k] < reach || l.center[k] + reach >= spec.dims[k] {
                return bad(format!("lesion {i} does not fit inside the grid along axis {k}"));
            }
        }
        let idx = masks.dural.index(l.center[0], l.center[1], l.center[2]);
        let ok = match spec.cohort {
            Cohort::MEN => masks.dural.data()[idx] == 1,
            Cohort::MET => masks.parench.data()[idx] == 1,
            Cohort::Unknown => false,
        };
        if !ok {
            return bad(format!("lesion {i} centre is outside the {:?} compartment", spec.cohort));
        }
    }
    Ok(())
}

fn rasterize(spec: &PhantomSpec, masks: &AnatomyMasks) -> Result<(VoxelGrid<u8>, VoxelGrid<u16>), PhantomError> {
    let mut labels = VoxelGrid::filled(spec.dims, spec.spacing, label::BACKGROUND).expect("valid geometry");
    let mut owner = VoxelGrid::filled(spec.dims, spec.spacing, 0u16).expect("valid geometry");
    let forbidden = match spec.cohort {
        Cohort::MEN => &masks.parench,
        _ => &masks.dural,
    };
    for (n, l) in spec.lesions.iter().enumerate() {
        let c = position_mm(l.center, spec.spacing);
        let core = if !l.has_et {
            1.0
        } else if spec.cohort == Cohort::MET {
            RING_CORE
        } else {
            SOLID_CORE
        };
        for i in 0..labels.len() {
            let v = labels.coords(i);
            if spec.cohort == Cohort::MET && masks.parench.data()[i] == 0 || forbidden.data()[i] == 1 {
                continue;
            }
            let p = position_mm(v, spec.spacing);
            let r2 = |scale: f64, pad: f64| {
                (0..3)
                    .map(|k| ((p[k] - c[k]) / (scale * l.semi_axes_mm[k] + pad)).powi(2))
                    .sum::<f64>()
            };
            let class = if v == l.center || r2(core, 0.0) <= 1.0 {
                label::TC
            } else if r2(1.0, 0.0) <= 1.0 {
                label::ET
            } else if l.has_ed && r2(1.0, l.ed_rim_mm) <= 1.0 {
                label::ED
            } else {
                continue;
            };
            let o = owner.data()[i];
            if o != 0 && o as usize != n + 1 {
                return Err(PhantomError::SpecInvalid(format!("lesions {} and {n} overlap", o - 1)));
            }
            owner.data_mut()[i] = n as u16 + 1;
            labels.data_mut()[i] = class;
        }
    }
    Ok((labels, owner))
}

fn lesion_extents(owner: &VoxelGrid<u16>, n: usize) -> Vec<[f64; 3]> {
    let mut lo = vec![[usize::MAX; 3]; n];
    let mut hi = vec![[0usize; 3]; n];
    for (i, &o) in owner.data().iter().enumerate() {
        if o == 0 {
            continue;
        }
        let c = owner.coords(i);
        let k = o as usize - 1;
        for a in 0..3 {
            lo[k][a] = lo[k][a].min(c[a]);
            hi[k][a] = hi[k][a].max(c[a]);
        }
    }
    let s = owner.spacing();
    (0..n)
        .map(|k| [0, 1, 2].map(|a| (hi[k][a] + 1 - lo[k][a]) as f64 * s[a]))
        .collect()
}

/// Renders a phantom: labels, anatomy masks and a report describing them.
pub fn generate(spec: &PhantomSpec) -> Result<Phantom, PhantomError> {
    if spec.dims.contains(&0) || spec.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(PhantomError::SpecInvalid(format!("bad geometry {:?} @ {:?}", spec.dims, spec.spacing)));
    }
    let masks = anatomy_masks(spec.dims, spec.spacing, spec.shell_voxels);
    validate(spec, &masks)?;
    let (labels, owner) = rasterize(spec, &masks)?;

    // Each lesion must survive clipping with the classes its report will claim,
    // and lesions must stay separate components.
    for (n, l) in spec.lesions.iter().enumerate() {
        let has = |class: u8| {
            owner
                .data()
                .iter()
                .zip(labels.data())
                .any(|(&o, &c)| o as usize == n + 1 && c == class)
        };
        if l.has_et && !has(label::ET) || l.has_ed && !has(label::ED) {
            return Err(PhantomError::SpecInvalid(format!("lesion {n} is too small for its substructures")));
        }
    }
    let wt = labels.map(|v| u8::from(v != label::BACKGROUND));
    let comps = label_components(&wt, Connectivity::TwentySix).expect("binary");
    if comps.count != spec.lesions.len() {
        return Err(PhantomError::SpecInvalid(format!(
            "{} lesions rasterize to {} components",
            spec.lesions.len(),
            comps.count
        )));
    }

    let extents = lesion_extents(&owner, spec.lesions.len());
    let largest_extents_mm = extents
        .iter()
        .copied()
        .max_by(|a, b| max3(*a).total_cmp(&max3(*b)))
        .expect("at least one lesion");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let report = template::render(spec, largest_extents_mm, &mut rng);
    Ok(Phantom {
        labels,
        masks,
        report,
        largest_extents_mm,
    })
}

fn max3(v: [f64; 3]) -> f64 {
    v[0].max(v[1]).max(v[2])
}
