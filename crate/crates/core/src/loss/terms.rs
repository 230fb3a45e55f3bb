//! Individual loss terms.

use crate::components::{ComponentSet, SizeMode};
use crate::grid::{AnatomyMasks, VoxelGrid};
use crate::report::{Cohort, Polarity, QuantCue};

use super::LossError;

/// Number of voxels with `p(x) >= tau`.
pub fn volume_hard<T: Copy + Into<f64>>(p: &VoxelGrid<T>, tau: f64) -> f64 {
    p.data().iter().filter(|&&v| v.into() >= tau).count() as f64
}

/// `Σ p(x)`, accumulated in f64 in scan order.
pub fn volume_soft<T: Copy + Into<f64>>(p: &VoxelGrid<T>) -> f64 {
    p.data().iter().map(|&v| v.into()).sum()
}

/// Existence / absence penalty for one cue, scaled by its certainty.
pub fn exist_loss(polarity: Polarity, certainty: f64, volume: f64) -> f64 {
    match polarity {
        Polarity::Present => certainty * (1.0 - volume).max(0.0),
        Polarity::Absent => certainty * volume,
        Polarity::Unstated => 0.0,
    }
}

/// The reported size of the largest lesion, expressed in `mode` units.
pub fn reported_size(quant: &QuantCue, mode: SizeMode) -> Option<f64> {
    let ellipsoid = |a: f64, b: f64, c: f64| std::f64::consts::PI / 6.0 * a * b * c;
    match (quant.largest_dims_mm, quant.largest_diameter_mm, mode) {
        (Some(d), _, SizeMode::MaxExtent) => Some(d.iter().copied().fold(f64::MIN, f64::max)),
        (Some([a, b, c]), _, SizeMode::Volume) => Some(ellipsoid(a, b, c)),
        (None, Some(d), SizeMode::MaxExtent) => Some(d),
        (None, Some(d), SizeMode::Volume) => Some(ellipsoid(d, d, d)),
        (None, None, _) => None,
    }
}

/// `|d_max - max_c d_c|` (or its one-sided `max(0, ·)` form). With no
/// predicted component the largest size is taken as 0. Unscaled by certainty.
pub fn size_loss(quant: &QuantCue, comps: &ComponentSet, mode: SizeMode, one_sided: bool) -> f64 {
    let Some(reported) = reported_size(quant, mode) else {
        return 0.0;
    };
    let predicted = comps.largest(mode).map_or(0.0, |c| c.size(mode));
    if one_sided {
        (reported - predicted).max(0.0)
    } else {
        (reported - predicted).abs()
    }
}

/// `max(0, N_qual - |C_pred|)`; 0 without a count cue.
pub fn count_loss(min_count: Option<u32>, comps: &ComponentSet) -> f64 {
    min_count.map_or(0.0, |n| (n as f64 - comps.count as f64).max(0.0))
}

/// Whole-tumor mass in the compartment the cohort should avoid.
pub fn prior_loss<T: Copy + Into<f64>>(
    wt: &VoxelGrid<T>,
    masks: &AnatomyMasks,
    cohort: Cohort,
) -> Result<f64, LossError> {
    wt.ensure_same_geometry(&masks.dural)?;
    let mask = match cohort {
        Cohort::MEN => &masks.parench,
        Cohort::MET => &masks.dural,
        Cohort::Unknown => return Ok(0.0),
    };
    Ok(wt
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m != 0)
        .map(|(&p, _)| p.into())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::{label_components, Connectivity};

    fn comps_with_extents(extents: &[usize]) -> ComponentSet {
        // Runs along x on separate rows, spacing 1 mm.
        let nx = extents.iter().copied().max().unwrap_or(1);
        let ny = 2 * extents.len().max(1);
        let mut g = VoxelGrid::filled([nx, ny, 1], [1.0; 3], 0u8).unwrap();
        for (row, &len) in extents.iter().enumerate() {
            for x in 0..len {
                g.set(x, 2 * row, 0, 1);
            }
        }
        label_components(&g, Connectivity::TwentySix).unwrap()
    }

    #[test]
    fn volumes() {
        let zero = VoxelGrid::filled([4, 4, 4], [1.0; 3], 0f32).unwrap();
        assert_eq!(volume_hard(&zero, 0.5), 0.0);
        let mut one = zero.clone();
        one.set(1, 2, 3, 0.6);
        assert_eq!(volume_hard(&one, 0.5), 1.0);
        let half = VoxelGrid::filled([10, 10, 10], [1.0; 3], 0.5f32).unwrap();
        assert_eq!(volume_hard(&half, 0.5), 1000.0);
        let small = VoxelGrid::filled([2, 2, 2], [1.0; 3], 0.5f32).unwrap();
        assert_eq!(volume_soft(&small), 4.0);
    }

    #[test]
    fn exist_cases() {
        assert_eq!(exist_loss(Polarity::Present, 1.0, 0.0), 1.0);
        assert_eq!(exist_loss(Polarity::Present, 1.0, 5.0), 0.0);
        assert_eq!(exist_loss(Polarity::Absent, 0.5, 10.0), 5.0);
        assert_eq!(exist_loss(Polarity::Unstated, 0.0, 3.0), 0.0);
    }

    #[test]
    fn size_cases() {
        let dims = QuantCue {
            largest_dims_mm: Some([45.0, 39.0, 47.0]),
            size_certainty: 1.0,
            ..Default::default()
        };
        let comps = comps_with_extents(&[47]);
        assert_eq!(size_loss(&dims, &comps, SizeMode::MaxExtent, false), 0.0);

        let d20 = QuantCue {
            largest_diameter_mm: Some(20.0),
            size_certainty: 1.0,
            ..Default::default()
        };
        assert_eq!(size_loss(&d20, &comps_with_extents(&[]), SizeMode::MaxExtent, false), 20.0);
        assert_eq!(size_loss(&d20, &comps_with_extents(&[12, 18]), SizeMode::MaxExtent, false), 2.0);
        assert_eq!(size_loss(&d20, &comps_with_extents(&[25]), SizeMode::MaxExtent, false), 5.0);
        assert_eq!(size_loss(&d20, &comps_with_extents(&[25]), SizeMode::MaxExtent, true), 0.0);
        assert_eq!(size_loss(&QuantCue::default(), &comps, SizeMode::MaxExtent, false), 0.0);
    }

    #[test]
    fn volume_mode_uses_ellipsoid() {
        let q = QuantCue {
            largest_dims_mm: Some([2.0, 3.0, 4.0]),
            ..Default::default()
        };
        let v = reported_size(&q, SizeMode::Volume).unwrap();
        assert!((v - std::f64::consts::PI * 4.0).abs() < 1e-12);
        let comps = comps_with_extents(&[5]);
        assert!((size_loss(&q, &comps, SizeMode::Volume, false) - (v - 5.0)).abs() < 1e-12);
    }

    #[test]
    fn count_cases() {
        assert_eq!(count_loss(Some(2), &comps_with_extents(&[1, 1, 1])), 0.0);
        assert_eq!(count_loss(Some(2), &comps_with_extents(&[])), 2.0);
        assert_eq!(count_loss(Some(5), &comps_with_extents(&[1, 1, 1])), 2.0);
        assert_eq!(count_loss(None, &comps_with_extents(&[])), 0.0);
    }

    #[test]
    fn prior_cases() {
        let dims = [4, 4, 1];
        let mut dural = VoxelGrid::filled(dims, [1.0; 3], 0u8).unwrap();
        for i in 0..7 {
            dural.data_mut()[i] = 1;
        }
        let mut parench = VoxelGrid::filled(dims, [1.0; 3], 0u8).unwrap();
        for i in 8..16 {
            parench.data_mut()[i] = 1;
        }
        let masks = AnatomyMasks::new(dural.clone(), parench).unwrap();

        let ones = VoxelGrid::filled(dims, [1.0; 3], 1.0f64).unwrap();
        assert_eq!(prior_loss(&ones, &masks, Cohort::MET).unwrap(), 7.0);
        assert_eq!(prior_loss(&ones, &masks, Cohort::Unknown).unwrap(), 0.0);

        let in_dura = dural.map(f64::from);
        assert_eq!(prior_loss(&in_dura, &masks, Cohort::MEN).unwrap(), 0.0);

        let wrong = VoxelGrid::filled([2, 2, 1], [1.0; 3], 1.0f64).unwrap();
        assert!(matches!(prior_loss(&wrong, &masks, Cohort::MEN), Err(LossError::DimsMismatch(_))));
    }
}
