//! Dense voxel grids, substructure probability maps and anatomy masks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid dims must be positive, got {0:?}")]
    ZeroDims([usize; 3]),
    #[error("spacing must be positive and finite, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("data length {got} does not match dims product {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("grid geometry mismatch: {0}")]
    DimsMismatch(String),
    #[error("invalid value {value} at index {index}: {reason}")]
    InvalidValue {
        index: usize,
        value: f64,
        reason: &'static str,
    },
}

/// A 3D scalar field stored x-fastest: `index = x + nx * (y + ny * z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid<T = f32> {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<T>,
}

impl<T: Copy> VoxelGrid<T> {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<T>) -> Result<Self, GridError> {
        check_geometry(dims, spacing)?;
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(GridError::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            dims,
            spacing,
            data,
        })
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: T) -> Result<Self, GridError> {
        let n = dims.iter().product();
        Self::new(dims, spacing, vec![value; n])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Volume of one voxel in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.dims[0] && y < self.dims[1] && z < self.dims[2]);
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    pub fn same_geometry<U>(&self, other: &VoxelGrid<U>) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    pub fn ensure_same_geometry<U>(&self, other: &VoxelGrid<U>) -> Result<(), GridError> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(GridError::DimsMismatch(format!(
                "{:?}@{:?} vs {:?}@{:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> VoxelGrid<U> {
        VoxelGrid {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn check_geometry(dims: [usize; 3], spacing: [f64; 3]) -> Result<(), GridError> {
    if dims.contains(&0) {
        return Err(GridError::ZeroDims(dims));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(GridError::BadSpacing(spacing));
    }
    Ok(())
}

/// Binary grid with `1` where `grid(x) >= tau`.
pub fn threshold<T: Copy + Into<f64>>(grid: &VoxelGrid<T>, tau: f64) -> VoxelGrid<u8> {
    grid.map(|v| u8::from(v.into() >= tau))
}

/// Checks that every value is exactly 0 or 1.
pub fn ensure_binary<T: Copy + Into<f64>>(grid: &VoxelGrid<T>) -> Result<(), GridError> {
    for (index, &v) in grid.data().iter().enumerate() {
        let v: f64 = v.into();
        if v != 0.0 && v != 1.0 {
            return Err(GridError::InvalidValue {
                index,
                value: v,
                reason: "expected 0 or 1",
            });
        }
    }
    Ok(())
}

/// Label values used in ground-truth label volumes.
pub mod label {
    pub const BACKGROUND: u8 = 0;
    pub const ET: u8 = 1;
    pub const ED: u8 = 2;
    pub const TC: u8 = 3;
}

/// Tolerance on `et + ed + tc <= 1` for single-precision maps.
pub const DISJOINT_TOLERANCE: f64 = 1e-6;

/// Three substructure channels (enhancing tumor, edema, tumor core).
///
/// Whole tumor is derived as the voxelwise sum of the three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMaps<T = f32> {
    pub et: VoxelGrid<T>,
    pub ed: VoxelGrid<T>,
    pub tc: VoxelGrid<T>,
}

impl<T: Copy + Into<f64>> ProbMaps<T> {
    pub fn new(et: VoxelGrid<T>, ed: VoxelGrid<T>, tc: VoxelGrid<T>) -> Result<Self, GridError> {
        et.ensure_same_geometry(&ed)?;
        et.ensure_same_geometry(&tc)?;
        Ok(Self { et, ed, tc })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.et.dims()
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.et.spacing()
    }

    /// Whole-tumor map `et + ed + tc`, accumulated in f64.
    pub fn wt(&self) -> VoxelGrid<f64> {
        let data = self
            .et
            .data()
            .iter()
            .zip(self.ed.data())
            .zip(self.tc.data())
            .map(|((&a, &b), &c)| a.into() + b.into() + c.into())
            .collect();
        VoxelGrid {
            dims: self.dims(),
            spacing: self.spacing(),
            data,
        }
    }

    /// Validates channel ranges and class disjointness.
    pub fn validate(&self) -> Result<(), GridError> {
        for ch in [&self.et, &self.ed, &self.tc] {
            for (index, &v) in ch.data().iter().enumerate() {
                let v: f64 = v.into();
                if !(0.0..=1.0).contains(&v) {
                    return Err(GridError::InvalidValue {
                        index,
                        value: v,
                        reason: "probability outside [0, 1]",
                    });
                }
            }
        }
        for (index, s) in self.wt().data().iter().enumerate() {
            if *s > 1.0 + DISJOINT_TOLERANCE {
                return Err(GridError::InvalidValue {
                    index,
                    value: *s,
                    reason: "et + ed + tc exceeds 1",
                });
            }
        }
        Ok(())
    }
}

/// Dural (extra-axial) and parenchymal (intra-axial) compartments.
#[derive(Debug, Clone, PartialEq)]
pub struct AnatomyMasks {
    pub dural: VoxelGrid<u8>,
    pub parench: VoxelGrid<u8>,
}

impl AnatomyMasks {
    pub fn new(dural: VoxelGrid<u8>, parench: VoxelGrid<u8>) -> Result<Self, GridError> {
        dural.ensure_same_geometry(&parench)?;
        ensure_binary(&dural)?;
        ensure_binary(&parench)?;
        for (index, (&d, &p)) in dural.data().iter().zip(parench.data()).enumerate() {
            if d == 1 && p == 1 {
                return Err(GridError::InvalidValue {
                    index,
                    value: 1.0,
                    reason: "dural and parenchymal masks overlap",
                });
            }
        }
        Ok(Self { dural, parench })
    }

    /// Builds masks from float grids holding 0/1 values (as read from disk).
    pub fn from_f32(dural: &VoxelGrid<f32>, parench: &VoxelGrid<f32>) -> Result<Self, GridError> {
        ensure_binary(dural)?;
        ensure_binary(parench)?;
        Self::new(dural.map(|v| v as u8), parench.map(|v| v as u8))
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dural.dims()
    }

    /// Masks with no anatomy (both compartments empty).
    pub fn empty(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self, GridError> {
        let z = VoxelGrid::filled(dims, spacing, 0u8)?;
        Ok(Self {
            dural: z.clone(),
            parench: z,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_is_inclusive() {
        let g = VoxelGrid::new([3, 1, 1], [1.0; 3], vec![0.49f32, 0.50, 0.51]).unwrap();
        assert_eq!(threshold(&g, 0.5).data(), &[0, 1, 1]);
        let half = VoxelGrid::filled([2, 2, 2], [1.0; 3], 0.5f32).unwrap();
        assert!(threshold(&half, 0.5).data().iter().all(|&v| v == 1));
        let zero = VoxelGrid::filled([2, 2, 2], [1.0; 3], 0.0f32).unwrap();
        assert!(threshold(&zero, 1e-9).data().iter().all(|&v| v == 0));
    }

    #[test]
    fn rejects_bad_geometry() {
        assert_eq!(
            VoxelGrid::new([0, 1, 1], [1.0; 3], Vec::<f32>::new()),
            Err(GridError::ZeroDims([0, 1, 1]))
        );
        assert!(matches!(
            VoxelGrid::new([1, 1, 1], [1.0, -1.0, 1.0], vec![0f32]),
            Err(GridError::BadSpacing(_))
        ));
        assert!(matches!(
            VoxelGrid::new([2, 1, 1], [1.0; 3], vec![0f32]),
            Err(GridError::LengthMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn probmaps_disjointness() {
        let g = |v| VoxelGrid::filled([1, 1, 1], [1.0; 3], v).unwrap();
        assert!(ProbMaps::new(g(0.3f32), g(0.3), g(0.4)).unwrap().validate().is_ok());
        assert!(ProbMaps::new(g(0.5f32), g(0.5), g(0.5)).unwrap().validate().is_err());
        assert!(ProbMaps::new(g(-0.1f32), g(0.0), g(0.0)).unwrap().validate().is_err());
    }

    #[test]
    fn masks_must_be_disjoint() {
        let one = VoxelGrid::filled([1, 1, 1], [1.0; 3], 1u8).unwrap();
        assert!(AnatomyMasks::new(one.clone(), one).is_err());
    }

    proptest! {
        #[test]
        fn index_roundtrip(nx in 1usize..9, ny in 1usize..9, nz in 1usize..9, seed in any::<u64>()) {
            let g = VoxelGrid::filled([nx, ny, nz], [1.0; 3], 0u8).unwrap();
            let i = (seed as usize) % g.len();
            let [x, y, z] = g.coords(i);
            prop_assert_eq!(g.index(x, y, z), i);
            prop_assert!(x < nx && y < ny && z < nz);
        }

        #[test]
        fn threshold_idempotent_on_binary(bits in proptest::collection::vec(0u8..2, 27), tau in 1e-6f64..=1.0) {
            let g = VoxelGrid::new([3, 3, 3], [1.0; 3], bits).unwrap();
            prop_assert_eq!(threshold(&g, tau), g);
        }
    }
}
