//! VGR1 binary grid format.
//!
//! Little-endian layout:
//!
//! | bytes  | content                                   |
//! |--------|-------------------------------------------|
//! | 0..4   | magic `VGR1`                              |
//! | 4..16  | `nx, ny, nz` as `u32`                     |
//! | 16..40 | `sx, sy, sz` spacing in mm as `f64`       |
//! | 40..   | `nx*ny*nz` values as `f32`, x fastest     |

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::grid::{GridError, VoxelGrid};

pub const MAGIC: &[u8; 4] = b"VGR1";
pub const HEADER_LEN: usize = 40;

#[derive(Debug, Error)]
pub enum VgrError {
    #[error("format error: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<GridError> for VgrError {
    fn from(e: GridError) -> Self {
        VgrError::Format(e.to_string())
    }
}

pub fn encode(grid: &VoxelGrid<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.len());
    out.extend_from_slice(MAGIC);
    for d in grid.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in grid.spacing() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<VoxelGrid<f32>, VgrError> {
    if bytes.len() < HEADER_LEN {
        return Err(VgrError::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(VgrError::Format("bad magic, expected VGR1".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let dims = [u32_at(4), u32_at(8), u32_at(12)];
    let spacing = [f64_at(16), f64_at(24), f64_at(32)];
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| VgrError::Format(format!("dims {dims:?} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if Some(payload.len()) != n.checked_mul(4) {
        return Err(VgrError::Format(format!(
            "payload is {} bytes, dims {dims:?} require {}",
            payload.len(),
            n.saturating_mul(4)
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(VoxelGrid::new(dims, spacing, data)?)
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<VoxelGrid<f32>, VgrError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| VgrError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

pub fn write_grid(grid: &VoxelGrid<f32>, path: impl AsRef<Path>) -> Result<(), VgrError> {
    let path = path.as_ref();
    fs::write(path, encode(grid)).map_err(|source| VgrError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_voxel_is_44_bytes() {
        let g = VoxelGrid::new([1, 1, 1], [1.0; 3], vec![0.5f32]).unwrap();
        let b = encode(&g);
        assert_eq!(b.len(), 44);
        assert_eq!(&b[40..], &0.5f32.to_le_bytes());
    }

    #[test]
    fn payload_for_4_cubed() {
        let g = VoxelGrid::filled([4, 4, 4], [1.0; 3], 0f32).unwrap();
        assert_eq!(encode(&g).len() - HEADER_LEN, 256);
    }

    #[test]
    fn hand_built_fixture() {
        let mut b = Vec::new();
        b.extend_from_slice(b"VGR1");
        for _ in 0..3 {
            b.extend_from_slice(&2u32.to_le_bytes());
        }
        for s in [1.0f64, 2.0, 3.0] {
            b.extend_from_slice(&s.to_le_bytes());
        }
        for v in 0..8 {
            b.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let g = decode(&b).unwrap();
        assert_eq!(g.spacing(), [1.0, 2.0, 3.0]);
        assert_eq!(g.get(1, 1, 1), 7.0);
        assert_eq!(g.get(1, 0, 0), 1.0);
        assert_eq!(g.get(0, 1, 0), 2.0);
        assert_eq!(g.get(0, 0, 1), 4.0);
    }

    #[test]
    fn rejects_truncated_and_bad_headers() {
        let g = VoxelGrid::filled([2, 2, 2], [1.0; 3], 1f32).unwrap();
        let b = encode(&g);
        assert!(matches!(decode(&b[..b.len() - 1]), Err(VgrError::Format(_))));
        assert!(matches!(decode(&b[..10]), Err(VgrError::Format(_))));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(VgrError::Format(_))));
        let mut neg = b.clone();
        neg[16..24].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(decode(&neg), Err(VgrError::Format(_))));
    }

    #[test]
    fn nan_survives() {
        let nan = f32::from_bits(0x7fc0_1234);
        let g = VoxelGrid::new([2, 1, 1], [1.0; 3], vec![nan, f32::INFINITY]).unwrap();
        let back = decode(&encode(&g)).unwrap();
        assert_eq!(back.data()[0].to_bits(), 0x7fc0_1234);
        assert_eq!(back.data()[1], f32::INFINITY);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.vgr");
        let g = VoxelGrid::new([3, 2, 1], [0.5, 1.0, 2.5], (0..6).map(|v| v as f32).collect()).unwrap();
        write_grid(&g, &p).unwrap();
        assert_eq!(read_grid(&p).unwrap(), g);
        assert!(matches!(read_grid(dir.path().join("missing")), Err(VgrError::Io { .. })));
    }

    proptest! {
        #[test]
        fn decode_encode_bit_exact(
            dims in (1usize..6, 1usize..6, 1usize..6),
            spacing in (1e-3f64..10.0, 1e-3f64..10.0, 1e-3f64..10.0),
            bits in proptest::collection::vec(any::<u32>(), 125),
        ) {
            let n = dims.0 * dims.1 * dims.2;
            let data: Vec<f32> = bits[..n].iter().map(|&b| f32::from_bits(b)).collect();
            let g = VoxelGrid::new([dims.0, dims.1, dims.2], [spacing.0, spacing.1, spacing.2], data).unwrap();
            let bytes = encode(&g);
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(back.dims(), g.dims());
            prop_assert_eq!(back.spacing().map(f64::to_bits), g.spacing().map(f64::to_bits));
            let a: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(&a[..], &bits[..n]);
            prop_assert_eq!(encode(&back), bytes);
        }
    }
}
