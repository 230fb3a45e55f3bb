//! Connected-component labeling of binary volumes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{ensure_binary, GridError, VoxelGrid};

#[derive(Debug, Error, PartialEq)]
pub enum ComponentError {
    #[error("non-binary input: {0}")]
    NonBinaryInput(GridError),
}

/// Voxel adjacency; serialized as the number 6 or 26.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Connectivity {
    Six,
    #[default]
    TwentySix,
}

impl TryFrom<u32> for Connectivity {
    type Error = String;

    fn try_from(n: u32) -> Result<Self, Self::Error> {
        Self::from_number(n).ok_or_else(|| format!("connectivity must be 6 or 26, got {n}"))
    }
}

impl From<Connectivity> for u32 {
    fn from(c: Connectivity) -> u32 {
        c.number()
    }
}

impl Connectivity {
    pub fn from_number(n: u32) -> Option<Self> {
        match n {
            6 => Some(Self::Six),
            26 => Some(Self::TwentySix),
            _ => None,
        }
    }

    pub fn number(self) -> u32 {
        match self {
            Self::Six => 6,
            Self::TwentySix => 26,
        }
    }

    /// Neighbour offsets that precede a voxel in x-fastest scan order.
    fn backward_offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=0 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let before = dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)));
                    if before && self.adjacent([dx, dy, dz]) {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    /// All neighbour offsets under this adjacency.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if (dx, dy, dz) != (0, 0, 0) && self.adjacent([dx, dy, dz]) {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    fn adjacent(self, d: [isize; 3]) -> bool {
        let l1: isize = d.iter().map(|v| v.abs()).sum();
        match self {
            Self::Six => l1 == 1,
            Self::TwentySix => l1 >= 1,
        }
    }
}

/// Which quantity stands in for a lesion's "size".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SizeMode {
    /// Largest bounding-box edge, mm.
    #[default]
    MaxExtent,
    /// Voxel volume, mm³.
    Volume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub voxel_count: usize,
    pub volume_mm3: f64,
    pub extents_mm: [f64; 3],
    pub max_extent_mm: f64,
}

impl ComponentStats {
    pub fn size(&self, mode: SizeMode) -> f64 {
        match mode {
            SizeMode::MaxExtent => self.max_extent_mm,
            SizeMode::Volume => self.volume_mm3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    /// 0 is background; components are numbered from 1 in scan order of first voxel.
    pub labels: VoxelGrid<u32>,
    pub count: usize,
    pub stats: Vec<ComponentStats>,
}

impl ComponentSet {
    pub fn largest(&self, mode: SizeMode) -> Option<&ComponentStats> {
        self.stats
            .iter()
            .max_by(|a, b| a.size(mode).total_cmp(&b.size(mode)))
    }
}

pub fn component_size(stats: &ComponentStats, mode: SizeMode) -> f64 {
    stats.size(mode)
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let grand = self.parent[self.parent[a as usize] as usize];
            self.parent[a as usize] = grand;
            a = grand;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find labeling.
pub fn label_components<T: Copy + Into<f64>>(
    binary: &VoxelGrid<T>,
    connectivity: Connectivity,
) -> Result<ComponentSet, ComponentError> {
    ensure_binary(binary).map_err(ComponentError::NonBinaryInput)?;
    let [nx, ny, nz] = binary.dims();
    let fg: Vec<bool> = binary.data().iter().map(|&v| v.into() == 1.0).collect();
    let offsets = connectivity.backward_offsets();
    let mut provisional = vec![0u32; fg.len()];
    let mut sets = DisjointSet::new();

    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if !fg[i] {
                    continue;
                }
                let mut label = 0u32;
                for d in &offsets {
                    let (qx, qy, qz) = (x as isize + d[0], y as isize + d[1], z as isize + d[2]);
                    if qx < 0 || qy < 0 || qz < 0 || qx >= nx as isize || qy >= ny as isize {
                        continue;
                    }
                    let q = qx as usize + nx * (qy as usize + ny * qz as usize);
                    let l = provisional[q];
                    if l == 0 {
                        continue;
                    }
                    if label == 0 {
                        label = l;
                    } else {
                        sets.union(label, l);
                    }
                }
                provisional[i] = if label == 0 { sets.make() } else { label };
            }
        }
    }

    // Renumber roots by first encounter in scan order.
    let mut final_of_root = vec![0u32; sets.parent.len()];
    let mut next = 0u32;
    let mut labels = vec![0u32; fg.len()];
    let mut bounds: Vec<([usize; 3], [usize; 3], usize)> = Vec::new();
    for i in 0..fg.len() {
        if provisional[i] == 0 {
            continue;
        }
        let root = sets.find(provisional[i]) as usize;
        if final_of_root[root] == 0 {
            next += 1;
            final_of_root[root] = next;
            bounds.push(([usize::MAX; 3], [0; 3], 0));
        }
        let l = final_of_root[root];
        labels[i] = l;
        let c = [i % nx, (i / nx) % ny, i / (nx * ny)];
        let b = &mut bounds[l as usize - 1];
        for k in 0..3 {
            b.0[k] = b.0[k].min(c[k]);
            b.1[k] = b.1[k].max(c[k]);
        }
        b.2 += 1;
    }

    let spacing = binary.spacing();
    let voxel_volume: f64 = spacing.iter().product();
    let stats = bounds
        .into_iter()
        .map(|(lo, hi, n)| {
            let extents_mm = [0, 1, 2].map(|k| (hi[k] - lo[k] + 1) as f64 * spacing[k]);
            ComponentStats {
                voxel_count: n,
                volume_mm3: n as f64 * voxel_volume,
                extents_mm,
                max_extent_mm: extents_mm.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect::<Vec<_>>();

    Ok(ComponentSet {
        labels: VoxelGrid::new(binary.dims(), spacing, labels).expect("same geometry"),
        count: stats.len(),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dims: [usize; 3], spacing: [f64; 3], on: &[[usize; 3]]) -> VoxelGrid<u8> {
        let mut g = VoxelGrid::filled(dims, spacing, 0u8).unwrap();
        for &[x, y, z] in on {
            g.set(x, y, z, 1);
        }
        g
    }

    #[test]
    fn empty_grid() {
        let c = label_components(&grid([4, 4, 4], [1.0; 3], &[]), Connectivity::TwentySix).unwrap();
        assert_eq!(c.count, 0);
        assert!(c.stats.is_empty());
    }

    #[test]
    fn corner_contact_depends_on_connectivity() {
        let g = grid([2, 2, 2], [1.0; 3], &[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(label_components(&g, Connectivity::TwentySix).unwrap().count, 1);
        assert_eq!(label_components(&g, Connectivity::Six).unwrap().count, 2);
    }

    #[test]
    fn sizes() {
        let single = label_components(&grid([3, 3, 3], [1.0; 3], &[[1, 1, 1]]), Connectivity::Six).unwrap();
        assert_eq!(component_size(&single.stats[0], SizeMode::MaxExtent), 1.0);

        let run = grid([4, 2, 2], [2.0, 1.0, 1.0], &[[0, 0, 0], [1, 0, 0], [2, 0, 0]]);
        let c = label_components(&run, Connectivity::Six).unwrap();
        assert_eq!(c.stats[0].extents_mm, [6.0, 1.0, 1.0]);
        assert_eq!(component_size(&c.stats[0], SizeMode::MaxExtent), 6.0);

        let block: Vec<[usize; 3]> = (0..8).map(|i| [i & 1, (i >> 1) & 1, i >> 2]).collect();
        let c = label_components(&grid([3, 3, 3], [1.0; 3], &block), Connectivity::Six).unwrap();
        assert_eq!(component_size(&c.stats[0], SizeMode::Volume), 8.0);
    }

    #[test]
    fn labels_follow_scan_order() {
        // A U shape: the two arms meet only at the bottom row, which is scanned last.
        let g = grid([3, 2, 1], [1.0; 3], &[[0, 0, 0], [2, 0, 0], [0, 1, 0], [1, 1, 0], [2, 1, 0]]);
        let c = label_components(&g, Connectivity::Six).unwrap();
        assert_eq!(c.count, 1);
        let lone = grid([3, 1, 2], [1.0; 3], &[[2, 0, 0], [0, 0, 1]]);
        let c = label_components(&lone, Connectivity::Six).unwrap();
        assert_eq!(c.labels.get(2, 0, 0), 1);
        assert_eq!(c.labels.get(0, 0, 1), 2);
    }

    #[test]
    fn rejects_non_binary() {
        let g = VoxelGrid::new([2, 1, 1], [1.0; 3], vec![0.0f32, 0.5]).unwrap();
        assert!(matches!(
            label_components(&g, Connectivity::Six),
            Err(ComponentError::NonBinaryInput(_))
        ));
    }
}
