use std::collections::VecDeque;

use crate::volume::Volume;

/// Which neighbors of a voxel count as touching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// Shared face.
    Six,
    /// Shared face or edge.
    Eighteen,
    /// Shared face, edge or corner.
    TwentySix,
}

impl Connectivity {
    /// Neighbor offsets: every nonzero `(dx, dy, dz)` in `{-1,0,1}³` with at
    /// most 1, 2 or 3 nonzero coordinates.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let max_nonzero = match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        };
        let mut out = Vec::new();
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let nz = [dx, dy, dz].iter().filter(|&&d| d != 0).count();
                    if nz >= 1 && nz <= max_nonzero {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Dense component labels: 0 is background, components are `1..=K` in
/// order of their first voxel in storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabeling {
    pub labels: Vec<u32>,
    /// `sizes[k - 1]` is the voxel count of component `k`.
    pub sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

pub fn connected_components_18(seg: &Volume) -> ComponentLabeling {
    connected_components(seg, Connectivity::Eighteen)
}

/// Labels maximal connected sets of nonzero voxels by breadth-first search.
pub fn connected_components(seg: &Volume, connectivity: Connectivity) -> ComponentLabeling {
    let [nx, ny, nz] = seg.dims();
    let offsets = connectivity.offsets();
    let data = seg.data();
    let mut labels = vec![0u32; data.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..data.len() {
        if data[start] == 0.0 || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y, z) = seg.coords(i);
            for d in &offsets {
                let (xx, yy, zz) = (x as isize + d[0], y as isize + d[1], z as isize + d[2]);
                if xx < 0 || yy < 0 || zz < 0 || xx >= nx as isize || yy >= ny as isize || zz >= nz as isize {
                    continue;
                }
                let j = seg.index(xx as usize, yy as usize, zz as usize);
                if data[j] != 0.0 && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    ComponentLabeling { labels, sizes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_voxels(a: [usize; 3], b: [usize; 3]) -> Volume {
        let mut v = Volume::zeros([3, 3, 3], [1.0; 3]).unwrap();
        v.set(a[0], a[1], a[2], 1.0);
        v.set(b[0], b[1], b[2], 1.0);
        v
    }

    #[test]
    fn offset_counts() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::Eighteen.offsets().len(), 18);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
    }

    #[test]
    fn face_edge_corner() {
        let face = two_voxels([0, 0, 0], [1, 0, 0]);
        let edge = two_voxels([0, 0, 0], [1, 1, 0]);
        let corner = two_voxels([0, 0, 0], [1, 1, 1]);
        assert_eq!(connected_components_18(&face).count(), 1);
        assert_eq!(connected_components_18(&edge).count(), 1);
        assert_eq!(connected_components_18(&corner).count(), 2);
        assert_eq!(connected_components(&corner, Connectivity::TwentySix).count(), 1);
        assert_eq!(connected_components(&edge, Connectivity::Six).count(), 2);
    }

    #[test]
    fn labels_are_dense_and_sized() {
        let mut v = Volume::zeros([5, 5, 1], [1.0; 3]).unwrap();
        for (x, y) in [(0, 0), (1, 0), (4, 4), (4, 3), (4, 2), (2, 4)] {
            v.set(x, y, 0, 1.0);
        }
        let l = connected_components_18(&v);
        assert_eq!(l.count(), 3);
        assert_eq!(l.sizes, vec![2, 3, 1]);
        assert_eq!(l.labels[v.index(1, 0, 0)], 1);
        assert_eq!(l.labels[v.index(4, 2, 0)], 2);
        assert_eq!(l.labels[v.index(2, 4, 0)], 3);
        assert_eq!(l.labels[v.index(3, 3, 0)], 0);
    }
}
