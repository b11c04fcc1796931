//! Smooth membership targets from hard lesion masks, and lesion-centered
//! training patches.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{gaussian_kernel_1d, Tensor4};
use crate::volume::Volume;

pub const DEFAULT_SIGMA: f64 = 1.5;
pub const DEFAULT_PATCH: usize = 35;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;

/// Blurs each axial slice of a binary mask with a separable, renormalized
/// 3×3 Gaussian. Voxels outside the slice count as zero.
pub fn make_membership_target(mask: &Volume, sigma: f64) -> Result<Volume> {
    if !mask.is_binary() {
        return Err(Error::invalid("membership targets need a binary {0,1} mask"));
    }
    let k = gaussian_kernel_1d(sigma, 3)?;
    let [nx, ny, nz] = mask.dims();
    let mut out = vec![0.0f32; mask.len()];
    let mut rows = vec![0.0f64; nx * ny];
    for z in 0..nz {
        let src = mask.slice_data(z);
        // horizontal pass
        for y in 0..ny {
            for x in 0..nx {
                let mut acc = 0.0;
                for (d, &kw) in k.iter().enumerate() {
                    let xs = x as isize + d as isize - 1;
                    if xs >= 0 && (xs as usize) < nx {
                        acc += kw * src[y * nx + xs as usize] as f64;
                    }
                }
                rows[y * nx + x] = acc;
            }
        }
        // vertical pass
        let dst = &mut out[z * nx * ny..(z + 1) * nx * ny];
        for y in 0..ny {
            for x in 0..nx {
                let mut acc = 0.0;
                for (d, &kw) in k.iter().enumerate() {
                    let ys = y as isize + d as isize - 1;
                    if ys >= 0 && (ys as usize) < ny {
                        acc += kw * rows[ys as usize * nx + x];
                    }
                }
                dst[y * nx + x] = acc.clamp(0.0, 1.0) as f32;
            }
        }
    }
    mask.with_data(out)
}

/// Lesion-centered training patches: one per lesion voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    /// One `(n, 1, p1, p2)` stack per contrast.
    pub contrasts: Vec<Tensor4<f32>>,
    /// `(n, 1, p1, p2)` membership targets.
    pub target: Tensor4<f32>,
    /// Source voxel `(x, y, z)` of each patch center.
    pub coords: Vec<[usize; 3]>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn num_contrasts(&self) -> usize {
        self.contrasts.len()
    }

    pub fn patch_dims(&self) -> (usize, usize) {
        (self.target.h(), self.target.w())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            contrasts: self.contrasts.iter().map(|t| t.select(indices)).collect(),
            target: self.target.select(indices),
            coords: indices.iter().map(|&i| self.coords[i]).collect(),
        }
    }

    /// Appends the patches of several sets (e.g. several subjects).
    pub fn concat(sets: &[PatchSet]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::invalid("cannot concatenate zero patch sets"))?;
        let (p1, p2) = first.patch_dims();
        let nc = first.num_contrasts();
        if sets.iter().any(|s| s.patch_dims() != (p1, p2) || s.num_contrasts() != nc) {
            return Err(Error::shape("patch sets differ in patch size or contrast count"));
        }
        let n: usize = sets.iter().map(PatchSet::len).sum();
        let stack = |get: &dyn Fn(&PatchSet) -> &Tensor4<f32>| -> Result<Tensor4<f32>> {
            let mut data = Vec::with_capacity(n * p1 * p2);
            for s in sets {
                data.extend_from_slice(get(s).as_slice());
            }
            Tensor4::from_vec([n, 1, p1, p2], data)
        };
        let contrasts = (0..nc)
            .map(|c| stack(&|s: &PatchSet| &s.contrasts[c]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            contrasts,
            target: stack(&|s: &PatchSet| &s.target)?,
            coords: sets.iter().flat_map(|s| s.coords.iter().copied()).collect(),
        })
    }
}

fn copy_patch(vol: &Volume, x: usize, y: usize, z: usize, p1: usize, p2: usize, dst: &mut [f32]) {
    let [nx, ny, _] = vol.dims();
    let slice = vol.slice_data(z);
    let (r1, r2) = ((p1 / 2) as isize, (p2 / 2) as isize);
    for py in 0..p1 {
        let sy = y as isize + py as isize - r1;
        let row = &mut dst[py * p2..(py + 1) * p2];
        if sy < 0 || sy as usize >= ny {
            row.fill(0.0);
            continue;
        }
        for (px, d) in row.iter_mut().enumerate() {
            let sx = x as isize + px as isize - r2;
            *d = if sx < 0 || sx as usize >= nx {
                0.0
            } else {
                slice[sy as usize * nx + sx as usize]
            };
        }
    }
}

/// One `p1 × p2` in-plane patch (rows × columns) around every nonzero mask
/// voxel, taken from each contrast and from the target. Out-of-volume
/// regions are zero.
pub fn extract_patches(
    contrasts: &[&Volume],
    mask: &Volume,
    patch: (usize, usize),
    target: &Volume,
) -> Result<PatchSet> {
    let (p1, p2) = patch;
    if p1 % 2 == 0 || p2 % 2 == 0 || p1 == 0 || p2 == 0 {
        return Err(Error::invalid(format!("patch dims {p1}x{p2} must be odd")));
    }
    if contrasts.is_empty() {
        return Err(Error::invalid("need at least one contrast volume"));
    }
    for c in contrasts {
        c.require_same_shape(mask, "contrast vs mask")?;
    }
    target.require_same_shape(mask, "target vs mask")?;

    let centers: Vec<[usize; 3]> = mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| {
            let (x, y, z) = mask.coords(i);
            [x, y, z]
        })
        .collect();
    if centers.is_empty() {
        return Err(Error::NoLesionVoxels);
    }
    let n = centers.len();
    let plane = p1 * p2;
    let gather = |vol: &Volume| -> Result<Tensor4<f32>> {
        let mut data = vec![0.0f32; n * plane];
        for (c, dst) in centers.iter().zip(data.chunks_mut(plane)) {
            copy_patch(vol, c[0], c[1], c[2], p1, p2, dst);
        }
        Tensor4::from_vec([n, 1, p1, p2], data)
    };
    Ok(PatchSet {
        contrasts: contrasts.iter().map(|v| gather(v)).collect::<Result<Vec<_>>>()?,
        target: gather(target)?,
        coords: centers,
    })
}

/// Seeded shuffle, then the first `round(fraction · n)` patches become the
/// validation split.
pub fn split_train_validation(patches: &PatchSet, fraction: f64, seed: u64) -> Result<(PatchSet, PatchSet)> {
    let n = patches.len();
    if n < 5 {
        return Err(Error::invalid(format!("need at least 5 patches to split, got {n}")));
    }
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!("validation fraction {fraction} not in [0, 1)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (fraction * n as f64).round() as usize;
    let (val, train) = order.split_at(n_val);
    Ok((patches.select(train), patches.select(val)))
}
