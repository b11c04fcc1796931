use crate::error::{Error, Result};
use crate::network::Plane;

/// Largest accepted extent along any axis.
pub const MAX_AXIS_LEN: usize = 4096;

/// Scanner-space orientation carried through from a NIfTI header so it can
/// be written back unchanged. Never used for resampling.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Geometry {
    pub qform_code: i16,
    pub sform_code: i16,
    /// `pixdim[0]`, the qfac sign.
    pub qfac: f32,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
}

/// 3D scalar grid. `x` varies fastest and `z` (the axial slice index) slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f32>,
    pub geometry: Option<Geometry>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0 || d > MAX_AXIS_LEN) {
            return Err(Error::shape(format!("volume dims {dims:?} outside 1..={MAX_AXIS_LEN}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("voxel spacing {spacing:?} must be positive")));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::shape(format!(
                "volume {dims:?} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self {
            dims,
            spacing,
            data,
            geometry: None,
        })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Self::new(dims, spacing, vec![0.0; dims.iter().product()])
    }

    /// A volume with the same dims, spacing and geometry holding `data`.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        let mut v = Self::new(self.dims, self.spacing, data)?;
        v.geometry = self.geometry;
        Ok(v)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }

    /// `(x, y, z)` of a linear index.
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let [nx, ny, _] = self.dims;
        (i % nx, (i / nx) % ny, i / (nx * ny))
    }

    pub fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn num_slices(&self) -> usize {
        self.dims[2]
    }

    pub fn slice_data(&self, z: usize) -> &[f32] {
        let n = self.slice_len();
        &self.data[z * n..(z + 1) * n]
    }

    /// Axial slice `z` as a `ny × nx` plane.
    pub fn slice(&self, z: usize) -> Plane<f32> {
        Plane {
            height: self.dims[1],
            width: self.dims[0],
            data: self.slice_data(z).to_vec(),
        }
    }

    pub fn set_slice(&mut self, z: usize, plane: &Plane<f32>) -> Result<()> {
        if plane.height != self.dims[1] || plane.width != self.dims[0] {
            return Err(Error::shape(format!(
                "plane {}x{} does not fit slice {}x{}",
                plane.height, plane.width, self.dims[1], self.dims[0]
            )));
        }
        let n = self.slice_len();
        self.data[z * n..(z + 1) * n].copy_from_slice(&plane.data);
        Ok(())
    }

    /// New volume made of the listed axial slices, in the given order.
    pub fn select_slices(&self, slices: &[usize]) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::invalid("slice selection is empty"));
        }
        let mut data = Vec::with_capacity(slices.len() * self.slice_len());
        for &z in slices {
            if z >= self.dims[2] {
                return Err(Error::invalid(format!("slice {z} out of range 0..{}", self.dims[2])));
            }
            data.extend_from_slice(self.slice_data(z));
        }
        Self::new([self.dims[0], self.dims[1], slices.len()], self.spacing, data)
    }

    pub fn same_shape(&self, other: &Volume) -> bool {
        self.dims == other.dims
    }

    pub fn require_same_shape(&self, other: &Volume, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: dims {:?} vs {:?}",
                self.dims, other.dims
            )))
        }
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    /// Reorders axes so that old axis `order[d]` becomes new axis `d`.
    pub fn permute_axes(&self, order: [usize; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &a in &order {
            if a > 2 || seen[a] {
                return Err(Error::invalid(format!("{order:?} is not an axis permutation")));
            }
            seen[a] = true;
        }
        let dims = order.map(|a| self.dims[a]);
        let spacing = order.map(|a| self.spacing[a]);
        let mut data = vec![0.0; self.data.len()];
        let mut old = [0usize; 3];
        let mut i = 0;
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for l in 0..dims[0] {
                    old[order[0]] = l;
                    old[order[1]] = j;
                    old[order[2]] = k;
                    data[i] = self.get(old[0], old[1], old[2]);
                    i += 1;
                }
            }
        }
        let mut v = Self::new(dims, spacing, data)?;
        v.geometry = self.geometry;
        Ok(v)
    }
}

/// Axis order that moves `axis` to the slice (slowest) position.
pub fn slicing_order(axis: usize) -> Result<[usize; 3]> {
    match axis {
        0 => Ok([1, 2, 0]),
        1 => Ok([0, 2, 1]),
        2 => Ok([0, 1, 2]),
        _ => Err(Error::invalid(format!("slicing axis {axis} not in 0..=2"))),
    }
}

/// Inverse of a permutation produced by [`slicing_order`].
pub fn inverse_order(order: [usize; 3]) -> [usize; 3] {
    let mut inv = [0; 3];
    for (d, &a) in order.iter().enumerate() {
        inv[a] = d;
    }
    inv
}
