use crate::error::{Error, Result};

use super::Scalar;

/// Batched multi-channel 2D array, stored row-major in
/// batch → channel → row → column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    data: Vec<T>,
    dims: [usize; 4],
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            data: vec![T::zero(); n * c * h * w],
            dims: [n, c, h, w],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::shape(format!(
                "buffer of length {} cannot hold dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { data, dims })
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let [n, c, h, w] = dims;
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([b, ch, y, x]));
                    }
                }
            }
        }
        Self { data, dims }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.dims[0]
    }

    pub fn c(&self) -> usize {
        self.dims[1]
    }

    pub fn h(&self) -> usize {
        self.dims[2]
    }

    pub fn w(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cs, hs, ws] = self.dims;
        ((b * cs + c) * hs + y) * ws + x
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(b, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.offset(b, c, y, x);
        self.data[i] = v;
    }

    /// Contiguous buffer of batch item `b` (all channels).
    pub fn item(&self, b: usize) -> &[T] {
        let stride = self.item_len();
        &self.data[b * stride..(b + 1) * stride]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [T] {
        let stride = self.item_len();
        &mut self.data[b * stride..(b + 1) * stride]
    }

    pub fn item_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    /// New tensor holding the given batch items in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.item_len());
        for &i in indices {
            data.extend_from_slice(self.item(i));
        }
        Self {
            data,
            dims: [indices.len(), self.dims[1], self.dims[2], self.dims[3]],
        }
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(parts: &[Tensor4<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot concatenate zero tensors"))?;
        let [n, _, h, w] = first.dims;
        if parts.iter().any(|p| p.n() != n || p.h() != h || p.w() != w) {
            return Err(Error::shape("channel concatenation needs equal n, h, w"));
        }
        let c: usize = parts.iter().map(Tensor4::c).sum();
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for p in parts {
                data.extend_from_slice(p.item(b));
            }
        }
        Ok(Self {
            data,
            dims: [n, c, h, w],
        })
    }

    /// Inverse of [`Tensor4::concat_channels`].
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Self>> {
        if sizes.iter().sum::<usize>() != self.c() {
            return Err(Error::shape(format!(
                "channel split {:?} does not cover {} channels",
                sizes,
                self.c()
            )));
        }
        let [n, _, h, w] = self.dims;
        let plane = h * w;
        let mut out: Vec<Self> = sizes.iter().map(|&c| Self::zeros(n, c, h, w)).collect();
        for b in 0..n {
            let src = self.item(b);
            let mut start = 0;
            for (part, &c) in out.iter_mut().zip(sizes) {
                part.item_mut(b)
                    .copy_from_slice(&src[start * plane..(start + c) * plane]);
                start += c;
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            dims: self.dims,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.as_f64()))
                .collect(),
            dims: self.dims,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
