//! Dense binary voxel masks.

use crate::metrics::MetricsError;

/// A dense boolean voxel grid stored with x varying fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    data: Vec<bool>,
}

impl Mask {
    pub fn new(dims: [usize; 3], data: Vec<bool>) -> Result<Self, MetricsError> {
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(MetricsError::Length(expected, data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![false; dims.iter().product()],
        }
    }

    pub fn full(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![true; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut([usize; 3]) -> bool) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f([x, y, z]));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    #[inline]
    pub fn linear_index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, idx: [usize; 3]) -> bool {
        self.data[self.linear_index(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 3], value: bool) {
        let i = self.linear_index(idx);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    /// Number of set voxels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Coordinates of all set voxels in storage order.
    pub fn iter_set(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, _] = self.dims;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| [i % nx, (i / nx) % ny, i / (nx * ny)])
    }
}
