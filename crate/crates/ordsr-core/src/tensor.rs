//! Minimal dense tensor: shape vector plus row-major f64 storage.
//!
//! All arithmetic runs in f64; `Dtype` tags the storage precision of
//! serialized containers and the unit of activation-memory accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage precision tag for containers and memory accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(Error::Format(format!("unknown dtype tag {other}"))),
        }
    }
}

/// Dense n-dimensional array, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            values: vec![0.0; len],
        }
    }

    pub fn from_values(dims: &[usize], values: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if values.len() != len {
            return Err(Error::mismatch(format!(
                "tensor of shape {dims:?} expects {len} values, got {}",
                values.len()
            )));
        }
        let t = Tensor {
            dims: dims.to_vec(),
            values,
        };
        t.debug_check_finite();
        Ok(t)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Linear offset of `(c, y, x)` in a rank-3 tensor.
    #[inline]
    pub fn idx3(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.dims[1] + y) * self.dims[2] + x
    }

    /// Contiguous channel slice of a rank-3 tensor.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.dims[1] * self.dims[2];
        &self.values[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let plane = self.dims[1] * self.dims[2];
        &mut self.values[c * plane..(c + 1) * plane]
    }

    pub fn debug_check_finite(&self) {
        debug_assert!(
            self.values.iter().all(|v| v.is_finite()),
            "tensor of shape {:?} contains non-finite entries",
            self.dims
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_length_enforced() {
        assert!(Tensor::from_values(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_values(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn idx3_is_row_major() {
        let t = Tensor::zeros(&[2, 3, 4]);
        assert_eq!(t.idx3(0, 0, 0), 0);
        assert_eq!(t.idx3(0, 0, 3), 3);
        assert_eq!(t.idx3(0, 1, 0), 4);
        assert_eq!(t.idx3(1, 0, 0), 12);
    }

    #[test]
    fn dtype_tags_round_trip() {
        for d in [Dtype::F32, Dtype::F64] {
            assert_eq!(Dtype::from_tag(d.tag()).unwrap(), d);
        }
        assert!(Dtype::from_tag(9).is_err());
    }
}
