//! HTM1 dense tensor files.
//!
//! Layout (all integers little-endian, no padding):
//!
//! | offset | size        | field                                  |
//! |--------|-------------|----------------------------------------|
//! | 0      | 4           | magic `b"HTM1"`                        |
//! | 4      | 1           | version, always 1                      |
//! | 5      | 1           | dtype, 1 = f64                         |
//! | 6      | 2           | reserved, zero                         |
//! | 8      | 4           | `ndim` as u32                          |
//! | 12     | 8 * ndim    | dims as u64                            |
//! | ...    | 8 * prod    | payload, f64, row-major (last fastest) |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HTM1";
pub const VERSION: u8 = 1;
pub const DTYPE_F64: u8 = 1;
const FIXED_HEADER: usize = 12;

/// Dense row-major f64 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn element_count(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n =
            element_count(&dims).ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "dims {dims:?} hold {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FIXED_HEADER + 8 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(DTYPE_F64);
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FIXED_HEADER {
            return Err(Error::Format(format!(
                "truncated header: {} bytes",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        if bytes[4] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", bytes[4])));
        }
        if bytes[5] != DTYPE_F64 {
            return Err(Error::Format(format!("unsupported dtype {}", bytes[5])));
        }
        if bytes[6] != 0 || bytes[7] != 0 {
            return Err(Error::Format("reserved bytes are not zero".into()));
        }
        let ndim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let dims_end = ndim
            .checked_mul(8)
            .and_then(|n| n.checked_add(FIXED_HEADER))
            .ok_or_else(|| Error::Format("ndim overflow".into()))?;
        if bytes.len() < dims_end {
            return Err(Error::Format(format!("truncated dims: ndim = {ndim}")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for chunk in bytes[FIXED_HEADER..dims_end].chunks_exact(8) {
            let d = u64::from_le_bytes(chunk.try_into().unwrap());
            let d = usize::try_from(d)
                .map_err(|_| Error::Format(format!("dimension {d} overflows usize")))?;
            dims.push(d);
        }
        let count =
            element_count(&dims).ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        let payload_len = count
            .checked_mul(8)
            .ok_or_else(|| Error::Format(format!("payload of dims {dims:?} overflows")))?;
        let payload = &bytes[dims_end..];
        if payload.len() < payload_len {
            return Err(Error::Format(format!(
                "truncated payload: need {payload_len} bytes, have {}",
                payload.len()
            )));
        }
        if payload.len() > payload_len {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                payload.len() - payload_len
            )));
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor { dims, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Tensor::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_matrix_round_trip() {
        let t = Tensor::new(vec![1, 1], vec![1.5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.htm");
        t.write(&path).unwrap();
        assert_eq!(Tensor::read(&path).unwrap(), t);
    }

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[0..4], b"HTM1");
        assert_eq!(b[4], 1);
        assert_eq!(b[5], 1);
        assert_eq!(&b[6..8], &[0, 0]);
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..20], &2u64.to_le_bytes());
        assert_eq!(&b[20..28], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 36);
    }

    #[test]
    fn corrupt_inputs_are_format_errors() {
        let mut b = Tensor::vector(vec![1.0]).to_bytes();
        b[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(Tensor::from_bytes(&b), Err(Error::Format(_))));

        let b = Tensor::vector(vec![1.0, 2.0]).to_bytes();
        assert!(matches!(
            Tensor::from_bytes(&b[..b.len() - 1]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            Tensor::from_bytes(&b[..10]),
            Err(Error::Format(_))
        ));

        let mut huge = Tensor::vector(vec![]).to_bytes();
        huge.truncate(12);
        huge[8..12].copy_from_slice(&2u32.to_le_bytes());
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(Tensor::from_bytes(&huge), Err(Error::Format(_))));

        let mut version = Tensor::vector(vec![1.0]).to_bytes();
        version[4] = 2;
        assert!(matches!(
            Tensor::from_bytes(&version),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn zero_dimensional_tensor_holds_one_value() {
        let t = Tensor::new(vec![], vec![3.25]).unwrap();
        assert_eq!(Tensor::from_bytes(&t.to_bytes()).unwrap(), t);
    }
}
