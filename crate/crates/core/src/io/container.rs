//! Tensor container: little-endian, versioned, float64 or bit-packed payloads.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "BTSR"
//! 4       2           format version (u16) = 1
//! 6       1           element type: 1 = float64, 2 = bit-packed
//! 7       1           reserved, 0
//! 8       4           rank r (u32), r >= 1
//! 12      8 r         shape (u64 each)
//! 12+8r   ...         row-major payload
//! ```
//!
//! Bit-packed payloads pack each row (the last axis) LSB-first into
//! `ceil(len / 8)` bytes, padding the final byte with zero bits.

use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BTSR";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ElementType {
    Float64 = 1,
    Bits = 2,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    Float64(Vec<f64>),
    /// One byte (0 or 1) per element in memory; packed on disk.
    Bits(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::invalid("tensor rank must be >= 1"));
        }
        let n: usize = shape.iter().product();
        let len = match &data {
            TensorData::Float64(v) => v.len(),
            TensorData::Bits(v) => {
                if v.iter().any(|&b| b > 1) {
                    return Err(Error::invalid("bit tensor holds values other than 0/1"));
                }
                v.len()
            }
        };
        if len != n {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {n} elements, got {len}"
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn element_type(&self) -> ElementType {
        match self.data {
            TensorData::Float64(_) => ElementType::Float64,
            TensorData::Bits(_) => ElementType::Bits,
        }
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn from_array1(a: &Array1<f64>) -> Self {
        Tensor {
            shape: vec![a.len()],
            data: TensorData::Float64(a.iter().copied().collect()),
        }
    }

    pub fn from_array2(a: &Array2<f64>) -> Self {
        Tensor {
            shape: a.shape().to_vec(),
            data: TensorData::Float64(a.iter().copied().collect()),
        }
    }

    pub fn from_arrayd(a: &ArrayD<f64>) -> Self {
        Tensor {
            shape: a.shape().to_vec(),
            data: TensorData::Float64(a.iter().copied().collect()),
        }
    }

    pub fn from_bits3(a: &Array3<u8>) -> Result<Self> {
        Tensor::new(a.shape().to_vec(), TensorData::Bits(a.iter().copied().collect()))
    }

    fn expect_rank(&self, rank: usize) -> Result<()> {
        if self.shape.len() != rank {
            return Err(Error::WrongRank {
                expected: rank,
                found: self.shape.len(),
            });
        }
        Ok(())
    }

    fn floats(self) -> Result<Vec<f64>> {
        match self.data {
            TensorData::Float64(v) => Ok(v),
            TensorData::Bits(_) => Err(Error::Malformed("expected float64 tensor, found bits".into())),
        }
    }

    pub fn into_array1(self) -> Result<Array1<f64>> {
        self.expect_rank(1)?;
        Ok(Array1::from(self.floats()?))
    }

    pub fn into_array2(self) -> Result<Array2<f64>> {
        self.expect_rank(2)?;
        let shape = (self.shape[0], self.shape[1]);
        Ok(Array2::from_shape_vec(shape, self.floats()?).expect("validated length"))
    }

    pub fn into_arrayd(self) -> Result<ArrayD<f64>> {
        let shape = self.shape.clone();
        Ok(ArrayD::from_shape_vec(IxDyn(&shape), self.floats()?).expect("validated length"))
    }

    pub fn into_bits3(self) -> Result<Array3<u8>> {
        self.expect_rank(3)?;
        let shape = (self.shape[0], self.shape[1], self.shape[2]);
        match self.data {
            TensorData::Bits(v) => Ok(Array3::from_shape_vec(shape, v).expect("validated length")),
            TensorData::Float64(_) => Err(Error::Malformed("expected bit tensor, found float64".into())),
        }
    }

    pub fn into_bitsd(self) -> Result<ArrayD<u8>> {
        let shape = self.shape.clone();
        match self.data {
            TensorData::Bits(v) => Ok(ArrayD::from_shape_vec(IxDyn(&shape), v).expect("validated length")),
            TensorData::Float64(_) => Err(Error::Malformed("expected bit tensor, found float64".into())),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.element_type() as u8);
        out.push(0);
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::Float64(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::Bits(v) => {
                let row = *self.shape.last().unwrap();
                if row > 0 {
                    for chunk in v.chunks(row) {
                        let mut packed = vec![0u8; row.div_ceil(8)];
                        for (i, &b) in chunk.iter().enumerate() {
                            packed[i / 8] |= b << (i % 8);
                        }
                        out.extend_from_slice(&packed);
                    }
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::BadMagic("tensor container".into()));
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let kind = cur.take(1)?[0];
        let _reserved = cur.take(1)?;
        let rank = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        if rank == 0 || rank > 16 {
            return Err(Error::Malformed(format!("rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
            shape.push(usize::try_from(d).map_err(|_| Error::Malformed("dimension overflow".into()))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Malformed("shape overflow".into()))?;
        let data = match kind {
            1 => {
                let raw = cur.take(n.checked_mul(8).ok_or_else(|| Error::Malformed("size overflow".into()))?)?;
                TensorData::Float64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
            2 => {
                let row = *shape.last().unwrap();
                let rows = n.checked_div(row).unwrap_or(0);
                let row_bytes = row.div_ceil(8);
                let mut bits = Vec::with_capacity(n);
                for _ in 0..rows {
                    let packed = cur.take(row_bytes)?;
                    for i in 0..row {
                        bits.push((packed[i / 8] >> (i % 8)) & 1);
                    }
                    if row % 8 != 0 && packed[row_bytes - 1] >> (row % 8) != 0 {
                        return Err(Error::Malformed("non-zero padding bits".into()));
                    }
                }
                TensorData::Bits(bits)
            }
            other => return Err(Error::UnknownElementType(other)),
        };
        if cur.pos != bytes.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        Tensor::new(shape, data)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Malformed("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, tensor.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::decode(&bytes).map_err(|e| match e {
        Error::BadMagic(_) => Error::BadMagic(path.display().to_string()),
        other => other,
    })
}
