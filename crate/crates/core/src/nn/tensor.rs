//! Dense row-major tensors and the `CFT1` dump format.

use std::fmt::Debug;
use std::io::{Read, Write};
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive};

use crate::error::{shape_err, Error, Result};

/// Element type of a [`Tensor`]. Training uses `f32`; gradient checks use `f64`.
pub trait Scalar: Float + FromPrimitive + AddAssign + Sum + Default + Debug + Send + Sync + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + AddAssign + Sum + Default + Debug + Send + Sync + 'static {}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return shape_err(shape, format!("{} elements", data.len()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return shape_err(shape, &self.shape);
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return shape_err(&self.shape, &other.shape);
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN))).collect(),
        }
    }

    /// `(h, w, c)` for a rank-3 tensor.
    pub fn hwc(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => shape_err("rank-3 (H, W, C)", &self.shape),
        }
    }
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn write_f32s(w: &mut impl Write, data: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub(crate) fn read_f32s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub const TENSOR_MAGIC: &[u8; 4] = b"CFT1";

/// Largest rank/dimension accepted when reading untrusted files.
pub(crate) const MAX_RANK: u64 = 16;
pub(crate) const MAX_ELEMENTS: u64 = 1 << 31;

pub(crate) fn read_dims(r: &mut impl Read) -> Result<Vec<usize>> {
    let rank = read_u64(r)?;
    if rank > MAX_RANK {
        return Err(Error::Checkpoint(format!("rank {rank} too large")));
    }
    let mut dims = Vec::with_capacity(rank as usize);
    let mut total: u64 = 1;
    for _ in 0..rank {
        let d = read_u64(r)?;
        total = total.saturating_mul(d);
        dims.push(d as usize);
    }
    if total > MAX_ELEMENTS {
        return Err(Error::Checkpoint(format!("tensor of {total} elements too large")));
    }
    Ok(dims)
}

/// `CFT1`, rank, dims (u64 LE), then raw f32 LE values.
pub fn write_tensor_dump(w: &mut impl Write, t: &Tensor<f32>) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    write_u64(w, t.shape.len() as u64)?;
    for &d in &t.shape {
        write_u64(w, d as u64)?;
    }
    write_f32s(w, &t.data)?;
    Ok(())
}

pub fn read_tensor_dump(r: &mut impl Read) -> Result<Tensor<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::Checkpoint(format!("reading magic: {e}")))?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Checkpoint(format!("bad tensor magic {magic:?}")));
    }
    let dims = read_dims(r).map_err(truncated)?;
    let n = dims.iter().product();
    let data = read_f32s(r, n).map_err(|e| Error::Checkpoint(format!("truncated tensor data: {e}")))?;
    Tensor::from_vec(dims, data)
}

fn truncated(e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Checkpoint(format!("truncated: {io}")),
        other => other,
    }
}
