//! Binary checkpoints of decoded weights.
//!
//! Layout, all little-endian: a 16-byte header (`b"GPDC"`, version `u32`,
//! layer count `L` as `u32`, iteration `u32`), then `N_0 .. N_L` as `u32`,
//! the data seed as `u64`, and finally each `W^l` as row-major `f64`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Mat;

pub const MAGIC: &[u8; 4] = b"GPDC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    pub seed: u64,
    pub dims: Vec<usize>,
    pub weights: Vec<Mat>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| bad("truncated"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

impl Checkpoint {
    pub fn new(iteration: usize, seed: u64, weights: Vec<Mat>) -> Result<Self> {
        let Some(first) = weights.first() else {
            return Err(bad("no layers"));
        };
        let mut dims = vec![first.cols()];
        for w in &weights {
            if w.cols() != *dims.last().expect("non-empty") {
                return Err(Error::Dimension("consecutive layers do not chain".into()));
            }
            dims.push(w.rows());
        }
        Ok(Self {
            iteration,
            seed,
            dims,
            weights,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.weights.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.iteration as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        for w in &self.weights {
            for v in w.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let layers = r.u32()? as usize;
        let iteration = r.u32()? as usize;
        let dims = (0..=layers)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let seed = r.u64()?;
        let mut weights = Vec::with_capacity(layers);
        for l in 0..layers {
            let (rows, cols) = (dims[l + 1], dims[l]);
            let data = (0..rows * cols)
                .map(|_| r.f64())
                .collect::<Result<Vec<_>>>()?;
            weights.push(Mat::new(rows, cols, data)?);
        }
        if r.pos != buf.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            iteration,
            seed,
            dims,
            weights,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
