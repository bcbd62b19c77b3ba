//! Dense row-major `f64` matrices and block grids.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// Builds a matrix from row-major data, rejecting NaN and infinities.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    fn check_same(&self, rhs: &Mat, op: &str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::Dimension(format!(
                "{op} of {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, "sum", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, "difference", |a, b| a - b)
    }

    pub fn hadamard(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, "Hadamard product", |a, b| a * b)
    }

    pub fn zip_with(&self, rhs: &Mat, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        self.check_same(rhs, op)?;
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += s * rhs`
    pub fn add_scaled(&mut self, s: f64, rhs: &Mat) -> Result<()> {
        self.check_same(rhs, "scaled sum")?;
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Mat {
        self.map(|v| v * s)
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Copies the `rows x cols` window starting at `(r0, c0)`.
    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |i, j| self.get(r0 + i, c0 + j))
    }

    /// Max-norm distance relative to the max-norm of `reference`.
    pub fn rel_diff(&self, reference: &Mat) -> f64 {
        assert_eq!(self.shape(), reference.shape(), "rel_diff shape mismatch");
        let num = self
            .data
            .iter()
            .zip(&reference.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let den = reference.max_abs();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}

// ---------------------------------------------------------------------------
// Block grids
// ---------------------------------------------------------------------------

/// An `m x n` grid of equally sized blocks, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    m: usize,
    n: usize,
    blocks: Vec<Mat>,
}

impl BlockGrid {
    pub fn from_blocks(m: usize, n: usize, blocks: Vec<Mat>) -> Result<Self> {
        if blocks.len() != m * n || blocks.is_empty() {
            return Err(Error::Dimension(format!(
                "{} blocks for a {m}x{n} grid",
                blocks.len()
            )));
        }
        let shape = blocks[0].shape();
        if blocks.iter().any(|b| b.shape() != shape) {
            return Err(Error::Dimension("blocks differ in shape".into()));
        }
        Ok(Self { m, n, blocks })
    }

    pub fn grid_rows(&self) -> usize {
        self.m
    }

    pub fn grid_cols(&self) -> usize {
        self.n
    }

    pub fn block(&self, i: usize, j: usize) -> &Mat {
        &self.blocks[i * self.n + j]
    }

    pub fn block_shape(&self) -> (usize, usize) {
        self.blocks[0].shape()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &Mat)> {
        let n = self.n;
        self.blocks
            .iter()
            .enumerate()
            .map(move |(k, b)| ((k / n, k % n), b))
    }

    pub fn assemble(&self) -> Mat {
        let (br, bc) = self.block_shape();
        Mat::from_fn(self.m * br, self.n * bc, |i, j| {
            self.block(i / br, j / bc).get(i % br, j % bc)
        })
    }
}

/// Splits `a` into an `m x n` grid of equal blocks.
pub fn block_partition(a: &Mat, m: usize, n: usize) -> Result<BlockGrid> {
    if m == 0 || n == 0 || !a.rows().is_multiple_of(m) || !a.cols().is_multiple_of(n) {
        return Err(Error::Dimension(format!(
            "{}x{} does not split into a {m}x{n} grid",
            a.rows(),
            a.cols()
        )));
    }
    let (br, bc) = (a.rows() / m, a.cols() / n);
    let mut blocks = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            blocks.push(a.submatrix(i * br, j * bc, br, bc));
        }
    }
    BlockGrid::from_blocks(m, n, blocks)
}

pub fn matmul(a: &Mat, b: &Mat) -> Result<Mat> {
    a.matmul(b)
}

/// Evaluates `sum_k block_k * point^e_k`.
///
/// Powers come from a running product up to the largest exponent, so every
/// term sees the same rounding for a given `(point, exponent)` pair.
pub fn eval_block_poly(terms: &[(&Mat, usize)], point: f64) -> Result<Mat> {
    let Some(&(first, _)) = terms.first() else {
        return Err(Error::Dimension("empty polynomial".into()));
    };
    let max_e = terms.iter().map(|&(_, e)| e).max().unwrap_or(0);
    let mut powers = Vec::with_capacity(max_e + 1);
    let mut p = 1.0;
    for _ in 0..=max_e {
        powers.push(p);
        p *= point;
    }
    let mut acc = Mat::zeros(first.rows(), first.cols());
    for &(block, e) in terms {
        acc.add_scaled(powers[e], block)?;
    }
    Ok(acc)
}
