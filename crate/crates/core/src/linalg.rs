//! Householder QR, least squares and orthonormal complements.

use crate::error::{Error, Result};
use crate::matrix::Mat;

/// Relative threshold on `|R_jj|` below which a column counts as dependent.
const RANK_TOL: f64 = 1e-12;

/// Householder QR of a tall matrix with the reflectors kept explicitly.
pub struct Qr {
    r: Mat,
    reflectors: Vec<Vec<f64>>,
}

impl Qr {
    pub fn new(a: &Mat) -> Self {
        let (m, n) = a.shape();
        let mut r = a.clone();
        let mut reflectors = Vec::with_capacity(n.min(m));
        for j in 0..n.min(m) {
            let norm = (j..m).map(|i| r.get(i, j).powi(2)).sum::<f64>().sqrt();
            let mut v: Vec<f64> = (j..m).map(|i| r.get(i, j)).collect();
            if norm > 0.0 {
                let alpha = if v[0] >= 0.0 { -norm } else { norm };
                v[0] -= alpha;
            }
            let vv: f64 = v.iter().map(|x| x * x).sum();
            if vv > 0.0 {
                for c in j..n {
                    let dot: f64 = v
                        .iter()
                        .enumerate()
                        .map(|(k, vk)| vk * r.get(j + k, c))
                        .sum();
                    let s = 2.0 * dot / vv;
                    for (k, vk) in v.iter().enumerate() {
                        let cur = r.get(j + k, c);
                        r.set(j + k, c, cur - s * vk);
                    }
                }
            }
            reflectors.push(v);
        }
        Self { r, reflectors }
    }

    /// Overwrites `b` with `Q^T b`.
    pub fn apply_qt(&self, b: &mut Mat) {
        for (j, v) in self.reflectors.iter().enumerate() {
            reflect(v, j, b);
        }
    }

    /// The full square orthogonal factor.
    pub fn q_full(&self) -> Mat {
        let m = self.r.rows();
        let mut q = Mat::identity(m);
        for (j, v) in self.reflectors.iter().enumerate().rev() {
            reflect(v, j, &mut q);
        }
        q
    }

    pub fn rank(&self) -> usize {
        let k = self.reflectors.len();
        let diag: Vec<f64> = (0..k).map(|j| self.r.get(j, j).abs()).collect();
        let top = diag.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            return 0;
        }
        diag.iter().filter(|&&d| d > RANK_TOL * top).count()
    }
}

fn reflect(v: &[f64], j: usize, b: &mut Mat) {
    let vv: f64 = v.iter().map(|x| x * x).sum();
    if vv == 0.0 {
        return;
    }
    for c in 0..b.cols() {
        let dot: f64 = v
            .iter()
            .enumerate()
            .map(|(k, vk)| vk * b.get(j + k, c))
            .sum();
        let s = 2.0 * dot / vv;
        for (k, vk) in v.iter().enumerate() {
            let cur = b.get(j + k, c);
            b.set(j + k, c, cur - s * vk);
        }
    }
}

/// Least-squares solution of `a x = b` for every column of `b`, with the
/// 2-norm of each column's residual.
pub fn lstsq(a: &Mat, b: &Mat) -> Result<(Mat, Vec<f64>)> {
    let (m, n) = a.shape();
    if b.rows() != m {
        return Err(Error::Dimension(format!(
            "least squares with {m} equations and {} right-hand rows",
            b.rows()
        )));
    }
    if m < n {
        return Err(Error::InsufficientEvaluations { need: n, have: m });
    }
    let qr = Qr::new(a);
    if qr.rank() < n {
        return Err(Error::DegenerateCode);
    }
    let mut qtb = b.clone();
    qr.apply_qt(&mut qtb);
    let mut x = Mat::zeros(n, b.cols());
    for c in 0..b.cols() {
        for i in (0..n).rev() {
            let mut s = qtb.get(i, c);
            for k in i + 1..n {
                s -= qr.r.get(i, k) * x.get(k, c);
            }
            x.set(i, c, s / qr.r.get(i, i));
        }
    }
    let residuals = (0..b.cols())
        .map(|c| (n..m).map(|i| qtb.get(i, c).powi(2)).sum::<f64>().sqrt())
        .collect();
    Ok((x, residuals))
}

/// Rows form an orthonormal basis of `{h : h^T a = 0}`.
pub fn left_null_space(a: &Mat) -> Result<Mat> {
    let (m, n) = a.shape();
    let qr = Qr::new(a);
    if qr.rank() < n.min(m) {
        return Err(Error::DegenerateCode);
    }
    let q = qr.q_full();
    let k = n.min(m);
    Ok(Mat::from_fn(m - k, m, |i, j| q.get(j, k + i)))
}

/// Solves a square system.
pub fn solve(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.rows() != a.cols() {
        return Err(Error::Dimension("solve needs a square matrix".into()));
    }
    lstsq(a, b).map(|(x, _)| x)
}
