//! Fully connected sigmoid networks trained by SGD, plain and coded.

pub mod autoencoder;
pub mod baselines;
pub mod checkpoint;
pub mod protocol;
pub mod reference;
pub mod tolerance;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cluster::derive_seed;
use crate::error::{Error, Result};
use crate::matrix::Mat;

pub fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

pub fn activate(s: &Mat) -> Mat {
    s.map(sigmoid)
}

/// `f'` written in terms of the activation output: `y (1 - y)`.
pub fn g_from_output(y: &Mat) -> Mat {
    y.map(|v| v * (1.0 - v))
}

pub fn f_prime(s: &Mat) -> Mat {
    s.map(|u| {
        let y = sigmoid(u);
        y * (1.0 - y)
    })
}

/// `2 (y - y_hat) o f'(s_L)`, computed column by column.
pub fn last_layer_delta(y_hat: &Mat, y: &Mat, s_last: &Mat) -> Result<Mat> {
    y.sub(y_hat)?.scale(2.0).hadamard(&f_prime(s_last))
}

/// What the network is trained to do.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Match targets from a fixed random teacher.
    Regression,
    /// Reconstruct the input with a KL sparsity penalty on the hidden layer.
    SparseAutoencoder { beta_kl: f64, rho: f64 },
}

const DATA_TAG: u64 = 0xDA7A;
const INIT_TAG: u64 = 0x1417;
const TEACHER_TAG: u64 = 0x7EAC;

fn gaussian_mat(rows: usize, cols: usize, std: f64, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("positive std");
    Mat::from_fn(rows, cols, |_, _| normal.sample(&mut rng))
}

/// Synthetic data; the batch for iteration `k` depends only on `(seed, k)`.
#[derive(Debug, Clone)]
pub struct Dataset {
    seed: u64,
    batch: usize,
    objective: Objective,
    teacher: Mat,
}

impl Dataset {
    pub fn new(dims: &[usize], batch: usize, seed: u64, objective: Objective) -> Self {
        let (n0, nl) = (dims[0], dims[dims.len() - 1]);
        let teacher = gaussian_mat(
            nl,
            n0,
            2.0 / (n0 as f64).sqrt(),
            derive_seed(seed, &[TEACHER_TAG]),
        );
        Self {
            seed,
            batch,
            objective,
            teacher,
        }
    }

    /// `(X, Y)` for iteration `k`.
    pub fn batch(&self, k: usize) -> (Mat, Mat) {
        let n0 = self.teacher.cols();
        let z = gaussian_mat(
            n0,
            self.batch,
            1.0,
            derive_seed(self.seed, &[DATA_TAG, k as u64]),
        );
        match self.objective {
            Objective::Regression => {
                let y = activate(&self.teacher.matmul(&z).expect("teacher shape"));
                (z, y)
            }
            Objective::SparseAutoencoder { .. } => {
                let x = activate(&z);
                (x.clone(), x)
            }
        }
    }
}

/// Gaussian weights scaled by fan-in, one matrix per layer.
pub fn init_weights(dims: &[usize], seed: u64) -> Vec<Mat> {
    dims.windows(2)
        .enumerate()
        .map(|(l, w)| {
            gaussian_mat(
                w[1],
                w[0],
                1.0 / (w[0] as f64).sqrt(),
                derive_seed(seed, &[INIT_TAG, l as u64]),
            )
        })
        .collect()
}

pub(crate) fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidParams(format!(
            "layer sizes {dims:?} need at least two positive entries"
        )));
    }
    Ok(())
}
