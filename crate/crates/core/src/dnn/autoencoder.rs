//! Sparse autoencoder pieces: hidden-unit activity and the KL penalty.

use crate::cluster::FaultSchedule;
use crate::dnn::protocol::{train, TrainConfig, TrainReport};
use crate::dnn::{g_from_output, Objective};
use crate::error::{Error, Result};
use crate::matrix::Mat;

/// Coded training of an `N0 -> N1 -> N0` sparse autoencoder.
pub fn autoencoder_train(cfg: &TrainConfig, schedule: &FaultSchedule) -> Result<TrainReport> {
    if !matches!(cfg.objective, Objective::SparseAutoencoder { .. }) {
        return Err(Error::InvalidParams(
            "objective is not a sparse autoencoder".into(),
        ));
    }
    train(cfg, schedule)
}

/// Mean activation of each hidden unit over the batch.
pub fn rho_hat(y1: &Mat) -> Vec<f64> {
    let b = y1.cols() as f64;
    (0..y1.rows())
        .map(|i| (0..y1.cols()).map(|c| y1.get(i, c)).sum::<f64>() / b)
        .collect()
}

fn check_rho_hat(rho_hat: &[f64]) -> Result<()> {
    match rho_hat.iter().position(|&r| r <= 0.0 || r >= 1.0) {
        Some(index) => Err(Error::SparsitySingularity {
            index,
            value: rho_hat[index],
        }),
        None => Ok(()),
    }
}

/// `weight * (-rho / rho_hat + (1 - rho) / (1 - rho_hat))` per unit.
pub fn q_rho(rho: f64, rho_hat: &[f64], weight: f64) -> Result<Vec<f64>> {
    check_rho_hat(rho_hat)?;
    Ok(rho_hat
        .iter()
        .map(|&r| weight * (-rho / r + (1.0 - rho) / (1.0 - r)))
        .collect())
}

/// `sum_i KL(rho || rho_hat_i)`.
pub fn kl_sum(rho: f64, rho_hat: &[f64]) -> Result<f64> {
    check_rho_hat(rho_hat)?;
    Ok(rho_hat
        .iter()
        .map(|&r| rho * (rho / r).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - r)).ln())
        .sum())
}

/// Hidden-layer error signal `(C - q 1^T) o y1 (1 - y1)`.
pub fn delta_auto(c: &Mat, q: &[f64], y1: &Mat) -> Result<Mat> {
    if q.len() != c.rows() {
        return Err(Error::Dimension(format!(
            "{} sparsity terms for {} hidden units",
            q.len(),
            c.rows()
        )));
    }
    let shifted = Mat::from_fn(c.rows(), c.cols(), |i, j| c.get(i, j) - q[i]);
    shifted.hadamard(&g_from_output(y1))
}
