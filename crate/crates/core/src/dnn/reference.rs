//! Uncoded SGD on a single machine; the yardstick for the coded runs.

use crate::dnn::autoencoder::{delta_auto, kl_sum, q_rho, rho_hat};
use crate::dnn::{activate, g_from_output, last_layer_delta, Dataset, Objective};
use crate::error::{Error, Result};
use crate::matrix::Mat;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub eta: f64,
    pub lambda: f64,
    pub objective: Objective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceNet {
    pub weights: Vec<Mat>,
}

/// Pre-activations `S^l` and activations `X^1 .. X^(L+1)` of one pass.
pub struct Trace {
    pub s: Vec<Mat>,
    pub x: Vec<Mat>,
}

impl ReferenceNet {
    pub fn new(weights: Vec<Mat>) -> Self {
        Self { weights }
    }

    pub fn forward(&self, x: &Mat) -> Result<Trace> {
        let mut xs = vec![x.clone()];
        let mut ss = Vec::with_capacity(self.weights.len());
        for w in &self.weights {
            let s = w.matmul(xs.last().expect("non-empty"))?;
            xs.push(activate(&s));
            ss.push(s);
        }
        Ok(Trace { s: ss, x: xs })
    }

    /// Per-layer error signals `Delta^l = -dE/dS^l` for the batch.
    pub fn deltas(&self, trace: &Trace, y: &Mat, objective: Objective) -> Result<Vec<Mat>> {
        let l_count = self.weights.len();
        let batch = y.cols() as f64;
        let mut out = vec![Mat::zeros(0, 0); l_count];
        let mut delta =
            last_layer_delta(&trace.x[l_count], y, &trace.s[l_count - 1])?.scale(1.0 / batch);
        for l in (0..l_count).rev() {
            let next = if l > 0 {
                let c = self.weights[l].transpose().matmul(&delta)?;
                Some(match objective {
                    Objective::SparseAutoencoder { beta_kl, rho } if l == 1 => {
                        let q = q_rho(rho, &rho_hat(&trace.x[1]), beta_kl / batch)?;
                        delta_auto(&c, &q, &trace.x[1])?
                    }
                    _ => c.hadamard(&g_from_output(&trace.x[l]))?,
                })
            } else {
                None
            };
            out[l] = std::mem::replace(&mut delta, next.unwrap_or_else(|| Mat::zeros(0, 0)));
        }
        Ok(out)
    }

    pub fn sgd_step(&mut self, x: &Mat, y: &Mat, hyper: &Hyper) -> Result<()> {
        let trace = self.forward(x)?;
        let deltas = self.deltas(&trace, y, hyper.objective)?;
        for (l, w) in self.weights.iter_mut().enumerate() {
            w.scale_in_place(1.0 - hyper.eta * hyper.lambda);
            w.add_scaled(hyper.eta, &deltas[l].matmul(&trace.x[l].transpose())?)?;
        }
        Ok(())
    }

    /// Mean squared error over the batch, plus `lambda/2 ||W||^2` and, for
    /// the autoencoder, the weighted KL sparsity term.
    pub fn loss(&self, x: &Mat, y: &Mat, hyper: &Hyper) -> Result<f64> {
        let trace = self.forward(x)?;
        let out = trace.x.last().expect("non-empty");
        let mut e = out.sub(y)?.frobenius_sq() / y.cols() as f64;
        e += 0.5 * hyper.lambda * self.weights.iter().map(Mat::frobenius_sq).sum::<f64>();
        if let Objective::SparseAutoencoder { beta_kl, rho } = hyper.objective {
            e += beta_kl * kl_sum(rho, &rho_hat(&trace.x[1]))?;
        }
        Ok(e)
    }
}

/// Runs `iterations` plain SGD steps from `init` on `data`.
pub fn uncoded_reference_train(
    init: Vec<Mat>,
    data: &Dataset,
    iterations: usize,
    hyper: &Hyper,
) -> Result<Vec<Mat>> {
    if init.is_empty() {
        return Err(Error::InvalidParams("network has no layers".into()));
    }
    let mut net = ReferenceNet::new(init);
    for k in 0..iterations {
        let (x, y) = data.batch(k);
        net.sgd_step(&x, &y, hyper)?;
    }
    Ok(net.weights)
}
