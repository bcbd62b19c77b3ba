//! Comparison strategies for one layer: replication with voting, and
//! separate systematic MDS codes for the feedforward and backprop products.

use std::collections::BTreeMap;

use crate::cluster::{apply_fault, FaultContext, FaultPlan, Step};
use crate::code::chebyshev_points;
use crate::decoder::{decode_block_stream, vandermonde, DecodeMode, LinearCode};
use crate::error::{Error, Result};
use crate::linalg::solve;
use crate::matrix::{block_partition, BlockGrid, Mat};

fn rollback(layer: usize, reason: &str) -> Error {
    Error::RollbackRequired {
        iteration: 0,
        layer,
        reason: reason.into(),
    }
}

fn with_fault(
    v: Mat,
    plan: &FaultPlan,
    step: Step,
    worker: usize,
    ctx: &FaultContext,
) -> Option<Mat> {
    match plan.for_worker(step, worker) {
        Some(spec) => apply_fault(&v, spec, &mut ctx.rng(step, worker)),
        None => Some(v),
    }
}

fn sum_blocks(parts: Vec<Option<Mat>>) -> Result<Option<Mat>> {
    let mut acc: Option<Mat> = None;
    for p in parts {
        let Some(p) = p else { return Ok(None) };
        match acc.as_mut() {
            Some(a) => a.add_scaled(1.0, &p)?,
            None => acc = Some(p),
        }
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Replication
// ---------------------------------------------------------------------------

/// `P / mn` full copies of an `m x n` block split; worker
/// `r * mn + i * n + j` holds block `(i, j)` of replica `r`.
#[derive(Debug, Clone)]
pub struct ReplicatedLayer {
    pub m: usize,
    pub n: usize,
    replicas: Vec<Vec<Mat>>,
}

impl ReplicatedLayer {
    pub fn new(w: &Mat, m: usize, n: usize, workers: usize) -> Result<Self> {
        if workers == 0 || !workers.is_multiple_of(m * n) {
            return Err(Error::Dimension(format!(
                "{workers} workers do not split into replicas of {}",
                m * n
            )));
        }
        let grid = block_partition(w, m, n)?;
        let blocks: Vec<Mat> = grid.iter().map(|(_, b)| b.clone()).collect();
        Ok(Self {
            m,
            n,
            replicas: vec![blocks; workers / (m * n)],
        })
    }

    pub fn worker(&self, replica: usize, i: usize, j: usize) -> usize {
        replica * self.m * self.n + i * self.n + j
    }

    pub fn replica_count(&self) -> usize {
        self.replicas.len()
    }

    pub fn weights(&self) -> Mat {
        BlockGrid::from_blocks(self.m, self.n, self.replicas[0].clone())
            .expect("consistent blocks")
            .assemble()
    }

    /// Accepts a value by strict majority (adversarial) or by any two
    /// replicas agreeing (probabilistic).
    fn vote(&self, candidates: &[Option<Mat>], model: DecodeMode) -> Option<Mat> {
        let r = candidates.len();
        let need = match model {
            DecodeMode::Adversarial => r / 2 + 1,
            DecodeMode::Probabilistic => 2.min(r),
        };
        for c in candidates.iter().flatten() {
            let agree = candidates.iter().flatten().filter(|o| *o == c).count();
            if agree >= need {
                return Some(c.clone());
            }
        }
        None
    }

    /// `W x` with faults at O1 on the block products.
    pub fn feedforward(
        &self,
        x: &Mat,
        plan: &FaultPlan,
        model: DecodeMode,
        ctx: &FaultContext,
    ) -> Result<Mat> {
        let xg = block_partition(x, self.n, 1)?;
        let mut rows = Vec::with_capacity(self.m);
        for i in 0..self.m {
            let mut cands = Vec::with_capacity(self.replica_count());
            for (r, blocks) in self.replicas.iter().enumerate() {
                let parts = (0..self.n)
                    .map(|j| {
                        let v = blocks[i * self.n + j].matmul(xg.block(j, 0))?;
                        Ok(with_fault(v, plan, Step::O1, self.worker(r, i, j), ctx))
                    })
                    .collect::<Result<Vec<_>>>()?;
                cands.push(sum_blocks(parts)?);
            }
            rows.push(
                self.vote(&cands, model)
                    .ok_or_else(|| rollback(ctx.layer, "replicas disagree"))?,
            );
        }
        Ok(BlockGrid::from_blocks(self.m, 1, rows)?.assemble())
    }

    /// `Delta^T W` with faults at O2 on the block products.
    pub fn backprop(
        &self,
        delta_t: &Mat,
        plan: &FaultPlan,
        model: DecodeMode,
        ctx: &FaultContext,
    ) -> Result<Mat> {
        let dg = block_partition(delta_t, 1, self.m)?;
        let mut cols = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let mut cands = Vec::with_capacity(self.replica_count());
            for (r, blocks) in self.replicas.iter().enumerate() {
                let parts = (0..self.m)
                    .map(|i| {
                        let v = dg.block(0, i).matmul(&blocks[i * self.n + j])?;
                        Ok(with_fault(v, plan, Step::O2, self.worker(r, i, j), ctx))
                    })
                    .collect::<Result<Vec<_>>>()?;
                cands.push(sum_blocks(parts)?);
            }
            cols.push(
                self.vote(&cands, model)
                    .ok_or_else(|| rollback(ctx.layer, "replicas disagree"))?,
            );
        }
        Ok(BlockGrid::from_blocks(1, self.n, cols)?.assemble())
    }

    pub fn update(&mut self, delta: &Mat, x: &Mat, eta: f64, lambda: f64) -> Result<()> {
        let dg = block_partition(delta, self.m, 1)?;
        let xg = block_partition(x, self.n, 1)?;
        for blocks in &mut self.replicas {
            for i in 0..self.m {
                for j in 0..self.n {
                    let b = &mut blocks[i * self.n + j];
                    b.scale_in_place(1.0 - eta * lambda);
                    b.add_scaled(eta, &dg.block(i, 0).matmul(&xg.block(j, 0).transpose())?)?;
                }
            }
        }
        Ok(())
    }
}

/// Products of one replicated training step.
#[derive(Debug, Clone)]
pub struct BaselineStep {
    pub s: Mat,
    pub c_t: Mat,
}

/// Feedforward, backprop with `delta`, then the update, on a replicated layer.
#[allow(clippy::too_many_arguments)]
pub fn replication_train_step(
    layer: &mut ReplicatedLayer,
    x: &Mat,
    delta: &Mat,
    eta: f64,
    lambda: f64,
    plan: &FaultPlan,
    model: DecodeMode,
    ctx: &FaultContext,
) -> Result<BaselineStep> {
    let s = layer.feedforward(x, plan, model, ctx)?;
    let c_t = layer.backprop(&delta.transpose(), plan, model, ctx)?;
    layer.update(delta, x, eta, lambda)?;
    Ok(BaselineStep { s, c_t })
}

// ---------------------------------------------------------------------------
// Systematic MDS
// ---------------------------------------------------------------------------

/// `rows x k` generator whose first `k` rows are the identity.
pub fn systematic_generator(rows: usize, k: usize) -> Result<Mat> {
    let v = vandermonde(&chebyshev_points(rows), k);
    let top = v.submatrix(0, 0, k, k);
    // G = V top^-1, i.e. solve top^T G^T = V^T
    let gt = solve(&top.transpose(), &v.transpose())?;
    let mut g = gt.transpose();
    for i in 0..k {
        for j in 0..k {
            g.set(i, j, if i == j { 1.0 } else { 0.0 });
        }
    }
    Ok(g)
}

/// `W` encoded on both sides: block `(r, c)` is
/// `sum_ij Gr[r, i] W_ij Gc[c, j]`. Only blocks with `r < P_f/n, c < n`
/// (feedforward nodes) or `r < m, c < P_b/m` (backprop nodes) are stored.
///
/// O1 faults index feedforward nodes as `r * n + c`; O2 faults index
/// backprop nodes as `c * m + r`.
#[derive(Debug, Clone)]
pub struct MdsLayer {
    pub m: usize,
    pub n: usize,
    row_gen: Mat,
    col_gen: Mat,
    row_code: LinearCode,
    col_code: LinearCode,
    blocks: BTreeMap<(usize, usize), Mat>,
}

impl MdsLayer {
    pub fn new(w: &Mat, m: usize, n: usize, p_f: usize, p_b: usize) -> Result<Self> {
        if !p_f.is_multiple_of(n) || !p_b.is_multiple_of(m) || p_f / n < m || p_b / m < n {
            return Err(Error::Dimension(format!(
                "P_f={p_f}, P_b={p_b} do not fit an {m}x{n} split"
            )));
        }
        let row_gen = systematic_generator(p_f / n, m)?;
        let col_gen = systematic_generator(p_b / m, n)?;
        let grid = block_partition(w, m, n)?;
        let mut layer = Self {
            m,
            n,
            row_code: LinearCode::from_generator(row_gen.clone())?,
            col_code: LinearCode::from_generator(col_gen.clone())?,
            row_gen,
            col_gen,
            blocks: BTreeMap::new(),
        };
        for (r, c) in layer.active_nodes() {
            let mut acc = Mat::zeros(grid.block_shape().0, grid.block_shape().1);
            for ((i, j), b) in grid.iter() {
                let s = layer.row_gen.get(r, i) * layer.col_gen.get(c, j);
                if s != 0.0 {
                    acc.add_scaled(s, b)?;
                }
            }
            layer.blocks.insert((r, c), acc);
        }
        Ok(layer)
    }

    fn active_nodes(&self) -> Vec<(usize, usize)> {
        let (rf, rb) = (self.row_gen.rows(), self.col_gen.rows());
        let mut out = Vec::new();
        for r in 0..rf.max(self.m) {
            for c in 0..rb.max(self.n) {
                if (r < rf && c < self.n) || (r < self.m && c < rb) {
                    out.push((r, c));
                }
            }
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn encoded_block(&self, r: usize, c: usize) -> Option<&Mat> {
        self.blocks.get(&(r, c))
    }

    /// The systematic region, which holds `W` itself.
    pub fn weights(&self) -> Mat {
        let blocks = (0..self.m)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .map(|k| self.blocks[&k].clone())
            .collect();
        BlockGrid::from_blocks(self.m, self.n, blocks)
            .expect("consistent blocks")
            .assemble()
    }

    fn decode(
        &self,
        code: &LinearCode,
        words: Vec<Option<Mat>>,
        model: DecodeMode,
        ctx: &FaultContext,
    ) -> Result<Vec<Mat>> {
        decode_block_stream(code, &words, model)?
            .blocks
            .ok_or_else(|| rollback(ctx.layer, "MDS decoding failed"))
    }

    pub fn feedforward(
        &self,
        x: &Mat,
        plan: &FaultPlan,
        model: DecodeMode,
        ctx: &FaultContext,
    ) -> Result<Mat> {
        let xg = block_partition(x, self.n, 1)?;
        let words = (0..self.row_gen.rows())
            .map(|r| {
                let parts = (0..self.n)
                    .map(|c| {
                        let v = self.blocks[&(r, c)].matmul(xg.block(c, 0))?;
                        Ok(with_fault(v, plan, Step::O1, r * self.n + c, ctx))
                    })
                    .collect::<Result<Vec<_>>>()?;
                sum_blocks(parts)
            })
            .collect::<Result<Vec<_>>>()?;
        let s = self.decode(&self.row_code, words, model, ctx)?;
        Ok(BlockGrid::from_blocks(self.m, 1, s)?.assemble())
    }

    pub fn backprop(
        &self,
        delta_t: &Mat,
        plan: &FaultPlan,
        model: DecodeMode,
        ctx: &FaultContext,
    ) -> Result<Mat> {
        let dg = block_partition(delta_t, 1, self.m)?;
        let words = (0..self.col_gen.rows())
            .map(|c| {
                let parts = (0..self.m)
                    .map(|r| {
                        let v = dg.block(0, r).matmul(&self.blocks[&(r, c)])?;
                        Ok(with_fault(v, plan, Step::O2, c * self.m + r, ctx))
                    })
                    .collect::<Result<Vec<_>>>()?;
                sum_blocks(parts)
            })
            .collect::<Result<Vec<_>>>()?;
        let c = self.decode(&self.col_code, words, model, ctx)?;
        Ok(BlockGrid::from_blocks(1, self.n, c)?.assemble())
    }

    pub fn update(&mut self, delta: &Mat, x: &Mat, eta: f64, lambda: f64) -> Result<()> {
        let dg = block_partition(delta, self.m, 1)?;
        let xg = block_partition(x, self.n, 1)?;
        let encode = |gen: &Mat, g: &BlockGrid, row: usize| -> Result<Mat> {
            let mut acc = Mat::zeros(g.block_shape().0, g.block_shape().1);
            for k in 0..g.grid_rows() {
                let s = gen.get(row, k);
                if s != 0.0 {
                    acc.add_scaled(s, g.block(k, 0))?;
                }
            }
            Ok(acc)
        };
        let keys: Vec<(usize, usize)> = self.blocks.keys().copied().collect();
        for (r, c) in keys {
            let dr = encode(&self.row_gen, &dg, r)?;
            let xc = encode(&self.col_gen, &xg, c)?;
            let b = self.blocks.get_mut(&(r, c)).expect("active node");
            b.scale_in_place(1.0 - eta * lambda);
            b.add_scaled(eta, &dr.matmul(&xc.transpose())?)?;
        }
        Ok(())
    }
}

/// Feedforward, backprop with `delta`, then the update, on an MDS layer.
#[allow(clippy::too_many_arguments)]
pub fn mds_train_step(
    layer: &mut MdsLayer,
    x: &Mat,
    delta: &Mat,
    eta: f64,
    lambda: f64,
    plan: &FaultPlan,
    model: DecodeMode,
    ctx: &FaultContext,
) -> Result<BaselineStep> {
    let s = layer.feedforward(x, plan, model, ctx)?;
    let c_t = layer.backprop(&delta.transpose(), plan, model, ctx)?;
    layer.update(delta, x, eta, lambda)?;
    Ok(BaselineStep { s, c_t })
}
