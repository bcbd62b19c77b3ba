//! Coded training: every layer's weights live only as encoded shards, one
//! per worker, and all three phases of SGD run on the shards.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use crate::cluster::{
    apply_fault, derive_seed, gather_and_decode, product_code, CostLedger, FaultContext, FaultPlan,
    FaultSchedule, Product, Step,
};
use crate::code::{
    encode_input_bp, encode_input_ff, encode_update_left, encode_update_right, encode_weight_shard,
    make_params, CodeParams, Substitution,
};
use crate::decoder::{
    code_from_points, decode_block_stream, vandermonde, DecodeMode, LinearCode, StreamOutcome,
};
use crate::dnn::autoencoder::{delta_auto, q_rho, rho_hat};
use crate::dnn::checkpoint::Checkpoint;
use crate::dnn::reference::{Hyper, ReferenceNet};
use crate::dnn::{
    activate, check_dims, g_from_output, init_weights, last_layer_delta, Dataset, Objective,
};
use crate::error::{Error, Result};
use crate::linalg::solve;
use crate::matrix::{BlockGrid, Mat};

const FAULT_TAG: u64 = 0xFA17;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// `N_0 .. N_L`.
    pub dims: Vec<usize>,
    pub batch: usize,
    pub eta: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub workers: usize,
    pub substitution: Substitution,
    pub mode: DecodeMode,
    pub checkpoint_interval: usize,
    pub alpha: f64,
    pub beta: f64,
    pub max_rollbacks: usize,
    pub objective: Objective,
    /// When set, checkpoints go through files in this directory.
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(dims: Vec<usize>, m: usize, n: usize, workers: usize) -> Self {
        Self {
            dims,
            batch: 1,
            eta: 0.1,
            lambda: 0.0,
            iterations: 100,
            seed: 0,
            m,
            n,
            d1: 1,
            d2: 1,
            workers,
            substitution: Substitution::UEqVn,
            mode: DecodeMode::Probabilistic,
            checkpoint_interval: 10,
            alpha: 1.0,
            beta: 1.0,
            max_rollbacks: 100,
            objective: Objective::Regression,
            checkpoint_dir: None,
        }
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            eta: self.eta,
            lambda: self.lambda,
            objective: self.objective,
        }
    }

    pub fn code_params(&self) -> Result<CodeParams> {
        make_params(
            self.m,
            self.n,
            self.d1,
            self.d2,
            self.workers,
            self.substitution,
        )
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(&self.dims)?;
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.batch == 0
            || !self.batch.is_multiple_of(self.d1)
            || !self.batch.is_multiple_of(self.d2)
        {
            return bad(format!(
                "batch {} must be a positive multiple of d1={} and d2={}",
                self.batch, self.d1, self.d2
            ));
        }
        for (l, w) in self.dims.windows(2).enumerate() {
            if w[1] % self.m != 0 || w[0] % self.n != 0 {
                return bad(format!(
                    "layer {} ({}x{}) does not split into {}x{} blocks",
                    l + 1,
                    w[1],
                    w[0],
                    self.m,
                    self.n
                ));
            }
        }
        if self.checkpoint_interval == 0 {
            return bad("checkpoint interval must be positive".into());
        }
        if !(self.eta.is_finite()
            && self.lambda.is_finite()
            && self.alpha.is_finite()
            && self.beta.is_finite())
        {
            return bad("non-finite hyperparameter".into());
        }
        if let Objective::SparseAutoencoder { rho, beta_kl } = self.objective {
            if self.dims.len() != 3 || self.dims[0] != self.dims[2] {
                return bad("the autoencoder needs dims N0,N1,N0".into());
            }
            if !(rho > 0.0 && rho < 1.0) || !beta_kl.is_finite() {
                return bad(format!("sparsity target {rho} must lie in (0, 1)"));
            }
        }
        let params = self.code_params()?;
        if self.dims.len() > 2 && params.workers < params.bp_unknowns() {
            return Err(Error::InsufficientWorkers {
                need: params.bp_unknowns(),
                have: params.workers,
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Layer state
// ---------------------------------------------------------------------------

/// One layer's encoded weights plus the codes used to decode its products.
#[derive(Debug, Clone)]
pub struct LayerState {
    /// 1-based layer number.
    pub index: usize,
    pub params: CodeParams,
    pub shards: Vec<Mat>,
    shape: (usize, usize),
    ff_code: LinearCode,
    bp_code: Option<LinearCode>,
    weight_code: LinearCode,
}

impl LayerState {
    pub fn encode(index: usize, w: &Mat, params: &CodeParams) -> Result<Self> {
        let shards = (0..params.workers)
            .map(|p| encode_weight_shard(w, params, p).map(|s| s.payload))
            .collect::<Result<Vec<_>>>()?;
        let bp_code = if params.workers >= params.bp_unknowns() {
            Some(product_code(params, Product::Backprop)?)
        } else {
            None
        };
        Ok(Self {
            index,
            params: params.clone(),
            shards,
            shape: w.shape(),
            ff_code: product_code(params, Product::Feedforward)?,
            bp_code,
            weight_code: code_from_points(params.base_points(), params.m * params.n)?,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    /// Recovers `W` from the shards, correcting corrupted shards if possible.
    pub fn decode_weights(&self, mode: DecodeMode) -> Result<Option<Mat>> {
        let payloads: Vec<Option<Mat>> = self.shards.iter().cloned().map(Some).collect();
        let dec = decode_block_stream(&self.weight_code, &payloads, mode)?;
        let Some(coef) = dec.blocks else {
            return Ok(None);
        };
        let (m, n) = (self.params.m, self.params.n);
        let blocks = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| coef[self.params.weight_exponent(i, j)].clone())
            .collect();
        Ok(Some(BlockGrid::from_blocks(m, n, blocks)?.assemble()))
    }
}

/// A decoded product and what the decoder saw.
#[derive(Debug, Clone)]
pub struct LayerPass {
    pub value: Mat,
    pub outcome: StreamOutcome,
    pub erased: BTreeSet<usize>,
}

fn planned(
    value: Mat,
    plan: &FaultPlan,
    step: Step,
    worker: usize,
    ctx: &FaultContext,
) -> Option<Mat> {
    match plan.for_worker(step, worker) {
        Some(spec) => apply_fault(&value, spec, &mut ctx.rng(step, worker)),
        None => Some(value),
    }
}

fn rollback(ctx: &FaultContext, reason: &str) -> Error {
    Error::RollbackRequired {
        iteration: ctx.iteration,
        layer: ctx.layer,
        reason: reason.into(),
    }
}

fn finish_pass(
    state: &LayerState,
    code: &LinearCode,
    product: Product,
    outputs: Vec<Option<Mat>>,
    mode: DecodeMode,
    ctx: &FaultContext,
    ledger: &mut CostLedger,
) -> Result<LayerPass> {
    let erased = (0..outputs.len())
        .filter(|&p| outputs[p].is_none())
        .collect();
    match gather_and_decode(&state.params, code, product, &outputs, mode, ledger) {
        Ok((Some(value), outcome)) => Ok(LayerPass {
            value,
            outcome,
            erased,
        }),
        Ok((None, _)) => Err(rollback(ctx, "decoding failed")),
        Err(Error::InsufficientEvaluations { .. }) => Err(rollback(ctx, "too many erasures")),
        Err(e) => Err(e),
    }
}

/// `S = W X` from the shards. C1 and ENCODE faults hit the encoded input,
/// O1 faults the worker's product.
pub fn feedforward_layer(
    state: &LayerState,
    x: &Mat,
    plan: &FaultPlan,
    mode: DecodeMode,
    ctx: &FaultContext,
    ledger: &mut CostLedger,
) -> Result<LayerPass> {
    let mut outputs = Vec::with_capacity(state.params.workers);
    for (p, shard) in state.shards.iter().enumerate() {
        let mut xp = Some(encode_input_ff(x, &state.params, p)?.payload);
        for step in [Step::Encode, Step::C1] {
            xp = xp.and_then(|v| planned(v, plan, step, p, ctx));
        }
        outputs.push(match xp {
            Some(xp) => planned(shard.matmul(&xp)?, plan, Step::O1, p, ctx),
            None => None,
        });
    }
    finish_pass(
        state,
        &state.ff_code,
        Product::Feedforward,
        outputs,
        mode,
        ctx,
        ledger,
    )
}

/// `C^T = Delta^T W` from the shards, with C2 and O2 faults.
pub fn backprop_layer(
    state: &LayerState,
    delta_t: &Mat,
    plan: &FaultPlan,
    mode: DecodeMode,
    ctx: &FaultContext,
    ledger: &mut CostLedger,
) -> Result<LayerPass> {
    let Some(code) = &state.bp_code else {
        return Err(Error::InsufficientWorkers {
            need: state.params.bp_unknowns(),
            have: state.params.workers,
        });
    };
    let mut outputs = Vec::with_capacity(state.params.workers);
    for (p, shard) in state.shards.iter().enumerate() {
        let mut dp = Some(encode_input_bp(delta_t, &state.params, p)?.payload);
        for step in [Step::Encode, Step::C2] {
            dp = dp.and_then(|v| planned(v, plan, step, p, ctx));
        }
        outputs.push(match dp {
            Some(dp) => planned(dp.matmul(shard)?, plan, Step::O2, p, ctx),
            None => None,
        });
    }
    finish_pass(state, code, Product::Backprop, outputs, mode, ctx, ledger)
}

/// Applies `W <- (1 - eta lambda) W + eta Delta X^T` shard by shard, then
/// any O3 faults. Returns the workers whose shards a fault overwrote.
pub fn coded_update(
    state: &mut LayerState,
    delta: &Mat,
    x: &Mat,
    eta: f64,
    lambda: f64,
    plan: &FaultPlan,
    ctx: &FaultContext,
) -> Result<Vec<usize>> {
    let decay = 1.0 - eta * lambda;
    let mut hit = Vec::new();
    for p in 0..state.params.workers {
        let left = encode_update_left(delta, &state.params, p)?;
        let right = encode_update_right(x, &state.params, p)?;
        let shard = &mut state.shards[p];
        shard.scale_in_place(decay);
        shard.add_scaled(eta, &left.matmul(&right.transpose())?)?;
        if let Some(spec) = plan.for_worker(Step::O3, p) {
            let (r, c) = shard.shape();
            *shard = apply_fault(shard, spec, &mut ctx.rng(Step::O3, p))
                .unwrap_or_else(|| Mat::zeros(r, c));
            hit.push(p);
        }
    }
    Ok(hit)
}

/// All-gathers the first `samples` entries of every node's decoded copy and
/// reports whether they all agree.
pub fn verification_exchange(
    copies: &[Option<Mat>],
    samples: usize,
    ledger: &mut CostLedger,
) -> bool {
    ledger.all_gather(copies.len(), samples as f64);
    let Some(Some(first)) = copies.first() else {
        return false;
    };
    let k = samples.min(first.len());
    let head = &first.as_slice()[..k];
    copies.iter().all(|c| match c {
        Some(c) => c.shape() == first.shape() && &c.as_slice()[..k] == head,
        None => false,
    })
}

/// Rebuilds worker `bad`'s shard from `mn` trusted shards.
///
/// The shard polynomial has degree `mn - 1` in the base point, so the
/// rebuilt value is a fixed linear combination of the trusted shards,
/// applied entry by entry.
pub fn regenerate_shard(state: &LayerState, bad: usize, trusted: &[usize]) -> Result<Mat> {
    let k = state.params.m * state.params.n;
    let pick: Vec<usize> = trusted
        .iter()
        .copied()
        .filter(|&p| p != bad)
        .take(k)
        .collect();
    if pick.len() < k {
        return Err(Error::InsufficientWorkers {
            need: k,
            have: pick.len(),
        });
    }
    let pts: Vec<f64> = pick.iter().map(|&p| state.params.base_point(p)).collect();
    let v = vandermonde(&pts, k);
    let target = vandermonde(&[state.params.base_point(bad)], k);
    // weights solve V^T w = phi(t_bad)
    let w = solve(&v.transpose(), &target.transpose())?;
    let (r, c) = state.shards[pick[0]].shape();
    let mut out = Mat::zeros(r, c);
    for (i, &p) in pick.iter().enumerate() {
        out.add_scaled(w.get(i, 0), &state.shards[p])?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationKind {
    Encode,
    Update,
    Regenerate,
    Restore,
    /// An injected O3 fault overwrote the shard.
    Fault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditEntry {
    pub iteration: usize,
    pub layer: usize,
    pub worker: usize,
    pub kind: MutationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Ok,
    Corrected,
    Rollback,
}

impl StepOutcome {
    pub fn name(self) -> &'static str {
        match self {
            StepOutcome::Ok => "OK",
            StepOutcome::Corrected => "CORRECTED",
            StepOutcome::Rollback => "ROLLBACK",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub layer: usize,
    pub step: Step,
    pub outcome: StepOutcome,
    pub errors_corrected: usize,
    pub error_locations: Vec<usize>,
    pub comm_cost: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub log: Vec<LogRow>,
    pub audit: Vec<AuditEntry>,
    pub rollbacks: usize,
    pub ledger_total: f64,
    /// Decoded weights after the last iteration.
    pub weights: Vec<Mat>,
    /// `(iteration, max relative deviation from the uncoded run)` at each checkpoint.
    pub checkpoint_deviation: Vec<(usize, f64)>,
    pub final_deviation: f64,
}

impl TrainReport {
    pub fn max_deviation(&self) -> f64 {
        self.checkpoint_deviation
            .iter()
            .map(|&(_, d)| d)
            .fold(self.final_deviation, f64::max)
    }
}

enum Flow {
    Done,
    Rollback { layer: usize, step: Step, cost: f64 },
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    schedule: &'a FaultSchedule,
    fault_seed: u64,
    fired: BTreeSet<(usize, usize, Step)>,
    layers: Vec<LayerState>,
    data: Dataset,
    ledger: CostLedger,
    log: Vec<LogRow>,
    audit: Vec<AuditEntry>,
}

fn deviation(a: &[Mat], b: &[Mat]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.rel_diff(y))
        .fold(0.0, f64::max)
}

impl<'a> Run<'a> {
    /// Faults scheduled for `(k, l)` at `steps` that have not fired yet;
    /// each scheduled fault fires at most once, so replays run clean.
    fn take_plan(&mut self, k: usize, l: usize, steps: &[Step]) -> FaultPlan {
        let mut plan = FaultPlan::none();
        for f in self.schedule.plan(k, l).faults {
            if steps.contains(&f.step) && !self.fired.contains(&(k, l, f.step)) {
                plan.faults.push(f);
            }
        }
        for &s in steps {
            self.fired.insert((k, l, s));
        }
        plan
    }

    fn ctx(&self, k: usize, l: usize) -> FaultContext {
        FaultContext {
            root_seed: self.fault_seed,
            iteration: k,
            layer: l,
        }
    }

    fn encode_all(&mut self, weights: &[Mat], k: usize, kind: MutationKind) -> Result<()> {
        let params = self.cfg.code_params()?;
        self.layers = weights
            .iter()
            .enumerate()
            .map(|(l, w)| LayerState::encode(l + 1, w, &params))
            .collect::<Result<Vec<_>>>()?;
        for l in 1..=weights.len() {
            for p in 0..params.workers {
                self.audit.push(AuditEntry {
                    iteration: k,
                    layer: l,
                    worker: p,
                    kind,
                });
            }
        }
        Ok(())
    }

    fn decode_all(&self) -> Result<Option<Vec<Mat>>> {
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            match layer.decode_weights(self.cfg.mode)? {
                Some(w) => out.push(w),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    /// Regenerates flagged shards; false if too few trusted shards remain.
    fn regenerate(&mut self, k: usize, l: usize, pass: &LayerPass) -> Result<bool> {
        let flagged = pass.outcome.locations();
        if flagged.is_empty() {
            return Ok(true);
        }
        let trusted: Vec<usize> = (0..self.cfg.workers)
            .filter(|p| !flagged.contains(p) && !pass.erased.contains(p))
            .collect();
        for &bad in &flagged {
            let fresh = match regenerate_shard(&self.layers[l - 1], bad, &trusted) {
                Ok(s) => s,
                Err(Error::InsufficientWorkers { .. }) => return Ok(false),
                Err(e) => return Err(e),
            };
            self.layers[l - 1].shards[bad] = fresh;
            self.audit.push(AuditEntry {
                iteration: k,
                layer: l,
                worker: bad,
                kind: MutationKind::Regenerate,
            });
        }
        Ok(true)
    }

    fn record(&mut self, k: usize, l: usize, step: Step, outcome: &StreamOutcome, cost: f64) {
        let locs: Vec<usize> = outcome.locations().into_iter().collect();
        self.log.push(LogRow {
            iteration: k,
            layer: l,
            step,
            outcome: if locs.is_empty() {
                StepOutcome::Ok
            } else {
                StepOutcome::Corrected
            },
            errors_corrected: locs.len(),
            error_locations: locs,
            comm_cost: cost,
        });
    }

    /// Runs one coded product with regeneration and the verification
    /// exchange, logging the step.
    fn product(
        &mut self,
        k: usize,
        l: usize,
        step: Step,
        input: &Mat,
    ) -> Result<std::result::Result<Mat, Flow>> {
        let steps: &[Step] = match step {
            Step::O1 => &[Step::Encode, Step::C1, Step::O1, Step::Decode],
            _ => &[Step::C2, Step::O2],
        };
        let plan = self.take_plan(k, l, steps);
        let ctx = self.ctx(k, l);
        let mut local = CostLedger::new(self.cfg.alpha, self.cfg.beta);
        let res = match step {
            Step::O1 => feedforward_layer(
                &self.layers[l - 1],
                input,
                &plan,
                self.cfg.mode,
                &ctx,
                &mut local,
            ),
            _ => backprop_layer(
                &self.layers[l - 1],
                input,
                &plan,
                self.cfg.mode,
                &ctx,
                &mut local,
            ),
        };
        self.ledger.absorb(&local);
        let pass = match res {
            Ok(p) => p,
            Err(Error::RollbackRequired { .. }) => {
                return Ok(Err(Flow::Rollback {
                    layer: l,
                    step,
                    cost: local.total(),
                }))
            }
            Err(e) => return Err(e),
        };
        if !self.regenerate(k, l, &pass)? {
            return Ok(Err(Flow::Rollback {
                layer: l,
                step,
                cost: local.total(),
            }));
        }
        let copies: Vec<Option<Mat>> = (0..self.cfg.workers)
            .map(|p| planned(pass.value.clone(), &plan, Step::Decode, p, &ctx))
            .collect();
        let mut verify = CostLedger::new(self.cfg.alpha, self.cfg.beta);
        let agree = verification_exchange(&copies, self.cfg.workers, &mut verify);
        self.ledger.absorb(&verify);
        let cost = local.total() + verify.total();
        if !agree {
            return Ok(Err(Flow::Rollback {
                layer: l,
                step,
                cost,
            }));
        }
        self.record(k, l, step, &pass.outcome, cost);
        Ok(Ok(pass.value))
    }

    fn iteration(&mut self, k: usize) -> Result<Flow> {
        let (x, y) = self.data.batch(k);
        let depth = self.layers.len();
        let mut acts = vec![x];
        let mut pre = Vec::with_capacity(depth);
        for l in 1..=depth {
            let s = match self.product(k, l, Step::O1, &acts[l - 1])? {
                Ok(s) => s,
                Err(flow) => return Ok(flow),
            };
            acts.push(activate(&s));
            pre.push(s);
        }
        let batch = self.cfg.batch as f64;
        let mut delta = last_layer_delta(&acts[depth], &y, &pre[depth - 1])?.scale(1.0 / batch);
        for l in (1..=depth).rev() {
            let next = if l > 1 {
                let c_t = match self.product(k, l, Step::O2, &delta.transpose())? {
                    Ok(c) => c,
                    Err(flow) => return Ok(flow),
                };
                let c = c_t.transpose();
                Some(match self.cfg.objective {
                    Objective::SparseAutoencoder { beta_kl, rho } if l == 2 => {
                        let q = q_rho(rho, &rho_hat(&acts[1]), beta_kl / batch)?;
                        delta_auto(&c, &q, &acts[1])?
                    }
                    _ => c.hadamard(&g_from_output(&acts[l - 1]))?,
                })
            } else {
                None
            };
            let plan = self.take_plan(k, l, &[Step::O3]);
            let ctx = self.ctx(k, l);
            let hit = coded_update(
                &mut self.layers[l - 1],
                &delta,
                &acts[l - 1],
                self.cfg.eta,
                self.cfg.lambda,
                &plan,
                &ctx,
            )?;
            for p in 0..self.cfg.workers {
                self.audit.push(AuditEntry {
                    iteration: k,
                    layer: l,
                    worker: p,
                    kind: MutationKind::Update,
                });
            }
            for p in hit {
                self.audit.push(AuditEntry {
                    iteration: k,
                    layer: l,
                    worker: p,
                    kind: MutationKind::Fault,
                });
            }
            self.record(k, l, Step::O3, &StreamOutcome::NoErrors, 0.0);
            if let Some(n) = next {
                delta = n;
            }
        }
        Ok(Flow::Done)
    }
}

fn checkpoint_path(cfg: &TrainConfig) -> Option<PathBuf> {
    cfg.checkpoint_dir
        .as_ref()
        .map(|d| d.join("checkpoint.gpdc"))
}

/// Trains with coded weights under `schedule`, checkpointing every
/// `checkpoint_interval` iterations and rolling back on decoding failure.
pub fn train(cfg: &TrainConfig, schedule: &FaultSchedule) -> Result<TrainReport> {
    cfg.validate()?;
    let init = init_weights(&cfg.dims, cfg.seed);
    let mut run = Run {
        cfg,
        schedule,
        fault_seed: derive_seed(cfg.seed, &[FAULT_TAG]),
        fired: BTreeSet::new(),
        layers: Vec::new(),
        data: Dataset::new(&cfg.dims, cfg.batch, cfg.seed, cfg.objective),
        ledger: CostLedger::new(cfg.alpha, cfg.beta),
        log: Vec::new(),
        audit: Vec::new(),
    };
    run.encode_all(&init, 0, MutationKind::Encode)?;

    let hyper = cfg.hyper();
    let mut oracle = ReferenceNet::new(init.clone());
    let mut oracle_at = 0;
    let mut checkpoint_deviation: BTreeMap<usize, f64> = BTreeMap::new();
    let mut checkpoint: Option<Checkpoint> = None;
    let mut rollbacks = 0;
    let mut k = 0;

    while k < cfg.iterations {
        if k % cfg.checkpoint_interval == 0 && checkpoint.as_ref().map(|c| c.iteration) != Some(k) {
            if let Some(weights) = run.decode_all()? {
                while oracle_at < k {
                    let (x, y) = run.data.batch(oracle_at);
                    oracle.sgd_step(&x, &y, &hyper)?;
                    oracle_at += 1;
                }
                checkpoint_deviation.insert(k, deviation(&weights, &oracle.weights));
                let c = Checkpoint::new(k, cfg.seed, weights)?;
                if let Some(path) = checkpoint_path(cfg) {
                    c.save(&path)?;
                }
                checkpoint = Some(c);
            }
        }
        match run.iteration(k)? {
            Flow::Done => k += 1,
            Flow::Rollback { layer, step, cost } => {
                run.log.push(LogRow {
                    iteration: k,
                    layer,
                    step,
                    outcome: StepOutcome::Rollback,
                    errors_corrected: 0,
                    error_locations: Vec::new(),
                    comm_cost: cost,
                });
                rollbacks += 1;
                if rollbacks > cfg.max_rollbacks {
                    return Err(Error::Unrecoverable(format!(
                        "{rollbacks} rollbacks, last at iteration {k} layer {layer}"
                    )));
                }
                let restored = match checkpoint_path(cfg) {
                    Some(path) => Checkpoint::load(&path)?,
                    None => checkpoint
                        .clone()
                        .ok_or_else(|| Error::Unrecoverable("no checkpoint to restore".into()))?,
                };
                run.encode_all(&restored.weights, restored.iteration, MutationKind::Restore)?;
                k = restored.iteration;
            }
        }
    }

    let weights = run
        .decode_all()?
        .ok_or_else(|| Error::Unrecoverable("final weights do not decode".into()))?;
    while oracle_at < cfg.iterations {
        let (x, y) = run.data.batch(oracle_at);
        oracle.sgd_step(&x, &y, &hyper)?;
        oracle_at += 1;
    }
    Ok(TrainReport {
        final_deviation: deviation(&weights, &oracle.weights),
        log: run.log,
        audit: run.audit,
        rollbacks,
        ledger_total: run.ledger.total(),
        weights,
        checkpoint_deviation: checkpoint_deviation.into_iter().collect(),
    })
}
