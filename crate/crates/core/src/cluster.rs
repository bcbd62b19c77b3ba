//! Simulated `P`-worker cluster: fault injection, communication costs and
//! the coded matrix products built from them.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::code::{encode_input_bp, encode_input_ff, encode_weight_shard, CodeParams};
use crate::decoder::{
    code_from_points, decode_block_stream, DecodeMode, LinearCode, StreamOutcome,
};
use crate::error::{Error, Result};
use crate::matrix::{BlockGrid, Mat};

// ---------------------------------------------------------------------------
// Faults
// ---------------------------------------------------------------------------

/// Points in a training iteration where a worker's value can go bad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Step {
    /// Encoded feedforward product.
    O1,
    /// Encoded backprop product.
    O2,
    /// Weight shard after its update.
    O3,
    /// Local feedforward input encoding.
    C1,
    /// Local backprop input encoding.
    C2,
    Encode,
    Decode,
}

impl Step {
    pub const ALL: [Step; 7] = [
        Step::O1,
        Step::O2,
        Step::O3,
        Step::C1,
        Step::C2,
        Step::Encode,
        Step::Decode,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Step::O1 => "O1",
            Step::O2 => "O2",
            Step::O3 => "O3",
            Step::C1 => "C1",
            Step::C2 => "C2",
            Step::Encode => "ENCODE",
            Step::Decode => "DECODE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Step::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaultSpec {
    /// The value never arrives.
    Erase,
    /// Additive `N(0, sigma^2)` noise on every entry.
    Gaussian { sigma: f64 },
    /// Every entry replaced by a value drawn from `seed` alone, so faults
    /// sharing a seed agree with each other.
    AdversarialValue { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fault {
    pub step: Step,
    pub worker: usize,
    pub spec: FaultSpec,
}

/// Faults for one coded operation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultPlan {
    pub faults: Vec<Fault>,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with(mut self, step: Step, worker: usize, spec: FaultSpec) -> Self {
        self.faults.push(Fault { step, worker, spec });
        self
    }

    pub fn at(&self, step: Step) -> impl Iterator<Item = &Fault> {
        self.faults.iter().filter(move |f| f.step == step)
    }

    pub fn for_worker(&self, step: Step, worker: usize) -> Option<FaultSpec> {
        self.faults
            .iter()
            .find(|f| f.step == step && f.worker == worker)
            .map(|f| f.spec)
    }

    pub fn count(&self, step: Step) -> usize {
        self.at(step).count()
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }

    /// Checks a bounded-adversary budget: at most `t1` faults at O1 and C1
    /// combined, `t2` at O2 and C2, and `t3` at O3.
    pub fn within_budget(&self, t1: usize, t2: usize, t3: usize) -> bool {
        self.count(Step::O1) + self.count(Step::C1) <= t1
            && self.count(Step::O2) + self.count(Step::C2) <= t2
            && self.count(Step::O3) <= t3
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a stream seed from a root seed and a path of indices.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(root), |acc, &x| splitmix(acc ^ splitmix(x)))
}

/// Where a product sits in a run; fault randomness is keyed on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FaultContext {
    pub root_seed: u64,
    pub iteration: usize,
    pub layer: usize,
}

impl FaultContext {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            iteration: 0,
            layer: 0,
        }
    }

    pub fn rng(&self, step: Step, worker: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(
            self.root_seed,
            &[
                self.iteration as u64,
                self.layer as u64,
                step.tag(),
                worker as u64,
            ],
        ))
    }
}

/// Applies `spec` to `value`; `None` means the value was erased.
pub fn apply_fault(value: &Mat, spec: FaultSpec, rng: &mut impl Rng) -> Option<Mat> {
    match spec {
        FaultSpec::Erase => None,
        FaultSpec::Gaussian { sigma } => {
            let Ok(normal) = Normal::new(0.0, sigma) else {
                return Some(value.clone());
            };
            Some(value.map(|v| v + normal.sample(rng)))
        }
        FaultSpec::AdversarialValue { seed } => {
            let mut own = ChaCha8Rng::seed_from_u64(seed);
            Some(value.map(|_| own.random_range(-10.0..10.0)))
        }
    }
}

fn faulted(
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

// ---------------------------------------------------------------------------
// Communication costs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommKind {
    Broadcast,
    AllGather,
    PointToPoint,
}

impl CommKind {
    pub fn name(self) -> &'static str {
        match self {
            CommKind::Broadcast => "BROADCAST",
            CommKind::AllGather => "ALL_GATHER",
            CommKind::PointToPoint => "P2P",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommEvent {
    pub kind: CommKind,
    pub workers: usize,
    pub words: f64,
    pub cost: f64,
}

pub fn broadcast_cost(alpha: f64, beta: f64, workers: usize, words: f64) -> f64 {
    alpha * (workers as f64).log2() + beta * words
}

pub fn all_gather_cost(alpha: f64, beta: f64, workers: usize, words: f64) -> f64 {
    alpha * (workers as f64).log2() + 2.0 * beta * workers as f64 * words
}

pub fn point_to_point_cost(alpha: f64, beta: f64, words: f64) -> f64 {
    alpha + beta * words
}

/// Per-worker words received by all-gathers in a coded product, summed
/// over the decoding set.
pub fn worker_comm_total(m: usize, n: usize, d1: usize, n1: usize, batch: usize) -> f64 {
    (m * n * d1 + n - 1) as f64 * (n1 * batch) as f64 / (m * d1) as f64
}

/// Accumulates the alpha-beta cost of every collective.
#[derive(Debug, Clone, PartialEq)]
pub struct CostLedger {
    pub alpha: f64,
    pub beta: f64,
    pub events: Vec<CommEvent>,
}

impl Default for CostLedger {
    fn default() -> Self {
        Self::new(1.0, 1.0)
    }
}

impl CostLedger {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            events: Vec::new(),
        }
    }

    pub fn broadcast(&mut self, workers: usize, words: f64) -> f64 {
        let cost = broadcast_cost(self.alpha, self.beta, workers, words);
        self.push(CommKind::Broadcast, workers, words, cost)
    }

    pub fn all_gather(&mut self, workers: usize, words: f64) -> f64 {
        let cost = all_gather_cost(self.alpha, self.beta, workers, words);
        self.push(CommKind::AllGather, workers, words, cost)
    }

    pub fn point_to_point(&mut self, words: f64) -> f64 {
        let cost = point_to_point_cost(self.alpha, self.beta, words);
        self.push(CommKind::PointToPoint, 2, words, cost)
    }

    fn push(&mut self, kind: CommKind, workers: usize, words: f64, cost: f64) -> f64 {
        self.events.push(CommEvent {
            kind,
            workers,
            words,
            cost,
        });
        cost
    }

    pub fn total(&self) -> f64 {
        self.events.iter().map(|e| e.cost).sum()
    }

    pub fn absorb(&mut self, other: &CostLedger) {
        self.events.extend(other.events.iter().cloned());
    }
}

// ---------------------------------------------------------------------------
// Coded products
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Product {
    Feedforward,
    Backprop,
}

/// The Vandermonde code over the workers' base points for one product.
pub fn product_code(params: &CodeParams, product: Product) -> Result<LinearCode> {
    let q = match product {
        Product::Feedforward => params.ff_unknowns(),
        Product::Backprop => params.bp_unknowns(),
    };
    if params.workers < q {
        return Err(Error::InsufficientWorkers {
            need: q,
            have: params.workers,
        });
    }
    code_from_points(params.base_points(), q)
}

/// Picks the target coefficients out of a decoded product and tiles them.
pub fn assemble_target(params: &CodeParams, product: Product, blocks: &[Mat]) -> Result<Mat> {
    let (rows, cols, exps) = match product {
        Product::Feedforward => (params.m, params.d1, params.target_exponents_ff()),
        Product::Backprop => (params.d2, params.n, params.target_exponents_bp()),
    };
    let picked: Vec<Mat> = exps.values().map(|&e| blocks[e].clone()).collect();
    Ok(BlockGrid::from_blocks(rows, cols, picked)?.assemble())
}

/// Decoded result of one coded product.
#[derive(Debug, Clone)]
pub struct CodedProduct {
    /// `None` when decoding failed.
    pub result: Option<Mat>,
    pub outcome: StreamOutcome,
    pub ledger: CostLedger,
}

/// Gathers worker outputs and decodes them into the product.
pub fn gather_and_decode(
    params: &CodeParams,
    code: &LinearCode,
    product: Product,
    outputs: &[Option<Mat>],
    mode: DecodeMode,
    ledger: &mut CostLedger,
) -> Result<(Option<Mat>, StreamOutcome)> {
    let words = outputs
        .iter()
        .flatten()
        .next()
        .map(|m| m.len() as f64)
        .unwrap_or(0.0);
    ledger.all_gather(params.workers, words);
    let dec = decode_block_stream(code, outputs, mode)?;
    let result = match &dec.blocks {
        Some(blocks) => Some(assemble_target(params, product, blocks)?),
        None => None,
    };
    Ok((result, dec.outcome))
}

/// Computes `W X` through the code, with faults from `plan`.
///
/// ENCODE and C1 faults hit a worker's encoded input, O1 faults its product.
pub fn coded_matmul(
    w: &Mat,
    x: &Mat,
    params: &CodeParams,
    plan: &FaultPlan,
    mode: DecodeMode,
    ctx: &FaultContext,
    ledger: &mut CostLedger,
) -> Result<CodedProduct> {
    if w.cols() != x.rows() {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            w.rows(),
            w.cols(),
            x.rows(),
            x.cols()
        )));
    }
    let code = product_code(params, Product::Feedforward)?;
    let mut outputs = Vec::with_capacity(params.workers);
    for p in 0..params.workers {
        let wp = encode_weight_shard(w, params, p)?.payload;
        let mut xp = Some(encode_input_ff(x, params, p)?.payload);
        for step in [Step::Encode, Step::C1] {
            xp = xp.and_then(|v| faulted(v, plan, step, p, ctx));
        }
        let out = match xp {
            Some(xp) => faulted(wp.matmul(&xp)?, plan, Step::O1, p, ctx),
            None => None,
        };
        outputs.push(out);
    }
    let mut local = CostLedger::new(ledger.alpha, ledger.beta);
    let (result, outcome) = gather_and_decode(
        params,
        &code,
        Product::Feedforward,
        &outputs,
        mode,
        &mut local,
    )?;
    ledger.absorb(&local);
    Ok(CodedProduct {
        result,
        outcome,
        ledger: local,
    })
}

/// Computes `Delta^T W` through the code, with faults from `plan`.
pub fn coded_backprop_product(
    w: &Mat,
    delta_t: &Mat,
    params: &CodeParams,
    plan: &FaultPlan,
    mode: DecodeMode,
    ctx: &FaultContext,
    ledger: &mut CostLedger,
) -> Result<CodedProduct> {
    if delta_t.cols() != w.rows() {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            delta_t.rows(),
            delta_t.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let code = product_code(params, Product::Backprop)?;
    let mut outputs = Vec::with_capacity(params.workers);
    for p in 0..params.workers {
        let wp = encode_weight_shard(w, params, p)?.payload;
        let mut dp = Some(encode_input_bp(delta_t, params, p)?.payload);
        for step in [Step::Encode, Step::C2] {
            dp = dp.and_then(|v| faulted(v, plan, step, p, ctx));
        }
        let out = match dp {
            Some(dp) => faulted(dp.matmul(&wp)?, plan, Step::O2, p, ctx),
            None => None,
        };
        outputs.push(out);
    }
    let mut local = CostLedger::new(ledger.alpha, ledger.beta);
    let (result, outcome) =
        gather_and_decode(params, &code, Product::Backprop, &outputs, mode, &mut local)?;
    ledger.absorb(&local);
    Ok(CodedProduct {
        result,
        outcome,
        ledger: local,
    })
}

/// `coded_matmul` for a single input column.
pub fn coded_matvec(
    w: &Mat,
    x: &Mat,
    params: &CodeParams,
    plan: &FaultPlan,
    mode: DecodeMode,
    ctx: &FaultContext,
    ledger: &mut CostLedger,
) -> Result<CodedProduct> {
    if x.cols() != 1 || params.d1 != 1 {
        return Err(Error::InvalidParams(
            "matrix-vector products need a single column and d1 = 1".into(),
        ));
    }
    coded_matmul(w, x, params, plan, mode, ctx, ledger)
}

/// Faults keyed by `(iteration, layer, step)` for a whole run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultSchedule {
    entries: BTreeMap<(usize, usize), FaultPlan>,
}

impl FaultSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        iteration: usize,
        layer: usize,
        step: Step,
        worker: usize,
        spec: FaultSpec,
    ) {
        let plan = self.entries.entry((iteration, layer)).or_default();
        plan.faults.push(Fault { step, worker, spec });
    }

    pub fn plan(&self, iteration: usize, layer: usize) -> FaultPlan {
        self.entries
            .get(&(iteration, layer))
            .cloned()
            .unwrap_or_default()
    }

    /// `counts[s]` distinct random workers get a Gaussian fault at step
    /// `steps[s]`, for every iteration and layer.
    pub fn random(
        iterations: usize,
        layers: usize,
        workers: usize,
        per_step: &[(Step, usize)],
        sigma: f64,
        seed: u64,
    ) -> Self {
        let mut out = Self::new();
        for k in 0..iterations {
            for l in 1..=layers {
                for &(step, count) in per_step {
                    if step == Step::O2 && l == 1 {
                        continue;
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        seed,
                        &[k as u64, l as u64, step.tag()],
                    ));
                    let mut picked =
                        rand::seq::index::sample(&mut rng, workers, count.min(workers)).into_vec();
                    picked.sort_unstable();
                    for p in picked {
                        out.add(k, l, step, p, FaultSpec::Gaussian { sigma });
                    }
                }
            }
        }
        out
    }

    pub fn merge(&mut self, other: FaultSchedule) {
        for (key, plan) in other.entries {
            self.entries
                .entry(key)
                .or_default()
                .faults
                .extend(plan.faults);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(|p| p.faults.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
