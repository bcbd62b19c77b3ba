//! Acceptance gate: one PASS/FAIL line per criterion, then a single assert.
//!
//! Run with `cargo test -p codedc --test acceptance -- --nocapture` to see
//! the report.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use codedc::experiments::tradeoff;
use codedc_core::cluster::{
    coded_matmul, derive_seed, CostLedger, FaultContext, FaultPlan, FaultSchedule, FaultSpec, Step,
};
use codedc_core::code::{
    chebyshev_points, encode_weight_shard, make_params, matdot_threshold, polydot_unknowns,
    polynomial_threshold, recovery_threshold_mm, Substitution,
};
use codedc_core::decoder::{code_from_points, decode, DecodeMode, DecodeOutcome};
use codedc_core::dnn::protocol::{
    backprop_layer, coded_update, feedforward_layer, train, LayerState, StepOutcome, TrainConfig,
};
use codedc_core::dnn::reference::{uncoded_reference_train, Hyper, ReferenceNet};
use codedc_core::dnn::tolerance::{tolerance_table, Geometry, Strategy};
use codedc_core::dnn::{init_weights, Dataset, Objective};
use codedc_core::matrix::Mat;
use codedc_core::Error;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

const ERASURE_TOL: f64 = 1e-9;
const TRAIN_TOL: f64 = 1e-6;
const FAULT_TOL: f64 = 1e-8;
const UPDATE_TOL: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-5;
const MC_TRIALS: usize = 1000;
const MC_RATE: f64 = 0.999;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
    budget: Duration,
}

fn verdict(pass: bool, detail: impl Into<String>, budget_secs: u64) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
        budget: Duration::from_secs(budget_secs),
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn c1_worked_example() -> Verdict {
    let got = (
        polynomial_threshold(4, 4),
        matdot_threshold(4),
        polydot_unknowns(2, 2, 2),
        recovery_threshold_mm(2, 2, 2),
    );
    verdict(
        got == (16, 7, 12, 9),
        format!("(poly, matdot, polydot, gpd) = {got:?}"),
        1,
    )
}

fn c2_tradeoff_endpoints() -> Verdict {
    let (n1, batch) = (36, 36);
    let t = tradeoff(36, n1, batch, 2000);
    let col = |name| t.column(name).unwrap();
    let (th, comm, front) = (col("threshold"), col("comm"), col("frontier"));
    let frontier: Vec<(usize, f64)> = t
        .rows
        .iter()
        .filter(|r| r[front] == "true")
        .map(|r| (r[th].parse().unwrap(), r[comm].parse().unwrap()))
        .collect();
    let min_th = frontier.iter().map(|p| p.0).min().unwrap_or(0);
    let max_th = frontier.iter().map(|p| p.0).max().unwrap_or(0);
    let min_comm = frontier.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let matdot = frontier.iter().any(|&(t, _)| t == 71);
    let poly = frontier
        .iter()
        .any(|&(t, c)| t == 1296 && c == (n1 * batch) as f64);
    let pass = matdot_threshold(36) == 71
        && polynomial_threshold(36, 36) == 1296
        && matdot
        && poly
        && min_th == 71
        && max_th == 1296
        && min_comm == (n1 * batch) as f64;
    verdict(
        pass,
        format!(
            "frontier thresholds {min_th}..{max_th}, min comm {min_comm} (N1 B = {})",
            n1 * batch
        ),
        1,
    )
}

fn c3_erasure_optimality() -> Verdict {
    let mut cases = 0;
    let mut worst = 0.0_f64;
    let mut bad = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in 1..=8 {
        for n in 1..=8 / m {
            for d in 1..=8 / (m * n) {
                let threshold = recovery_threshold_mm(m, n, d);
                for p in threshold..=12 {
                    let params = make_params(m, n, d, d, p, Substitution::UEqVn).unwrap();
                    let w = gaussian(2 * m, 2 * n, &mut rng);
                    let x = gaussian(2 * n, d, &mut rng);
                    let want = w.matmul(&x).unwrap();
                    let workers: Vec<usize> = sample(&mut rng, p, p).into_vec();
                    for (extra, expect_ok) in [(0, true), (1, false)] {
                        let erase = p - threshold + extra;
                        if erase > p {
                            continue;
                        }
                        let plan = workers[..erase].iter().fold(FaultPlan::none(), |pl, &w| {
                            pl.with(Step::O1, w, FaultSpec::Erase)
                        });
                        let mut ledger = CostLedger::new(1.0, 1.0);
                        let res = coded_matmul(
                            &w,
                            &x,
                            &params,
                            &plan,
                            DecodeMode::Probabilistic,
                            &FaultContext::new(0),
                            &mut ledger,
                        );
                        cases += 1;
                        match (res, expect_ok) {
                            (Ok(out), true) => match out.result {
                                Some(got) => {
                                    let e = got.rel_diff(&want);
                                    worst = worst.max(e);
                                    if e > ERASURE_TOL {
                                        bad.push((m, n, d, p, erase));
                                    }
                                }
                                None => bad.push((m, n, d, p, erase)),
                            },
                            (Err(Error::InsufficientEvaluations { .. }), false) => {}
                            _ => bad.push((m, n, d, p, erase)),
                        }
                    }
                }
            }
        }
    }
    verdict(
        bad.is_empty(),
        format!("{cases} cases, worst rel err {worst:.2e}, failures {bad:?}"),
        30,
    )
}

#[derive(Default, Clone, Copy)]
struct Rates {
    detected: usize,
    correct: usize,
    failed: usize,
}

fn c4_monte_carlo() -> Verdict {
    let (p, q) = (12, 4);
    let code = code_from_points(&chebyshev_points(p), q).unwrap();
    let mut pass = true;
    let mut lines = Vec::new();
    for k in 0..=p {
        let rates = (0..MC_TRIALS)
            .into_par_iter()
            .map(|trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(4, &[k as u64, trial as u64]));
                let msg: Vec<f64> = (0..q).map(|_| StandardNormal.sample(&mut rng)).collect();
                let mut z = code.encode(&msg).unwrap();
                let support: BTreeSet<usize> = sample(&mut rng, p, k).into_iter().collect();
                for &i in &support {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    z[i] += e;
                }
                let out = decode(&code, &z, DecodeMode::Probabilistic).unwrap();
                let right = |m: &[f64]| m.iter().zip(&msg).all(|(a, b)| (a - b).abs() <= 1e-6);
                let mut r = Rates::default();
                match &out {
                    DecodeOutcome::NoErrors { message } => {
                        r.correct = usize::from(k == 0 && right(message))
                    }
                    DecodeOutcome::Corrected {
                        message, locations, ..
                    } => {
                        r.detected = 1;
                        r.correct = usize::from(*locations == support && right(message));
                    }
                    DecodeOutcome::Failure => {
                        r.detected = 1;
                        r.failed = 1;
                    }
                }
                r
            })
            .reduce(Rates::default, |a, b| Rates {
                detected: a.detected + b.detected,
                correct: a.correct + b.correct,
                failed: a.failed + b.failed,
            });
        let n = MC_TRIALS as f64;
        let (det, cor, fail) = (
            rates.detected as f64 / n,
            rates.correct as f64 / n,
            rates.failed as f64 / n,
        );
        let ok = (k == 0 || det == 1.0) && (k > 7 || cor >= MC_RATE) && (k < 8 || fail >= MC_RATE);
        pass &= ok;
        if !ok {
            lines.push(format!("k={k}: detect {det} correct {cor} fail {fail}"));
        }
    }
    let detail = if lines.is_empty() {
        format!("k = 0..={p}, {MC_TRIALS} trials each")
    } else {
        lines.join("; ")
    };
    verdict(pass, detail, 300)
}

fn c5_adversarial_exhaustive() -> Verdict {
    let (p, q) = (9, 3);
    let code = code_from_points(&chebyshev_points(p), q).unwrap();
    let bound = DecodeMode::Adversarial.capacity(p, q);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let msg: Vec<f64> = (0..q).map(|_| StandardNormal.sample(&mut rng)).collect();
    let clean = code.encode(&msg).unwrap();
    let mut total = 0;
    let mut wrong = 0;
    for a in 0..p {
        for b in a + 1..p {
            for c in b + 1..p {
                let support: BTreeSet<usize> = [a, b, c].into();
                let mut z = clean.clone();
                for &i in &support {
                    z[i] += rng.random_range(-10.0..10.0);
                }
                total += 1;
                let ok = match decode(&code, &z, DecodeMode::Adversarial).unwrap() {
                    DecodeOutcome::Corrected {
                        message, locations, ..
                    } => {
                        locations == support
                            && message.iter().zip(&msg).all(|(x, y)| (x - y).abs() < 1e-8)
                    }
                    _ => false,
                };
                wrong += usize::from(!ok);
            }
        }
    }
    verdict(
        bound == 3 && total == 84 && wrong == 0,
        format!("bound {bound}, {total} supports, {wrong} not corrected"),
        120,
    )
}

fn independent_deviation(cfg: &TrainConfig, weights: &[Mat]) -> f64 {
    let data = Dataset::new(&cfg.dims, cfg.batch, cfg.seed, cfg.objective);
    let oracle = uncoded_reference_train(
        init_weights(&cfg.dims, cfg.seed),
        &data,
        cfg.iterations,
        &cfg.hyper(),
    )
    .unwrap();
    weights
        .iter()
        .zip(&oracle)
        .map(|(a, b)| a.rel_diff(b))
        .fold(0.0, f64::max)
}

fn training_cfg(batch: usize, d: usize, workers: usize) -> TrainConfig {
    let mut c = TrainConfig::new(vec![24; 4], 2, 2, workers);
    c.batch = batch;
    c.d1 = d;
    c.d2 = d;
    c.eta = 0.1;
    c.iterations = 100;
    c.seed = 6;
    c
}

fn c6_training_equivalence() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (batch, d, workers) in [(1, 1, 9), (4, 2, 12)] {
        let cfg = training_cfg(batch, d, workers);
        match train(&cfg, &FaultSchedule::new()) {
            Ok(r) => {
                let dev = independent_deviation(&cfg, &r.weights);
                pass &= dev <= TRAIN_TOL && r.rollbacks == 0;
                parts.push(format!("B={batch} P={workers}: dev {dev:.2e}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("B={batch} P={workers}: {e}"));
            }
        }
    }
    verdict(pass, parts.join(", "), 120)
}

fn fault_schedule(
    cfg: &TrainConfig,
    t_f: usize,
    t_b: usize,
    rng: &mut ChaCha8Rng,
) -> FaultSchedule {
    let mut s = FaultSchedule::new();
    let layers = cfg.dims.len() - 1;
    for k in 0..cfg.iterations {
        for l in 1..=layers {
            for w in sample(rng, cfg.workers, t_f) {
                s.add(k, l, Step::O1, w, FaultSpec::Gaussian { sigma: 1.0 });
            }
            if l > 1 {
                for w in sample(rng, cfg.workers, t_b) {
                    s.add(k, l, Step::O2, w, FaultSpec::Gaussian { sigma: 1.0 });
                }
            }
        }
    }
    s
}

fn c7_fault_transparency() -> Verdict {
    let mut cfg = training_cfg(1, 1, 9);
    cfg.mode = DecodeMode::Probabilistic;
    cfg.checkpoint_interval = 5;
    let geometry = Geometry::single(2, 2, 9);
    let (t_f, t_b) =
        tolerance_table(Strategy::Gpd(Substitution::UEqVn), cfg.mode, geometry).unwrap();
    let (t_f, t_b) = (t_f as usize, t_b as usize);
    let clean = match train(&cfg, &FaultSchedule::new()) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("clean run: {e}"), 120),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let schedule = fault_schedule(&cfg, t_f, t_b, &mut rng);
    let faulty = match train(&cfg, &schedule) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("faulty run: {e}"), 120),
    };
    let dev = faulty
        .weights
        .iter()
        .zip(&clean.weights)
        .map(|(a, b)| a.rel_diff(b))
        .fold(0.0, f64::max);
    let corrected = faulty
        .log
        .iter()
        .filter(|r| r.outcome == StepOutcome::Corrected)
        .count();

    let mut over = schedule.clone();
    let used: BTreeSet<usize> = schedule.plan(7, 2).at(Step::O1).map(|f| f.worker).collect();
    let spare = (0..cfg.workers).find(|w| !used.contains(w)).unwrap();
    over.add(7, 2, Step::O1, spare, FaultSpec::Gaussian { sigma: 1.0 });
    let replay = match train(&cfg, &over) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("over-budget run: {e}"), 120),
    };
    let rollback_rows = replay
        .log
        .iter()
        .filter(|r| r.outcome == StepOutcome::Rollback)
        .count();
    let replay_dev = replay
        .weights
        .iter()
        .zip(&clean.weights)
        .map(|(a, b)| a.rel_diff(b))
        .fold(0.0, f64::max);
    let restored_from_5 = replay
        .log
        .iter()
        .skip_while(|r| r.outcome != StepOutcome::Rollback)
        .nth(1)
        .map(|r| r.iteration == 5)
        .unwrap_or(false);
    let pass = faulty.rollbacks == 0
        && dev <= FAULT_TOL
        && corrected > 0
        && replay.rollbacks == 1
        && rollback_rows == 1
        && restored_from_5
        && replay_dev <= FAULT_TOL;
    verdict(
        pass,
        format!(
            "(t_f, t_b) = ({t_f}, {t_b}), dev {dev:.2e} over {corrected} corrected steps; \
             extra fault: {} rollback(s), replay from 5 {restored_from_5}, dev {replay_dev:.2e}",
            replay.rollbacks
        ),
        120,
    )
}

fn c8_tolerance_frontier() -> Verdict {
    let (p, k) = (180usize, 36usize);
    let mut pass = true;
    let mut notes = Vec::new();
    for m in (1..=k).filter(|m| k % m == 0) {
        let n = k / m;
        let model_pairs = [DecodeMode::Adversarial, DecodeMode::Probabilistic];
        for model in model_pairs {
            let g = Geometry::single(m, n, p);
            let gt = Geometry::single(n, m, p);
            let uvn = tolerance_table(Strategy::Gpd(Substitution::UEqVn), model, g).unwrap();
            let vum = tolerance_table(Strategy::Gpd(Substitution::VEqUm), model, gt).unwrap();
            if vum != (uvn.1, uvn.0) {
                pass = false;
                notes.push(format!("swap fails at m={m} n={n}"));
            }
            if m == n {
                let vum_same =
                    tolerance_table(Strategy::Gpd(Substitution::VEqUm), model, g).unwrap();
                if vum_same != (uvn.1, uvn.0) {
                    pass = false;
                    notes.push(format!("m=n swap fails at {m}"));
                }
            }
            let mds = tolerance_table(Strategy::Mds, model, g).unwrap();
            if uvn.0 < mds.0 || uvn.1 < mds.1 {
                pass = false;
                notes.push(format!("MDS beats GPD at m={m} n={n}: {mds:?} vs {uvn:?}"));
            }
            if let Ok(rep) = tolerance_table(Strategy::Rep, model, g) {
                if uvn.0 < rep.0 || uvn.1 < rep.1 {
                    pass = false;
                    notes.push(format!("REP beats GPD at m={m} n={n}"));
                }
            }
        }
    }
    let a = tolerance_table(
        Strategy::Gpd(Substitution::UEqVn),
        DecodeMode::Adversarial,
        Geometry::single(6, 6, p),
    )
    .unwrap();
    let b = tolerance_table(
        Strategy::Gpd(Substitution::UEqVn),
        DecodeMode::Probabilistic,
        Geometry::single(6, 6, p),
    )
    .unwrap();
    pass &= a == (69, 57) && b == (138, 113);
    notes.push(format!("6x6: model 1 {a:?}, model 2 {b:?}"));
    verdict(pass, notes.join("; "), 1)
}

fn c9_update_commutation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    let mut count = 0;
    for inst in 0..100 {
        let m = rng.random_range(1..=3);
        let n = rng.random_range(1..=3);
        let b = rng.random_range(1..=3);
        let sub = if inst % 2 == 0 {
            Substitution::UEqVn
        } else {
            Substitution::VEqUm
        };
        let lambda = if inst % 4 < 2 {
            0.0
        } else {
            rng.random_range(0.01..0.5)
        };
        let eta = rng.random_range(0.01..1.0);
        let workers = m * n + m + n + rng.random_range(0..4);
        let params = make_params(m, n, 1, 1, workers, sub).unwrap();
        let (rows, cols) = (m * rng.random_range(1..=3), n * rng.random_range(1..=3));
        let w = gaussian(rows, cols, &mut rng);
        let delta = gaussian(rows, b, &mut rng);
        let x = gaussian(cols, b, &mut rng);
        let mut state = LayerState::encode(1, &w, &params).unwrap();
        coded_update(
            &mut state,
            &delta,
            &x,
            eta,
            lambda,
            &FaultPlan::none(),
            &FaultContext::new(0),
        )
        .unwrap();
        let mut direct = w.scale(1.0 - eta * lambda);
        direct
            .add_scaled(eta, &delta.matmul(&x.transpose()).unwrap())
            .unwrap();
        for p in 0..workers {
            let want = encode_weight_shard(&direct, &params, p).unwrap().payload;
            worst = worst.max(state.shards[p].rel_diff(&want));
        }
        count += 1;
    }
    verdict(
        worst <= UPDATE_TOL,
        format!("{count} instances, worst rel err {worst:.2e}"),
        5,
    )
}

fn c10_autoencoder_gradient() -> Verdict {
    let dims = [6, 10, 6];
    let objective = Objective::SparseAutoencoder {
        beta_kl: 0.5,
        rho: 0.1,
    };
    let hyper = Hyper {
        eta: 0.1,
        lambda: 0.0,
        objective,
    };
    let data = Dataset::new(&dims, 4, 10, objective);
    let net = ReferenceNet::new(init_weights(&dims, 10));
    let (x, y) = data.batch(0);
    let trace = net.forward(&x).unwrap();
    let deltas = net.deltas(&trace, &y, objective).unwrap();
    let analytic = deltas[0].matmul(&x.transpose()).unwrap().scale(-1.0);
    let w = &net.weights[0];
    let h = 1e-6;
    let numeric = Mat::from_fn(w.rows(), w.cols(), |i, j| {
        let mut plus = net.clone();
        plus.weights[0].set(i, j, w.get(i, j) + h);
        let mut minus = net.clone();
        minus.weights[0].set(i, j, w.get(i, j) - h);
        (plus.loss(&x, &y, &hyper).unwrap() - minus.loss(&x, &y, &hyper).unwrap()) / (2.0 * h)
    });
    let err = analytic.rel_diff(&numeric);
    verdict(err <= GRAD_TOL, format!("rel err {err:.2e}"), 30)
}

fn c11_ledger() -> Verdict {
    let (nn, m, n, p) = (24usize, 2usize, 2usize, 9usize);
    let params = make_params(m, n, 1, 1, p, Substitution::UEqVn).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = gaussian(nn, nn, &mut rng);
    let state = LayerState::encode(2, &w, &params).unwrap();
    let ctx = FaultContext::new(0);
    let mut ledger = CostLedger::new(1.0, 1.0);
    let x = gaussian(nn, 1, &mut rng);
    let delta_t = gaussian(1, nn, &mut rng);
    let ok = feedforward_layer(
        &state,
        &x,
        &FaultPlan::none(),
        DecodeMode::Probabilistic,
        &ctx,
        &mut ledger,
    )
    .and_then(|_| {
        backprop_layer(
            &state,
            &delta_t,
            &FaultPlan::none(),
            DecodeMode::Probabilistic,
            &ctx,
            &mut ledger,
        )
    })
    .is_ok();
    let pf = p as f64;
    let want = 2.0 * pf.log2() + 2.0 * pf * ((nn / m) as f64 + (nn / n) as f64);
    let got = ledger.total();
    verdict(
        ok && got == want,
        format!("ledger {got}, formula {want}"),
        1,
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 11] = [
        ("worked-example thresholds", c1_worked_example),
        ("tradeoff endpoints at K=36", c2_tradeoff_endpoints),
        ("erasure optimality", c3_erasure_optimality),
        ("Monte Carlo decoding at (12, 4)", c4_monte_carlo),
        ("adversarial capacity at (9, 3)", c5_adversarial_exhaustive),
        (
            "coded/uncoded training equivalence",
            c6_training_equivalence,
        ),
        ("fault transparency and rollback", c7_fault_transparency),
        ("tolerance frontier at P=180, K=36", c8_tolerance_frontier),
        ("coded-update commutation", c9_update_commutation),
        ("autoencoder gradient", c10_autoencoder_gradient),
        ("communication ledger", c11_ledger),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = run();
        let elapsed = start.elapsed();
        let on_time = elapsed <= v.budget;
        let pass = v.pass && on_time;
        println!(
            "criterion {:>2} {}: {name}: {} ({:.2}s of {}s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            v.budget.as_secs()
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
