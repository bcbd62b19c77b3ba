//! Experiment drivers. Each returns a table; `write_csv` adds a commented
//! header holding every resolved setting so a file documents its own run.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use codedc_core::cluster::{derive_seed, worker_comm_total};
use codedc_core::code::{
    chebyshev_points, matdot_threshold, polydot_unknowns, polynomial_threshold,
    recovery_threshold_mm, recovery_threshold_mv,
};
use codedc_core::decoder::{code_from_points, decode, DecodeMode, DecodeOutcome};
use codedc_core::dnn::protocol::TrainReport;
use codedc_core::dnn::tolerance::{tolerance_table, Geometry, Strategy};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }
}

pub fn write_csv(
    path: &Path,
    command: &str,
    spec: &[(String, String)],
    table: &Table,
) -> io::Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "# codedc {command}")?;
    for (k, v) in spec {
        writeln!(f, "# {k} = {v}")?;
    }
    let mut w = csv::Writer::from_writer(f);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()
}

fn divisors(k: usize) -> impl Iterator<Item = usize> {
    (1..=k).filter(move |d| k.is_multiple_of(*d))
}

/// For each `K` and each split `K = m n` with `n d = K`, the thresholds of
/// the code family next to the MatDot and Polynomial endpoints.
pub fn threshold_sweep(k_max: usize, workers: usize) -> Table {
    let mut t = Table::new(&[
        "K",
        "m",
        "n",
        "d",
        "gpd_mm",
        "gpd_mv",
        "polydot",
        "matdot",
        "polynomial",
        "fits",
    ]);
    for k in 1..=k_max {
        for n in divisors(k) {
            let (m, d) = (k / n, k / n);
            let mm = recovery_threshold_mm(m, n, d);
            t.push(vec![
                k.to_string(),
                m.to_string(),
                n.to_string(),
                d.to_string(),
                mm.to_string(),
                recovery_threshold_mv(m, n).to_string(),
                polydot_unknowns(m, n, d).to_string(),
                matdot_threshold(k).to_string(),
                polynomial_threshold(k, k).to_string(),
                (mm <= workers).to_string(),
            ]);
        }
    }
    t
}

/// Recovery threshold against per-worker communication for every split
/// `m n = K` with the input stored as `n d = K` pieces, with the Pareto
/// frontier marked. Splits that do not divide `N1` or `B` are skipped.
pub fn tradeoff(k: usize, n1: usize, batch: usize, workers: usize) -> Table {
    let mut points = Vec::new();
    for n in divisors(k) {
        let (m, d) = (k / n, k / n);
        if !n1.is_multiple_of(m) || !batch.is_multiple_of(d) {
            continue;
        }
        let threshold = recovery_threshold_mm(m, n, d);
        points.push((m, n, d, threshold, worker_comm_total(m, n, d, n1, batch)));
    }
    let mut t = Table::new(&["m", "n", "d", "threshold", "comm", "feasible", "frontier"]);
    for &(m, n, d, th, comm) in &points {
        let dominated = points
            .iter()
            .any(|&(_, _, _, t2, c2)| t2 <= th && c2 <= comm && (t2 < th || c2 < comm));
        t.push(vec![
            m.to_string(),
            n.to_string(),
            d.to_string(),
            th.to_string(),
            comm.to_string(),
            (th <= workers).to_string(),
            (!dominated).to_string(),
        ]);
    }
    t
}

/// Tolerable `(t_f, t_b)` per strategy and error model as the worker count
/// grows. MDS splits its `P` nodes so that `P_f + P_b - mn <= P`.
pub fn tolerance_region(
    m: usize,
    n: usize,
    d1: usize,
    d2: usize,
    p_min: usize,
    p_max: usize,
    step: usize,
) -> Table {
    let mut t = Table::new(&["workers", "strategy", "model", "p_f", "p_b", "t_f", "t_b"]);
    let mut p = p_min;
    while p <= p_max {
        for strategy in Strategy::ALL {
            let (p_f, p_b) = match strategy {
                Strategy::Mds => {
                    let half = (p + m * n) / 2;
                    (half - half % n, half - half % m)
                }
                _ => (p, p),
            };
            if strategy == Strategy::Rep && !p.is_multiple_of(m * n) {
                continue;
            }
            let g = Geometry {
                m,
                n,
                d1,
                d2,
                workers: p,
                p_f,
                p_b,
            };
            for (model, name) in [
                (DecodeMode::Adversarial, "1"),
                (DecodeMode::Probabilistic, "2"),
            ] {
                if let Ok((tf, tb)) = tolerance_table(strategy, model, g) {
                    t.push(vec![
                        p.to_string(),
                        strategy.name().into(),
                        name.into(),
                        p_f.to_string(),
                        p_b.to_string(),
                        tf.max(-1).to_string(),
                        tb.max(-1).to_string(),
                    ]);
                }
            }
        }
        p += step.max(1);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchSpec {
    pub workers: usize,
    pub q: usize,
    pub k_max: usize,
    pub trials: usize,
    pub sigma: f64,
    pub mode: DecodeMode,
    pub seed: u64,
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct Trial {
    detected: bool,
    correct: bool,
    failed: bool,
    miscorrected: bool,
    micros: f64,
}

fn run_trial(
    spec: &BenchSpec,
    code: &codedc_core::decoder::LinearCode,
    k: usize,
    trial: usize,
) -> Trial {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[k as u64, trial as u64]));
    let msg: Vec<f64> = (0..spec.q)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut z = code.encode(&msg).expect("message length matches");
    let mut support = sample(&mut rng, spec.workers, k).into_vec();
    support.sort_unstable();
    for &i in &support {
        let e: f64 = StandardNormal.sample(&mut rng);
        z[i] += spec.sigma * e;
    }
    let start = Instant::now();
    let out = decode(code, &z, spec.mode).expect("well-formed word");
    let micros = start.elapsed().as_secs_f64() * 1e6;
    let scale = msg.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
    let right = |m: &[f64]| {
        m.iter()
            .zip(&msg)
            .all(|(a, b)| (a - b).abs() <= 1e-6 * scale)
    };
    let mut t = Trial {
        micros,
        ..Trial::default()
    };
    match &out {
        DecodeOutcome::NoErrors { message } => {
            if k == 0 && right(message) {
                t.correct = true;
            } else if k > 0 {
                t.miscorrected = true;
            }
        }
        DecodeOutcome::Corrected {
            message, locations, ..
        } => {
            t.detected = true;
            if locations.iter().copied().eq(support.iter().copied()) && right(message) {
                t.correct = true;
            } else {
                t.miscorrected = true;
            }
        }
        DecodeOutcome::Failure => {
            t.detected = true;
            t.failed = true;
        }
    }
    t
}

/// Monte Carlo rates of detection, correct decoding, declared failure and
/// silent miscorrection for `k = 0 ..= k_max` Gaussian errors.
pub fn decoder_bench(spec: &BenchSpec) -> codedc_core::Result<Table> {
    let code = code_from_points(&chebyshev_points(spec.workers), spec.q)?;
    let mut t = Table::new(&[
        "k",
        "trials",
        "detect_rate",
        "correct_rate",
        "failure_rate",
        "miscorrect_rate",
        "mean_decode_time",
    ]);
    for k in 0..=spec.k_max.min(spec.workers) {
        let trials: Vec<Trial> = (0..spec.trials)
            .into_par_iter()
            .map(|i| run_trial(spec, &code, k, i))
            .collect();
        let n = spec.trials.max(1) as f64;
        let rate =
            |f: fn(&Trial) -> bool| (trials.iter().filter(|t| f(t)).count() as f64 / n).to_string();
        let time = if spec.timing {
            format!("{:.3}", trials.iter().map(|t| t.micros).sum::<f64>() / n)
        } else {
            "-".into()
        };
        t.push(vec![
            k.to_string(),
            spec.trials.to_string(),
            rate(|t| t.detected),
            rate(|t| t.correct),
            rate(|t| t.failed),
            rate(|t| t.miscorrected),
            time,
        ]);
    }
    Ok(t)
}

/// The per-step iteration log of a training run.
pub fn log_table(report: &TrainReport) -> Table {
    let mut t = Table::new(&[
        "iteration",
        "layer",
        "step",
        "outcome",
        "errors_corrected",
        "error_locations",
        "comm_cost",
    ]);
    for r in &report.log {
        t.push(vec![
            r.iteration.to_string(),
            r.layer.to_string(),
            r.step.name().into(),
            r.outcome.name().into(),
            r.errors_corrected.to_string(),
            r.error_locations
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            r.comm_cost.to_string(),
        ]);
    }
    t
}

/// Summary lines printed after a training run.
pub fn report_lines(report: &TrainReport) -> Vec<String> {
    let mut out = vec![
        format!("rollbacks: {}", report.rollbacks),
        format!("total communication cost: {}", report.ledger_total),
        format!(
            "final deviation from uncoded run: {:e}",
            report.final_deviation
        ),
        format!(
            "max deviation from uncoded run: {:e}",
            report.max_deviation()
        ),
    ];
    for (k, d) in &report.checkpoint_deviation {
        out.push(format!("checkpoint {k}: deviation {d:e}"));
    }
    out
}
