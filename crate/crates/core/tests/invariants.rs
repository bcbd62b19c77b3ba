//! Property tests for the coding, decoding and training invariants.

use std::collections::BTreeSet;

use codedc_core::cluster::{
    coded_backprop_product, coded_matmul, CostLedger, FaultContext, FaultPlan, FaultSpec, Step,
};
use codedc_core::code::{chebyshev_points, encode_weight_shard, make_params, Substitution};
use codedc_core::decoder::{code_from_points, decode, DecodeMode, DecodeOutcome};
use codedc_core::dnn::baselines::{MdsLayer, ReplicatedLayer};
use codedc_core::dnn::checkpoint::Checkpoint;
use codedc_core::dnn::protocol::{coded_update, LayerState};
use codedc_core::dnn::tolerance::{tolerance_table, Geometry, Strategy as Scheme};
use codedc_core::matrix::{block_partition, eval_block_poly, Mat};
use proptest::prelude::*;
use proptest::sample::subsequence;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

fn substitution() -> impl Strategy<Value = Substitution> {
    prop_oneof![Just(Substitution::UEqVn), Just(Substitution::VEqUm)]
}

fn model() -> impl Strategy<Value = DecodeMode> {
    prop_oneof![
        Just(DecodeMode::Adversarial),
        Just(DecodeMode::Probabilistic)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_round_trip(m in 1usize..5, n in 1usize..5, r in 1usize..4, c in 1usize..4, seed: u64) {
        let a = gaussian(m * r, n * c, seed);
        let g = block_partition(&a, m, n).unwrap();
        prop_assert_eq!(g.block_shape(), (r, c));
        prop_assert_eq!(g.block(m - 1, n - 1), &a.submatrix((m - 1) * r, (n - 1) * c, r, c));
        prop_assert_eq!(g.assemble(), a);
    }

    #[test]
    fn weight_shard_is_polynomial_evaluation(
        m in 1usize..4, n in 1usize..4, sub in substitution(), extra in 0usize..3, seed: u64,
    ) {
        let params = make_params(m, n, 1, 1, m * n + m + n + extra, sub).unwrap();
        let w = gaussian(2 * m, 3 * n, seed);
        let g = block_partition(&w, m, n).unwrap();
        for p in 0..params.workers {
            let terms: Vec<(&Mat, usize)> =
                g.iter().map(|((i, j), b)| (b, params.weight_exponent(i, j))).collect();
            let want = eval_block_poly(&terms, params.base_point(p)).unwrap();
            let got = encode_weight_shard(&w, &params, p).unwrap().payload;
            prop_assert!(got.rel_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn weight_exponents_are_a_bijection(m in 1usize..6, n in 1usize..6, sub in substitution()) {
        let params = make_params(m, n, 1, 1, 2 * m * n + m + n, sub).unwrap();
        let seen: BTreeSet<usize> = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| params.weight_exponent(i, j))
            .collect();
        prop_assert_eq!(seen, (0..m * n).collect::<BTreeSet<_>>());
    }

    #[test]
    fn garbage_alignment_targets_are_distinct_and_in_range(
        m in 1usize..4, n in 1usize..4, d in 1usize..3, sub in substitution(),
    ) {
        let params = make_params(m, n, d, d, 2 * m * n * d + m + n, sub).unwrap();
        let ff = params.target_exponents_ff();
        let bp = params.target_exponents_bp();
        prop_assert_eq!(ff.len(), m * d);
        prop_assert_eq!(bp.len(), d * n);
        prop_assert_eq!(ff.values().collect::<BTreeSet<_>>().len(), m * d);
        prop_assert_eq!(bp.values().collect::<BTreeSet<_>>().len(), d * n);
        prop_assert!(ff.values().all(|&e| e < params.ff_unknowns()));
        prop_assert!(bp.values().all(|&e| e < params.bp_unknowns()));
    }

    #[test]
    fn coded_products_match_uncoded(
        m in 1usize..4, n in 1usize..4, d in 1usize..3, sub in substitution(), extra in 0usize..3, seed: u64,
    ) {
        prop_assume!(m * n * d <= 12);
        let need = (m * n * d + m * n).max(m * n * d + m.max(n));
        let params = make_params(m, n, d, d, need + extra, sub).unwrap();
        let w = gaussian(2 * m, 2 * n, seed);
        let x = gaussian(2 * n, 2 * d, seed ^ 1);
        let delta_t = gaussian(2 * d, 2 * m, seed ^ 2);
        let ctx = FaultContext::new(seed);
        let mut ledger = CostLedger::new(1.0, 1.0);
        let s = coded_matmul(&w, &x, &params, &FaultPlan::none(), DecodeMode::Probabilistic, &ctx, &mut ledger)
            .unwrap();
        prop_assert!(s.result.unwrap().rel_diff(&w.matmul(&x).unwrap()) < 1e-8);
        let c = coded_backprop_product(
            &w, &delta_t, &params, &FaultPlan::none(), DecodeMode::Probabilistic, &ctx, &mut ledger,
        )
        .unwrap();
        prop_assert!(c.result.unwrap().rel_diff(&delta_t.matmul(&w).unwrap()) < 1e-8);
    }

    #[test]
    fn update_commutes_with_encoding(
        m in 1usize..4, n in 1usize..4, b in 1usize..4, sub in substitution(),
        eta in 0.01f64..1.0, lambda in prop_oneof![Just(0.0), 0.01f64..0.5], seed: u64,
    ) {
        let params = make_params(m, n, 1, 1, m * n + m + n, sub).unwrap();
        let w = gaussian(2 * m, 2 * n, seed);
        let delta = gaussian(2 * m, b, seed ^ 3);
        let x = gaussian(2 * n, b, seed ^ 4);
        let mut state = LayerState::encode(1, &w, &params).unwrap();
        coded_update(&mut state, &delta, &x, eta, lambda, &FaultPlan::none(), &FaultContext::new(0)).unwrap();
        let mut direct = w.scale(1.0 - eta * lambda);
        direct.add_scaled(eta, &delta.matmul(&x.transpose()).unwrap()).unwrap();
        for p in 0..params.workers {
            let want = encode_weight_shard(&direct, &params, p).unwrap().payload;
            prop_assert!(state.shards[p].rel_diff(&want) < 1e-10);
        }
        prop_assert!(state.decode_weights(DecodeMode::Probabilistic).unwrap().unwrap().rel_diff(&direct) < 1e-9);
    }

    #[test]
    fn decoder_corrects_within_capacity(
        p in 6usize..13, q in 1usize..5, mode in model(), seed: u64,
        picks in subsequence((0..12usize).collect::<Vec<_>>(), 0..=12),
    ) {
        prop_assume!(q < p);
        let code = code_from_points(&chebyshev_points(p), q).unwrap();
        let cap = mode.capacity(p, q);
        let support: BTreeSet<usize> = picks.into_iter().filter(|&i| i < p).take(cap).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let msg: Vec<f64> = (0..q).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut z = code.encode(&msg).unwrap();
        for &i in &support {
            let e: f64 = StandardNormal.sample(&mut rng);
            z[i] += 1.0 + e.abs();
        }
        let out = decode(&code, &z, mode).unwrap();
        let got = out.message().expect("within capacity");
        prop_assert!(got.iter().zip(&msg).all(|(a, b)| (a - b).abs() < 1e-6));
        if support.is_empty() {
            let is_clean = matches!(out, DecodeOutcome::NoErrors { .. });
            prop_assert!(is_clean);
        } else {
            prop_assert_eq!(out.locations(), support);
        }
    }

    #[test]
    fn substitutions_swap_tolerances(
        m in 1usize..7, n in 1usize..7, d1 in 1usize..3, d2 in 1usize..3, p in 10usize..200, mode in model(),
    ) {
        let g = Geometry { m, n, d1, d2, workers: p, p_f: p, p_b: p };
        let gt = Geometry { m: n, n: m, d1: d2, d2: d1, workers: p, p_f: p, p_b: p };
        let uvn = tolerance_table(Scheme::Gpd(Substitution::UEqVn), mode, g).unwrap();
        let vum = tolerance_table(Scheme::Gpd(Substitution::VEqUm), mode, gt).unwrap();
        prop_assert_eq!(vum, (uvn.1, uvn.0));
    }

    #[test]
    fn replication_survives_its_tolerance(
        m in 1usize..3, n in 1usize..3, copies in 3usize..6, mode in model(), seed: u64,
    ) {
        let workers = copies * m * n;
        let (t, _) = tolerance_table(Scheme::Rep, mode, Geometry::single(m, n, workers)).unwrap();
        let w = gaussian(2 * m, 2 * n, seed);
        let x = gaussian(2 * n, 1, seed ^ 5);
        let layer = ReplicatedLayer::new(&w, m, n, workers).unwrap();
        let mut plan = FaultPlan::none();
        for (k, replica) in (0..t.max(0) as usize).zip(0..copies) {
            plan = plan.with(Step::O1, layer.worker(replica, 0, 0), FaultSpec::AdversarialValue { seed: k as u64 + 1 });
        }
        let ctx = FaultContext::new(seed);
        let s = layer.feedforward(&x, &plan, mode, &ctx).unwrap();
        prop_assert!(s.rel_diff(&w.matmul(&x).unwrap()) < 1e-12);
    }

    #[test]
    fn mds_survives_its_tolerance(
        m in 1usize..3, n in 1usize..3, extra in 0usize..4, mode in model(), seed: u64,
    ) {
        let (p_f, p_b) = (n * (m + 2 + extra), m * (n + 2 + extra));
        let g = Geometry { m, n, d1: 1, d2: 1, workers: p_f + p_b, p_f, p_b };
        let (t_f, t_b) = tolerance_table(Scheme::Mds, mode, g).unwrap();
        let w = gaussian(2 * m, 2 * n, seed);
        let x = gaussian(2 * n, 1, seed ^ 5);
        let delta_t = gaussian(1, 2 * m, seed ^ 6);
        let layer = MdsLayer::new(&w, m, n, p_f, p_b).unwrap();
        let mut plan = FaultPlan::none();
        for r in 0..t_f.max(0) as usize {
            plan = plan.with(Step::O1, r * n, FaultSpec::Gaussian { sigma: 1.0 });
        }
        for c in 0..t_b.max(0) as usize {
            plan = plan.with(Step::O2, c * m, FaultSpec::Gaussian { sigma: 1.0 });
        }
        let ctx = FaultContext::new(seed);
        let s = layer.feedforward(&x, &plan, mode, &ctx).unwrap();
        prop_assert!(s.rel_diff(&w.matmul(&x).unwrap()) < 1e-8);
        let c = layer.backprop(&delta_t, &plan, mode, &ctx).unwrap();
        prop_assert!(c.rel_diff(&delta_t.matmul(&w).unwrap()) < 1e-8);
    }

    #[test]
    fn checkpoint_round_trip(
        dims in prop::collection::vec(1usize..6, 2..5), iteration in 0usize..1000, seed: u64,
    ) {
        let weights: Vec<Mat> = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| gaussian(w[1], w[0], seed ^ l as u64))
            .collect();
        let c = Checkpoint::new(iteration, seed, weights).unwrap();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        prop_assert_eq!(back, c);
    }
}
