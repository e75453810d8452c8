use super::*;
use crate::graph::TaskSpec;
use crate::tensor::grad_check;
use rand::{Rng, SeedableRng};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Tensor::vector(raw.into_iter().map(|v| v / total).collect())
}

#[test]
fn one_hot_result_selects_latent_row() {
    let tape = Tape::new();
    let s = Tensor::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
    let res = Tensor::vector(vec![0.0, 1.0, 0.0]);
    let lsv = latent_state_vector(&tape, &res, &s).unwrap();
    assert_eq!(lsv.value(), vec![3.0, 4.0]);
}

#[test]
fn uniform_result_averages_rows() {
    let tape = Tape::new();
    let s = Tensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap();
    let res = Tensor::vector(vec![0.5, 0.5]);
    let lsv = latent_state_vector(&tape, &res, &s).unwrap();
    assert_eq!(lsv.value(), vec![2.0, 3.0]);
}

#[test]
fn latent_state_vector_matches_naive_loop() {
    let mut rng = rng(1);
    let tape = Tape::new();
    let s_data = rand_vec(&mut rng, 4 * 3, -1.0, 1.0);
    let s = Tensor::new(vec![4, 3], s_data.clone()).unwrap();
    let res = random_distribution(&mut rng, 4);
    let lsv = latent_state_vector(&tape, &res, &s).unwrap();
    let rv = res.value();
    for k in 0..3 {
        let expect: f64 = (0..4).map(|j| rv[j] * s_data[j * 3 + k]).sum();
        assert!((lsv.value()[k] - expect).abs() < 1e-12);
    }
}

#[test]
fn latent_state_dimension_mismatch_is_rejected() {
    let tape = Tape::new();
    let s = Tensor::zeros(vec![3, 2]);
    let res = Tensor::vector(vec![0.5, 0.5]);
    assert!(matches!(
        latent_state_vector(&tape, &res, &s),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn task_semantic_zero_and_positive_branches() {
    let tape = Tape::new();
    let ws = Tensor::new(vec![2, 2], vec![1., 0., 0., 1.]).unwrap();
    let zero = Tensor::zeros(vec![2]);
    assert_eq!(task_semantic(&tape, &ws, &zero).unwrap().value(), vec![0.0, 0.0]);
    let pos = Tensor::vector(vec![0.7, 1.3]);
    assert_eq!(task_semantic(&tape, &ws, &pos).unwrap().value(), vec![0.7, 1.3]);
}

#[test]
fn latent_to_semantic_chain_gradcheck() {
    let mut rng = rng(2);
    let s = Tensor::param(vec![3, 4], rand_vec(&mut rng, 12, -0.5, 0.5)).unwrap();
    let ws = Tensor::param(vec![5, 4], rand_vec(&mut rng, 20, -0.5, 0.5)).unwrap();
    let res = random_distribution(&mut rng, 3);
    let err = grad_check(
        move |tape, ins| {
            let lsv = latent_state_vector(tape, &res, &ins[0])?;
            let sem = task_semantic(tape, &ins[1], &lsv)?;
            Ok(tape.sum(&sem))
        },
        &[s, ws],
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-4, "chain gradcheck error {err}");
}

#[test]
fn forward_predict_with_unit_semantics_uses_raw_fact() {
    let mut rng = rng(3);
    let tape = Tape::new();
    let fact = Tensor::vector(rand_vec(&mut rng, 4, -1.0, 1.0));
    let sem = Tensor::ones(vec![4]);
    let head = AffineHead {
        weight: Tensor::new(vec![3, 4], rand_vec(&mut rng, 12, -1.0, 1.0)).unwrap(),
        bias: Tensor::new(vec![3], rand_vec(&mut rng, 3, -1.0, 1.0)).unwrap(),
    };
    let via_sem = forward_predict(&tape, &fact, &sem, &head).unwrap();
    let direct = tape.softmax(&head.apply(&tape, &fact).unwrap()).unwrap();
    assert_eq!(via_sem.value(), direct.value());
}

#[test]
fn forward_predict_zero_head_is_uniform() {
    let tape = Tape::new();
    let fact = Tensor::vector(vec![0.4, -0.2, 0.9]);
    let sem = Tensor::vector(vec![1.0, 2.0, 0.5]);
    let head = AffineHead {
        weight: Tensor::zeros(vec![5, 3]),
        bias: Tensor::zeros(vec![5]),
    };
    let pred = forward_predict(&tape, &fact, &sem, &head).unwrap();
    for p in pred.value() {
        assert!((p - 0.2).abs() < 1e-15);
    }
}

#[test]
fn forward_predictions_sum_to_one() {
    let mut rng = rng(4);
    let tape = Tape::new();
    for _ in 0..20 {
        let fact = Tensor::vector(rand_vec(&mut rng, 6, -2.0, 2.0));
        let sem = Tensor::vector(rand_vec(&mut rng, 6, -2.0, 2.0));
        let head = AffineHead {
            weight: Tensor::new(vec![4, 6], rand_vec(&mut rng, 24, -1.0, 1.0)).unwrap(),
            bias: Tensor::new(vec![4], rand_vec(&mut rng, 4, -1.0, 1.0)).unwrap(),
        };
        let pred = forward_predict(&tape, &fact, &sem, &head).unwrap();
        assert!((pred.value().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn zero_gate_head_gives_half_everywhere() {
    let tape = Tape::new();
    let head = AffineHead {
        weight: Tensor::zeros(vec![3, 4]),
        bias: Tensor::zeros(vec![3]),
    };
    let lsv = Tensor::vector(vec![0.3, -0.8, 0.1, 0.9]);
    let gate = backward_verify(&tape, &lsv, &head).unwrap();
    assert_eq!(gate.value(), vec![0.5, 0.5, 0.5]);
}

#[test]
fn large_positive_bias_saturates_gate_open() {
    let tape = Tape::new();
    let head = AffineHead {
        weight: Tensor::zeros(vec![2, 3]),
        bias: Tensor::new(vec![2], vec![1000.0, 1000.0]).unwrap(),
    };
    let gate = backward_verify(&tape, &Tensor::zeros(vec![3]), &head).unwrap();
    for g in gate.value() {
        assert!(g > 1.0 - 1e-12);
    }
}

#[test]
fn gate_chain_gradcheck() {
    let mut rng = rng(5);
    let s = Tensor::param(vec![3, 4], rand_vec(&mut rng, 12, -0.5, 0.5)).unwrap();
    let w = Tensor::param(vec![2, 4], rand_vec(&mut rng, 8, -0.5, 0.5)).unwrap();
    let b = Tensor::param(vec![2], rand_vec(&mut rng, 2, -0.5, 0.5)).unwrap();
    let res = random_distribution(&mut rng, 3);
    let err = grad_check(
        move |tape, ins| {
            let lsv = latent_state_vector(tape, &res, &ins[0])?;
            let head = AffineHead {
                weight: ins[1].clone(),
                bias: ins[2].clone(),
            };
            let gate = backward_verify(tape, &lsv, &head)?;
            Ok(tape.sum(&gate))
        },
        &[s, w, b],
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-4, "gate gradcheck error {err}");
}

#[test]
fn single_factor_fusion_is_the_prediction() {
    let mut rng = rng(6);
    let tape = Tape::new();
    let pred = random_distribution(&mut rng, 5);
    let fused = comprehensive_fp(&tape, &[pred.clone()]).unwrap();
    for (f, p) in fused.value().iter().zip(pred.value()) {
        assert!((f - p).abs() < 1e-12);
    }
}

#[test]
fn fusion_matches_hand_product() {
    let tape = Tape::new();
    let a = Tensor::vector(vec![0.5, 0.5]);
    let b = Tensor::vector(vec![0.8, 0.2]);
    let fused = comprehensive_fp(&tape, &[a, b]).unwrap();
    // [0.4, 0.1] normalized sums to [0.8, 0.2].
    let v = fused.value();
    assert!((v[0] - 0.8).abs() < 1e-12);
    assert!((v[1] - 0.2).abs() < 1e-12);
}

#[test]
fn uniform_factor_never_moves_the_fusion() {
    let mut rng = rng(7);
    let tape = Tape::new();
    for _ in 0..20 {
        let t = rng.gen_range(2..=6);
        let p = random_distribution(&mut rng, t);
        let uniform = Tensor::vector(vec![1.0 / t as f64; t]);
        let with = comprehensive_fp(&tape, &[p.clone(), uniform]).unwrap();
        let without = comprehensive_fp(&tape, &[p]).unwrap();
        for (a, b) in with.value().iter().zip(without.value()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn fusion_without_factors_is_an_ordering_error() {
    let tape = Tape::new();
    assert!(matches!(
        comprehensive_fp(&tape, &[]),
        Err(Error::Ordering(_))
    ));
}

#[test]
fn no_follow_ups_verification_is_all_ones() {
    let tape = Tape::new();
    let ver = comprehensive_bv(&tape, &[], 4).unwrap();
    assert_eq!(ver.value(), vec![1.0; 4]);
}

#[test]
fn single_gate_verification_normalizes() {
    let tape = Tape::new();
    let gate = Tensor::vector(vec![0.2, 0.6]);
    let ver = comprehensive_bv(&tape, &[gate], 2).unwrap();
    assert!((ver.value()[0] - 0.25).abs() < 1e-12);
    assert!((ver.value()[1] - 0.75).abs() < 1e-12);
}

#[test]
fn multi_gate_verification_matches_loop_oracle() {
    let mut rng = rng(8);
    let tape = Tape::new();
    for _ in 0..50 {
        let t = rng.gen_range(2..=6);
        let g1 = Tensor::vector(rand_vec(&mut rng, t, 0.01, 0.99));
        let g2 = Tensor::vector(rand_vec(&mut rng, t, 0.01, 0.99));
        let ver = comprehensive_bv(&tape, &[g1.clone(), g2.clone()], t).unwrap();
        let prod: Vec<f64> = g1
            .value()
            .iter()
            .zip(g2.value())
            .map(|(a, b)| a * b)
            .collect();
        let total: f64 = prod.iter().sum();
        for (v, p) in ver.value().iter().zip(prod) {
            assert!((v - p / total).abs() < 1e-12);
        }
    }
}

#[test]
fn identity_verification_preserves_result() {
    let mut rng = rng(9);
    let tape = Tape::new();
    let res = random_distribution(&mut rng, 4);
    let ver = Tensor::ones(vec![4]);
    let y = final_result(&tape, &res, &ver, true).unwrap();
    assert_eq!(argmax(&y), argmax(&res));
    for (a, b) in y.value().iter().zip(res.value()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn verification_can_flip_the_argmax() {
    let tape = Tape::new();
    let res = Tensor::vector(vec![0.6, 0.4]);
    let ver = Tensor::vector(vec![0.1, 0.9]);
    let y = final_result(&tape, &res, &ver, true).unwrap();
    // Product [0.06, 0.36] renormalizes to [1/7, 6/7].
    assert!((y.value()[0] - 1.0 / 7.0).abs() < 1e-12);
    assert!((y.value()[1] - 6.0 / 7.0).abs() < 1e-12);
    assert_eq!(argmax(&y), 1);
}

#[test]
fn uniform_verification_never_flips_argmax() {
    let mut rng = rng(10);
    let tape = Tape::new();
    for _ in 0..30 {
        let t = rng.gen_range(2..=6);
        let res = random_distribution(&mut rng, t);
        let c = rng.gen_range(0.05..5.0);
        let ver = Tensor::vector(vec![c; t]);
        let y = final_result(&tape, &res, &ver, true).unwrap();
        assert_eq!(argmax(&y), argmax(&res));
    }
}

// ── decode_case ──────────────────────────────────────────────────────

fn decoded(
    seed: u64,
    graph: &TaskGraph,
    opts: &DecodeOptions,
) -> (MpbfnParams, Tensor, JudgmentOutput) {
    let mut r = rng(seed);
    let d_c = 6;
    let d_s = 4;
    let params = MpbfnParams::init(graph, d_c, d_s, &mut r).unwrap();
    let fact = Tensor::vector(rand_vec(&mut r, d_c, -1.0, 1.0));
    let tape = Tape::new();
    let out = decode_case(&tape, &params, graph, &fact, None, opts).unwrap();
    (params, fact, out)
}

#[test]
fn default_topology_decode_traces_by_hand() {
    let graph = TaskGraph::default_ljp(3, 4, 5);
    let opts = DecodeOptions::default();
    let (params, fact, out) = decoded(20, &graph, &opts);
    let tape = Tape::new();

    // res_law comes from the direct head.
    let law_direct = tape
        .softmax(&params.root_head(0).unwrap().apply(&tape, &fact).unwrap())
        .unwrap();
    for (a, b) in out.res[0].value().iter().zip(law_direct.value()) {
        assert!((a - b).abs() < 1e-12);
    }

    // res_charge is the single prediction (0, 1), normalized.
    let pred01 = &out.preds.iter().find(|(e, _)| *e == (0, 1)).unwrap().1;
    let p = pred01.value();
    let total: f64 = p.iter().sum();
    for (a, b) in out.res[1].value().iter().zip(p.iter()) {
        assert!((a - b / total).abs() < 1e-12);
    }

    // res_penalty is the normalized product of (0, 2) and (1, 2).
    let pred02 = &out.preds.iter().find(|(e, _)| *e == (0, 2)).unwrap().1;
    let pred12 = &out.preds.iter().find(|(e, _)| *e == (1, 2)).unwrap().1;
    let prod: Vec<f64> = pred02
        .value()
        .iter()
        .zip(pred12.value())
        .map(|(a, b)| a * b)
        .collect();
    let total: f64 = prod.iter().sum();
    for (a, b) in out.res[2].value().iter().zip(prod) {
        assert!((a - b / total).abs() < 1e-12);
    }

    // ver_law fuses the gates from charge and penalty; ver_charge from
    // penalty alone; ver_penalty is the all-ones base case.
    let gate10 = &out.gates.iter().find(|(e, _)| *e == (1, 0)).unwrap().1;
    let gate20 = &out.gates.iter().find(|(e, _)| *e == (2, 0)).unwrap().1;
    let prod: Vec<f64> = gate10
        .value()
        .iter()
        .zip(gate20.value())
        .map(|(a, b)| a * b)
        .collect();
    let total: f64 = prod.iter().sum();
    for (a, b) in out.ver[0].value().iter().zip(prod) {
        assert!((a - b / total).abs() < 1e-12);
    }
    let gate21 = &out.gates.iter().find(|(e, _)| *e == (2, 1)).unwrap().1;
    let g = gate21.value();
    let total: f64 = g.iter().sum();
    for (a, b) in out.ver[1].value().iter().zip(g.iter()) {
        assert!((a - b / total).abs() < 1e-12);
    }
    assert_eq!(out.ver[2].value(), vec![1.0; 5]);
}

#[test]
fn edgeless_graph_decodes_to_direct_heads() {
    let graph = TaskGraph::new(
        vec![TaskSpec::new("a", 3), TaskSpec::new("b", 4)],
        vec![],
    )
    .unwrap();
    let opts = DecodeOptions::default();
    let (params, fact, out) = decoded(21, &graph, &opts);
    let tape = Tape::new();
    for i in 0..2 {
        let direct = tape
            .softmax(&params.root_head(i).unwrap().apply(&tape, &fact).unwrap())
            .unwrap();
        assert_eq!(out.ver[i].value(), vec![1.0; graph.classes(i)]);
        for (a, b) in out.y_hat[i].value().iter().zip(direct.value()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert!(out.preds.is_empty());
}

#[test]
fn decode_invariants_hold_over_random_cases() {
    let graph = TaskGraph::default_ljp(3, 4, 5);
    let mut r = rng(22);
    let params = MpbfnParams::init(&graph, 6, 4, &mut r).unwrap();
    let opts = DecodeOptions::default();
    for _ in 0..100 {
        let fact = Tensor::vector(rand_vec(&mut r, 6, -2.0, 2.0));
        let tape = Tape::new();
        let out = decode_case(&tape, &params, &graph, &fact, None, &opts).unwrap();
        for res in &out.res {
            let v = res.value();
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(v.iter().all(|&p| p > 0.0));
        }
        for (_, pred) in &out.preds {
            assert!((pred.value().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for (_, gate) in &out.gates {
            assert!(gate.value().iter().all(|&g| g > 0.0 && g < 1.0));
        }
        for ver in &out.ver {
            assert!(ver.value().iter().all(|&v| v > 0.0));
        }
    }
}

#[test]
fn decode_is_bit_deterministic() {
    let graph = TaskGraph::default_ljp(3, 4, 5);
    let opts = DecodeOptions::default();
    let (params, fact, first) = decoded(23, &graph, &opts);
    let tape = Tape::new();
    let second = decode_case(&tape, &params, &graph, &fact, None, &opts).unwrap();
    assert!(first.bits_eq(&second));
}

#[test]
fn disabling_bv_yields_plain_forward_outputs() {
    let graph = TaskGraph::default_ljp(3, 4, 5);
    let mut r = rng(24);
    let params = MpbfnParams::init(&graph, 6, 4, &mut r).unwrap();
    let fact = Tensor::vector(rand_vec(&mut r, 6, -1.0, 1.0));
    let tape = Tape::new();
    let off = DecodeOptions {
        bv_enabled: false,
        ..DecodeOptions::default()
    };
    let out = decode_case(&tape, &params, &graph, &fact, None, &off).unwrap();
    assert!(out.gates.is_empty());
    for (i, ver) in out.ver.iter().enumerate() {
        assert_eq!(ver.value(), vec![1.0; graph.classes(i)]);
    }
}

#[test]
fn argmax_ties_break_to_lowest_index() {
    assert_eq!(argmax(&Tensor::vector(vec![0.4, 0.4, 0.2])), 0);
    assert_eq!(argmax(&Tensor::vector(vec![0.1, 0.45, 0.45])), 1);
}
