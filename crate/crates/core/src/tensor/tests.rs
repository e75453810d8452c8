use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_param(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::param(shape, data).unwrap()
}

#[test]
fn matmul_identity_passes_vector_through() {
    let tape = Tape::new();
    let eye = Tensor::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
    let v = Tensor::vector(vec![2.0, -1.5, 0.25]);
    let out = tape.matmul(&eye, &v).unwrap();
    assert_eq!(out.value(), vec![2.0, -1.5, 0.25]);
}

#[test]
fn matmul_zeros_yield_zeros() {
    let tape = Tape::new();
    let z = Tensor::zeros(vec![2, 3]);
    let v = Tensor::new(vec![3, 1], vec![4.0, 5.0, 6.0]).unwrap();
    let out = tape.matmul(&z, &v).unwrap();
    assert_eq!(out.shape(), vec![2, 1]);
    assert_eq!(out.value(), vec![0.0, 0.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let tape = Tape::new();
    let a = Tensor::zeros(vec![2, 3]);
    let b = Tensor::zeros(vec![4, 2]);
    let err = tape.matmul(&a, &b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_param(&mut rng, vec![4, 5]);
    let b = rand_param(&mut rng, vec![5, 2]);
    let err = grad_check(
        |tape, ins| {
            let p = tape.matmul(&ins[0], &ins[1])?;
            Ok(tape.sum(&p))
        },
        &[a, b],
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-6, "matmul gradcheck error {err}");
}

#[test]
fn elementwise_identity_and_zero() {
    let tape = Tape::new();
    let a = Tensor::vector(vec![1.5, -2.0, 3.0]);
    let ones = Tensor::ones(vec![3]);
    let zeros = Tensor::zeros(vec![3]);
    assert_eq!(tape.mul(&a, &ones).unwrap().value(), a.value());
    assert_eq!(tape.mul(&a, &zeros).unwrap().value(), vec![0.0; 3]);
}

#[test]
fn elementwise_gradcheck_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for op in [ElemOp::Add, ElemOp::Mul] {
        let a = rand_param(&mut rng, vec![3, 3]);
        let b = rand_param(&mut rng, vec![3, 3]);
        let err = grad_check(
            move |tape, ins| {
                let p = tape.elementwise(op, &ins[0], &ins[1])?;
                Ok(tape.sum(&p))
            },
            &[a, b],
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-6, "{op:?} gradcheck error {err}");
    }
}

#[test]
fn concat_definition_and_empty() {
    let tape = Tape::new();
    let a = Tensor::vector(vec![1.0, 2.0]);
    let b = Tensor::vector(vec![3.0]);
    assert_eq!(tape.concat(&a, &b).unwrap().value(), vec![1.0, 2.0, 3.0]);
    let empty = Tensor::vector(vec![]);
    let c = Tensor::vector(vec![5.0]);
    assert_eq!(tape.concat(&empty, &c).unwrap().value(), vec![5.0]);
}

#[test]
fn concat_rejects_matrices() {
    let tape = Tape::new();
    let a = Tensor::zeros(vec![2, 2]);
    let b = Tensor::vector(vec![1.0]);
    assert!(matches!(
        tape.concat(&a, &b),
        Err(Error::Rank { op: "concat", .. })
    ));
}

#[test]
fn concat_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = rand_param(&mut rng, vec![4]);
    let b = rand_param(&mut rng, vec![6]);
    let w = Tensor::vector((0..10).map(|i| 0.3 + 0.1 * i as f64).collect());
    let err = grad_check(
        move |tape, ins| {
            let c = tape.concat(&ins[0], &ins[1])?;
            tape.dot(&c, &w)
        },
        &[a, b],
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-6, "concat gradcheck error {err}");
}

#[test]
fn activation_fixed_points() {
    let tape = Tape::new();
    let zero = Tensor::vector(vec![0.0]);
    assert_eq!(tape.sigmoid(&zero).value(), vec![0.5]);
    assert_eq!(tape.elu(&zero).value(), vec![0.0]);
    assert_eq!(tape.tanh(&zero).value(), vec![0.0]);
    let sym = tape.softmax(&Tensor::vector(vec![0.0, 0.0])).unwrap();
    assert_eq!(sym.value(), vec![0.5, 0.5]);
}

#[test]
fn softmax_large_inputs_do_not_overflow() {
    let tape = Tape::new();
    let out = tape.softmax(&Tensor::vector(vec![1000.0, 0.0])).unwrap();
    let v = out.value();
    assert!(v.iter().all(|x| x.is_finite()));
    // Shifted-exponent oracle: exp(x_i - max) / sum.
    let oracle = [1.0 / (1.0 + (-1000.0f64).exp()), (-1000.0f64).exp()];
    assert!((v[0] - oracle[0]).abs() < 1e-12);
    assert!((v[1] - oracle[1]).abs() < 1e-12);
}

#[test]
fn softmax_sums_to_one_and_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let tape = Tape::new();
    for _ in 0..50 {
        let x = Tensor::vector((0..7).map(|_| rng.gen_range(-30.0..30.0)).collect());
        let s = tape.softmax(&x).unwrap();
        let v = s.value();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(v.iter().all(|&p| p > 0.0));
    }
}

#[test]
fn max_pool_single_row_and_definition() {
    let tape = Tape::new();
    let single = Tensor::new(vec![1, 3], vec![4.0, -2.0, 7.0]).unwrap();
    assert_eq!(
        tape.max_pool_positions(&single).unwrap().value(),
        vec![4.0, -2.0, 7.0]
    );
    let m = Tensor::new(vec![2, 2], vec![1.0, 5.0, 3.0, 2.0]).unwrap();
    assert_eq!(tape.max_pool_positions(&m).unwrap().value(), vec![3.0, 5.0]);
}

#[test]
fn max_pool_empty_axis_is_degenerate() {
    let tape = Tape::new();
    let empty = Tensor::new(vec![0, 4], vec![]).unwrap();
    assert!(matches!(
        tape.max_pool_positions(&empty),
        Err(Error::Degenerate { .. })
    ));
}

#[test]
fn max_pool_gradcheck_away_from_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = rand_param(&mut rng, vec![6, 4]);
    let err = grad_check(
        |tape, ins| {
            let pooled = tape.max_pool_positions(&ins[0])?;
            Ok(tape.sum(&pooled))
        },
        &[x],
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-6, "max-pool gradcheck error {err}");
}

#[test]
fn lookup_identity_table_gives_unit_vector() {
    let tape = Tape::new();
    let eye = Tensor::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
    assert_eq!(
        tape.embedding_lookup(&eye, 0).unwrap().value(),
        vec![1.0, 0.0, 0.0]
    );
}

#[test]
fn lookup_out_of_range_is_index_error() {
    let tape = Tape::new();
    let table = Tensor::zeros(vec![4, 2]);
    assert!(matches!(
        tape.embedding_lookup(&table, 4),
        Err(Error::Index { index: 4, size: 4, .. })
    ));
}

#[test]
fn repeated_lookup_doubles_row_gradient() {
    let tape = Tape::new();
    let table = Tensor::param(vec![3, 2], vec![0.1; 6]).unwrap();
    let a = tape.embedding_lookup(&table, 1).unwrap();
    let b = tape.embedding_lookup(&table, 1).unwrap();
    let joined = tape.add(&a, &b).unwrap();
    let loss = tape.sum(&joined);
    tape.backward(&loss).unwrap();
    let g = table.grad().unwrap();
    assert_eq!(g, vec![0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);
}

#[test]
fn lookup_gradcheck_over_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let table = rand_param(&mut rng, vec![5, 3]);
    let err = grad_check(
        |tape, ins| {
            let rows: Vec<Tensor> = [0usize, 2, 2, 4]
                .iter()
                .map(|&i| tape.embedding_lookup(&ins[0], i))
                .collect::<Result<_>>()?;
            let stacked = tape.stack_rows(&rows)?;
            let sq = tape.mul(&stacked, &stacked)?;
            Ok(tape.sum(&sq))
        },
        &[table],
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-6, "lookup gradcheck error {err}");
}

#[test]
fn backward_of_sum_is_ones() {
    let tape = Tape::new();
    let w = Tensor::param(vec![4], vec![0.3, -1.0, 2.0, 0.7]).unwrap();
    let loss = tape.sum(&w);
    tape.backward(&loss).unwrap();
    assert_eq!(w.grad().unwrap(), vec![1.0; 4]);
}

#[test]
fn backward_of_dot_self_is_twice_w() {
    let tape = Tape::new();
    let w = Tensor::param(vec![3], vec![0.5, -2.0, 1.5]).unwrap();
    let loss = tape.dot(&w, &w).unwrap();
    tape.backward(&loss).unwrap();
    assert_eq!(w.grad().unwrap(), vec![1.0, -4.0, 3.0]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let tape = Tape::new();
    let w = Tensor::param(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
    let y = tape.scale(&w, 2.0);
    assert!(matches!(
        tape.backward(&y),
        Err(Error::Rank { op: "backward", .. })
    ));
}

#[test]
fn repeated_backward_accumulates() {
    let tape = Tape::new();
    let w = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
    let loss = tape.sum(&w);
    tape.backward(&loss).unwrap();
    tape.backward(&loss).unwrap();
    assert_eq!(w.grad().unwrap(), vec![2.0, 2.0]);
}

#[test]
fn two_consumer_node_accumulates_both_paths() {
    // loss = sum(w ⊙ w) + 3·sum(w)  ⇒  d/dw = 2w + 3, expanded by hand.
    let tape = Tape::new();
    let w = Tensor::param(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
    let sq = tape.mul(&w, &w).unwrap();
    let a = tape.sum(&sq);
    let b = tape.scale(&tape.sum(&w), 3.0);
    let loss = tape.add(&a, &b).unwrap();
    tape.backward(&loss).unwrap();
    assert_eq!(w.grad().unwrap(), vec![4.0, 1.0, 7.0]);
}

#[test]
fn grad_check_linear_is_nearly_exact() {
    let w = Tensor::param(vec![5], vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
    let err = grad_check(|tape, ins| Ok(tape.sum(&ins[0])), &[w], 1e-4).unwrap();
    assert!(err < 1e-10, "linear gradcheck error {err}");
}

#[test]
fn grad_check_softmax_log_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = rand_param(&mut rng, vec![6]);
    let err = grad_check(
        |tape, ins| {
            let s = tape.softmax(&ins[0])?;
            let l = tape.log_shifted(&s, LOG_GUARD);
            let p = tape.pick(&l, 2)?;
            Ok(tape.scale(&p, -1.0))
        },
        &[x],
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-5, "softmax+log gradcheck error {err}");
}

#[test]
fn grad_check_constant_function_is_zero_on_both_sides() {
    let w = Tensor::param(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
    let c = Tensor::scalar(7.0);
    let err = grad_check(
        move |tape, _ins| Ok(tape.scale(&c, 1.0)),
        &[w.clone()],
        1e-4,
    )
    .unwrap();
    assert_eq!(err, 0.0);
    assert!(w.grad().is_none() || w.grad().unwrap().iter().all(|&g| g == 0.0));
}

#[test]
fn div_by_scalar_and_normalize_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let x = Tensor::param(
        vec![5],
        (0..5).map(|_| rng.gen_range(0.2..2.0)).collect(),
    )
    .unwrap();
    let w = Tensor::vector(vec![0.9, -0.3, 0.4, 1.1, -0.7]);
    let err = grad_check(
        move |tape, ins| {
            let n = tape.normalize(&ins[0])?;
            tape.dot(&n, &w)
        },
        &[x],
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "normalize gradcheck error {err}");
}

#[test]
fn all_ops_gradcheck_over_seeds() {
    // One composite expression touching every differentiable op, five seeds.
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let table = rand_param(&mut rng, vec![4, 3]);
        let m = rand_param(&mut rng, vec![3, 3]);
        let v = rand_param(&mut rng, vec![3]);
        let err = grad_check(
            |tape, ins| {
                let (table, m, v) = (&ins[0], &ins[1], &ins[2]);
                let r0 = tape.embedding_lookup(table, 0)?;
                let r2 = tape.embedding_lookup(table, 2)?;
                let joined = tape.concat(&r0, &r2)?; // [6]
                let stacked = tape.stack_rows(&[r0.clone(), r2.clone(), v.clone()])?;
                let pooled = tape.max_pool_positions(&stacked)?; // [3]
                let mv = tape.matmul(m, &pooled)?;
                let act = tape.elu(&mv);
                let sig = tape.sigmoid(&act);
                let th = tape.tanh(&sig);
                let sm = tape.softmax(&th)?;
                let lg = tape.log_shifted(&sm, LOG_GUARD);
                let gated = tape.mul(&sm, &th)?;
                let norm = tape.normalize(&sig)?;
                let a = tape.dot(&gated, &norm)?;
                let b = tape.sum(&lg);
                let c = tape.pick(&joined, 4)?;
                let partial = tape.add(&a, &b)?;
                let total = tape.add(&partial, &c)?;
                Ok(tape.scale(&total, 0.5))
            },
            &[table, m, v],
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: composite gradcheck error {err}");
    }
}

#[test]
fn forward_and_gradients_are_bit_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a = rand_param(&mut rng, vec![4, 4]);
        let v = rand_param(&mut rng, vec![4]);
        let tape = Tape::new();
        let h = tape.matmul(&a, &v).unwrap();
        let s = tape.softmax(&h).unwrap();
        let l = tape.log_shifted(&s, LOG_GUARD);
        let loss = tape.scale(&tape.pick(&l, 1).unwrap(), -1.0);
        tape.backward(&loss).unwrap();
        (
            loss.item().to_bits(),
            a.grad().unwrap().iter().map(|g| g.to_bits()).collect::<Vec<_>>(),
            v.grad().unwrap().iter().map(|g| g.to_bits()).collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(), run());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn softmax_is_a_distribution(xs in proptest::collection::vec(-50.0f64..50.0, 1..12)) {
            let tape = Tape::new();
            let s = tape.softmax(&Tensor::vector(xs)).unwrap();
            let v = s.value();
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(v.iter().all(|&p| p > 0.0));
        }

        #[test]
        fn concat_preserves_contents(a in proptest::collection::vec(-5.0f64..5.0, 0..8),
                                     b in proptest::collection::vec(-5.0f64..5.0, 0..8)) {
            let tape = Tape::new();
            let out = tape
                .concat(&Tensor::vector(a.clone()), &Tensor::vector(b.clone()))
                .unwrap();
            let mut expect = a;
            expect.extend(b);
            prop_assert_eq!(out.value(), expect);
        }

        #[test]
        fn mul_gradcheck_random_shapes(rows in 1usize..4, cols in 1usize..4, seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = rand_param(&mut rng, vec![rows, cols]);
            let b = rand_param(&mut rng, vec![rows, cols]);
            let err = grad_check(
                |tape, ins| {
                    let p = tape.mul(&ins[0], &ins[1])?;
                    Ok(tape.sum(&p))
                },
                &[a, b],
                1e-4,
            )
            .unwrap();
            prop_assert!(err < 1e-5);
        }
    }
}
