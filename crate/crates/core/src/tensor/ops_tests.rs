use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use super::*;
use crate::rng;

fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, v).unwrap()
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng::from_seed(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng::normal(&mut r)).collect()).unwrap()
}

/// Distinct, well-separated values so max pooling has no near ties.
fn spread(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng::from_seed(seed);
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * 0.1).collect();
    v.shuffle(&mut r);
    for x in &mut v {
        *x += r.gen_range(-0.01..0.01);
    }
    Tensor::from_vec(shape, v).unwrap()
}

const STEP: f64 = 1e-3;
const TOL: f64 = 1e-4;

#[test]
fn conv2d_one_by_one_doubles() {
    let mut g = Graph::<f64>::new();
    let x = g.input(random(&[1, 3, 4], 1));
    let k = g.input(t(&[1, 1, 1, 1], &[2.0]));
    let b = g.input(t(&[1], &[0.0]));
    let y = g.conv2d(x, k, b, 0, 1).unwrap();
    for (a, b) in g.value(y).data().iter().zip(g.value(x).data()) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn conv2d_all_ones_hand_values() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::full(&[1, 3, 3], 1.0));
    let k = g.input(Tensor::full(&[1, 1, 3, 3], 1.0));
    let b = g.input(t(&[1], &[0.0]));
    let y = g.conv2d(x, k, b, 1, 1).unwrap();
    assert_eq!(
        g.value(y).data(),
        &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]
    );
}

#[test]
fn conv2d_zero_kernel_gives_bias() {
    let mut g = Graph::<f64>::new();
    let x = g.input(random(&[2, 5, 5], 2));
    let k = g.input(Tensor::zeros(&[3, 2, 3, 3]));
    let b = g.input(t(&[3], &[0.5, -1.0, 2.0]));
    let y = g.conv2d(x, k, b, 1, 1).unwrap();
    for (c, plane) in g.value(y).data().chunks(25).enumerate() {
        assert!(plane.iter().all(|&v| v == [0.5, -1.0, 2.0][c]));
    }
}

#[test]
fn conv2d_rejects_channel_mismatch() {
    let mut g = Graph::<f64>::new();
    let x = g.input(random(&[2, 5, 5], 2));
    let k = g.input(Tensor::zeros(&[3, 1, 3, 3]));
    let b = g.input(Tensor::zeros(&[3]));
    assert!(matches!(g.conv2d(x, k, b, 1, 1), Err(GraphError::Shape(_))));
}

#[test]
fn conv2d_strided_shape() {
    let mut g = Graph::<f64>::new();
    let x = g.input(random(&[1, 7, 9], 3));
    let k = g.input(random(&[2, 1, 3, 3], 4));
    let b = g.input(Tensor::zeros(&[2]));
    let y = g.conv2d(x, k, b, 1, 2).unwrap();
    assert_eq!(g.value(y).shape(), &[2, 4, 5]);
}

#[test]
fn dense_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.input(t(&[2], &[3.0, 4.0]));
    let w = g.input(t(&[1, 2], &[1.0, 2.0]));
    let b = g.input(t(&[1], &[0.0]));
    let y = g.dense(x, w, Some(b)).unwrap();
    assert_eq!(g.value(y).data(), &[11.0]);

    let eye = g.input(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let zb = g.input(Tensor::zeros(&[2]));
    let y = g.dense(x, eye, Some(zb)).unwrap();
    assert_eq!(g.value(y).data(), &[3.0, 4.0]);

    let zw = g.input(Tensor::zeros(&[2, 2]));
    let bb = g.input(t(&[2], &[-1.0, 7.0]));
    let y = g.dense(x, zw, Some(bb)).unwrap();
    assert_eq!(g.value(y).data(), &[-1.0, 7.0]);

    let bad = g.input(Tensor::zeros(&[2, 3]));
    assert!(g.dense(x, bad, None).is_err());
}

#[test]
fn layer_norm_examples() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::full(&[4, 3, 3], 2.5));
    let one = g.input(Tensor::full(&[4], 1.0));
    let zero = g.input(Tensor::zeros(&[4]));
    let y = g.layer_norm(x, one, zero).unwrap();
    assert!(g.value(y).max_abs() <= 1e-3);

    let mut g = Graph::<f64>::new();
    let x = g.input(t(&[2], &[1.0, -1.0]));
    let one = g.input(Tensor::full(&[2], 1.0));
    let zero = g.input(Tensor::zeros(&[2]));
    let y = g.layer_norm(x, one, zero).unwrap();
    for (a, b) in g.value(y).data().iter().zip([1.0, -1.0]) {
        assert!((a - b).abs() < 1e-5);
    }

    let x = g.input(random(&[3, 4, 4], 5));
    let gain = g.input(Tensor::zeros(&[3]));
    let bias = g.input(t(&[3], &[0.3, 0.3, 0.3]));
    let y = g.layer_norm(x, gain, bias).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.3));
}

#[test]
fn activation_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.input(t(&[3], &[0.0, 1.0, -20.0]));
    let e = g.elu(x);
    let v = g.value(e).data();
    assert_eq!(v[0], 0.0);
    assert_eq!(v[1], 1.0);
    assert!((v[2] + 1.0).abs() < 1e-8);
    let z = g.input(t(&[1], &[0.0]));
    let s = g.sigmoid(z);
    assert_eq!(g.value(s).data(), &[0.5]);
}

#[test]
fn max_pool_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.input(t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let y = g.max_pool2(x).unwrap();
    assert_eq!(g.value(y).data(), &[4.0]);

    let mut x = g.input(random(&[1, 78, 40], 6));
    let mut dims = Vec::new();
    for _ in 0..4 {
        x = g.max_pool2(x).unwrap();
        dims.push(g.value(x).shape()[1..].to_vec());
    }
    assert_eq!(
        dims,
        vec![vec![39, 20], vec![19, 10], vec![9, 5], vec![4, 2]]
    );

    let c = g.input(Tensor::full(&[2, 5, 7], 3.0));
    let y = g.max_pool2(c).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 3.0));

    let tiny = g.input(Tensor::zeros(&[1, 1, 4]));
    assert!(g.max_pool2(tiny).is_err());
}

#[test]
fn upsample_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.input(t(&[1, 1, 2], &[1.0, 2.0]));
    let y = g.upsample2(x).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 2, 4]);
    assert_eq!(&g.value(y).data()[..4], &[1.0, 1.25, 1.75, 2.0]);

    let c = g.input(Tensor::full(&[3, 3, 5], -0.7));
    let y = g.upsample2(c).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == -0.7));

    let one = g.input(t(&[1, 1, 1], &[4.5]));
    let y = g.upsample2(one).unwrap();
    assert_eq!(g.value(y).data(), &[4.5; 4]);
}

#[test]
fn pool_after_upsample_is_identity_on_constants() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::full(&[2, 3, 4], 1.5));
    let u = g.upsample2(x).unwrap();
    let p = g.max_pool2(u).unwrap();
    assert_eq!(g.value(p), g.value(x));
}

fn zero_lstm(g: &mut Graph<f64>, n: usize, hidden: usize) -> LstmParams {
    LstmParams {
        w_ih: g.input(Tensor::zeros(&[4 * hidden, n])),
        w_hh: g.input(Tensor::zeros(&[4 * hidden, hidden])),
        bias: g.input(Tensor::zeros(&[4 * hidden])),
    }
}

#[test]
fn lstm_zero_params() {
    let mut g = Graph::<f64>::new();
    let p = zero_lstm(&mut g, 32, 128);
    let x = g.input(random(&[32], 7));
    let h = g.input(Tensor::zeros(&[128]));
    let c = g.input(Tensor::zeros(&[128]));
    let (h1, c1) = g.lstm_step(x, h, c, &p).unwrap();
    assert!(g.value(h1).data().iter().all(|&v| v == 0.0));
    assert!(g.value(c1).data().iter().all(|&v| v == 0.0));

    let c0 = random(&[128], 8);
    let c = g.input(c0.clone());
    let (_, c1) = g.lstm_step(x, h, c, &p).unwrap();
    for (a, b) in g.value(c1).data().iter().zip(c0.data()) {
        assert_eq!(*a, 0.5 * b);
    }
}

#[test]
fn lstm_output_bounded() {
    let mut g = Graph::<f64>::new();
    let p = LstmParams {
        w_ih: g.input(random(&[64, 8], 9)),
        w_hh: g.input(random(&[64, 16], 10)),
        bias: g.input(random(&[64], 11)),
    };
    let x = g.input(random(&[8], 12).map(|v| 2.0 * v));
    let h = g.input(random(&[16], 13));
    let c = g.input(random(&[16], 14).map(|v| 3.0 * v));
    let (h1, _) = g.lstm_step(x, h, c, &p).unwrap();
    assert!(g.value(h1).data().iter().all(|&v| v > -1.0 && v < 1.0));
}

#[test]
fn backward_examples() {
    // d sum(2x) / dx = 2
    let mut g = Graph::<f64>::new();
    let x = g.variable(random(&[5], 15));
    let y = g.scale(x, 2.0);
    let l = g.sum(y);
    let grads = g.backward_leaves(l).unwrap();
    assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 2.0));

    // sigmoid(w x) at w = 0: dw = 0.25 x
    let mut store = ParamStore::<f64>::new();
    let wid = store.register("w", Tensor::zeros(&[1, 3]));
    let unused = store.register("unused", Tensor::full(&[2], 1.0));
    let mut g = Graph::<f64>::new();
    let xv = t(&[3], &[1.0, -2.0, 0.5]);
    let x = g.input(xv.clone());
    let w = g.param(&store, wid);
    let z = g.dense(x, w, None).unwrap();
    let s = g.sigmoid(z);
    let l = g.sum(s);
    let grads = g.backward(l, &store).unwrap();
    for (a, b) in grads.get(wid).data().iter().zip(xv.data()) {
        assert!((a - 0.25 * b).abs() < 1e-15);
    }
    assert!(grads.get(unused).data().iter().all(|&v| v == 0.0));

    // detached branch contributes nothing
    let mut g = Graph::<f64>::new();
    let x = g.variable(random(&[4], 16));
    let d = g.detach(x);
    let y = g.mul(x, d).unwrap();
    let l = g.sum(y);
    let grads = g.backward_leaves(l).unwrap();
    assert_eq!(grads.get(x).unwrap(), g.value(x));
}

#[test]
fn backward_rejects_non_scalar() {
    let mut g = Graph::<f64>::new();
    let x = g.variable(random(&[4], 17));
    let y = g.scale(x, 3.0);
    assert!(matches!(
        g.backward_leaves(y),
        Err(GraphError::NonScalarLoss { .. })
    ));
}

#[test]
fn dice_loss_examples() {
    let mut g = Graph::<f64>::new();
    let target = Tensor::from_vec(
        &[1, 10, 20],
        (0..200).map(|i| if i < 100 { 1.0 } else { 0.0 }).collect(),
    )
    .unwrap();
    let p = g.input(target.clone());
    let l = g.dice_loss(p, &target, 1.0).unwrap();
    assert_eq!(g.value(l).data()[0], 0.0);

    let zero = g.input(Tensor::zeros(&[1, 10, 20]));
    let l = g.dice_loss(zero, &target, 1.0).unwrap();
    assert!((g.value(l).data()[0] - (1.0 - 1.0 / 101.0)).abs() < 1e-12);

    let l = g
        .dice_loss(zero, &Tensor::zeros(&[1, 10, 20]), 1.0)
        .unwrap();
    assert_eq!(g.value(l).data()[0], 0.0);

    assert!(g
        .dice_loss(zero, &Tensor::zeros(&[1, 10, 21]), 1.0)
        .is_err());
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let mut g = Graph::<f32>::new();
        let x = g.input(random(&[3, 9, 11], 18).cast());
        let k = g.input(random(&[4, 3, 3, 3], 19).cast());
        let b = g.input(random(&[4], 20).cast());
        let y = g.conv2d(x, k, b, 1, 1).unwrap();
        let u = g.upsample2(y).unwrap();
        g.value(u).clone()
    };
    assert_eq!(run(), run());
}

// ---- finite-difference machinery (per-primitive checks live in selfcheck) ----

#[test]
fn gradcheck_linear_op_is_exact() {
    let x0 = random(&[8], 71);
    let report = grad_check(
        |g, x| {
            let s = g.scale(x, 3.0);
            Ok(g.sum(s))
        },
        &x0,
        STEP,
        TOL,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-10, "{}", report.max_rel_error);
}

#[test]
fn probes_across_a_pooling_switch_are_refined() {
    // 2x2 window with a near tie: a 1e-3 probe flips the argmax
    let x0 = t(&[1, 2, 2], &[1.0, 1.0004, -2.0, 0.5]);
    let report = grad_check(
        |g, x| {
            let p = g.max_pool2(x)?;
            let s = g.scale(p, 2.0);
            Ok(g.sum(s))
        },
        &x0,
        STEP,
        TOL,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
    assert!(report.refined >= 1);
}

#[test]
fn corrupted_gradient_is_detected() {
    let x0 = spread(&[10], 72);
    let report = grad_check_with(
        |g, x| {
            let e = g.elu(x);
            Ok(g.sum(e))
        },
        &x0,
        STEP,
        TOL,
        || Graph::new().with_corrupted_elu_grad(),
    )
    .unwrap();
    assert!(!report.passed());
    assert!(!report.failures.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_padding_preserves_shape(f in prop::sample::select(vec![1usize, 3, 5]), h in 5usize..20, w in 5usize..20) {
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::full(&[2, h, w], 0.5));
        let k = g.input(Tensor::full(&[3, 2, f, f], 0.1));
        let b = g.input(Tensor::zeros(&[3]));
        let y = g.conv2d(x, k, b, f / 2, 1).unwrap();
        prop_assert_eq!(g.value(y).shape(), &[3, h, w]);
    }

    #[test]
    fn pool_upsample_identity_on_constants(c in 1usize..4, h in 1usize..9, w in 1usize..9, v in -5.0f32..5.0) {
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::full(&[c, h, w], v));
        let u = g.upsample2(x).unwrap();
        let p = g.max_pool2(u).unwrap();
        prop_assert_eq!(g.value(p), g.value(x));
    }
}
