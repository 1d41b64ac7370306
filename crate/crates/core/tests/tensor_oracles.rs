//! Tensor and model operations against straight-line reference code.

use feddecomp::nn::{
    evaluate_loss, init_decomposed, predict, DecomposedParam, LayerKind, LowRank, ModelParams, ModelSpec,
};
use feddecomp::tensor::{Graph, SeededRng, Tensor};
use proptest::prelude::*;

fn random(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gaussian()).collect()).unwrap()
}

fn triple_loop(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a.data()[i * k + p] * b.data()[p * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

/// Direct cross-correlation with zero padding; kernel laid out `I×O×K×K`.
fn conv_loops(x: &Tensor, w: &Tensor, pad: usize) -> (Vec<usize>, Vec<f64>) {
    let (n, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, k) = (w.shape()[1], w.shape()[2]);
    let (oh, ow) = (h + 2 * pad - k + 1, wd + 2 * pad - k + 1);
    let mut out = vec![0.0; n * co * oh * ow];
    for b in 0..n {
        for o in 0..co {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = 0.0;
                    for i in 0..ci {
                        for k1 in 0..k {
                            for k2 in 0..k {
                                let (iy, ix) = (y + k1, xx + k2);
                                if iy < pad || ix < pad || iy - pad >= h || ix - pad >= wd {
                                    continue;
                                }
                                let xv = x.data()[((b * ci + i) * h + iy - pad) * wd + ix - pad];
                                let wv = w.data()[((i * co + o) * k + k1) * k + k2];
                                s += xv * wv;
                            }
                        }
                    }
                    out[((b * co + o) * oh + y) * ow + xx] = s;
                }
            }
        }
    }
    (vec![n, co, oh, ow], out)
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = SeededRng::new(1);
    for (m, k, n) in [(1, 1, 1), (3, 5, 2), (17, 9, 23), (64, 16, 8)] {
        let a = random(&[m, k], &mut rng);
        let b = random(&[k, n], &mut rng);
        let got = a.matmul(&b).unwrap();
        for (g, e) in got.data().iter().zip(triple_loop(&a, &b)) {
            assert!((g - e).abs() <= 1e-12, "{g} vs {e}");
        }
    }
}

#[test]
fn conv2d_matches_nested_loops() {
    let mut rng = SeededRng::new(2);
    for (n, ci, co, h, w, k, pad) in [(1, 1, 1, 3, 3, 3, 1), (2, 3, 4, 6, 5, 3, 1), (1, 2, 2, 5, 7, 2, 0), (3, 1, 8, 8, 8, 3, 1)] {
        let x = random(&[n, ci, h, w], &mut rng);
        let kern = random(&[ci, co, k, k], &mut rng);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let kv = g.constant(kern.clone());
        let y = g.conv2d(xv, kv, pad).unwrap();
        let (shape, expect) = conv_loops(&x, &kern, pad);
        assert_eq!(g.value(y).shape(), shape.as_slice());
        for (a, b) in g.value(y).data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

/// Logits of `in → hidden → C` computed by hand from the effective weights.
fn mlp_oracle(params: &ModelParams, x: &Tensor) -> Vec<f64> {
    let mut act = x.clone();
    let layers = params.weights.len();
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        let eff = w.effective_weight();
        let mut z = Tensor::new(
            vec![act.shape()[0], eff.shape()[1]],
            triple_loop(&act, &eff),
        )
        .unwrap();
        let cols = z.shape()[1];
        for (i, v) in z.data_mut().iter_mut().enumerate() {
            *v += b.data()[i % cols];
            if l + 1 < layers {
                *v = v.max(0.0);
            }
        }
        act = z;
    }
    act.into_data()
}

fn mean_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.chunks(classes).zip(labels) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

#[test]
fn mlp_loss_matches_straight_line_oracle() {
    let mut rng = SeededRng::new(3);
    let spec = ModelSpec::mlp_with_hidden(5, &[7], 3).unwrap();
    let mut params = init_decomposed(&spec, 0.5, 0.5, &mut rng).unwrap();
    for w in params.weights.iter_mut() {
        let lr = w.low_rank.as_mut().unwrap();
        lr.factor_b = random(lr.factor_b.shape(), &mut rng);
    }
    for b in params.biases.iter_mut() {
        *b = random(b.shape(), &mut rng);
    }
    let x = random(&[6, 5], &mut rng);
    let y = vec![0, 2, 1, 1, 0, 2];
    let oracle = mean_cross_entropy(&mlp_oracle(&params, &x), &y, 3);
    let got = evaluate_loss(&spec, &params, &x, &y).unwrap();
    assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
}

#[test]
fn decomposed_forward_equals_plain_forward_at_init() {
    let mut rng = SeededRng::new(4);
    for spec in [ModelSpec::mlp(12, 5).unwrap(), ModelSpec::cnn(1, 6, 6, 4).unwrap()] {
        let decomposed = init_decomposed(&spec, 0.5, 0.5, &mut rng).unwrap();
        let mut plain = decomposed.clone();
        plain.weights.iter_mut().for_each(|w| w.low_rank = None);
        let mut shape = vec![4];
        shape.extend_from_slice(&spec.input_shape);
        let x = random(&shape, &mut rng);
        assert_eq!(
            predict(&spec, &decomposed, &x).unwrap(),
            predict(&spec.without_decomposition(), &plain, &x).unwrap()
        );
    }
}

#[test]
fn decomposition_is_capacity_neutral() {
    let mut rng = SeededRng::new(5);
    let spec = ModelSpec::cnn(1, 6, 6, 3).unwrap();
    let mut params = init_decomposed(&spec, 0.5, 0.5, &mut rng).unwrap();
    for w in params.weights.iter_mut() {
        let lr = w.low_rank.as_mut().unwrap();
        lr.factor_b = random(lr.factor_b.shape(), &mut rng);
    }
    let mut plain = params.clone();
    for w in plain.weights.iter_mut() {
        w.sigma = w.effective_weight();
        w.low_rank = None;
    }
    let x = random(&[3, 1, 6, 6], &mut rng);
    let a = predict(&spec, &params, &x).unwrap();
    let b = predict(&spec.without_decomposition(), &plain, &x).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-12);
}

fn dense_param(sigma: Tensor, b: Tensor, a: Tensor) -> DecomposedParam {
    DecomposedParam {
        kind: LayerKind::FullyConnected,
        sigma,
        low_rank: Some(LowRank {
            factor_b: b,
            factor_a: a,
        }),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn effective_weight_is_linear_in_each_part(seed in any::<u64>(), c in -3.0f64..3.0) {
        let mut rng = SeededRng::new(seed);
        let (i, o, r) = (4, 3, 2);
        let s1 = random(&[i, o], &mut rng);
        let s2 = random(&[i, o], &mut rng);
        let b1 = random(&[i, r], &mut rng);
        let b2 = random(&[i, r], &mut rng);
        let a = random(&[r, o], &mut rng);
        let w = |s: &Tensor, b: &Tensor| dense_param(s.clone(), b.clone(), a.clone()).effective_weight();
        let lhs = w(&s1.add(&s2.scale(c)).unwrap(), &b1.add(&b2.scale(c)).unwrap());
        let rhs = w(&s1, &b1).add(&w(&s2, &b2).scale(c)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn matmul_transpose_identity(seed in any::<u64>(), m in 1usize..6, k in 1usize..6, n in 1usize..6) {
        let mut rng = SeededRng::new(seed);
        let a = random(&[m, k], &mut rng);
        let b = random(&[k, n], &mut rng);
        let left = a.matmul(&b).unwrap().transpose().unwrap();
        let right = b.transpose().unwrap().matmul(&a.transpose().unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
    }

    #[test]
    fn flatten_sigma_round_trips(seed in any::<u64>()) {
        let spec = ModelSpec::mlp_with_hidden(3, &[4], 2).unwrap();
        let mut rng = SeededRng::new(seed);
        let p = init_decomposed(&spec, 0.5, 1.0, &mut rng).unwrap();
        let mut q = init_decomposed(&spec, 0.5, 1.0, &mut SeededRng::new(seed ^ 1)).unwrap();
        q.load_sigma(&p.flatten_sigma()).unwrap();
        prop_assert_eq!(q.flatten_sigma(), p.flatten_sigma());
    }

    #[test]
    fn tau_rank_never_exceeds_inner_rank(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let p = dense_param(Tensor::zeros(&[5, 4]), random(&[5, 1], &mut rng), random(&[1, 4], &mut rng));
        let tau = p.tau();
        // every 2×2 minor of a rank-1 matrix vanishes
        for r in 0..4 {
            for c in 0..3 {
                let d = tau.at2(r, c) * tau.at2(r + 1, c + 1) - tau.at2(r, c + 1) * tau.at2(r + 1, c);
                prop_assert!(d.abs() < 1e-9);
            }
        }
    }
}
