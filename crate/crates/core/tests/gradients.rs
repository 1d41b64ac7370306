//! Reverse-mode gradients against central finite differences.

mod common;

use common::{check_model, random_tensor, FdSummary, H, REL_TOL};
use feddecomp::nn::ModelSpec;
use feddecomp::tensor::{Graph, SeededRng, Tensor};

fn assert_clean(summary: FdSummary, expected: usize) {
    assert_eq!(summary.checked, expected);
    assert!(summary.failures.is_empty(), "{:#?}", summary.failures);
}

#[test]
fn mlp_decomposed_matches_finite_differences() {
    let spec = ModelSpec::mlp(10, 4).unwrap();
    assert_clean(check_model(&spec, 6, 600, 1), 600);
}

#[test]
fn cnn_decomposed_matches_finite_differences() {
    let spec = ModelSpec::cnn(1, 8, 8, 3).unwrap();
    assert_clean(check_model(&spec, 3, 500, 2), 500);
}

#[test]
fn plain_models_match_finite_differences() {
    let mlp = ModelSpec::mlp(7, 3).unwrap().without_decomposition();
    let cnn = ModelSpec::cnn(2, 5, 6, 2).unwrap().without_decomposition();
    assert_clean(check_model(&mlp, 4, 200, 3), 200);
    assert_clean(check_model(&cnn, 2, 200, 4), 200);
}

#[test]
fn composed_ops_match_finite_differences() {
    let mut rng = SeededRng::new(5);
    let x0 = random_tensor(&[2, 3, 5, 5], 1.0, &mut rng);
    let k0 = random_tensor(&[3, 2, 3, 3], 0.5, &mut rng);
    let f = |x: &Tensor, k: &Tensor, want: bool| {
        let mut g = Graph::new();
        let xv = g.param(x.clone());
        let kv = g.param(k.clone());
        let c = g.conv2d(xv, kv, 1).unwrap();
        let p = g.max_pool2(c).unwrap();
        let r = g.relu(p);
        let m = g.mul(r, r).unwrap();
        let s = g.sum(m);
        let v = g.value(s).item();
        let grads = want.then(|| g.backward(s).unwrap());
        (v, grads.map(|gr| (gr.get(xv).unwrap().clone(), gr.get(kv).unwrap().clone())))
    };
    let (_, grads) = f(&x0, &k0, true);
    let (gx, gk) = grads.unwrap();
    for (which, analytic) in [(0, &gx), (1, &gk)] {
        for idx in 0..analytic.numel() {
            let bump = |delta: f64| {
                let (mut x, mut k) = (x0.clone(), k0.clone());
                if which == 0 {
                    x.data_mut()[idx] += delta;
                } else {
                    k.data_mut()[idx] += delta;
                }
                f(&x, &k, false).0
            };
            let numeric = (bump(H) - bump(-H)) / (2.0 * H);
            let a = analytic.data()[idx];
            let scale = a.abs().max(numeric.abs());
            if scale < 1e-8 {
                assert!((a - numeric).abs() < 1e-6);
            } else {
                assert!((a - numeric).abs() / scale < REL_TOL, "{which}[{idx}]: {a} vs {numeric}");
            }
        }
    }
}
