//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use feddecomp::nn::{evaluate_loss, gradients, init_decomposed, ModelParams, ModelSpec, Phase};
use feddecomp::tensor::{SeededRng, Tensor};

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
enum Slot {
    Sigma(usize),
    Bias(usize),
    FactorB(usize),
    FactorA(usize),
}

fn tensor_mut(p: &mut ModelParams, slot: Slot) -> &mut Tensor {
    match slot {
        Slot::Sigma(l) => &mut p.weights[l].sigma,
        Slot::Bias(l) => &mut p.biases[l],
        Slot::FactorB(l) => &mut p.weights[l].low_rank.as_mut().unwrap().factor_b,
        Slot::FactorA(l) => &mut p.weights[l].low_rank.as_mut().unwrap().factor_a,
    }
}

fn slots(p: &ModelParams) -> Vec<Slot> {
    let mut out = Vec::new();
    for (l, w) in p.weights.iter().enumerate() {
        out.push(Slot::Sigma(l));
        out.push(Slot::Bias(l));
        if w.low_rank.is_some() {
            out.push(Slot::FactorB(l));
            out.push(Slot::FactorA(l));
        }
    }
    out
}

pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut SeededRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * rng.gaussian()).collect()).unwrap()
}

/// Randomizes every factor so that `B ≠ 0` and every path carries gradient.
fn perturb_factors(p: &mut ModelParams, rng: &mut SeededRng) {
    for w in p.weights.iter_mut() {
        if let Some(lr) = w.low_rank.as_mut() {
            lr.factor_b = random_tensor(lr.factor_b.shape(), 0.2, rng);
        }
    }
    for b in p.biases.iter_mut() {
        *b = random_tensor(b.shape(), 0.1, rng);
    }
}

#[derive(Debug, Default)]
pub struct FdSummary {
    pub checked: usize,
    pub failures: Vec<String>,
}

/// Compares `samples` random coordinates of the joint-phase gradient with
/// central differences of the loss.
pub fn check_model(spec: &ModelSpec, batch: usize, samples: usize, seed: u64) -> FdSummary {
    let mut rng = SeededRng::new(seed);
    let mut params = init_decomposed(spec, 0.5, 0.5, &mut rng).unwrap();
    perturb_factors(&mut params, &mut rng);
    params.set_phase(Phase::Joint);
    let mut shape = vec![batch];
    shape.extend_from_slice(&spec.input_shape);
    let x = random_tensor(&shape, 1.0, &mut rng);
    let y: Vec<usize> = (0..batch).map(|_| rng.below(spec.classes)).collect();

    let (_, _, model, grads) = gradients(spec, &params, &x, &y).unwrap();
    let all = slots(&params);
    let mut summary = FdSummary::default();
    for _ in 0..samples {
        let slot = all[rng.below(all.len())];
        let var = match slot {
            Slot::Sigma(l) => model.sigma_var(l),
            Slot::Bias(l) => model.bias_var(l),
            Slot::FactorB(l) => model.factor_vars(l).unwrap().0,
            Slot::FactorA(l) => model.factor_vars(l).unwrap().1,
        };
        let analytic_t = grads.get(var).expect("joint phase trains every tensor");
        let idx = rng.below(analytic_t.numel());
        let analytic = analytic_t.data()[idx];

        let mut plus = params.clone();
        tensor_mut(&mut plus, slot).data_mut()[idx] += H;
        let mut minus = params.clone();
        tensor_mut(&mut minus, slot).data_mut()[idx] -= H;
        let numeric = (evaluate_loss(spec, &plus, &x, &y).unwrap()
            - evaluate_loss(spec, &minus, &x, &y).unwrap())
            / (2.0 * H);

        let ok = if analytic.abs() < 1e-8 && numeric.abs() < 1e-8 {
            (analytic - numeric).abs() < 1e-6
        } else {
            (analytic - numeric).abs() / analytic.abs().max(numeric.abs()) < REL_TOL
        };
        if !ok {
            summary
                .failures
                .push(format!("{slot:?}[{idx}]: analytic {analytic:e} numeric {numeric:e}"));
        }
        summary.checked += 1;
    }
    summary
}


/// Conservation and train/test distribution match on `cases` random plans.
/// Returns a description of every violation.
pub fn partition_violations(cases: u64) -> Vec<String> {
    use feddecomp::data::{dirichlet_partition, partition_stats, PartitionRequest};
    use std::collections::BTreeSet;

    let mut gen = SeededRng::new(99);
    let mut bad = Vec::new();
    for case in 0..cases {
        let classes = 2 + gen.below(9);
        let per_class = 1100 + gen.below(200);
        let labels: Vec<usize> = (0..classes * per_class).map(|i| i % classes).collect();
        let req = PartitionRequest {
            clients: 2 + gen.below(8),
            alpha: [0.05, 0.1, 0.3, 1.0, 5.0][gen.below(5)],
            train_per_client: 30 + gen.below(60),
            test_per_client: 5 + gen.below(20),
            seed: 1000 + case,
        };
        let plan = match dirichlet_partition(&labels, classes, &req) {
            Ok(p) => p,
            Err(e) => {
                bad.push(format!("case {case}: {e}"));
                continue;
            }
        };
        let mut seen = BTreeSet::new();
        for shard in &plan.clients {
            if shard.train.len() != req.train_per_client || shard.test.len() != req.test_per_client {
                bad.push(format!("case {case}: client {} has wrong shard sizes", shard.client));
            }
            for &i in shard.train.iter().chain(&shard.test) {
                if i >= labels.len() || !seen.insert(i) {
                    bad.push(format!("case {case}: index {i} out of range or reused"));
                }
            }
        }
        // Every class pool could serve all clients alone, so the test split
        // is an exact rounding of the training histogram.
        let stats = partition_stats(&plan, &labels);
        let m = req.test_per_client as f64;
        for (tr, te) in stats.train_histograms.iter().zip(&stats.test_histograms) {
            if tr.iter().zip(te).any(|(a, b)| (a * m - b * m).abs() >= 1.0 + 1e-9) {
                bad.push(format!("case {case}: test histogram {te:?} vs train {tr:?}"));
            }
        }
    }
    bad
}

/// Seeds (out of `trials`) where α = 0.1 gives a larger mean top-class share than α = 1.
pub fn alpha_concentration_wins(trials: u64) -> u64 {
    use feddecomp::data::{dirichlet_partition, partition_stats, PartitionRequest};

    let labels: Vec<usize> = (0..10 * 2000).map(|i| i % 10).collect();
    let score = |alpha, seed| {
        let req = PartitionRequest {
            clients: 20,
            alpha,
            train_per_client: 100,
            test_per_client: 20,
            seed,
        };
        partition_stats(&dirichlet_partition(&labels, 10, &req).unwrap(), &labels).mean_max_proportion
    };
    (0..trials).filter(|&s| score(0.1, s) > score(1.0, s)).count() as u64
}
