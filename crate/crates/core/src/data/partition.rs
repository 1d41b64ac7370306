//! Dirichlet label-skew partitioning.
//!
//! Procedure, fixed so that plans are reproducible:
//!
//! 1. For each class in ascending order, the indices carrying that label are
//!    shuffled once with the partition stream.
//! 2. For each client in id order, a proportion vector `p_i ~ Dir(α,…,α)` is
//!    drawn from the same stream.
//! 3. For each client in id order, `train_per_client · p_i` is rounded to
//!    integer counts by largest remainder (ties to the lower class index) and
//!    the counts are taken from the front of the class pools.
//! 4. For each client in id order, the test counts are the largest-remainder
//!    rounding of `test_per_client` scaled by the client's realized training
//!    histogram, taken from what remains of the pools.
//!
//! When a pool cannot cover a count, the deficit is redistributed over the
//! client's other classes that still have capacity, proportionally to their
//! `p_i` weight (uniformly if those weights are all zero).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub alpha: f64,
    pub seed: u64,
    pub classes: usize,
    /// Class proportions drawn for each client.
    pub proportions: Vec<Vec<f64>>,
    pub clients: Vec<ClientShard>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionRequest {
    pub clients: usize,
    pub alpha: f64,
    pub train_per_client: usize,
    pub test_per_client: usize,
    pub seed: u64,
}

/// Splits `total` into integer counts proportional to `weights`.
///
/// Each count is `⌊total·w⌋`; the leftover units go to the largest fractional
/// parts, ties to the lower index.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if sum <= 0.0 {
        return largest_remainder(total, &vec![1.0; weights.len()]);
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Caps `wanted` by `available`, moving any deficit to other classes.
fn fit_to_pools(mut wanted: Vec<usize>, available: &[usize], weights: &[f64], client: usize) -> Result<Vec<usize>> {
    loop {
        let mut deficit = 0;
        let mut first_short = None;
        for c in 0..wanted.len() {
            if wanted[c] > available[c] {
                deficit += wanted[c] - available[c];
                first_short.get_or_insert(c);
                wanted[c] = available[c];
            }
        }
        if deficit == 0 {
            return Ok(wanted);
        }
        let open: Vec<usize> = (0..wanted.len()).filter(|&c| wanted[c] < available[c]).collect();
        if open.is_empty() {
            return Err(Error::Capacity(format!(
                "client {client}: class {} pool exhausted and no other class can absorb {deficit} samples",
                first_short.unwrap_or(0)
            )));
        }
        let open_weights: Vec<f64> = open.iter().map(|&c| weights[c]).collect();
        let extra = largest_remainder(deficit, &open_weights);
        for (&c, e) in open.iter().zip(extra) {
            wanted[c] += e;
        }
    }
}

pub fn dirichlet_partition(labels: &[usize], classes: usize, req: &PartitionRequest) -> Result<PartitionPlan> {
    if req.alpha <= 0.0 || !req.alpha.is_finite() {
        return Err(Error::Validation(format!("alpha must be positive, got {}", req.alpha)));
    }
    if req.clients == 0 || req.train_per_client == 0 {
        return Err(Error::Validation(
            "need at least one client and one training sample per client".into(),
        ));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Validation(format!("label {bad} out of range for {classes} classes")));
    }
    let needed = req.clients * (req.train_per_client + req.test_per_client);
    if needed > labels.len() {
        return Err(Error::Capacity(format!(
            "{} clients × ({} + {}) samples exceed the pool of {}",
            req.clients,
            req.train_per_client,
            req.test_per_client,
            labels.len()
        )));
    }

    let mut rng = SeededRng::new(req.seed);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        pools[l].push(i);
    }
    for pool in &mut pools {
        rng.shuffle(pool);
    }
    let proportions: Vec<Vec<f64>> = (0..req.clients).map(|_| rng.dirichlet(req.alpha, classes)).collect();

    let mut cursor = vec![0usize; classes];
    let mut take = |counts: &[usize]| -> Vec<usize> {
        let mut out = Vec::new();
        for (c, &k) in counts.iter().enumerate() {
            out.extend_from_slice(&pools[c][cursor[c]..cursor[c] + k]);
            cursor[c] += k;
        }
        out
    };

    let mut train_counts = Vec::with_capacity(req.clients);
    let mut clients = Vec::with_capacity(req.clients);
    let mut remaining: Vec<usize> = (0..classes).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
    for (client, p) in proportions.iter().enumerate() {
        let counts = fit_to_pools(largest_remainder(req.train_per_client, p), &remaining, p, client)?;
        remaining.iter_mut().zip(&counts).for_each(|(r, k)| *r -= k);
        let mut train = take(&counts);
        train.sort_unstable();
        train_counts.push(counts);
        clients.push(ClientShard {
            client,
            train,
            test: Vec::new(),
        });
    }
    for (client, shard) in clients.iter_mut().enumerate() {
        let realized: Vec<f64> = train_counts[client].iter().map(|&k| k as f64).collect();
        let counts = fit_to_pools(
            largest_remainder(req.test_per_client, &realized),
            &remaining,
            &proportions[client],
            client,
        )?;
        remaining.iter_mut().zip(&counts).for_each(|(r, k)| *r -= k);
        let mut test = take(&counts);
        test.sort_unstable();
        shard.test = test;
    }

    Ok(PartitionPlan {
        alpha: req.alpha,
        seed: req.seed,
        classes,
        proportions,
        clients,
    })
}

/// Per-client class histograms and a scalar heterogeneity summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    /// Normalized training-label histogram of each client.
    pub train_histograms: Vec<Vec<f64>>,
    pub test_histograms: Vec<Vec<f64>>,
    /// Mean over clients of the largest class proportion: `1/C` for uniform
    /// clients, `1` for single-class clients.
    pub mean_max_proportion: f64,
}

pub fn class_counts(indices: &[usize], labels: &[usize], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for &i in indices {
        counts[labels[i]] += 1;
    }
    counts
}

fn normalized(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

pub fn partition_stats(plan: &PartitionPlan, labels: &[usize]) -> PartitionStats {
    let train_histograms: Vec<Vec<f64>> = plan
        .clients
        .iter()
        .map(|s| normalized(&class_counts(&s.train, labels, plan.classes)))
        .collect();
    let test_histograms = plan
        .clients
        .iter()
        .map(|s| normalized(&class_counts(&s.test, labels, plan.classes)))
        .collect();
    let mean_max_proportion = train_histograms
        .iter()
        .map(|h| h.iter().copied().fold(0.0, f64::max))
        .sum::<f64>()
        / train_histograms.len().max(1) as f64;
    PartitionStats {
        train_histograms,
        test_histograms,
        mean_max_proportion,
    }
}

#[derive(Serialize)]
struct PlanExport<'a> {
    alpha: f64,
    seed: u64,
    clients: Vec<ExportShard<'a>>,
}

#[derive(Serialize)]
struct ExportShard<'a> {
    client: usize,
    train: &'a [usize],
    test: &'a [usize],
}

impl PartitionPlan {
    /// `{"alpha", "seed", "clients": [{"client", "train", "test"}]}` with sorted index arrays.
    pub fn to_json(&self) -> String {
        let export = PlanExport {
            alpha: self.alpha,
            seed: self.seed,
            clients: self
                .clients
                .iter()
                .map(|s| ExportShard {
                    client: s.client,
                    train: &s.train,
                    test: &s.test,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&export).expect("plan is always serializable")
    }
}
