use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{GlobalModel, SharedTensors};
use super::client::{ClientState, LocalTraining};
use super::mode::{Mode, ScheduleConfig, SharedPart};
use crate::data::{Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, delta_norms, model_difference, DriftHistory, ExperimentReport, RoundMetrics};
use crate::nn::{init_decomposed, reinit_factors, ModelSpec, Phase};
use crate::tensor::{SeededRng, StreamRole};

/// Everything the engine needs besides data and the partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub schedule: ScheduleConfig,
    pub training: LocalTraining,
    pub rounds: usize,
    /// Fraction of clients sampled per round, in `(0, 1]`.
    pub participation: f64,
    pub ratio_fc: f64,
    pub ratio_conv: f64,
    pub seed: u64,
    /// Run participants on the rayon pool. Results are identical either way.
    pub parallel: bool,
    /// Record wall-clock seconds per round. Off by default so report bytes
    /// depend only on the configuration.
    pub timing: bool,
}

impl FederationConfig {
    pub fn mode(&self) -> Mode {
        self.schedule.mode
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::Validation(format!(
                "participation fraction must lie in (0, 1], got {}",
                self.participation
            )));
        }
        for (name, r) in [("R_l", self.ratio_fc), ("R_c", self.ratio_conv)] {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::Validation(format!("{name} must lie in (0, 1], got {r}")));
            }
        }
        LocalTraining::new(self.training.learning_rate, self.training.batch_size)?;
        ScheduleConfig::new(self.schedule.mode, self.schedule.epochs, self.schedule.lora_epochs)?;
        Ok(())
    }
}

/// `⌈fraction·N⌉` distinct ids, sorted, drawn from the round's own stream.
pub fn select_participants(clients: usize, fraction: f64, seed: u64, round: usize) -> Vec<usize> {
    let k = ((fraction * clients as f64).ceil() as usize).min(clients);
    if k == clients {
        return (0..clients).collect();
    }
    let mut rng = SeededRng::for_role(seed, StreamRole::Participation, round as u64);
    let mut ids = rng.permutation(clients);
    ids.truncate(k);
    ids.sort_unstable();
    ids
}

/// Server plus all clients.
#[derive(Clone, Debug, PartialEq)]
pub struct Federation {
    spec: ModelSpec,
    config: FederationConfig,
    global: GlobalModel,
    clients: Vec<ClientState>,
    drift: DriftHistory,
}

impl Federation {
    /// Builds the initial state. `spec` describes the decomposed model;
    /// modes without a low-rank branch drop it.
    pub fn new(spec: &ModelSpec, plan: &PartitionPlan, config: FederationConfig) -> Result<Self> {
        config.validate()?;
        if plan.clients.is_empty() {
            return Err(Error::Validation("a federation needs at least one client".into()));
        }
        let mode = config.mode();
        let spec = if mode.decomposed() {
            spec.clone()
        } else {
            spec.without_decomposition()
        };
        let mut init_rng = SeededRng::for_role(config.seed, StreamRole::ModelInit, 0);
        let template = init_decomposed(&spec, config.ratio_fc, config.ratio_conv, &mut init_rng)?;
        let clients = plan
            .clients
            .iter()
            .map(|shard| {
                let id = shard.client;
                let mut model = template.clone();
                if mode.personal_factors() {
                    let mut rng = SeededRng::for_role(config.seed, StreamRole::ClientInit, id as u64);
                    reinit_factors(&mut model, &mut rng);
                }
                ClientState {
                    id,
                    model,
                    train: shard.train.clone(),
                    test: shard.test.clone(),
                    rng: SeededRng::for_role(config.seed, StreamRole::Shuffle, id as u64),
                }
            })
            .collect();
        let global = GlobalModel::new(SharedTensors::extract(&template, mode.shared_part()));
        let mut fed = Federation {
            spec,
            config,
            global,
            clients,
            drift: DriftHistory::default(),
        };
        fed.drift = DriftHistory::start(fed.reference_sigma(), fed.client_taus());
        Ok(fed)
    }

    pub(crate) fn from_parts(
        spec: ModelSpec,
        config: FederationConfig,
        global: GlobalModel,
        clients: Vec<ClientState>,
        drift: DriftHistory,
    ) -> Self {
        Federation {
            spec,
            config,
            global,
            clients,
            drift,
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn config(&self) -> &FederationConfig {
        &self.config
    }

    pub fn global(&self) -> &GlobalModel {
        &self.global
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn drift(&self) -> &DriftHistory {
        &self.drift
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.global.round
    }

    /// The global shared vector in `flatten_sigma` order. Modes that do not
    /// aggregate every `σ` use the mean of the clients' `σ` instead.
    pub fn reference_sigma(&self) -> Vec<f64> {
        if self.config.mode().shared_part() == SharedPart::Sigma {
            self.global.shared.flatten()
        } else {
            let sigmas: Vec<Vec<f64>> = self.clients.iter().map(|c| c.model.flatten_sigma()).collect();
            mean_vectors(&sigmas)
        }
    }

    fn client_taus(&self) -> Vec<Vec<f64>> {
        self.clients.iter().map(|c| c.model.flatten_tau()).collect()
    }

    fn trained_params(&self) -> BTreeMap<String, usize> {
        let model = &self.clients[0].model;
        let schedule = self.config.schedule;
        let mut out = BTreeMap::new();
        if schedule.mode.alternating() {
            out.insert("tau".to_string(), model.trainable_numel(Phase::TauOnly));
            out.insert("sigma".to_string(), model.trainable_numel(Phase::SigmaOnly));
        } else if schedule.mode.decomposed() {
            out.insert("joint".to_string(), model.trainable_numel(Phase::Joint));
        } else {
            out.insert("sigma".to_string(), model.trainable_numel(Phase::SigmaOnly));
        }
        out
    }

    /// One communication round. On error `self` is left untouched.
    pub fn run_round(&mut self, data: &Dataset) -> Result<RoundMetrics> {
        let started = Instant::now();
        let round = self.global.round + 1;
        let part = self.config.mode().shared_part();
        let participants = select_participants(
            self.clients.len(),
            self.config.participation,
            self.config.seed,
            round,
        );

        let work = |id: usize| -> Result<(ClientState, f64, SharedTensors)> {
            let mut client = self.clients[id].clone();
            if part.aggregates() {
                self.global.shared.install(&mut client.model)?;
            }
            client.local_round(&self.spec, data, &self.config.schedule, self.config.training)?;
            let acc = accuracy(&self.spec, &client.model, data, &client.test)?;
            let upload = SharedTensors::extract(&client.model, part);
            Ok((client, acc, upload))
        };
        let results: Vec<(ClientState, f64, SharedTensors)> = if self.config.parallel {
            participants.par_iter().map(|&id| work(id)).collect::<Result<_>>()?
        } else {
            participants.iter().map(|&id| work(id)).collect::<Result<_>>()?
        };

        let mut client_accuracy = vec![0.0; self.clients.len()];
        let mut updated = self.clients.clone();
        let mut uploads = Vec::with_capacity(results.len());
        for (client, acc, upload) in results {
            client_accuracy[client.id] = acc;
            let id = client.id;
            updated[id] = client;
            uploads.push(upload);
        }
        for c in &self.clients {
            if participants.binary_search(&c.id).is_err() {
                client_accuracy[c.id] = accuracy(&self.spec, &c.model, data, &c.test)?;
            }
        }

        let global = if part.aggregates() {
            self.global.aggregate(&uploads)?
        } else {
            GlobalModel {
                shared: self.global.shared.clone(),
                round,
            }
        };
        let uploaded_bytes = uploads.iter().map(SharedTensors::byte_len).sum::<u64>()
            * u64::from(part.aggregates());

        let participant_sigmas: Vec<Vec<f64>> =
            participants.iter().map(|&id| updated[id].model.flatten_sigma()).collect();
        let centre = if part == SharedPart::Sigma {
            global.shared.flatten()
        } else {
            mean_vectors(&participant_sigmas)
        };
        let difference = model_difference(&participant_sigmas, &centre)?;

        let mut next = Federation {
            spec: self.spec.clone(),
            config: self.config,
            global,
            clients: updated,
            drift: self.drift.clone(),
        };
        let reference = next.reference_sigma();
        let taus = next.client_taus();
        next.drift.record(reference, taus);
        let (delta_sigma, delta_tau) = delta_norms(&next.drift)?;

        let metrics = RoundMetrics {
            round,
            participants,
            mean_accuracy: RoundMetrics::mean_of(&client_accuracy),
            client_accuracy,
            model_difference: difference,
            delta_sigma,
            delta_tau,
            uploaded_bytes,
            trained_params: next.trained_params(),
            secs: if self.config.timing {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        *self = next;
        Ok(metrics)
    }

    /// Runs the remaining rounds up to `config.rounds`, appending to `report`.
    pub fn run(&mut self, data: &Dataset, report: &mut ExperimentReport) -> Result<()> {
        while self.global.round < self.config.rounds {
            let metrics = self.run_round(data)?;
            report.push(metrics);
        }
        Ok(())
    }
}

/// Elementwise mean in the same `x₀ + Σ(xₖ − x₀)/K` form as aggregation.
fn mean_vectors(vectors: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = vectors.first() else {
        return Vec::new();
    };
    let k = vectors.len() as f64;
    let mut acc = vec![0.0; first.len()];
    for v in &vectors[1..] {
        for ((a, &x), &x0) in acc.iter_mut().zip(v).zip(first) {
            *a += x - x0;
        }
    }
    first.iter().zip(&acc).map(|(&x0, &d)| x0 + d / k).collect()
}

/// Builds a federation and runs all of its rounds.
pub fn run_experiment(
    spec: &ModelSpec,
    data: &Dataset,
    plan: &PartitionPlan,
    config: FederationConfig,
    config_echo: serde_json::Value,
    config_digest: String,
) -> Result<ExperimentReport> {
    let mut fed = Federation::new(spec, plan, config)?;
    let mut report = ExperimentReport::new(config_echo, config_digest, plan.clients.len());
    fed.run(data, &mut report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{dirichlet_partition, synth_mixture, PartitionRequest};

    fn fixture(mode: Mode, epochs: usize, lora: usize) -> (ModelSpec, Dataset, PartitionPlan, FederationConfig) {
        let data = synth_mixture(4, 6, 60, 3.0, 11).unwrap();
        let plan = dirichlet_partition(
            &data.labels,
            4,
            &PartitionRequest {
                clients: 4,
                alpha: 0.5,
                train_per_client: 30,
                test_per_client: 10,
                seed: 5,
            },
        )
        .unwrap();
        let spec = ModelSpec::mlp_with_hidden(6, &[8], 4).unwrap();
        let config = FederationConfig {
            schedule: ScheduleConfig::new(mode, epochs, lora).unwrap(),
            training: LocalTraining::new(0.1, 10).unwrap(),
            rounds: 3,
            participation: 1.0,
            ratio_fc: 0.5,
            ratio_conv: 0.5,
            seed: 9,
            parallel: true,
            timing: false,
        };
        (spec, data, plan, config)
    }

    #[test]
    fn participant_counts() {
        assert_eq!(select_participants(5, 1.0, 0, 1), vec![0, 1, 2, 3, 4]);
        let half = select_participants(40, 0.5, 3, 7);
        assert_eq!(half.len(), 20);
        assert!(half.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(half, select_participants(40, 0.5, 3, 7));
        assert_eq!(select_participants(3, 0.1, 0, 1).len(), 1);
    }

    #[test]
    fn parallel_matches_sequential() {
        let (spec, data, plan, config) = fixture(Mode::FedDecomp, 2, 1);
        let a = run_experiment(&spec, &data, &plan, config, serde_json::Value::Null, String::new()).unwrap();
        let seq = FederationConfig {
            parallel: false,
            ..config
        };
        let b = run_experiment(&spec, &data, &plan, seq, serde_json::Value::Null, String::new()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn zero_rounds_gives_empty_report() {
        let (spec, data, plan, config) = fixture(Mode::FedAvg, 1, 0);
        let cfg = FederationConfig { rounds: 0, ..config };
        let r = run_experiment(&spec, &data, &plan, cfg, serde_json::Value::Null, String::new()).unwrap();
        assert!(r.rounds.is_empty());
        assert_eq!(r.best_mean_accuracy, None);
    }

    #[test]
    fn local_mode_uploads_nothing() {
        let (spec, data, plan, config) = fixture(Mode::Local, 1, 0);
        let mut fed = Federation::new(&spec, &plan, config).unwrap();
        let m = fed.run_round(&data).unwrap();
        assert_eq!(m.uploaded_bytes, 0);
        assert_eq!(fed.round(), 1);
    }

    #[test]
    fn failed_round_leaves_state() {
        let (spec, data, mut plan, config) = fixture(Mode::FedDecomp, 2, 1);
        plan.clients[2].train.clear();
        let mut fed = Federation::new(&spec, &plan, config).unwrap();
        let before = fed.clone();
        assert!(matches!(fed.run_round(&data), Err(Error::Capacity(_))));
        assert_eq!(fed, before);
    }

    #[test]
    fn upload_sizes_match_between_feddecomp_and_fedavg() {
        let (spec, data, plan, config) = fixture(Mode::FedDecomp, 2, 1);
        let mut a = Federation::new(&spec, &plan, config).unwrap();
        let avg = FederationConfig {
            schedule: ScheduleConfig::new(Mode::FedAvg, 2, 0).unwrap(),
            ..config
        };
        let mut b = Federation::new(&spec, &plan, avg).unwrap();
        assert_eq!(a.run_round(&data).unwrap().uploaded_bytes, b.run_round(&data).unwrap().uploaded_bytes);
    }

    #[test]
    fn rejects_bad_fraction() {
        let (spec, _, plan, config) = fixture(Mode::FedAvg, 1, 0);
        let cfg = FederationConfig {
            participation: 0.0,
            ..config
        };
        assert!(matches!(Federation::new(&spec, &plan, cfg), Err(Error::Validation(_))));
    }
}
