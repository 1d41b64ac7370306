use std::fmt::Write as _;
use std::path::PathBuf;

use super::config::{DatasetSource, ExperimentConfig};
use crate::data::{dirichlet_partition, load_idx, partition_stats, synth_mixture_with_cosine, Dataset, PartitionPlan, PartitionRequest, PartitionStats};
use crate::engine::{run_experiment, FederationConfig, LocalTraining, ScheduleConfig};
use crate::error::{Error, Result};
use crate::metrics::{emit_csv, emit_json, ExperimentReport};
use crate::nn::{Architecture, ModelSpec};
use crate::tensor::{derive_seed, StreamRole, Tensor};

/// Everything derived from a config before training starts.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub data: Dataset,
    pub spec: ModelSpec,
    pub plan: PartitionPlan,
    pub federation: FederationConfig,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: ExperimentReport,
    pub report_csv: PathBuf,
    pub report_json: PathBuf,
    pub partition_json: PathBuf,
}

fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let data = match &config.dataset {
        DatasetSource::Synthetic {
            classes,
            dim,
            per_class,
            separation,
            mean_cosine,
        } => synth_mixture_with_cosine(
            *classes,
            *dim,
            *per_class,
            *separation,
            *mean_cosine,
            derive_seed(config.seed, StreamRole::Dataset, 0),
        )?,
        DatasetSource::Idx {
            images,
            labels,
            classes,
        } => load_idx(images, labels, *classes)?,
    };
    shape_for(data, config.architecture)
}

/// Flattens images for the MLP; gives square synthetic vectors a 1×s×s shape for the CNN.
fn shape_for(data: Dataset, architecture: Architecture) -> Result<Dataset> {
    let n = data.len();
    let per = data.sample_numel();
    let shape = match architecture {
        Architecture::Mlp => vec![n, per],
        Architecture::Cnn if data.sample_shape().len() == 3 => return Ok(data),
        Architecture::Cnn => {
            let side = (per as f64).sqrt().round() as usize;
            if side * side != per {
                return Err(Error::Validation(format!(
                    "the cnn needs square inputs; {per} features are not a perfect square"
                )));
            }
            vec![n, 1, side, side]
        }
    };
    let Dataset {
        features,
        labels,
        classes,
    } = data;
    Dataset::new(Tensor::new(shape, features.into_data())?, labels, classes)
}

fn model_spec(architecture: Architecture, data: &Dataset) -> Result<ModelSpec> {
    match architecture {
        Architecture::Mlp => ModelSpec::mlp(data.sample_numel(), data.classes),
        Architecture::Cnn => {
            let s = data.sample_shape();
            ModelSpec::cnn(s[0], s[1], s[2], data.classes)
        }
    }
}

pub fn partition_for(config: &ExperimentConfig, data: &Dataset) -> Result<PartitionPlan> {
    dirichlet_partition(
        &data.labels,
        data.classes,
        &PartitionRequest {
            clients: config.clients,
            alpha: config.alpha,
            train_per_client: config.train_per_client,
            test_per_client: config.test_per_client,
            seed: derive_seed(config.seed, StreamRole::Partition, 0),
        },
    )
}

pub fn federation_config(config: &ExperimentConfig) -> Result<FederationConfig> {
    Ok(FederationConfig {
        schedule: ScheduleConfig::new(config.mode, config.epochs, config.lora_epochs)?,
        training: LocalTraining::new(config.learning_rate, config.batch_size)?,
        rounds: config.rounds,
        participation: config.participation,
        ratio_fc: config.ratio_fc,
        ratio_conv: config.ratio_conv,
        seed: config.seed,
        parallel: config.parallel,
        timing: config.timing,
    })
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let data = load_dataset(config)?;
    let spec = model_spec(config.architecture, &data)?;
    let plan = partition_for(config, &data)?;
    let federation = federation_config(config)?;
    Ok(Prepared {
        data,
        spec,
        plan,
        federation,
    })
}

/// Trains, then writes `report.csv`, `report.json` and `partition.json`
/// into `config.output_dir`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let p = prepare(config)?;
    let echo = serde_json::to_value(config).expect("config serializes");
    let report = run_experiment(&p.spec, &p.data, &p.plan, p.federation, echo, config.digest())?;

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report_csv = dir.join("report.csv");
    let report_json = dir.join("report.json");
    let partition_json = dir.join("partition.json");
    emit_csv(&report, &report_csv)?;
    emit_json(&report, &report_json)?;
    std::fs::write(&partition_json, p.plan.to_json()).map_err(|e| Error::io(&partition_json, e))?;
    Ok(RunOutcome {
        report,
        report_csv,
        report_json,
        partition_json,
    })
}

/// Partition statistics without training.
pub fn inspect_partition(config: &ExperimentConfig) -> Result<PartitionStats> {
    let data = load_dataset(config)?;
    let plan = partition_for(config, &data)?;
    Ok(partition_stats(&plan, &data.labels))
}

/// Text rendering of [`PartitionStats`]: one line per client, then the summary.
pub fn format_partition_stats(stats: &PartitionStats) -> String {
    let fmt = |h: &[f64]| h.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ");
    let mut out = String::new();
    for (i, (tr, te)) in stats.train_histograms.iter().zip(&stats.test_histograms).enumerate() {
        writeln!(out, "client {i:>3}  train [{}]  test [{}]", fmt(tr), fmt(te)).expect("string write");
    }
    writeln!(out, "mean_max_proportion = {}", stats.mean_max_proportion).expect("string write");
    out
}

/// Last stdout line of a run: the best mean accuracy, or `none` for zero rounds.
pub fn format_best(best: Option<f64>) -> String {
    best.map_or_else(|| "none".to_string(), |v| v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &std::path::Path) -> ExperimentConfig {
        ExperimentConfig::parse_str(&format!(
            "N = 2\nT = 1\nE = 1\nE_lora = 0\nper_class = 40\ntrain_per_client = 20\ntest_per_client = 10\noutput_dir = {}\n",
            dir.display()
        ))
        .unwrap()
    }

    #[test]
    fn writes_report_files() {
        let tmp = tempfile::tempdir().unwrap();
        let out = run(&small(tmp.path())).unwrap();
        assert_eq!(out.report.rounds.len(), 1);
        for p in [&out.report_csv, &out.report_json, &out.partition_json] {
            assert!(p.exists(), "{}", p.display());
        }
    }

    #[test]
    fn cnn_reshapes_square_synthetic() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = small(tmp.path());
        c.architecture = Architecture::Cnn;
        let p = prepare(&c).unwrap();
        assert_eq!(p.data.sample_shape(), &[1, 4, 4]);
        if let DatasetSource::Synthetic { dim, .. } = &mut c.dataset {
            *dim = 15;
        }
        assert!(matches!(prepare(&c), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_idx_is_data_error() {
        let c = ExperimentConfig::parse_str("dataset = idx\nidx_images = /nonexistent/a\nidx_labels = /nonexistent/b\n").unwrap();
        let err = run(&c).unwrap_err();
        assert_eq!(err.category().as_str(), "data");
    }

    #[test]
    fn best_formatting() {
        assert_eq!(format_best(None), "none");
        assert_eq!(format_best(Some(0.5)), "0.5");
    }
}
