//! `key = value` experiment configuration.
//!
//! One setting per line; `#` starts a comment that runs to the end of the
//! line; blank lines are ignored. Keys are case-sensitive and unknown keys
//! are rejected. Every key is optional; omitted keys take the defaults
//! listed in [`KEYS`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::Mode;
use crate::error::{Error, Result};
use crate::nn::Architecture;

/// Where samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic {
        classes: usize,
        dim: usize,
        per_class: usize,
        separation: f64,
        mean_cosine: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Class count; `None` infers `max label + 1`.
        classes: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub clients: usize,
    pub rounds: usize,
    pub epochs: usize,
    pub lora_epochs: usize,
    pub ratio_fc: f64,
    pub ratio_conv: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub participation: f64,
    pub train_per_client: usize,
    pub test_per_client: usize,
    pub architecture: Architecture,
    pub dataset: DatasetSource,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub parallel: bool,
    pub timing: bool,
}

/// `(key, default, description)` for every accepted key, in emit order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("mode", "feddecomp", "training mode"),
    ("N", "20", "number of clients"),
    ("T", "60", "communication rounds"),
    ("E", "5", "local epochs per round"),
    ("E_lora", "1", "epochs of the low-rank phase, at most E"),
    ("R_l", "0.4", "rank ratio of fully-connected layers, in (0, 1]"),
    ("R_c", "0.8", "rank ratio of convolutional layers, in (0, 1]"),
    ("alpha", "0.1", "Dirichlet concentration, > 0"),
    ("lr", "0.1", "SGD learning rate, >= 0"),
    ("batch_size", "120", "mini-batch size, >= 1"),
    ("participation", "1", "fraction of clients per round, in (0, 1]"),
    ("train_per_client", "120", "training samples per client"),
    ("test_per_client", "40", "test samples per client"),
    ("architecture", "mlp", "mlp | cnn"),
    ("dataset", "synthetic", "synthetic | idx"),
    ("classes", "8", "synthetic: class count; idx: optional override"),
    ("dim", "16", "synthetic: feature dimension"),
    ("per_class", "1000", "synthetic: samples generated per class"),
    ("separation", "8", "synthetic: distance of class means from the origin"),
    ("mean_cosine", "0.75", "synthetic: cosine between class mean directions, in [0, 1)"),
    ("idx_images", "", "idx: image file path"),
    ("idx_labels", "", "idx: label file path"),
    ("seed", "0", "root seed"),
    ("output_dir", "out", "directory for report and partition files"),
    ("parallel", "true", "train participants on worker threads"),
    ("timing", "false", "record wall-clock seconds per round"),
];

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::parse_str("").expect("defaults are valid")
    }
}

struct Raw {
    values: HashMap<&'static str, (String, usize)>,
}

impl Raw {
    fn get(&self, key: &'static str) -> (&str, usize) {
        match self.values.get(key) {
            Some((v, line)) => (v.as_str(), *line),
            None => {
                let default = KEYS.iter().find(|k| k.0 == key).expect("known key").1;
                (default, 0)
            }
        }
    }

    fn explicit(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn line(&self, key: &'static str) -> usize {
        self.get(key).1
    }

    fn parse<T: std::str::FromStr>(&self, key: &'static str, what: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let (text, line) = self.get(key);
        text.parse().map_err(|e| Error::Config {
            line,
            key: key.to_string(),
            message: format!("expected {what}, got `{text}` ({e})"),
        })
    }
}

fn range_error(raw: &Raw, key: &'static str, message: String) -> Error {
    Error::Config {
        line: raw.line(key),
        key: key.to_string(),
        message,
    }
}

impl ExperimentConfig {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config {
                    line,
                    key: content.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let key = key.trim();
            let Some(&(known, _, _)) = KEYS.iter().find(|k| k.0 == key) else {
                return Err(Error::Config {
                    line,
                    key: key.to_string(),
                    message: "unknown key".into(),
                });
            };
            if let Some((_, first)) = values.insert(known, (value.trim().to_string(), line)) {
                return Err(Error::Config {
                    line,
                    key: key.to_string(),
                    message: format!("duplicate key (first set on line {first})"),
                });
            }
        }
        Self::from_raw(&Raw { values })
    }

    fn from_raw(raw: &Raw) -> Result<Self> {
        let mode: Mode = raw.parse("mode", "a mode name")?;
        let clients: usize = raw.parse("N", "a client count")?;
        let rounds: usize = raw.parse("T", "a round count")?;
        let epochs: usize = raw.parse("E", "an epoch count")?;
        let lora_epochs: usize = raw.parse("E_lora", "an epoch count")?;
        let ratio_fc: f64 = raw.parse("R_l", "a real number")?;
        let ratio_conv: f64 = raw.parse("R_c", "a real number")?;
        let alpha: f64 = raw.parse("alpha", "a real number")?;
        let learning_rate: f64 = raw.parse("lr", "a real number")?;
        let batch_size: usize = raw.parse("batch_size", "a positive integer")?;
        let participation: f64 = raw.parse("participation", "a real number")?;
        let train_per_client: usize = raw.parse("train_per_client", "a sample count")?;
        let test_per_client: usize = raw.parse("test_per_client", "a sample count")?;
        let architecture: Architecture = raw.parse("architecture", "mlp or cnn")?;
        let seed: u64 = raw.parse("seed", "an unsigned 64-bit integer")?;
        let parallel: bool = raw.parse("parallel", "true or false")?;
        let timing: bool = raw.parse("timing", "true or false")?;
        let output_dir = PathBuf::from(raw.get("output_dir").0);

        if clients == 0 {
            return Err(range_error(raw, "N", "need at least one client".into()));
        }
        if lora_epochs > epochs {
            return Err(range_error(
                raw,
                "E_lora",
                format!("E_lora = {lora_epochs} exceeds E = {epochs}; E_lora must lie in [0, E]"),
            ));
        }
        for (key, value) in [("R_l", ratio_fc), ("R_c", ratio_conv)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(range_error(raw, key, format!("{key} = {value} is outside (0, 1]")));
            }
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(range_error(raw, "alpha", format!("alpha = {alpha} must be finite and > 0")));
        }
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(range_error(raw, "lr", format!("lr = {learning_rate} must be finite and >= 0")));
        }
        if batch_size == 0 {
            return Err(range_error(raw, "batch_size", "batch_size must be at least 1".into()));
        }
        if !(participation > 0.0 && participation <= 1.0) {
            return Err(range_error(
                raw,
                "participation",
                format!("participation = {participation} is outside (0, 1]"),
            ));
        }
        if train_per_client == 0 || test_per_client == 0 {
            let key = if train_per_client == 0 {
                "train_per_client"
            } else {
                "test_per_client"
            };
            return Err(range_error(raw, key, format!("{key} must be at least 1")));
        }
        if output_dir.as_os_str().is_empty() {
            return Err(range_error(raw, "output_dir", "output_dir must not be empty".into()));
        }

        let synthetic_keys = ["dim", "per_class", "separation", "mean_cosine"];
        let idx_keys = ["idx_images", "idx_labels"];
        let dataset = match raw.get("dataset").0 {
            "synthetic" => {
                if let Some(key) = idx_keys.iter().find(|k| raw.explicit(k)) {
                    return Err(Error::Config {
                        line: raw.values[key].1,
                        key: key.to_string(),
                        message: "only valid with dataset = idx".into(),
                    });
                }
                let classes: usize = raw.parse("classes", "a class count")?;
                let dim: usize = raw.parse("dim", "a dimension")?;
                let per_class: usize = raw.parse("per_class", "a sample count")?;
                let separation: f64 = raw.parse("separation", "a real number")?;
                let mean_cosine: f64 = raw.parse("mean_cosine", "a real number")?;
                if classes < 2 {
                    return Err(range_error(raw, "classes", "need at least 2 classes".into()));
                }
                if dim < 2 {
                    return Err(range_error(raw, "dim", "dim must be at least 2".into()));
                }
                if per_class == 0 {
                    return Err(range_error(raw, "per_class", "per_class must be at least 1".into()));
                }
                if !(separation >= 0.0 && separation.is_finite()) {
                    return Err(range_error(
                        raw,
                        "separation",
                        format!("separation = {separation} must be finite and >= 0"),
                    ));
                }
                if !(0.0..1.0).contains(&mean_cosine) {
                    return Err(range_error(
                        raw,
                        "mean_cosine",
                        format!("mean_cosine = {mean_cosine} is outside [0, 1)"),
                    ));
                }
                DatasetSource::Synthetic {
                    classes,
                    dim,
                    per_class,
                    separation,
                    mean_cosine,
                }
            }
            "idx" => {
                if let Some(key) = synthetic_keys.iter().find(|k| raw.explicit(k)) {
                    return Err(Error::Config {
                        line: raw.values[key].1,
                        key: key.to_string(),
                        message: "only valid with dataset = synthetic".into(),
                    });
                }
                let mut paths = Vec::new();
                for key in ["idx_images", "idx_labels"] {
                    let (path, _) = raw.get(key);
                    if path.is_empty() {
                        return Err(Error::Config {
                            line: raw.line("dataset"),
                            key: key.to_string(),
                            message: "required when dataset = idx".into(),
                        });
                    }
                    paths.push(PathBuf::from(path));
                }
                let classes = if raw.explicit("classes") {
                    let c: usize = raw.parse("classes", "a class count")?;
                    if c < 2 {
                        return Err(range_error(raw, "classes", "need at least 2 classes".into()));
                    }
                    Some(c)
                } else {
                    None
                };
                let labels = paths.pop().expect("two paths");
                let images = paths.pop().expect("two paths");
                DatasetSource::Idx {
                    images,
                    labels,
                    classes,
                }
            }
            other => {
                return Err(range_error(
                    raw,
                    "dataset",
                    format!("expected synthetic or idx, got `{other}`"),
                ))
            }
        };

        Ok(ExperimentConfig {
            mode,
            clients,
            rounds,
            epochs,
            lora_epochs,
            ratio_fc,
            ratio_conv,
            alpha,
            learning_rate,
            batch_size,
            participation,
            train_per_client,
            test_per_client,
            architecture,
            dataset,
            seed,
            output_dir,
            parallel,
            timing,
        })
    }

    /// Canonical text: every applicable key, in [`KEYS`] order.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            writeln!(out, "{key} = {value}").expect("string write");
        };
        put("mode", self.mode.to_string());
        put("N", self.clients.to_string());
        put("T", self.rounds.to_string());
        put("E", self.epochs.to_string());
        put("E_lora", self.lora_epochs.to_string());
        put("R_l", self.ratio_fc.to_string());
        put("R_c", self.ratio_conv.to_string());
        put("alpha", self.alpha.to_string());
        put("lr", self.learning_rate.to_string());
        put("batch_size", self.batch_size.to_string());
        put("participation", self.participation.to_string());
        put("train_per_client", self.train_per_client.to_string());
        put("test_per_client", self.test_per_client.to_string());
        put("architecture", self.architecture.as_str().to_string());
        match &self.dataset {
            DatasetSource::Synthetic {
                classes,
                dim,
                per_class,
                separation,
                mean_cosine,
            } => {
                put("dataset", "synthetic".into());
                put("classes", classes.to_string());
                put("dim", dim.to_string());
                put("per_class", per_class.to_string());
                put("separation", separation.to_string());
                put("mean_cosine", mean_cosine.to_string());
            }
            DatasetSource::Idx {
                images,
                labels,
                classes,
            } => {
                put("dataset", "idx".into());
                if let Some(c) = classes {
                    put("classes", c.to_string());
                }
                put("idx_images", images.display().to_string());
                put("idx_labels", labels.display().to_string());
            }
        }
        put("seed", self.seed.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("parallel", self.parallel.to_string());
        put("timing", self.timing.to_string());
        out
    }

    /// Lowercase hex SHA-256 of [`emit`](Self::emit).
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.emit().as_bytes());
        hash.iter().fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").expect("string write");
            s
        })
    }
}

/// The shipped preset with the full-scale hyperparameters.
pub const FULL_SCALE: &str = include_str!("../../presets/full_scale.cfg");
