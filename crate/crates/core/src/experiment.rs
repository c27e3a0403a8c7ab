//! One experiment: load a stream, truncate, test, protect, and write every
//! artifact into an output directory.
//!
//! ```toml
//! input = "data/bank-marketing/random-forest.csv"
//! output_dir = "out/bank-rf"
//! pi = 0.5
//! jumps = [0.01, 0.001, 0.0001]
//! family = "cox:alpha=-1,0,1;beta=0.5,1,2"
//! epsilon = 0.01
//! feedback_every = 100
//! freeze_mixing = false
//! shuffle_seed = 7                 # optional
//! moving_average_window = 1000     # optional
//! log_base = "10"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::calibration::CalibratorFamily;
use crate::error::{Error, Result};
use crate::loss::LogBase;
use crate::martingale::{run_test, JumperConfig, MartingaleTrajectory};
use crate::metrics::{moving_average, roc_auc};
use crate::predictor::{run_protect, MixingPolicy};
use crate::report::{write_protected_csv, ProtectionReport};
use crate::stream::{load_stream, StreamFormat};
use crate::synth::shuffle_objects;

fn default_pi() -> f64 {
    0.5
}

fn default_jumps() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_feedback() -> usize {
    1
}

fn default_log_base() -> String {
    "10".into()
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_pi")]
    pub pi: f64,
    #[serde(default = "default_jumps")]
    pub jumps: Vec<f64>,
    /// Family string; defaults to the 3 x 3 Cox grid (binary) or the
    /// binary-alpha Cox grid (multiclass).
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_feedback")]
    pub feedback_every: usize,
    #[serde(default)]
    pub freeze_mixing: bool,
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
    #[serde(default)]
    pub moving_average_window: Option<usize>,
    #[serde(default = "default_log_base")]
    pub log_base: String,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        if config.input.is_relative() {
            config.input = dir.join(&config.input);
        }
        if config.output_dir.is_relative() {
            config.output_dir = dir.join(&config.output_dir);
        }
        Ok(config)
    }

    pub fn mixing(&self) -> MixingPolicy {
        if self.freeze_mixing {
            MixingPolicy::AfterFeedback
        } else {
            MixingPolicy::EveryPrediction
        }
    }
}

/// Default family for streams of the given shape.
pub fn default_family(binary: bool, arity: usize) -> Result<CalibratorFamily> {
    if binary {
        Ok(CalibratorFamily::default_binary())
    } else {
        CalibratorFamily::default_multiclass(arity)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: ProtectionReport,
    pub trajectory: MartingaleTrajectory,
    pub files: Vec<PathBuf>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let log_base: LogBase = config.log_base.parse()?;
    let mut stream = load_stream(&config.input, StreamFormat::Csv)?;
    if let Some(seed) = config.shuffle_seed {
        stream = shuffle_objects(&stream, seed)?;
    }
    let stream = stream.truncated(config.epsilon)?;
    let family = match &config.family {
        Some(spec) => spec.parse()?,
        None => default_family(stream.is_binary(), stream.arity())?,
    };
    if !stream.is_empty() {
        family.check_forecast(&stream.records()[0].forecast)?;
    }
    let jumper = JumperConfig::new(family, config.jumps.clone(), config.pi)?;

    let trajectory = run_test(&jumper, stream.observations())?;
    let (records, mut report) = run_protect(
        &jumper,
        stream.observations(),
        config.feedback_every,
        config.mixing(),
    )?;
    report.epsilon = Some(config.epsilon);
    report.log10_martingale = Some(trajectory.final_log10());

    fs::create_dir_all(&config.output_dir)?;
    let dir = &config.output_dir;
    let mut files = Vec::new();
    let mut create = |name: &str| -> Result<BufWriter<File>> {
        let path = dir.join(name);
        let file = File::create(&path)?;
        files.push(path);
        Ok(BufWriter::new(file))
    };

    trajectory.write_csv(create("trajectory.csv")?)?;
    write_protected_csv(&records, create("protected.csv")?)?;
    report.write_key_values(create("report.txt")?, log_base)?;
    if stream.is_binary() {
        let labels = stream.labels();
        let base: Vec<(f64, usize)> = records
            .iter()
            .map(|r| (r.base.positive_score(), r.label))
            .collect();
        let protected: Vec<(f64, usize)> = records
            .iter()
            .map(|r| (r.protected.positive_score(), r.label))
            .collect();
        if let (Ok(b), Ok(p)) = (roc_auc(&base), roc_auc(&protected)) {
            b.write_csv(create("roc_base.csv")?)?;
            p.write_csv(create("roc_protected.csv")?)?;
        }
        if let Some(window) = config.moving_average_window {
            if window <= labels.len() {
                let series = moving_average(&labels, window)?;
                let mut out = csv::Writer::from_writer(create("moving_average.csv")?);
                out.write_record(["start", "mean"])?;
                for (i, v) in series.iter().enumerate() {
                    out.write_record([(i + 1).to_string(), v.to_string()])?;
                }
                out.flush()?;
            }
        }
    }
    Ok(ExperimentOutcome {
        report,
        trajectory,
        files,
    })
}
