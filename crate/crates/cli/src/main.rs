use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jumper::bounds::RegretCertificate;
use jumper::experiment::{default_family, run_experiment, ExperimentConfig};
use jumper::martingale::run_test;
use jumper::metrics::{error_count, moving_average, roc_auc};
use jumper::predictor::run_protect;
use jumper::report::write_protected_csv;
use jumper::stream::{load_stream, StreamFormat};
use jumper::synth::{shuffle_objects, synth_drift, DriftScenario};
use jumper::{CalibratorFamily, Error, JumperConfig, LogBase, MixingPolicy, PredictionStream};

#[derive(Parser)]
#[command(
    name = "jumper",
    version,
    about = "Test and protect probabilistic classifiers against distribution shift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Protection {
    /// Weight of the passive (base) predictor.
    #[arg(long, default_value_t = 0.5)]
    pi: f64,
    /// Jumping rates, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4])]
    jumps: Vec<f64>,
    /// Calibrator family, e.g. `cox:alpha=-1,0,1;beta=0.5,1,2`.
    #[arg(long)]
    family: Option<String>,
    /// Truncation level applied to the input forecasts.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Produce protected forecasts for a prediction stream.
    Protect {
        input: PathBuf,
        /// CSV of base and protected forecasts.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Write the key=value report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        protection: Protection,
        /// Update the weights only on every k-th observation.
        #[arg(long, default_value_t = 1)]
        feedback_every: usize,
        /// Apply jump mixing once per feedback instead of once per prediction.
        #[arg(long)]
        freeze_mixing: bool,
        #[arg(long, default_value = "10", value_parser = parse_log_base)]
        log_base: LogBase,
        /// Permute the forecasts before protecting (shuffled-objects scenario).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the Composite Jumper test martingale over a stream.
    Test {
        input: PathBuf,
        /// CSV trajectory of log10 martingale values.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        protection: Protection,
        #[arg(long, default_value = "10", value_parser = parse_log_base)]
        log_base: LogBase,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the regret inequality against a comparator sequence of members.
    ///
    /// Exits with status 1 when the slack is negative.
    Certify {
        input: PathBuf,
        /// File of member indices, one per observation (whitespace or comma separated).
        #[arg(long, conflicts_with = "member", required_unless_present = "member")]
        comparator: Option<PathBuf>,
        /// Use this member index at every step.
        #[arg(long)]
        member: Option<usize>,
        /// Jumping rate the comparator is measured against; defaults to the first.
        #[arg(long)]
        rate: Option<f64>,
        #[command(flatten)]
        protection: Protection,
    },
    /// Generate a synthetic binary stream with a calibration drift.
    Synth {
        #[arg(long, default_value_t = 100_000)]
        length: usize,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// First 1-based index generated from the drifted model; defaults to the midpoint.
        #[arg(long)]
        changepoint: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Randomly permute the forecasts of a stream while keeping the labels in place.
    Shuffle {
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Log loss, error count, AUC and label moving average of a stream.
    Metrics {
        input: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Write the ROC curve here.
        #[arg(long)]
        roc: Option<PathBuf>,
        /// Write the moving average of labels with this window to `--moving-average-out`.
        #[arg(long, requires = "moving_average_out")]
        window: Option<usize>,
        #[arg(long)]
        moving_average_out: Option<PathBuf>,
        #[arg(long, default_value = "10", value_parser = parse_log_base)]
        log_base: LogBase,
    },
    /// Run an experiment described by a TOML file.
    Run { config: PathBuf },
}

fn parse_log_base(s: &str) -> Result<LogBase, String> {
    match s {
        "e" => Ok(LogBase::Natural),
        "10" => Ok(LogBase::Decimal),
        other => Err(format!("`{other}` is not one of e, 10")),
    }
}

fn load(input: &Path, epsilon: f64, seed: Option<u64>) -> jumper::Result<PredictionStream> {
    let mut stream = load_stream(input, StreamFormat::Csv)?;
    if let Some(seed) = seed {
        stream = shuffle_objects(&stream, seed)?;
    }
    stream.truncated(epsilon)
}

fn jumper_config(stream: &PredictionStream, p: &Protection) -> jumper::Result<JumperConfig> {
    let family: CalibratorFamily = match &p.family {
        Some(spec) => spec.parse()?,
        None => default_family(stream.is_binary(), stream.arity())?,
    };
    if let Some(first) = stream.records().first() {
        family.check_forecast(&first.forecast)?;
    }
    JumperConfig::new(family, p.jumps.clone(), p.pi)
}

fn writer(path: &Path) -> jumper::Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn read_comparator(path: &Path) -> jumper::Result<Vec<usize>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .map(|line| line.split('#').next().unwrap_or(""))
        .flat_map(|line| line.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|t| !t.is_empty())
        .enumerate()
        .map(|(i, t)| {
            t.parse().map_err(|_| Error::Parse {
                row: i + 1,
                message: format!("`{t}` is not a member index"),
            })
        })
        .collect()
}

fn run(cli: Cli) -> jumper::Result<ExitCode> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Protect {
            input,
            output,
            report,
            protection,
            feedback_every,
            freeze_mixing,
            log_base,
            seed,
        } => {
            let stream = load(&input, protection.epsilon, seed)?;
            let config = jumper_config(&stream, &protection)?;
            let mixing = if freeze_mixing {
                MixingPolicy::AfterFeedback
            } else {
                MixingPolicy::EveryPrediction
            };
            let trajectory = run_test(&config, stream.observations())?;
            let (records, mut summary) =
                run_protect(&config, stream.observations(), feedback_every, mixing)?;
            summary.epsilon = Some(protection.epsilon);
            summary.log10_martingale = Some(trajectory.final_log10());
            if let Some(path) = output {
                write_protected_csv(&records, writer(&path)?)?;
            }
            match report {
                Some(path) => summary.write_key_values(writer(&path)?, log_base)?,
                None => summary.write_key_values(&mut out, log_base)?,
            }
        }
        Command::Test {
            input,
            output,
            protection,
            log_base,
            seed,
        } => {
            let stream = load(&input, protection.epsilon, seed)?;
            let config = jumper_config(&stream, &protection)?;
            let trajectory = run_test(&config, stream.observations())?;
            if let Some(path) = output {
                trajectory.write_csv(writer(&path)?)?;
            }
            let to_base = |log10: f64| log_base.from_nats(log10 * std::f64::consts::LN_10);
            writeln!(out, "n={}", stream.len())?;
            writeln!(out, "family={}", config.family)?;
            writeln!(out, "pi={}", config.passive_weight)?;
            writeln!(out, "log_base={log_base}")?;
            writeln!(out, "log_composite={}", to_base(trajectory.final_log10()))?;
            for (rate, v) in config.rates.iter().zip(trajectory.final_components_log10()) {
                writeln!(out, "log_J_{rate}={}", to_base(v))?;
            }
        }
        Command::Certify {
            input,
            comparator,
            member,
            rate,
            protection,
        } => {
            let stream = load(&input, protection.epsilon, None)?;
            let config = jumper_config(&stream, &protection)?;
            let sequence = match (comparator, member) {
                (Some(path), _) => read_comparator(&path)?,
                (None, Some(m)) => vec![m; stream.len()],
                (None, None) => unreachable!("clap requires one of the comparator options"),
            };
            if sequence.len() != stream.len() {
                return Err(Error::ArityMismatch {
                    expected: stream.len(),
                    found: sequence.len(),
                });
            }
            let rate = rate.unwrap_or(config.rates[0]);
            let (_, summary) = run_protect(
                &config,
                stream.observations(),
                1,
                MixingPolicy::EveryPrediction,
            )?;
            let losses = summary
                .protected_loss
                .increments()
                .expect("run_protect keeps increments");
            let observations = stream.to_observations();
            let cert = RegretCertificate::compute(losses, &sequence, &observations, &config, rate)?;
            writeln!(out, "{cert}")?;
            if !cert.holds() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Synth {
            length,
            alpha,
            beta,
            changepoint,
            seed,
            output,
        } => {
            let mut scenario = DriftScenario::midpoint(length, alpha, beta, seed);
            if let Some(c) = changepoint {
                scenario.changepoint = c;
            }
            synth_drift(&scenario)?.save(&output)?;
        }
        Command::Shuffle {
            input,
            seed,
            output,
        } => {
            let stream = load_stream(&input, StreamFormat::Csv)?;
            shuffle_objects(&stream, seed)?.save(&output)?;
        }
        Command::Metrics {
            input,
            epsilon,
            roc,
            window,
            moving_average_out,
            log_base,
        } => {
            let mut stream = load_stream(&input, StreamFormat::Csv)?;
            if let Some(eps) = epsilon {
                stream = stream.truncated(eps)?;
            }
            let labels = stream.labels();
            let forecasts = stream.forecasts();
            let mut ledger = jumper::loss::LossLedger::new();
            for (p, &y) in forecasts.iter().zip(&labels) {
                ledger.record(y, p)?;
            }
            writeln!(out, "n={}", stream.len())?;
            writeln!(out, "log_base={log_base}")?;
            writeln!(out, "loss={}", ledger.total(log_base))?;
            writeln!(out, "infinite={}", ledger.infinite_count())?;
            writeln!(out, "loss_finite={}", ledger.total_finite(log_base))?;
            writeln!(out, "errors={}", error_count(&forecasts, &labels)?)?;
            if stream.is_binary() {
                let scores: Vec<(f64, usize)> = forecasts
                    .iter()
                    .zip(&labels)
                    .map(|(p, &y)| (p.positive_score(), y))
                    .collect();
                match roc_auc(&scores) {
                    Ok(curve) => {
                        writeln!(out, "auc={}", curve.auc)?;
                        if let Some(path) = roc {
                            curve.write_csv(writer(&path)?)?;
                        }
                    }
                    Err(e) => writeln!(out, "auc=na # {e}")?,
                }
            }
            if let (Some(window), Some(path)) = (window, moving_average_out) {
                let series = moving_average(&labels, window)?;
                let mut w = writer(&path)?;
                writeln!(w, "start,mean")?;
                for (i, v) in series.iter().enumerate() {
                    writeln!(w, "{},{v}", i + 1)?;
                }
                w.flush()?;
            }
        }
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let outcome = run_experiment(&config)?;
            let base: LogBase = config.log_base.parse()?;
            outcome.report.write_key_values(&mut out, base)?;
            for file in &outcome.files {
                writeln!(out, "# wrote {}", file.display())?;
            }
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
