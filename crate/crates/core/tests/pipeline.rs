use std::fs;

use jumper::bounds::{certify_run, RegretCertificate};
use jumper::experiment::{run_experiment, ExperimentConfig};
use jumper::martingale::run_test;
use jumper::predictor::run_protect;
use jumper::stream::{load_stream, read_stream, LoadOptions, StreamFormat};
use jumper::synth::{shuffle_objects, synth_drift, DriftScenario};
use jumper::{CalibratorFamily, Error, Forecast, JumperConfig, LogBase, MixingPolicy, Predictor};

fn drift_stream(n: usize, seed: u64) -> Vec<(Forecast, usize)> {
    synth_drift(&DriftScenario::midpoint(n, 1.0, 1.0, seed))
        .unwrap()
        .to_observations()
}

#[test]
fn protected_loss_gain_equals_log_martingale() {
    let obs = drift_stream(2000, 3);
    let config = JumperConfig::with_default_rates(CalibratorFamily::default_binary());
    let trajectory = run_test(&config, obs.iter().map(|(p, y)| (p, *y))).unwrap();
    let (_, report) = run_protect(
        &config,
        obs.iter().map(|(p, y)| (p, *y)),
        1,
        MixingPolicy::EveryPrediction,
    )
    .unwrap();
    let gain = report.loss_reduction(LogBase::Decimal);
    assert!(
        (gain - trajectory.final_log10()).abs() < 1e-8,
        "{gain} vs {}",
        trajectory.final_log10()
    );
    assert_eq!(report.log10_martingale, None);
    assert!(report.protected_auc.is_some());
}

#[test]
fn run_protect_matches_manual_loop() {
    let obs = drift_stream(300, 11);
    let config = JumperConfig::with_default_rates(CalibratorFamily::default_binary());
    let (records, _) = run_protect(
        &config,
        obs.iter().map(|(p, y)| (p, *y)),
        1,
        MixingPolicy::EveryPrediction,
    )
    .unwrap();
    let mut predictor = Predictor::new(&config).unwrap();
    for ((p, y), record) in obs.iter().zip(&records) {
        let out = predictor.predict(p).unwrap();
        predictor.update(p, *y).unwrap();
        assert_eq!(out.protected, record.protected);
        assert!(record.fed_back);
    }
}

#[test]
fn limited_feedback_updates_on_schedule() {
    let obs = drift_stream(1000, 5);
    let config = JumperConfig::with_default_rates(CalibratorFamily::default_binary());
    for mixing in [MixingPolicy::EveryPrediction, MixingPolicy::AfterFeedback] {
        let (records, report) =
            run_protect(&config, obs.iter().map(|(p, y)| (p, *y)), 10, mixing).unwrap();
        assert_eq!(report.feedback_steps, 100);
        assert_eq!(report.mixing, mixing);
        for r in &records {
            assert_eq!(r.fed_back, r.step % 10 == 0);
        }
        // until the first label arrives the predictor still holds its prior
        for r in &records[..9] {
            let drift = (r.protected.prob_of(1) - r.base.prob_of(1)).abs();
            assert!(drift < 0.05, "step {} moved by {drift}", r.step);
        }
        assert_eq!(report.n, 1000);
    }
}

#[test]
fn full_feedback_predictor_rejects_double_prediction() {
    let config = JumperConfig::with_default_rates(CalibratorFamily::default_binary());
    let mut predictor = Predictor::new(&config).unwrap();
    let p = Forecast::Binary(0.4);
    predictor.predict(&p).unwrap();
    assert!(matches!(predictor.predict(&p), Err(Error::Sequencing(_))));
}

#[test]
fn stated_regret_form_can_be_exceeded_while_path_prior_holds() {
    // two members, J = 1: every step draws a member uniformly
    let family = CalibratorFamily::cox_alpha(&[0.0, 10.0]).unwrap();
    let config = JumperConfig::new(family, vec![1.0], 0.5).unwrap();
    let obs: Vec<(Forecast, usize)> = (0..10).map(|_| (Forecast::Binary(0.01), 1)).collect();
    let (_, report) = run_protect(
        &config,
        obs.iter().map(|(p, y)| (p, *y)),
        1,
        MixingPolicy::EveryPrediction,
    )
    .unwrap();
    let losses = report.protected_loss.increments().unwrap().to_vec();
    let comparator = vec![1; 10];

    let cert = RegretCertificate::compute(&losses, &comparator, &obs, &config, 1.0).unwrap();
    assert_eq!(cert.switches, 1);
    assert!(cert.holds());
    assert!(cert.slack > 0.0 && cert.slack < 2f64.ln());
    let stated = cert.stated_slack.unwrap();
    assert!((cert.slack - stated - 2f64.ln()).abs() < 1e-12);
    assert!(stated < -0.5, "stated slack {stated}");
    assert!(certify_run(&losses, &comparator, &obs, &config, 1.0).is_ok());
}

#[test]
fn certificate_rejects_unknown_rate() {
    let config = JumperConfig::with_default_rates(CalibratorFamily::default_binary());
    let obs = vec![(Forecast::Binary(0.5), 1)];
    let err = RegretCertificate::compute(&[0.7], &[4], &obs, &config, 0.5).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn stream_csv_round_trip_and_shuffle() {
    let stream = synth_drift(&DriftScenario::midpoint(500, -1.0, 2.0, 9)).unwrap();
    let mut buf = Vec::new();
    stream.write_csv(&mut buf).unwrap();
    let back = read_stream(&buf[..], LoadOptions::default()).unwrap();
    assert_eq!(back, stream);

    let shuffled = shuffle_objects(&stream, 4).unwrap();
    assert_eq!(shuffled.labels(), stream.labels());
    let sorted = |s: &jumper::PredictionStream| {
        let mut v: Vec<f64> = s.forecasts().iter().map(|f| f.prob_of(1)).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    assert_eq!(sorted(&shuffled), sorted(&stream));
    assert_ne!(shuffled.forecasts(), stream.forecasts());
    assert_eq!(shuffle_objects(&stream, 4).unwrap(), shuffled);
}

#[test]
fn multiclass_stream_runs_end_to_end() {
    let text = "index,label,p_1,p_2,p_3\n1,0,0.7,0.2,0.1\n2,2,0.1,0.1,0.8\n3,1,0.3,0.4,0.3\n4,2,0.6,0.3,0.1\n";
    let stream = read_stream(text.as_bytes(), LoadOptions::default())
        .unwrap()
        .truncated(0.01)
        .unwrap();
    assert_eq!(stream.arity(), 3);
    let config = JumperConfig::with_default_rates(CalibratorFamily::default_multiclass(3).unwrap());
    let trajectory = run_test(&config, stream.observations()).unwrap();
    let (records, report) = run_protect(
        &config,
        stream.observations(),
        1,
        MixingPolicy::EveryPrediction,
    )
    .unwrap();
    assert_eq!(records.len(), 4);
    assert_eq!(report.protected_auc, None);
    assert!((report.loss_reduction(LogBase::Decimal) - trajectory.final_log10()).abs() < 1e-10);
}

#[test]
fn experiment_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let stream = synth_drift(&DriftScenario::midpoint(3000, 1.0, 1.0, 1)).unwrap();
    stream.save(dir.path().join("stream.csv")).unwrap();
    let toml = r#"
input = "stream.csv"
output_dir = "out"
family = "cox:alpha=-1,0,1;beta=0.5,1,2"
feedback_every = 1
moving_average_window = 100
log_base = "10"
"#;
    fs::write(dir.path().join("run.toml"), toml).unwrap();
    let config = ExperimentConfig::load(dir.path().join("run.toml")).unwrap();
    let outcome = run_experiment(&config).unwrap();

    let out = dir.path().join("out");
    for name in [
        "trajectory.csv",
        "protected.csv",
        "report.txt",
        "roc_base.csv",
        "roc_protected.csv",
        "moving_average.csv",
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    assert_eq!(outcome.files.len(), 6);
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("n=3000"), "{report}");
    let trajectory = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(trajectory.lines().count(), 3001);
    let reloaded = load_stream(dir.path().join("stream.csv"), StreamFormat::Csv).unwrap();
    assert_eq!(reloaded.len(), 3000);
}

#[test]
fn experiment_config_rejects_unknown_keys() {
    let err =
        ExperimentConfig::from_toml("input = \"a\"\noutput_dir = \"b\"\nspeed = 3\n").unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn calibrated_base_keeps_component_medians_nonpositive() {
    let config = JumperConfig::with_default_rates(CalibratorFamily::default_binary());
    let mut finals = vec![Vec::new(); config.rates.len()];
    for seed in 0..30 {
        let stream = synth_drift(&DriftScenario::calibrated(10_000, 900 + seed)).unwrap();
        let trajectory = run_test(&config, stream.observations()).unwrap();
        for (acc, v) in finals.iter_mut().zip(trajectory.final_components_log10()) {
            acc.push(v);
        }
    }
    for mut values in finals {
        let ln: Vec<f64> = values.iter().map(|v| v * std::f64::consts::LN_10).collect();
        let mean = ln.iter().sum::<f64>() / 30.0;
        let var = ln.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 29.0;
        assert!(mean <= 3.0 * (var / 30.0).sqrt(), "mean {mean}");
        values.sort_by(f64::total_cmp);
        let median = (values[14] + values[15]) / 2.0;
        assert!(median <= 0.0, "median {median}");
    }
}
