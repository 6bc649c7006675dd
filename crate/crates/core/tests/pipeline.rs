use std::fs;
use std::path::Path;
use std::process::Command;

use pidl_tse::baselines::{non_ensemble_from_teachers, train_non_ensemble_pidl};
use pidl_tse::corridor::CorridorSpec;
use pidl_tse::ensemble::{train_teacher_ensemble, EnsembleConfig, Weighting};
use pidl_tse::experiment::*;
use pidl_tse::nn::NetworkSpec;
use pidl_tse::training::{sample_segment_observations, PidlConfig};
use pidl_tse::solver::{simulate_corridor, SolverConfig};

/// A few-second version of the default experiment.
fn tiny(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        output_dir: out.to_path_buf(),
        workers: 1,
        classifier_points: 20,
        observation_points: 40,
        ..Default::default()
    };
    cfg.solver.cell_width = 10.0;
    cfg.solver.output_dx = 50.0;
    cfg.solver.output_dt = 1.0;
    cfg.training.iterations = 40;
    cfg.training.n_collocation = 60;
    cfg.network.hidden_layers = vec![6];
    cfg.ensemble.members = 2;
    cfg.classifier.iterations = 300;
    cfg
}

#[test]
fn end_to_end_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let (sim, train, report) = run_all(&cfg).unwrap();
    assert_eq!((sim.nx, sim.nt), (101, 51));
    assert!(train.all_ok(), "{train}");
    assert_eq!(train.samples, 5 * 60);
    assert_eq!(report.results.len(), 4);
    for r in &report.results {
        assert!(r.relative_l2.is_finite() && r.relative_l2 >= 0.0);
        assert_eq!(r.segment_relative_l2.len(), 5);
        // the first segment's truth is identically zero
        assert!(r.segment_relative_l2[0].is_none());
        assert!(r.segment_relative_l2[1..].iter().all(|e| e.is_some()));
    }

    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    let listed: Vec<&str> = manifest.lines().collect();
    for name in ["truth.csv", "report.csv", "report.txt", "config.toml", "truth.pgm", "training.txt"] {
        assert!(listed.contains(&name), "{name} missing from manifest");
    }
    for m in Method::ALL {
        let est = format!("estimates/{}.csv", m.name());
        assert!(listed.contains(&est.as_str()), "{est}");
    }
    for name in &listed {
        let meta = fs::metadata(dir.path().join(name)).unwrap();
        assert!(meta.len() > 0, "{name} is empty");
    }

    let echoed = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(echoed, cfg);

    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("quantity,method,segment,value\n"));
    assert!(csv.contains("relative_l2,ensemble,1,undefined"));
    assert_eq!(csv, report.to_csv());
}

#[test]
fn report_is_byte_identical_across_repeats_and_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg_a = tiny(a.path());
    let mut cfg_b = tiny(b.path());
    cfg_b.workers = 3;
    run_all(&cfg_a).unwrap();
    run_all(&cfg_b).unwrap();
    for f in ["report.csv", "truth.csv", "estimates/ensemble.csv", "estimates/plain-dl.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn seed_changes_the_samples() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg_a = tiny(a.path());
    cfg_a.methods = vec![Method::Interpolation];
    let mut cfg_b = cfg_a.clone();
    cfg_b.output_dir = b.path().to_path_buf();
    cfg_b.seed = 1;
    for cfg in [&cfg_a, &cfg_b] {
        cmd_simulate(cfg).unwrap();
        cmd_train(cfg).unwrap();
    }
    let s = "samples/observations_segment2.csv";
    assert_ne!(fs::read(a.path().join(s)).unwrap(), fs::read(b.path().join(s)).unwrap());
}

#[test]
fn missing_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    assert!(cmd_train(&cfg).is_err(), "training without a ground truth");
    assert!(cmd_evaluate(&cfg).is_err(), "evaluating without a ground truth");
    cmd_simulate(&cfg).unwrap();
    assert!(cmd_evaluate(&cfg).is_err(), "evaluating without checkpoints");
}

#[test]
fn evaluate_honors_method_subset() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.methods = vec![Method::Interpolation, Method::PlainDl];
    run_all(&cfg).unwrap();
    cfg.methods = vec![Method::Interpolation];
    let report = cmd_evaluate(&cfg).unwrap();
    assert_eq!(report.results.len(), 1);
    assert_eq!(report.results[0].method, Method::Interpolation);
    assert!(report.classifier_accuracy.is_none());
}

#[test]
fn single_member_extraction_matches_direct_training() {
    let corridor = CorridorSpec::five_segment();
    let solver = SolverConfig {
        cell_width: 10.0,
        output_dx: 50.0,
        output_dt: 1.0,
        ..Default::default()
    };
    let truth = simulate_corridor(&corridor, &solver).unwrap().field;
    let obs: Vec<_> = (0..5)
        .map(|s| sample_segment_observations(&truth, &corridor, s + 1, 30, 40 + s as u64).unwrap())
        .collect();
    let base = PidlConfig {
        iterations: 25,
        n_collocation: 40,
        ..Default::default()
    };
    let spec = NetworkSpec {
        hidden_layers: vec![5],
        ..Default::default()
    };
    let cfg = EnsembleConfig {
        members: 3,
        weighting: Weighting::InverseLoss,
        ..Default::default()
    };
    let seed = 77;
    let teachers: Vec<_> = corridor
        .segments
        .iter()
        .zip(&obs)
        .map(|(seg, o)| train_teacher_ensemble(o, seg, corridor.horizon, &cfg, &base, &spec, seed).unwrap())
        .collect();
    let extracted = non_ensemble_from_teachers(&corridor, &teachers).unwrap();
    let direct = train_non_ensemble_pidl(&corridor, &obs, &cfg, &base, &spec, seed).unwrap();
    for (a, b) in extracted.segments.iter().zip(&direct.segments) {
        assert_eq!(a.members.len(), 1);
        assert_eq!(a.members[0].seed, b.members[0].seed);
        assert_eq!(a.members[0].estimator.params, b.members[0].estimator.params);
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pidl-tse"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.toml");
    let out = dir.path().join("out");
    fs::write(&cfg_path, tiny(&out).to_toml()).unwrap();

    let ok = bin()
        .args(["simulate", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("truth.csv").exists());

    let missing = bin()
        .args(["evaluate", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(!missing.status.success());
    let stderr = String::from_utf8_lossy(&missing.stderr);
    assert!(stderr.starts_with("pidl-tse: error:"), "{stderr}");

    let bad_method = bin()
        .args(["evaluate", "--method", "kriging", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(!bad_method.status.success());

    fs::write(dir.path().join("bad.toml"), "seed = \"zero\"\n").unwrap();
    let bad = bin()
        .args(["simulate", "--config"])
        .arg(dir.path().join("bad.toml"))
        .output()
        .unwrap();
    assert!(!bad.status.success());

    let render = bin()
        .args(["render", "--config"])
        .arg(&cfg_path)
        .arg("--image")
        .arg(dir.path().join("t.pgm"))
        .output()
        .unwrap();
    assert!(render.status.success(), "{}", String::from_utf8_lossy(&render.stderr));
    assert!(fs::read(dir.path().join("t.pgm")).unwrap().starts_with(b"P5"));
}
