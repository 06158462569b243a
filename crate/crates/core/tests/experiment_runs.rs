use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime};

use toml::Value;
use wirebeam_core::config::Overrides;
use wirebeam_core::dqn::checkpoint::Checkpoint;
use wirebeam_core::experiment::{
    episode_seeds, run_eval, run_pattern, run_sweep, run_train, run_trajectory, sweep_dir,
    MetricsRecord,
};
use wirebeam_core::{Error, ExperimentConfig, PolicyKind, Scenario};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn smoke_in(dir: &Path) -> ExperimentConfig {
    ExperimentConfig::parse("", &Overrides::new().smoke().output_dir(dir)).unwrap()
}

#[test]
fn reference_file_matches_built_in_defaults() {
    let file =
        ExperimentConfig::load(&configs_dir().join("reference.toml"), &Overrides::new()).unwrap();
    let builtin = ExperimentConfig::parse("", &Overrides::new()).unwrap();
    assert_eq!(file.setup(), builtin.setup());
    assert_eq!(file.train, builtin.train);
    assert!((file.env.reward_offset_dbm - -48.0366).abs() < 1e-3);
}

#[test]
fn shipped_configs_validate() {
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path, &Overrides::new())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
    let exp = ExperimentConfig::load(
        &configs_dir().join("impulse_expanded.toml"),
        &Overrides::new(),
    )
    .unwrap();
    assert_eq!(exp.scenario, Scenario::WindPlusImpulse);
    assert_eq!(exp.env.state_dim(), 57);
}

#[test]
fn smoke_training_is_quick_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let art_a = run_train(&smoke_in(a.path()), None).unwrap();
    assert!(started.elapsed().as_secs_f64() < 60.0);
    let art_b = run_train(&smoke_in(b.path()), None).unwrap();

    let ck_a = Checkpoint::load(&art_a.checkpoint).unwrap();
    let ck_b = Checkpoint::load(&art_b.checkpoint).unwrap();
    assert_eq!(ck_a.params, ck_b.params);
    assert_eq!(ck_a.adam, ck_b.adam);
    assert_eq!(ck_a.step, 600);
    assert_eq!(art_a.outcome.log.len(), 2);

    let log = fs::read_to_string(&art_a.log).unwrap();
    assert!(log.starts_with("# seed = 1\n"));
    assert!(log.contains("# train.total_steps = 600  # profile:smoke"));
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 3);
    for name in ["checkpoint.json", "train_summary.json"] {
        assert!(a.path().join(name).exists(), "{name}");
    }
}

#[test]
fn resuming_continues_the_step_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_in(dir.path());
    let first = run_train(&cfg, None).unwrap();
    let resumed_dir = tempfile::tempdir().unwrap();
    let cfg2 = smoke_in(resumed_dir.path());
    let second = run_train(&cfg2, Some(&first.checkpoint)).unwrap();
    assert_eq!(Checkpoint::load(&second.checkpoint).unwrap().step, 1200);
}

#[test]
fn corrupt_checkpoint_aborts_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_in(dir.path());
    let art = run_train(&cfg, None).unwrap();
    let mut ck = Checkpoint::load(&art.checkpoint).unwrap();
    ck.params.layers[0].weights[[0, 0]] = f64::NAN;
    let bad = dir.path().join("bad.txt");
    ck.save(&bad).unwrap();

    let out = tempfile::tempdir().unwrap();
    let err = run_train(&smoke_in(out.path()), Some(&bad)).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
    assert!(!err.is_validation());
    let diag = fs::read_to_string(out.path().join("diagnostics.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&diag).unwrap();
    assert!(parsed.is_object());
}

#[test]
fn eval_rejects_a_checkpoint_of_another_shape() {
    let dir = tempfile::tempdir().unwrap();
    let small = ExperimentConfig::parse(
        "train.hidden = [16]",
        &Overrides::new().smoke().output_dir(dir.path()),
    )
    .unwrap();
    let art = run_train(&small, None).unwrap();
    let err = run_eval(
        &smoke_in(dir.path()),
        PolicyKind::DqnGreedy,
        Some(&art.checkpoint),
    )
    .unwrap_err();
    assert!(err.to_string().contains("architecture mismatch"), "{err}");
    assert!(err.is_validation());

    // The matching architecture evaluates fine.
    let ok = run_eval(&small, PolicyKind::DqnGreedy, Some(&art.checkpoint)).unwrap();
    assert_eq!(ok.metrics.episodes, 2);
}

#[test]
fn eval_needs_episodes_and_a_checkpoint_for_dqn() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_in(dir.path());
    let none = cfg
        .with_override("eval.episodes", Value::Integer(0), "test")
        .unwrap();
    assert!(matches!(
        run_eval(&none, PolicyKind::Oracle, None),
        Err(Error::EmptyMetrics)
    ));
    let err = run_eval(&cfg, PolicyKind::DqnGreedy, None).unwrap_err();
    assert!(err.is_validation());
}

#[test]
fn eval_outputs_are_paired_and_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_in(dir.path())
        .with_override(
            "scenario",
            Value::String("wind_plus_impulse".into()),
            "test",
        )
        .unwrap();
    let oracle = run_eval(&cfg, PolicyKind::Oracle, None).unwrap();
    let fixed = run_eval(&cfg, PolicyKind::FixedBeam, None).unwrap();
    assert_eq!(oracle.metrics.episode_seeds, fixed.metrics.episode_seeds);
    assert_eq!(oracle.metrics.episode_seeds, episode_seeds(&cfg));
    assert_eq!(oracle.traces.len(), 2);
    assert!(oracle.metrics.mean_power_dbm > fixed.metrics.mean_power_dbm);
    // An impulse at the last candidate time leaves no window inside the episode.
    let in_episode = oracle
        .traces
        .iter()
        .filter(|p| {
            let text = fs::read_to_string(p).unwrap();
            let t = text
                .lines()
                .find_map(|l| l.strip_prefix("# impulse_time_s = "))
                .unwrap();
            t.parse::<f64>().unwrap() < 3.0
        })
        .count();
    assert_eq!(oracle.metrics.post_impulse_episodes, in_episode);

    let text = fs::read_to_string(&oracle.metrics_path).unwrap();
    let back: MetricsRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(back, oracle.metrics);
    assert!(back
        .config_echo
        .iter()
        .any(|l| l.starts_with("scenario = \"wind_plus_impulse\"")));

    let trace = fs::read_to_string(&oracle.traces[0]).unwrap();
    assert!(trace.contains("# episode_seed = "));
    assert_eq!(trace.lines().filter(|l| !l.starts_with('#')).count(), 301);
}

fn mtimes(dir: &Path) -> Vec<(PathBuf, SystemTime)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.path(), e.metadata().unwrap().modified().unwrap())
        })
        .filter(|(p, _)| {
            p.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with("cell_")
        })
        .collect();
    v.sort();
    v
}

#[test]
fn mass_sweep_writes_one_row_per_value_and_reuses_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(
        "sweep.axis = \"mass\"\nsweep.values = [5.0, 10.0, 15.0]\nsweep.policies = [\"oracle\"]",
        &Overrides::new().smoke().output_dir(dir.path()),
    )
    .unwrap();
    let first = run_sweep(&cfg).unwrap();
    assert_eq!(first.summary.len(), 3);
    assert!(first.failures.is_empty());
    assert_eq!(first.reused, 0);
    let values: Vec<f64> = first.summary.iter().map(|r| r.value).collect();
    assert_eq!(values, vec![5.0, 10.0, 15.0]);

    let sdir = sweep_dir(&cfg);
    let before = mtimes(&sdir);
    assert_eq!(before.len(), 3);
    let second = run_sweep(&cfg).unwrap();
    assert_eq!(second.reused, 3);
    assert_eq!(mtimes(&sdir), before);
    assert_eq!(second.summary, first.summary);

    let csv = fs::read_to_string(sdir.join("summary.csv")).unwrap();
    assert!(csv.contains("# sweep.axis = \"mass\""));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn sweep_records_bad_cells_and_carries_on() {
    let dir = tempfile::tempdir().unwrap();
    // 15 ms is not a multiple of the 10 ms tracking interval.
    let cfg = ExperimentConfig::parse(
        "sweep.values = [0.02, 0.015]\nsweep.policies = [\"oracle\"]",
        &Overrides::new().smoke().output_dir(dir.path()),
    )
    .unwrap();
    let res = run_sweep(&cfg).unwrap();
    assert_eq!(res.summary.len(), 1);
    assert_eq!(res.failures.len(), 1);
    assert!(
        res.failures[0].error.contains("multiple"),
        "{}",
        res.failures[0].error
    );
}

#[test]
fn trajectory_and_pattern_exports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_in(dir.path());
    let traj = fs::read_to_string(run_trajectory(&cfg).unwrap()).unwrap();
    let rows: Vec<&str> = traj.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows[0],
        "time_s,point_index,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps"
    );
    // 0.45 s at 5 ms is 91 samples of 21 points.
    assert_eq!(rows.len() - 1, 91 * 21);

    let pat = fs::read_to_string(run_pattern(&cfg).unwrap()).unwrap();
    let rows: Vec<&str> = pat.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len() - 1, 181 * 181);
}
