use std::path::Path;

use mmemq_core::experiment::*;
use proptest::prelude::*;

/// A 4x4 grid with three ARSS levels; its joint oracle builds in well under a second.
fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.wireless.grid_size = 6.0;
    c.run.iterations = 60;
    c.run.snapshot_interval = 20;
    c.validate().unwrap();
    c
}

fn run(config: &ExperimentConfig, algo: Algorithm, seed: u64, oracle: Option<&JointOracle>) -> RunRecord {
    let layout = build_layout(config, seed).unwrap();
    run_experiment(config, algo, seed, &layout, oracle).unwrap()
}

fn oracle_for(config: &ExperimentConfig, seed: u64) -> JointOracle {
    let layout = build_layout(config, seed).unwrap();
    JointOracle::build(&config.wireless, &layout, config.learner.gamma, config.run.oracle_tolerance).unwrap()
}

#[test]
fn runs_are_reproducible_by_hash() {
    let c = small_config();
    for algo in Algorithm::ALL {
        let a = run(&c, algo, 3, None);
        let b = run(&c, algo, 3, None);
        assert_eq!(a.hash, b.hash, "{}", algo.label());
        assert_eq!(a.hash, a.compute_hash());
        assert_ne!(a.hash, run(&c, algo, 4, None).hash, "{}", algo.label());
    }
}

#[test]
fn samples_count_every_trajectory_step() {
    let c = small_config();
    let r = run(&c, Algorithm::MMemq, 1, None);
    assert_eq!(r.iterations, 60);
    assert_eq!(r.samples, 60 * c.learner.trajectory_length);
}

#[test]
fn only_the_coordinating_learner_communicates() {
    let c = small_config();
    assert_eq!(run(&c, Algorithm::Independent, 2, None).comms_payload, 0);
    assert_eq!(run(&c, Algorithm::Hysteretic, 2, None).comms_payload, 0);
    let m = run(&c, Algorithm::MMemq, 2, None);
    assert!(m.comms_payload > 0);
    assert!(m.protocol.is_some());
}

#[test]
fn hysteretic_with_unit_ratio_matches_independent() {
    let mut c = small_config();
    c.run.hysteretic_ratio = 1.0;
    let oracle = oracle_for(&c, 5);
    let h = run(&c, Algorithm::Hysteretic, 5, Some(&oracle));
    let i = run(&c, Algorithm::Independent, 5, Some(&oracle));
    assert_eq!(h.snapshots, i.snapshots);
    assert_eq!(h.final_policy, i.final_policy);
}

#[test]
fn metrics_are_recorded_at_every_snapshot() {
    let c = small_config();
    let oracle = oracle_for(&c, 1);
    let r = run(&c, Algorithm::MMemq, 1, Some(&oracle));
    let ts: Vec<u64> = r.snapshots.iter().map(|s| s.t).collect();
    assert_eq!(ts, vec![20, 40, 60]);
    for s in &r.snapshots {
        assert!((0.0..=1.0).contains(&s.ape));
        assert!(s.aqd >= 0.0);
    }
    assert_eq!(r.final_ape, Some(r.snapshots[2].ape));
    assert!(!r.final_policy.is_empty());
}

#[test]
fn trace_logs_one_entry_per_step() {
    let mut c = small_config();
    c.run.iterations = 4;
    c.run.trace = true;
    let r = run(&c, Algorithm::MMemq, 1, None);
    assert_eq!(r.log.len() as u64, r.samples);
    assert!(r.log.windows(2).all(|w| w[1].t == w[0].t + 1));
}

#[test]
fn single_point_sweep_writes_metadata_and_one_row() {
    let mut c = small_config();
    c.run.seeds = vec![1, 2];
    c.sweep = vec![SweepAxis {
        key: "wireless.sigma_u".into(),
        values: vec![toml::Value::Float(0.02)],
    }];
    c.validate().unwrap();
    let cells = run_sweep(&c, false).unwrap();
    assert_eq!(cells.len(), 1);
    assert!(cells[0].refused.is_none());
    assert_eq!(cells[0].records.len(), 2);
    assert_eq!(cells[0].point, vec![("wireless.sigma_u".to_string(), "0.02".to_string())]);

    let dir = tempfile_dir();
    let path = dir.join("sweep.csv");
    write_sweep_csv(&path, &c, &cells).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# config_hash = "));
    assert!(lines.iter().any(|l| l.starts_with("# seeds = 1 2")));
    let data: Vec<&&str> = lines.iter().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 2);
    assert!(data[0].starts_with("wireless.sigma_u,status"));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn config_round_trips_and_rejects_unknown_keys() {
    let c = ExperimentConfig::default();
    let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash(), c.hash());
    assert!(ExperimentConfig::from_toml_str("[run]\niterations = 0\n").is_err());
    assert!(ExperimentConfig::from_toml_str("[acceptance]\nseedz = 3\n").is_err());
    assert!(c.with_override("wireless.nope", toml::Value::Integer(1)).is_err());
    let o = c.with_override("wireless.sigma_u", toml::Value::Integer(1)).unwrap();
    assert_eq!(o.wireless.sigma_u, 1.0);
}

#[test]
fn shipped_config_is_the_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    assert_eq!(ExperimentConfig::load(&path).unwrap(), ExperimentConfig::default());
}

#[test]
fn acceptance_subset_is_reproducible() {
    let mut c = small_config();
    c.acceptance.fuzz_cases = 300;
    c.acceptance.determinism_iterations = 5;
    let a = run_acceptance(&c, Some(&[9, 10]), |_| {}).unwrap();
    let b = run_acceptance(&c, Some(&[9, 10]), |_| {}).unwrap();
    assert_eq!(a.criteria.len(), 2);
    assert!(a.passed(), "{:?}", a.criteria);
    assert_eq!(a.hash, b.hash);
    assert_eq!(CRITERIA.len(), 10);
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("mmemq-sweep-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

proptest! {
    #[test]
    fn window_means_stay_within_the_tail_range(
        series in prop::collection::vec(-1e3f64..1e3, 0..200),
        width in 1usize..20,
        count in 1usize..6,
    ) {
        let means = trailing_window_means(&series, width, count);
        if series.len() < width * count {
            prop_assert!(means.is_empty());
        } else {
            prop_assert_eq!(means.len(), count);
            let tail = &series[series.len() - width * count..];
            let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for m in &means {
                prop_assert!(*m >= lo - 1e-9 && *m <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn window_means_of_a_non_increasing_series_do_not_increase(
        mut series in prop::collection::vec(0f64..1.0, 10..200),
        width in 1usize..10,
    ) {
        series.sort_by(|a, b| b.total_cmp(a));
        let means = trailing_window_means(&series, width, 2.min(series.len() / width).max(1));
        prop_assert!(means.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn aqd_is_a_symmetric_nonnegative_mean(
        pairs in prop::collection::vec((-50f64..50.0, -50f64..50.0), 1..100),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let d = aqd(&a, &b).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!((d - aqd(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert_eq!(aqd(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn ape_counts_disagreeing_states(policy in prop::collection::vec(0u8..4, 1..100), flips in 0usize..100) {
        let mut other = policy.clone();
        let k = flips.min(policy.len());
        for x in other.iter_mut().take(k) {
            *x = (*x + 1) % 4;
        }
        let e = ape(&other, &policy).unwrap();
        prop_assert!((e - k as f64 / policy.len() as f64).abs() < 1e-12);
    }
}
