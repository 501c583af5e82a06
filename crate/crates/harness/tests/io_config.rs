use std::fs;

use epmf_core::{DMatrix, DVector, Estimate, TerrainMap};
use epmf_harness::config::{EstimatorSpec, ExperimentConfig, ModelKind, TerrainSource};
use epmf_harness::estimators::EstimatorRun;
use epmf_harness::experiment::{accuracy, run_monte_carlo, timing, write_outputs};
use epmf_harness::scenario::Scenario;
use epmf_harness::terrain::{
    MAGIC, SyntheticTerrain, TerrainError, encode_terrain, load_terrain, parse_terrain, save_terrain,
    synthesize_terrain,
};
use proptest::prelude::*;

fn estimate(mean: &[f64], var: &[f64]) -> Estimate {
    Estimate { mean: DVector::from_column_slice(mean), cov: DMatrix::from_diagonal(&DVector::from_column_slice(var)) }
}

#[test]
fn terrain_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.ter");
    let map =
        synthesize_terrain(&SyntheticTerrain { rows: 17, cols: 23, ..Default::default() }, [-100.0, 250.0]).unwrap();
    save_terrain(&map, &path).unwrap();
    let back = load_terrain(&path).unwrap();
    // altitudes are stored as f32
    assert_eq!(back.rows(), 17);
    assert_eq!(back.cols(), 23);
    assert_eq!(back.origin(), map.origin());
    assert_eq!(back.cell_size(), map.cell_size());
    for (a, b) in back.altitudes().iter().zip(map.altitudes()) {
        assert_eq!(*a, *b as f32 as f64);
    }
    assert_eq!(&fs::read(&path).unwrap()[..8], MAGIC);
}

#[test]
fn terrain_errors_name_the_field() {
    let map = TerrainMap::new([0.0, 0.0], [1.0, 1.0], 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let bytes = encode_terrain(&map);
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(parse_terrain(&bad_magic), Err(TerrainError::Format { field: "magic", .. })));
    let truncated = &bytes[..bytes.len() - 1];
    assert!(matches!(parse_terrain(truncated), Err(TerrainError::Format { .. })));
    let missing = tempfile::tempdir().unwrap().path().join("absent.ter");
    assert!(matches!(load_terrain(&missing), Err(TerrainError::Io { .. })));
}

#[test]
fn synthetic_terrain_is_seeded_and_bounded() {
    let p = SyntheticTerrain { rows: 40, cols: 30, ..Default::default() };
    let a = synthesize_terrain(&p, [0.0, 0.0]).unwrap();
    assert_eq!(a, synthesize_terrain(&p, [0.0, 0.0]).unwrap());
    assert_ne!(a, synthesize_terrain(&SyntheticTerrain { seed: 8, ..p }, [0.0, 0.0]).unwrap());
    let base = 500.0;
    assert!(a.altitudes().iter().all(|h| (h - base).abs() <= p.roughness + 1e-9));
}

#[test]
fn toml_config_parses_and_validates() {
    let cfg = ExperimentConfig::from_toml(
        r#"
        model = "coordinated_turn_4d"
        estimators = ["pmf_dense", "epmf_fft", "pf:5000"]
        steps = 10
        mc = 3
        seed = 42
        grid_points = [5, 7, 5, 7]

        [terrain]
        kind = "synthetic"
        seed = 3
        rows = 50
        cols = 60
        cell = 20.0
        roughness = 40.0
        "#,
    )
    .unwrap();
    assert_eq!(cfg.model, ModelKind::CoordinatedTurn4d);
    assert_eq!(cfg.estimators[2], EstimatorSpec::Pf { particles: 5000 });
    assert_eq!(cfg.axis_counts(), vec![5, 7, 5, 7]);
    assert_eq!(cfg.sigma_mult, 4.0);
    assert!(matches!(cfg.terrain, TerrainSource::Synthetic(SyntheticTerrain { seed: 3, rows: 50, .. })));
    cfg.validate().unwrap();

    let file = ExperimentConfig::from_toml("[terrain]\nkind = \"file\"\npath = \"map.ter\"\n").unwrap();
    assert!(matches!(file.terrain, TerrainSource::File { .. }));

    assert!(ExperimentConfig::from_toml("stepz = 3").is_err());
    assert!(ExperimentConfig::from_toml("estimators = [\"kalman\"]").is_err());
    let fst_on_ct = ExperimentConfig {
        model: ModelKind::CoordinatedTurn4d,
        estimators: vec![EstimatorSpec::EpmfFst { dt: 0.01 }],
        ..Default::default()
    };
    assert!(fst_on_ct.validate().is_err());
    for bad in [
        ExperimentConfig { grid_points: vec![40], ..Default::default() },
        ExperimentConfig { grid_points: vec![41, 41, 41], ..Default::default() },
        ExperimentConfig { mc: 0, ..Default::default() },
        ExperimentConfig { estimators: vec![EstimatorSpec::EpmfFft, EstimatorSpec::EpmfFft], ..Default::default() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}

#[test]
fn accuracy_matches_hand_computation() {
    let truth = [
        vec![DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![1.0, 1.0])],
        vec![DVector::from_vec(vec![2.0, 2.0])],
    ];
    let est = [
        vec![estimate(&[1.0, 0.0], &[4.0, 1.0]), estimate(&[1.0, 3.0], &[4.0, 1.0])],
        vec![estimate(&[2.0, 5.0], &[1.0, 7.0])],
    ];
    let t: Vec<&[DVector<f64>]> = truth.iter().map(|v| v.as_slice()).collect();
    let e: Vec<&[Estimate]> = est.iter().map(|v| v.as_slice()).collect();
    let (rmse, astd) = accuracy(&t, &e);
    assert!((rmse[0] - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert!((rmse[1] - (13.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert!((astd[0] - 3.0f64.sqrt()).abs() < 1e-15);
    assert!((astd[1] - 3.0f64.sqrt()).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn timing_skips_first_step_and_orders_mean(times in prop::collection::vec(prop::collection::vec(1e-6f64..1.0, 2..20), 1..5)) {
        let runs: Vec<EstimatorRun> = times.iter().map(|t| EstimatorRun { estimates: vec![], step_times: t.clone(), fallbacks: 0 }).collect();
        let refs: Vec<&EstimatorRun> = runs.iter().collect();
        let (mean, median) = timing(&refs);
        let rest: Vec<f64> = times.iter().flat_map(|t| t[1..].iter().copied()).collect();
        let lo = rest.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rest.iter().copied().fold(0.0, f64::max);
        prop_assert!((mean - rest.iter().sum::<f64>() / rest.len() as f64).abs() < 1e-12);
        prop_assert!(lo <= median && median <= hi);
    }

    #[test]
    fn exact_estimates_have_zero_rmse(xs in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 2), 1..30)) {
        let truth: Vec<DVector<f64>> = xs.iter().map(|x| DVector::from_column_slice(x)).collect();
        let est: Vec<Estimate> = xs.iter().map(|x| estimate(x, &[2.0, 3.0])).collect();
        let (rmse, astd) = accuracy(&[&truth], &[&est]);
        prop_assert!(rmse.iter().all(|&r| r == 0.0));
        prop_assert!((astd[0] - 2.0f64.sqrt()).abs() < 1e-12 && (astd[1] - 3.0f64.sqrt()).abs() < 1e-12);
    }
}

fn strip_timing(metrics: &str) -> String {
    metrics.lines().map(|l| l.split(',').take(4).collect::<Vec<_>>().join(",")).collect::<Vec<_>>().join("\n")
}

#[test]
fn outputs_are_deterministic_for_a_seed() {
    let cfg = ExperimentConfig {
        estimators: vec![
            EstimatorSpec::EpmfFft,
            EstimatorSpec::EpmfFst { dt: 0.02 },
            EstimatorSpec::Pf { particles: 300 },
        ],
        steps: 4,
        mc: 3,
        grid_points: vec![15],
        ..Default::default()
    };
    let scenario = Scenario::from_config(&cfg).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let result = run_monte_carlo(&cfg, &scenario);
        assert_eq!(result.replications.len(), 3);
        let written = write_outputs(d.path(), &result).unwrap();
        assert_eq!(written.len(), 4);
    }
    let read = |i: usize, name: &str| fs::read_to_string(dirs[i].path().join(name)).unwrap();
    let metrics = read(0, "metrics.csv");
    assert_eq!(metrics.lines().next().unwrap(), "estimator,dim,rmse,astd,mean_step_time_s,median_step_time_s");
    assert_eq!(metrics.lines().count(), 1 + 3 * 2);
    assert_eq!(strip_timing(&metrics), strip_timing(&read(1, "metrics.csv")));
    for name in ["trace_epmf_fft.csv", "trace_epmf_fst_0.02.csv", "trace_pf_300.csv"] {
        let trace = read(0, name);
        assert_eq!(trace, read(1, name), "{name}");
        assert_eq!(trace.lines().count(), 1 + 3 * 5 * 2);
    }

    let other = run_monte_carlo(&ExperimentConfig { seed: 2, ..cfg.clone() }, &scenario);
    let d = tempfile::tempdir().unwrap();
    write_outputs(d.path(), &other).unwrap();
    assert_ne!(fs::read_to_string(d.path().join("trace_pf_300.csv")).unwrap(), read(0, "trace_pf_300.csv"));
}
