use std::fs;
use std::path::Path;
use std::process::Command;

use dp_iadmm::data::{synthetic_blobs, write_idx, RawDataset};
use dp_iadmm::harness::{
    aggregate, avg_noise_magnitude, cumulative_epsilon, evaluate_test_error, parse_config_str, run_experiment,
    run_file_name, DatasetSource, ExperimentConfig, MetricsRow, Mode, RunMetrics, AGGREGATE_FILE, BEST_FILE,
    RESOLVED_CONFIG,
};
use dp_iadmm::ParamMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use tempfile::TempDir;

/// Writes an MNIST-shaped IDX directory of 8x8 images.
fn idx_fixture(dir: &Path, train: usize, test: usize) {
    let raw = synthetic_blobs(train + test, 64, 10, 0.2, 17).unwrap();
    let idx: Vec<usize> = (0..raw.len()).collect();
    write_idx(
        &raw.select(&idx[..train]).unwrap(),
        8,
        8,
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        false,
    )
    .unwrap();
    write_idx(
        &raw.select(&idx[train..]).unwrap(),
        8,
        8,
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        true,
    )
    .unwrap();
}

fn small_config(dir: &Path, mode: Mode, eps: f64, seeds: Vec<u64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(DatasetSource::Mnist { dir: dir.to_path_buf() }, mode);
    cfg.eps_bar = eps;
    cfg.agents = 4;
    cfg.rounds = 30;
    cfg.eval_every = 5;
    cfg.seeds = seeds;
    cfg.output_dir = dir.join(format!("out_{}_{eps}", mode.name()));
    cfg
}

#[test]
fn csv_schema_golden() {
    let dir = TempDir::new().unwrap();
    let run = RunMetrics {
        seed: 3,
        rows: vec![
            MetricsRow {
                t: 100,
                test_error: 0.5,
                avg_noise_magnitude: 0.25,
                consensus_residual: 1e-3,
                global_objective: 2.0,
                cumulative_epsilon: 10.0,
            },
            MetricsRow {
                t: 200,
                test_error: 0.125,
                avg_noise_magnitude: 0.0,
                consensus_residual: 0.0,
                global_objective: 1.5,
                cumulative_epsilon: 20.0,
            },
        ],
    };
    let p = dir.path().join(run_file_name(3));
    run.write_csv(&p).unwrap();
    let golden = "t,test_error,avg_noise_magnitude,consensus_residual,global_objective,cumulative_epsilon\n\
                  100,0.5,0.25,0.001,2.0,10.0\n\
                  200,0.125,0.0,0.0,1.5,20.0\n";
    assert_eq!(fs::read_to_string(&p).unwrap(), golden);
    assert_eq!(RunMetrics::read_csv(&p, 3).unwrap(), run);
}

#[test]
fn config_examples() {
    let base = Path::new("/data");
    let cfg = parse_config_str("mnist_dir = mnist\nmode = ObjPM\n", base).unwrap();
    assert_eq!(cfg.local_updates, 10);
    assert_eq!(cfg.eps_bar, 0.1);
    assert_eq!(cfg.beta, 1e-6);
    assert_eq!(cfg.delta_bar, 1e-6);
    assert_eq!(cfg.rounds, 20_000);
    assert_eq!(cfg.eval_every, 100);
    assert_eq!(
        cfg.dataset,
        DatasetSource::Mnist {
            dir: base.join("mnist")
        }
    );

    let err = parse_config_str("mnist_dir = m\nmode = ObjP\nE = 5\n", base).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
    assert!(parse_config_str("mnist_dir = m\nmode = ObjP\nE = 5\nallow_E_override = true\n", base).is_ok());

    let err = parse_config_str("mnist_dir = m\nmode = ObjP\nmode = OutP\n", base).unwrap_err();
    assert!(
        err.to_string().contains("line 3") && err.category() == "config",
        "{err}"
    );
    let err = parse_config_str("mnist_dir = m\n# c\nlearning_rate = 2\nmode = ObjP\n", base).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}

#[test]
fn evaluation_examples() {
    let raw = RawDataset::new(
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![0.5, 0.0]],
        vec![0, 1, 1, 1],
        2,
    )
    .unwrap();
    // ties pick class 0
    assert_eq!(evaluate_test_error(&ParamMatrix::zeros(2, 2), &raw).unwrap(), 0.75);
    let w = ParamMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
    let right = RawDataset::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1], 2).unwrap();
    assert_eq!(evaluate_test_error(&w, &right).unwrap(), 0.0);

    assert_eq!(avg_noise_magnitude(&[ParamMatrix::zeros(3, 2)]), 0.0);
    assert_eq!(avg_noise_magnitude(&[ParamMatrix::filled(1, 1, -3.0)]), 3.0);
    assert_eq!(cumulative_epsilon(2000, 10, 0.05), 2000.0 * 10.0 * 0.05);
    assert_eq!(cumulative_epsilon(0, 10, 0.05), 0.0);
}

#[test]
fn random_weights_miss_nine_in_ten() {
    let raw = synthetic_blobs(5000, 20, 10, 0.2, 4).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let errs: Vec<f64> = (0..20)
        .map(|_| {
            let w = ParamMatrix::from_fn(20, 10, |_, _| rng.random_range(-1.0..1.0));
            evaluate_test_error(&w, &raw).unwrap()
        })
        .collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    assert!((mean - 0.9).abs() <= 0.05, "{mean}");
}

#[test]
fn cumulative_epsilon_column_is_exact() {
    let dir = TempDir::new().unwrap();
    idx_fixture(dir.path(), 120, 60);
    let mut cfg = small_config(dir.path(), Mode::ObjPM, 0.3, vec![1]);
    cfg.rounds = 12;
    let out = run_experiment(&cfg).unwrap();
    for row in &out.runs[0].rows {
        assert_eq!(row.cumulative_epsilon, (row.t * 10) as f64 * 0.3);
        assert!((0.0..=1.0).contains(&row.test_error) && row.avg_noise_magnitude >= 0.0);
    }
    assert_eq!(
        out.runs[0].rows.iter().map(|r| r.t).collect::<Vec<_>>(),
        vec![5, 10, 12]
    );
}

#[test]
fn single_seed_aggregate_is_the_run() {
    let dir = TempDir::new().unwrap();
    idx_fixture(dir.path(), 120, 60);
    let cfg = small_config(dir.path(), Mode::ObjP, 0.5, vec![4]);
    let out = run_experiment(&cfg).unwrap();
    let run = &out.runs[0];
    assert_eq!(out.aggregate.rows.len(), run.rows.len());
    for (a, r) in out.aggregate.rows.iter().zip(&run.rows) {
        assert_eq!(a.t, r.t);
        for (m, p20, p80, v) in [
            (a.test_error_mean, a.test_error_p20, a.test_error_p80, r.test_error),
            (
                a.avg_noise_magnitude_mean,
                a.avg_noise_magnitude_p20,
                a.avg_noise_magnitude_p80,
                r.avg_noise_magnitude,
            ),
            (
                a.consensus_residual_mean,
                a.consensus_residual_p20,
                a.consensus_residual_p80,
                r.consensus_residual,
            ),
            (
                a.global_objective_mean,
                a.global_objective_p20,
                a.global_objective_p80,
                r.global_objective,
            ),
        ] {
            assert_eq!((m, p20, p80), (v, v, v));
        }
    }
    assert_eq!(out.aggregate.best.best_final_seed, 4);
    for f in [AGGREGATE_FILE, BEST_FILE, RESOLVED_CONFIG, &run_file_name(4)] {
        assert!(cfg.output_dir.join(f).is_file(), "{f}");
    }
    // re-aggregating from disk reproduces the in-memory result
    let again = aggregate(&cfg.output_dir).unwrap();
    assert_eq!(again.rows, out.aggregate.rows);
}

#[test]
fn ten_seed_percentiles() {
    let dir = TempDir::new().unwrap();
    idx_fixture(dir.path(), 120, 60);
    let cfg = small_config(dir.path(), Mode::ObjP, 0.2, (1..=10).collect());
    let out = run_experiment(&cfg).unwrap();
    let header = fs::read_to_string(cfg.output_dir.join(AGGREGATE_FILE)).unwrap();
    let header = header.lines().next().unwrap();
    for col in [
        "test_error_mean",
        "test_error_p20",
        "test_error_p80",
        "avg_noise_magnitude_p20",
        "global_objective_p80",
    ] {
        assert!(header.split(',').any(|c| c == col), "{col} missing from {header}");
    }
    for a in &out.aggregate.rows {
        assert!(a.test_error_p20 <= a.test_error_p80);
        assert!(a.avg_noise_magnitude_p20 <= a.avg_noise_magnitude_p80);
        assert!(a.global_objective_p20 <= a.global_objective_p80);
    }
    let best = &out.aggregate.best;
    let finals: Vec<f64> = out.runs.iter().map(|r| r.final_row().unwrap().test_error).collect();
    assert_eq!(
        best.best_final_test_error,
        finals.iter().cloned().fold(f64::INFINITY, f64::min)
    );
    assert_eq!(best.runs, 10);
}

#[test]
fn thread_count_gives_identical_csv() {
    let dir = TempDir::new().unwrap();
    idx_fixture(dir.path(), 200, 40);
    let mut cfg = small_config(dir.path(), Mode::ObjPM, 0.1, vec![7]);
    cfg.agents = 8;
    let mut bytes = Vec::new();
    for threads in [1, 8] {
        cfg.threads = threads;
        cfg.output_dir = dir.path().join(format!("t{threads}"));
        run_experiment(&cfg).unwrap();
        bytes.push(fs::read(cfg.output_dir.join(run_file_name(7))).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn noise_grows_as_budget_shrinks() {
    let dir = TempDir::new().unwrap();
    idx_fixture(dir.path(), 120, 40);
    let means = |eps: f64| {
        let out = run_experiment(&small_config(dir.path(), Mode::ObjP, eps, (1..=10).collect())).unwrap();
        out.aggregate
            .rows
            .iter()
            .map(|a| a.avg_noise_magnitude_mean)
            .collect::<Vec<_>>()
    };
    let (tight, loose) = (means(0.1), means(1.0));
    for (a, b) in tight.iter().zip(&loose) {
        assert!(a > b, "{a} <= {b}");
    }
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dp-iadmm"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

#[test]
fn cli_reports_error_categories() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "mnist_dir = m\nmode = Sideways\n").unwrap();
    let out = cli(&["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[config]"));

    let missing = cli(&["run", dir.path().join("absent.cfg").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error[io]"));

    let empty = cli(&["aggregate", dir.path().to_str().unwrap()]);
    assert!(!empty.status.success());

    assert_eq!(cli(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn cli_run_and_aggregate() {
    let dir = TempDir::new().unwrap();
    idx_fixture(dir.path(), 80, 40);
    let cfg = dir.path().join("exp.cfg");
    fs::write(
        &cfg,
        "mnist_dir = .\nmode = OutP\neps_bar = 1\nagents = 2\nT = 10\neval_every = 5\nseeds = 1-2\n",
    )
    .unwrap();
    let out = cli(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let agg = cli(&["aggregate", dir.path().join("o").to_str().unwrap()]);
    assert!(agg.status.success());
    let best = fs::read_to_string(dir.path().join("o").join(BEST_FILE)).unwrap();
    assert!(best.lines().nth(1).unwrap().starts_with("OutP,1.0,1,2,"), "{best}");
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            dp_iadmm::harness::parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n > 0);
}
