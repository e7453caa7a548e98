//! Runs an experiment config and prints the per-seed final errors.
//!
//! Usage: cargo run --release --example mnist_experiment [config]
//! (default: configs/mnist_objp_eps0.1.cfg with T lowered to 200)

use std::path::PathBuf;

use dp_iadmm::harness::{parse_config, run_experiment};

fn main() -> dp_iadmm::Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("configs/mnist_objp_eps0.1.cfg"));
    let mut cfg = parse_config(&path)?;
    if std::env::args().len() < 2 {
        cfg.rounds = 200;
        cfg.seeds = vec![1, 2];
    }
    let out = run_experiment(&cfg)?;
    for run in &out.runs {
        let last = run.final_row().expect("at least one row");
        println!("seed {:>2}: t={} test error {:.4}", run.seed, last.t, last.test_error);
    }
    println!("results in {}", out.output_dir.display());
    Ok(())
}
