//! Expected-gap check on the three toy problems, with and without privacy.
//!
//! Usage: cargo run --release --example bound_check [T] [runs]

use dp_iadmm::analysis::{canonical_toys, expectation_gap_check, GapCheckConfig};

fn main() -> dp_iadmm::Result<()> {
    let mut args = std::env::args().skip(1);
    let rounds = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let runs = args.next().and_then(|a| a.parse().ok()).unwrap_or(50);

    println!("regime     eps      lhs          rhs          gamma     max|lambda|  pass");
    for toy in canonical_toys(2024)? {
        for eps in [1.0, f64::INFINITY] {
            let cfg = GapCheckConfig::new(rounds, eps, runs, 7);
            let r = expectation_gap_check(&toy, &cfg)?;
            println!(
                "{:<10} {:<8} {:<12.4e} {:<12.4e} {:<9.3} {:<12.3} {}",
                r.regime, r.eps_bar, r.lhs, r.rhs, r.gamma, r.max_lambda_norm, r.pass
            );
        }
    }
    Ok(())
}
