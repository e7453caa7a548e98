//! Private federated training on generated data, comparing the mechanisms.
//!
//! Usage: cargo run --release --example federated_training

use dp_iadmm::data::{partition_iid, synthetic_blobs};
use dp_iadmm::harness::evaluate_test_error;
use dp_iadmm::optimizer::{
    run_training, BoxConstraint, EtaRule, Mechanism, OutputNoise, RhoSchedule, Schedules, TrainerConfig,
};

fn main() -> dp_iadmm::Result<()> {
    let all = synthetic_blobs(2500, 64, 10, 0.2, 1)?;
    let idx: Vec<usize> = (0..all.len()).collect();
    let (train, test) = (all.select(&idx[..2000])?, all.select(&idx[2000..])?);
    let data = partition_iid(&train, test, 5, 0)?;

    let arms = [
        ("NonPrivate", Mechanism::NonPrivate, f64::INFINITY, 1),
        ("ObjP", Mechanism::ObjectivePerturbation, 0.1, 1),
        ("ObjPM", Mechanism::ObjectivePerturbation, 0.1, 10),
        ("OutP", Mechanism::OutputPerturbation(OutputNoise::default()), 0.1, 1),
    ];
    for (name, mechanism, eps_bar, local_updates) in arms {
        let cfg = TrainerConfig {
            schedules: Schedules {
                rho: RhoSchedule::mnist(),
                eta: EtaRule::Nonsmooth,
                eps_bar,
                local_updates,
                rounds: 300,
            },
            feasible: BoxConstraint::new(100.0)?,
            mechanism,
            seed: 7,
            threads: 1,
        };
        let mut noise = 0.0;
        let state = run_training(data.losses(1e-6), cfg, |r| {
            noise = r.noise_magnitude();
            Ok(())
        })?;
        println!(
            "{name:<10} test error {:.4}, consensus residual {:.2e}, last noise magnitude {noise:.4}",
            evaluate_test_error(&state.w, &data.test_set)?,
            state.consensus_residual()
        );
    }
    Ok(())
}
