//! The map from a local solution back to the noise that produced it, and
//! the log-penalized subproblem approaching the clamped solution.
//!
//! Usage: cargo run --example privacy_bijection

use dp_iadmm::analysis::{noise_recovery, penalized_subproblem_solve};
use dp_iadmm::optimizer::{BoxConstraint, Subproblem};
use dp_iadmm::ParamMatrix;

fn main() -> dp_iadmm::Result<()> {
    let z_prev = ParamMatrix::from_rows(&[vec![0.2, 0.9]])?;
    let grad = ParamMatrix::from_rows(&[vec![0.3, -1.5]])?;
    let w = ParamMatrix::from_rows(&[vec![0.1, 0.8]])?;
    let lambda = ParamMatrix::zeros(1, 2);
    let xi = ParamMatrix::from_rows(&[vec![0.07, -0.04]])?;
    let feasible = BoxConstraint::new(1.0)?;
    let (rho, eta) = (3.0, 0.5);
    let sub = Subproblem {
        z_prev: &z_prev,
        grad: &grad,
        w: &w,
        lambda: &lambda,
        xi: &xi,
        rho,
        eta,
    };

    let z = sub.solve(&feasible);
    let rec = noise_recovery(&z, &z_prev, &grad, &w, &lambda, rho, eta, &feasible)?;
    println!("solution {:.4?}", z.as_slice());
    println!(
        "injected {:?}, recovered {:?}, excluded {:?}",
        xi.as_slice(),
        rec.xi.as_slice(),
        rec.excluded
    );

    for ell in [1.0, 10.0, 100.0, 1000.0, 1e4] {
        let zl = penalized_subproblem_solve(&sub, &feasible, ell)?;
        println!(
            "ell {ell:>7}: {:.6?}, distance to clamped {:.2e}",
            zl.as_slice(),
            zl.dist(&z)
        );
    }
    Ok(())
}
