//! One perturbed local update in closed form, clamped to the box.
//!
//! Usage: cargo run --example closed_form_step

use dp_iadmm::optimizer::{local_subproblem_step, BoxConstraint, Subproblem};
use dp_iadmm::ParamMatrix;

fn main() -> dp_iadmm::Result<()> {
    let z_prev = ParamMatrix::from_rows(&[vec![0.5, -0.2], vec![1.5, 0.0]])?;
    let grad = ParamMatrix::from_rows(&[vec![0.1, 0.3], vec![-2.0, 0.0]])?;
    let w = ParamMatrix::from_rows(&[vec![0.4, 0.0], vec![1.8, 0.1]])?;
    let lambda = ParamMatrix::filled(2, 2, 0.05);
    let xi = ParamMatrix::from_rows(&[vec![0.01, -0.02], vec![0.0, 0.03]])?;
    let feasible = BoxConstraint::new(2.0)?;
    let (rho, eta) = (2.0, 0.5);

    let z = local_subproblem_step(&z_prev, &grad, &w, &lambda, &xi, rho, eta, &feasible)?;
    let sub = Subproblem {
        z_prev: &z_prev,
        grad: &grad,
        w: &w,
        lambda: &lambda,
        xi: &xi,
        rho,
        eta,
    };
    println!("unconstrained {:.4?}", sub.unconstrained_minimizer().as_slice());
    println!("clamped       {:.4?}", z.as_slice());
    println!("stationarity residual {:.2e}", sub.stationarity_residual(&z, &feasible));
    Ok(())
}
