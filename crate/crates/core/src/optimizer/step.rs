//! The two closed-form updates of one round: the server's global average and
//! the agent's perturbed proximal-linearized step.

use crate::error::{Error, Result};
use crate::matrix::ParamMatrix;

/// The feasible set `W = [-B, B]^{J x K}`; an infinite bound disables it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxConstraint {
    pub bound: f64,
}

impl BoxConstraint {
    pub const DEFAULT_BOUND: f64 = 100.0;

    pub fn new(bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(Error::usage(format!("box bound must be > 0, got {bound}")));
        }
        Ok(Self { bound })
    }

    pub fn unbounded() -> Self {
        Self { bound: f64::INFINITY }
    }

    pub fn is_bounded(&self) -> bool {
        self.bound.is_finite()
    }

    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(-self.bound, self.bound)
    }

    pub fn project(&self, m: &mut ParamMatrix) {
        if self.is_bounded() {
            m.as_mut_slice().iter_mut().for_each(|v| *v = self.clamp(*v));
        }
    }

    pub fn contains(&self, m: &ParamMatrix) -> bool {
        m.as_slice().iter().all(|v| v.abs() <= self.bound)
    }

    /// `max ||u - v||` over the box: `2 B sqrt(JK)`.
    pub fn diameter(&self, shape: (usize, usize)) -> f64 {
        2.0 * self.bound * ((shape.0 * shape.1) as f64).sqrt()
    }
}

impl Default for BoxConstraint {
    fn default() -> Self {
        Self {
            bound: Self::DEFAULT_BOUND,
        }
    }
}

/// `w^{t+1} = (1/P) sum_p (z_p - lambda_p / rho)`, summed in agent order.
pub fn server_global_update(z: &[ParamMatrix], lambda: &[ParamMatrix], rho: f64) -> Result<ParamMatrix> {
    if z.is_empty() || z.len() != lambda.len() {
        return Err(Error::usage(format!(
            "server update needs matching non-empty agent lists, got {} and {}",
            z.len(),
            lambda.len()
        )));
    }
    if !(rho > 0.0) {
        return Err(Error::usage(format!("rho must be > 0, got {rho}")));
    }
    let shape = z[0].shape();
    let mut acc = ParamMatrix::zeros(shape.0, shape.1);
    for (zp, lp) in z.iter().zip(lambda) {
        zp.ensure_shape("server_global_update", shape)?;
        lp.ensure_shape("server_global_update", shape)?;
        for ((a, &zv), &lv) in acc.as_mut_slice().iter_mut().zip(zp.as_slice()).zip(lp.as_slice()) {
            *a += zv - lv / rho;
        }
    }
    let p = z.len() as f64;
    acc.as_mut_slice().iter_mut().for_each(|v| *v /= p);
    Ok(acc)
}

/// Inputs of the perturbed local subproblem
///
/// ```text
/// min_{z in W} <grad, z> + ||z - z_prev||^2 / (2 eta)
///              + (rho/2) ||w - z + (lambda - xi) / rho||^2
/// ```
#[derive(Debug, Clone, Copy)]
pub struct Subproblem<'a> {
    pub z_prev: &'a ParamMatrix,
    pub grad: &'a ParamMatrix,
    pub w: &'a ParamMatrix,
    pub lambda: &'a ParamMatrix,
    pub xi: &'a ParamMatrix,
    pub rho: f64,
    pub eta: f64,
}

impl Subproblem<'_> {
    pub fn check(&self) -> Result<()> {
        if !(self.rho > 0.0) || !(self.eta > 0.0) {
            return Err(Error::usage(format!(
                "subproblem needs rho > 0 and eta > 0, got {} and {}",
                self.rho, self.eta
            )));
        }
        let shape = self.z_prev.shape();
        for m in [self.grad, self.w, self.lambda, self.xi] {
            m.ensure_shape("local subproblem", shape)?;
        }
        Ok(())
    }

    /// Objective value at `z`.
    pub fn objective(&self, z: &ParamMatrix) -> f64 {
        let inv_eta = 1.0 / self.eta;
        let mut total = 0.0;
        for i in 0..z.len() {
            let zi = z.as_slice()[i];
            let d = zi - self.z_prev.as_slice()[i];
            let c = self.w.as_slice()[i] - zi + (self.lambda.as_slice()[i] - self.xi.as_slice()[i]) / self.rho;
            total += self.grad.as_slice()[i] * zi + 0.5 * inv_eta * d * d + 0.5 * self.rho * c * c;
        }
        total
    }

    /// Objective gradient at `z`.
    pub fn gradient(&self, z: &ParamMatrix) -> ParamMatrix {
        let inv_eta = 1.0 / self.eta;
        ParamMatrix::from_fn(z.rows(), z.cols(), |j, k| {
            let zi = z[(j, k)];
            self.grad[(j, k)] + (zi - self.z_prev[(j, k)]) * inv_eta
                - self.rho * (self.w[(j, k)] - zi + (self.lambda[(j, k)] - self.xi[(j, k)]) / self.rho)
        })
    }

    /// Curvature of the (separable) objective, `1/eta + rho`.
    pub fn curvature(&self) -> f64 {
        1.0 / self.eta + self.rho
    }

    /// Unconstrained minimizer
    /// `(z_prev/eta + rho w + lambda - xi - grad) / (1/eta + rho)`.
    pub fn unconstrained_minimizer(&self) -> ParamMatrix {
        let inv_eta = 1.0 / self.eta;
        let denom = inv_eta + self.rho;
        let mut out = ParamMatrix::zeros(self.z_prev.rows(), self.z_prev.cols());
        let it = out
            .as_mut_slice()
            .iter_mut()
            .zip(self.z_prev.as_slice())
            .zip(self.w.as_slice())
            .zip(self.lambda.as_slice())
            .zip(self.xi.as_slice())
            .zip(self.grad.as_slice());
        for (((((o, &zp), &wv), &lv), &xv), &gv) in it {
            *o = (zp * inv_eta + self.rho * wv + lv - xv - gv) / denom;
        }
        out
    }

    /// Exact minimizer over the box: the unconstrained solution clamped
    /// entry-wise (the objective is separable with equal curvature).
    pub fn solve(&self, feasible: &BoxConstraint) -> ParamMatrix {
        let mut z = self.unconstrained_minimizer();
        feasible.project(&mut z);
        z
    }

    /// Distance of `-gradient(z)` from the normal cone of the box at `z`:
    /// the gradient itself on free coordinates, its wrong-signed part on
    /// coordinates sitting at a bound.
    pub fn stationarity_residual(&self, z: &ParamMatrix, feasible: &BoxConstraint) -> f64 {
        let g = self.gradient(z);
        let b = feasible.bound;
        g.as_slice()
            .iter()
            .zip(z.as_slice())
            .map(|(&gi, &zi)| {
                if feasible.is_bounded() && zi >= b {
                    // normal cone at the upper face is [0, inf): need -g >= 0
                    gi.max(0.0)
                } else if feasible.is_bounded() && zi <= -b {
                    (-gi).max(0.0)
                } else {
                    gi.abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// One perturbed local update; with `xi = 0` this is the plain inexact step.
#[allow(clippy::too_many_arguments)]
pub fn local_subproblem_step(
    z_prev: &ParamMatrix,
    grad: &ParamMatrix,
    w: &ParamMatrix,
    lambda: &ParamMatrix,
    xi: &ParamMatrix,
    rho: f64,
    eta: f64,
    feasible: &BoxConstraint,
) -> Result<ParamMatrix> {
    let sub = Subproblem {
        z_prev,
        grad,
        w,
        lambda,
        xi,
        rho,
        eta,
    };
    sub.check()?;
    Ok(sub.solve(feasible))
}
