//! The objects behind the privacy argument: the log-penalized version of the
//! local subproblem and the map from a solution back to the noise that
//! produced it.

use crate::error::{Error, Result};
use crate::matrix::ParamMatrix;
use crate::optimizer::{BoxConstraint, Subproblem};

/// Gradient-norm tolerance of [`penalized_subproblem_solve`].
pub const PENALTY_TOLERANCE: f64 = 1e-10;
const PENALTY_MAX_ITER: usize = 200;

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic function without overflow.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `g_ell(z) = sum_m ln(1 + exp(ell h_m(z)))` for the box constraints
/// `z - B <= 0` and `-z - B <= 0`.
pub fn box_penalty(z: &ParamMatrix, feasible: &BoxConstraint, ell: f64) -> f64 {
    let b = feasible.bound;
    z.as_slice()
        .iter()
        .map(|&v| softplus(ell * (v - b)) + softplus(ell * (-v - b)))
        .sum()
}

/// Per-coordinate derivative and curvature of `G + g_ell`, where `G` is
/// `(c/2)(v - u)^2` plus a constant.
fn coordinate_terms(v: f64, u: f64, c: f64, b: f64, ell: f64) -> (f64, f64) {
    let s_hi = sigmoid(ell * (v - b));
    let s_lo = sigmoid(ell * (-v - b));
    let d = c * (v - u) + ell * s_hi - ell * s_lo;
    let h = c + ell * ell * (s_hi * (1.0 - s_hi) + s_lo * (1.0 - s_lo));
    (d, h)
}

/// Minimizer of the local objective plus the box penalty `g_ell`.
///
/// The objective separates into identical-curvature scalar problems, each
/// solved by Newton's method safeguarded with a shrinking bracket. The root
/// lies within `ell / c` of the unconstrained minimizer `u` because the
/// penalty slope is bounded by `ell`.
pub fn penalized_subproblem_solve(sub: &Subproblem<'_>, feasible: &BoxConstraint, ell: f64) -> Result<ParamMatrix> {
    sub.check()?;
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::usage(format!(
            "penalty parameter must be finite and > 0, got {ell}"
        )));
    }
    if !feasible.is_bounded() {
        return Err(Error::usage("penalized subproblem needs a finite box"));
    }
    let c = sub.curvature();
    let b = feasible.bound;
    let u = sub.unconstrained_minimizer();
    let per_coord_tol = PENALTY_TOLERANCE / (u.len().max(1) as f64).sqrt();
    let mut out = u.clone();
    let mut worst: f64 = 0.0;
    for (o, &ui) in out.as_mut_slice().iter_mut().zip(u.as_slice()) {
        let reach = ell / c;
        let (mut lo, mut hi) = (ui - reach, ui + reach);
        let mut v = ui.clamp(-b, b);
        let mut converged = false;
        let mut resid = f64::INFINITY;
        for _ in 0..PENALTY_MAX_ITER {
            let (d, h) = coordinate_terms(v, ui, c, b, ell);
            resid = d.abs();
            if resid <= per_coord_tol {
                converged = true;
                break;
            }
            if d > 0.0 {
                hi = hi.min(v);
            } else {
                lo = lo.max(v);
            }
            let newton = v - d / h;
            v = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * v.abs().max(1.0) {
                // bracket collapsed to adjacent floats; accept the better end
                let (dl, _) = coordinate_terms(lo, ui, c, b, ell);
                let (dh, _) = coordinate_terms(hi, ui, c, b, ell);
                let (best, r) = if dl.abs() <= dh.abs() {
                    (lo, dl.abs())
                } else {
                    (hi, dh.abs())
                };
                v = best;
                resid = r;
                converged = r <= per_coord_tol;
                break;
            }
        }
        if !converged {
            return Err(Error::NotConverged {
                iterations: PENALTY_MAX_ITER,
                residual: resid,
            });
        }
        worst = worst.max(resid);
        *o = v;
    }
    log::debug!("penalized solve at ell={ell}: worst coordinate residual {worst:e}");
    Ok(out)
}

/// Noise recovered from a local solution.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredNoise {
    /// Recovered noise; entries at excluded coordinates are NaN.
    pub xi: ParamMatrix,
    /// Coordinates sitting on the box boundary, where the normal-cone term
    /// is unknown.
    pub excluded: Vec<(usize, usize)>,
}

impl RecoveredNoise {
    /// Largest `|recovered - injected|` over the included coordinates.
    pub fn max_error(&self, injected: &ParamMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.xi.rows() {
            for k in 0..self.xi.cols() {
                if !self.excluded.contains(&(j, k)) {
                    worst = worst.max((self.xi[(j, k)] - injected[(j, k)]).abs());
                }
            }
        }
        worst
    }
}

/// Inverts the closed-form step: the noise for which `z` solves the local
/// subproblem, `-grad + rho (w - z) + lambda - (z - z_prev) / eta`.
#[allow(clippy::too_many_arguments)]
pub fn noise_recovery(
    z: &ParamMatrix,
    z_prev: &ParamMatrix,
    grad: &ParamMatrix,
    w: &ParamMatrix,
    lambda: &ParamMatrix,
    rho: f64,
    eta: f64,
    feasible: &BoxConstraint,
) -> Result<RecoveredNoise> {
    let shape = z.shape();
    for m in [z_prev, grad, w, lambda] {
        m.ensure_shape("noise recovery", shape)?;
    }
    if !(rho > 0.0) || !(eta > 0.0) {
        return Err(Error::usage("noise recovery needs rho > 0 and eta > 0"));
    }
    let inv_eta = 1.0 / eta;
    let mut excluded = Vec::new();
    let xi = ParamMatrix::from_fn(shape.0, shape.1, |j, k| {
        let zi = z[(j, k)];
        if feasible.is_bounded() && zi.abs() >= feasible.bound {
            excluded.push((j, k));
            return f64::NAN;
        }
        -grad[(j, k)] + rho * (w[(j, k)] - zi) + lambda[(j, k)] - (zi - z_prev[(j, k)]) * inv_eta
    });
    if !excluded.is_empty() {
        log::warn!(
            "noise recovery: {} coordinate(s) on the box boundary excluded",
            excluded.len()
        );
    }
    Ok(RecoveredNoise { xi, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> ParamMatrix {
        ParamMatrix::filled(1, 1, v)
    }

    #[test]
    fn zero_noise_round_trip() {
        let z_prev = scalar(0.2);
        let grad = scalar(0.1);
        let w = scalar(-0.3);
        let lam = scalar(0.05);
        let zero = scalar(0.0);
        let sub = Subproblem {
            z_prev: &z_prev,
            grad: &grad,
            w: &w,
            lambda: &lam,
            xi: &zero,
            rho: 2.0,
            eta: 0.5,
        };
        let b = BoxConstraint::new(10.0).unwrap();
        let z = sub.solve(&b);
        let rec = noise_recovery(&z, &z_prev, &grad, &w, &lam, 2.0, 0.5, &b).unwrap();
        assert!(rec.excluded.is_empty());
        assert!(rec.xi[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn clamped_coordinate_is_excluded() {
        let z = ParamMatrix::from_vec(1, 2, vec![1.0, 0.3]).unwrap();
        let zero = ParamMatrix::zeros(1, 2);
        let rec = noise_recovery(
            &z,
            &zero,
            &zero,
            &zero,
            &zero,
            1.0,
            1.0,
            &BoxConstraint::new(1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(rec.excluded, vec![(0, 0)]);
        assert!(rec.xi[(0, 0)].is_nan());
        assert!((rec.xi[(0, 1)] + 0.6).abs() < 1e-15);
    }

    #[test]
    fn interior_minimizer_is_kept_for_large_ell() {
        // G = (c/2)(z - u)^2 with c = 3, u = 0.25 well inside [-1, 1]
        let z_prev = scalar(0.25);
        let zero = scalar(0.0);
        let sub = Subproblem {
            z_prev: &z_prev,
            grad: &zero,
            w: &z_prev,
            lambda: &zero,
            xi: &zero,
            rho: 2.0,
            eta: 1.0,
        };
        let z = penalized_subproblem_solve(&sub, &BoxConstraint::new(1.0).unwrap(), 1e4).unwrap();
        assert!((z[(0, 0)] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn solution_satisfies_tolerance() {
        let z_prev = scalar(0.0);
        let zero = scalar(0.0);
        let w = scalar(40.0);
        let sub = Subproblem {
            z_prev: &z_prev,
            grad: &zero,
            w: &w,
            lambda: &zero,
            xi: &zero,
            rho: 1.0,
            eta: 1.0,
        };
        let b = BoxConstraint::new(1.0).unwrap();
        for ell in [0.01, 1.0, 10.0, 100.0, 1000.0] {
            let z = penalized_subproblem_solve(&sub, &b, ell).unwrap();
            let u = sub.unconstrained_minimizer()[(0, 0)];
            let (d, _) = coordinate_terms(z[(0, 0)], u, sub.curvature(), 1.0, ell);
            assert!(d.abs() <= PENALTY_TOLERANCE, "ell={ell}: {d}");
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(-1000.0), 0.0);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-16);
    }
}
