//! Small federated problems with a closed-form optimum, one per convergence
//! regime.
//!
//! Agent `p` holds points `a_{pi}` and has
//!
//! ```text
//! f_p(z) = (1/I) sum_i 0.5 ||z - a_{pi}||^2 + (mu/P) ||z||_1 + (beta/P) ||z||^2
//! ```
//!
//! so `F(z) = sum_p f_p(z)` is minimized by `soft(a_bar, mu) / (1 + 2 beta)`,
//! with `a_bar` the mean of all points.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::ParamMatrix;
use crate::mechanisms::RngStream;
use crate::model::LocalLoss;
use crate::optimizer::BoxConstraint;

use super::bounds::{BoundConstants, Regime};

#[derive(Debug, Clone)]
pub struct ToyAgent {
    points: Vec<ParamMatrix>,
    inv_total: f64,
    l1: f64,
    ridge: f64,
}

/// Subgradient of `|v|`, taking 0 at the kink.
fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl ToyAgent {
    pub fn points(&self) -> &[ParamMatrix] {
        &self.points
    }
}

impl LocalLoss for ToyAgent {
    fn dims(&self) -> (usize, usize) {
        self.points[0].shape()
    }

    fn objective(&self, z: &ParamMatrix) -> f64 {
        let fit: f64 = self.points.iter().map(|a| 0.5 * z.dist(a).powi(2)).sum();
        fit * self.inv_total + self.l1 * z.norm_l1() + self.ridge * z.norm_sq()
    }

    fn gradient(&self, z: &ParamMatrix) -> ParamMatrix {
        let mut g = ParamMatrix::zeros(z.rows(), z.cols());
        for a in &self.points {
            g.add_assign(&z.sub(a));
        }
        g.scale(self.inv_total);
        let (l1, ridge) = (self.l1, self.ridge);
        for (gi, &zi) in g.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *gi += l1 * sign0(zi) + 2.0 * ridge * zi;
        }
        g
    }

    /// The sensitivity is the largest single-point contribution
    /// `(1/I) ||z - a_i||_1`.
    fn gradient_with_sensitivity(&self, z: &ParamMatrix) -> (ParamMatrix, f64) {
        let sens = self
            .points
            .iter()
            .map(|a| self.inv_total * z.sub(a).norm_l1())
            .fold(0.0, f64::max);
        (self.gradient(z), sens)
    }
}

/// Regularization variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToyKind {
    /// Plain least squares.
    Smooth,
    /// Least squares plus `mu ||z||_1`.
    Nonsmooth { mu: f64 },
    /// Least squares plus `beta ||z||^2`.
    Strong { beta: f64 },
}

#[derive(Debug, Clone)]
pub struct ToyProblem {
    pub kind: ToyKind,
    pub agents: Vec<ToyAgent>,
    pub feasible: BoxConstraint,
}

impl ToyProblem {
    /// `agents` agents with `per_agent` points each, entries uniform in
    /// `[-spread, spread]`.
    pub fn random(
        kind: ToyKind,
        agents: usize,
        per_agent: usize,
        shape: (usize, usize),
        spread: f64,
        feasible: BoxConstraint,
        seed: u64,
    ) -> Result<Self> {
        if agents == 0 || per_agent == 0 || shape.0 * shape.1 == 0 {
            return Err(Error::usage("toy problem needs agents, points and parameters"));
        }
        let mut rng = RngStream::new(seed, 0, 0, 0).rng();
        let groups = (0..agents)
            .map(|_| {
                (0..per_agent)
                    .map(|_| ParamMatrix::from_fn(shape.0, shape.1, |_, _| rng.random_range(-spread..=spread)))
                    .collect()
            })
            .collect();
        Self::from_points(kind, groups, feasible)
    }

    pub fn from_points(kind: ToyKind, groups: Vec<Vec<ParamMatrix>>, feasible: BoxConstraint) -> Result<Self> {
        let total: usize = groups.iter().map(Vec::len).sum();
        let p = groups.len();
        let shape = groups
            .first()
            .and_then(|g| g.first())
            .map(ParamMatrix::shape)
            .ok_or_else(|| Error::usage("toy problem needs at least one point"))?;
        if groups.iter().any(Vec::is_empty) {
            return Err(Error::usage("every toy agent needs at least one point"));
        }
        for a in groups.iter().flatten() {
            a.ensure_shape("toy problem", shape)?;
        }
        let (mu, beta) = match kind {
            ToyKind::Smooth => (0.0, 0.0),
            ToyKind::Nonsmooth { mu } => (mu, 0.0),
            ToyKind::Strong { beta } => (0.0, beta),
        };
        if !(mu >= 0.0 && beta >= 0.0) {
            return Err(Error::usage("toy regularization weights must be >= 0"));
        }
        let agents = groups
            .into_iter()
            .map(|points| ToyAgent {
                points,
                inv_total: 1.0 / total as f64,
                l1: mu / p as f64,
                ridge: beta / p as f64,
            })
            .collect();
        Ok(Self { kind, agents, feasible })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.agents[0].dims()
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    fn total_points(&self) -> usize {
        self.agents.iter().map(|a| a.points.len()).sum()
    }

    fn mean_point(&self) -> ParamMatrix {
        let all: Vec<&ParamMatrix> = self.agents.iter().flat_map(|a| &a.points).collect();
        ParamMatrix::mean_of(all).expect("toy problems hold at least one point")
    }

    /// The regime this problem belongs to, with its modulus.
    ///
    /// Agents hold `I_p / I` of the data, so each `f_p` is
    /// `(I_p / I + 2 beta / P)`-smooth and, for the strong variant, strongly
    /// convex with the same modulus; the smallest over agents is reported.
    pub fn regime(&self) -> Regime {
        let total = self.total_points() as f64;
        let min_share = self.agents.iter().map(|a| a.points.len()).min().unwrap_or(0) as f64 / total;
        let max_share = self.agents.iter().map(|a| a.points.len()).max().unwrap_or(0) as f64 / total;
        let ridge = self.agents[0].ridge;
        match self.kind {
            ToyKind::Smooth => Regime::Smooth {
                lipschitz: max_share + 2.0 * ridge,
            },
            ToyKind::Nonsmooth { .. } => Regime::Nonsmooth,
            ToyKind::Strong { .. } => Regime::Strong {
                alpha: min_share + 2.0 * ridge,
            },
        }
    }

    /// The minimizer of `F` over the consensus set; an error when it falls
    /// outside the box.
    pub fn optimum(&self) -> Result<ParamMatrix> {
        let (mu, beta) = match self.kind {
            ToyKind::Smooth => (0.0, 0.0),
            ToyKind::Nonsmooth { mu } => (mu, 0.0),
            ToyKind::Strong { beta } => (0.0, beta),
        };
        let z = self
            .mean_point()
            .map(|v| sign0(v) * (v.abs() - mu).max(0.0) / (1.0 + 2.0 * beta));
        if !self.feasible.contains(&z) {
            return Err(Error::Unavailable(
                "toy optimum lies outside the box, so no closed-form solution is available".into(),
            ));
        }
        Ok(z)
    }

    /// `F(z) = sum_p f_p(z_p)`.
    pub fn stacked_objective(&self, z: &[ParamMatrix]) -> f64 {
        self.agents.iter().zip(z).map(|(a, zp)| a.objective(zp)).sum()
    }

    /// Exact `U1`, `U2`, `U3` over the box. Per coordinate the gradient is
    /// `c_p u - s_p + l1 sign(u)` with `c_p = I_p/I + 2 beta/P`, `s_p` the
    /// scaled point sum, maximal in magnitude at the vertex opposite to `s_p`.
    pub fn bound_constants(&self) -> Result<BoundConstants> {
        if !self.feasible.is_bounded() {
            return Err(Error::usage("bound constants need a finite box"));
        }
        let b = self.feasible.bound;
        let shape = self.shape();
        let mut u1: f64 = 0.0;
        let mut u3: f64 = 0.0;
        for a in &self.agents {
            let c = a.points.len() as f64 * a.inv_total + 2.0 * a.ridge;
            let mut s = ParamMatrix::zeros(shape.0, shape.1);
            for pt in &a.points {
                s.add_assign(pt);
            }
            s.scale(a.inv_total);
            let norm_sq: f64 = s.as_slice().iter().map(|v| (c * b + v.abs() + a.l1).powi(2)).sum();
            u1 = u1.max(norm_sq.sqrt());
            for pt in &a.points {
                let l1: f64 = pt.as_slice().iter().map(|v| b + v.abs()).sum();
                u3 = u3.max(a.inv_total * l1);
            }
        }
        let n = (shape.0 * shape.1) as f64;
        Ok(BoundConstants {
            u1,
            u2: self.feasible.diameter(shape),
            u3,
            u3_sampled: u3,
            u3_upper: 2.0 * u1 * n.sqrt(),
            lipschitz_h: u1,
            constraint_count: 2 * shape.0 * shape.1,
            gamma: 0.0,
            rho1: 0.0,
            rho_max: 0.0,
            lambda1_norm: 0.0,
            estimated: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<ParamMatrix> {
        v.iter().map(|&x| ParamMatrix::filled(1, 1, x)).collect()
    }

    #[test]
    fn optimum_is_stationary() {
        for kind in [
            ToyKind::Smooth,
            ToyKind::Nonsmooth { mu: 0.3 },
            ToyKind::Strong { beta: 0.5 },
        ] {
            let prob = ToyProblem::from_points(
                kind,
                vec![pts(&[1.0, 2.0]), pts(&[0.5])],
                BoxConstraint::new(5.0).unwrap(),
            )
            .unwrap();
            let z = prob.optimum().unwrap();
            let g: f64 = prob.agents.iter().map(|a| a.gradient(&z)[(0, 0)]).sum();
            assert!(g.abs() < 1e-12, "{kind:?}: {g}");
        }
    }

    #[test]
    fn soft_threshold_kills_small_means() {
        let prob = ToyProblem::from_points(
            ToyKind::Nonsmooth { mu: 1.0 },
            vec![pts(&[0.5]), pts(&[-0.1])],
            BoxConstraint::new(5.0).unwrap(),
        )
        .unwrap();
        assert_eq!(prob.optimum().unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn optimum_outside_box_is_unavailable() {
        let prob =
            ToyProblem::from_points(ToyKind::Smooth, vec![pts(&[9.0])], BoxConstraint::new(1.0).unwrap()).unwrap();
        assert!(matches!(prob.optimum(), Err(Error::Unavailable(_))));
    }

    #[test]
    fn exact_constants_dominate_samples() {
        let prob = ToyProblem::random(
            ToyKind::Strong { beta: 0.2 },
            3,
            4,
            (2, 2),
            1.0,
            BoxConstraint::new(2.0).unwrap(),
            11,
        )
        .unwrap();
        let exact = prob.bound_constants().unwrap();
        let sampled = super::super::bounds::estimate_bound_constants(&prob.agents, &prob.feasible, 200, 3).unwrap();
        assert!(sampled.u1 <= exact.u1 * (1.0 + 1e-12));
        assert!(sampled.u3_sampled <= exact.u3 * (1.0 + 1e-12));
        // vertices are enumerated for JK = 4, so both maxima are attained
        assert!((sampled.u1 - exact.u1).abs() < 1e-12);
        assert!((sampled.u3_sampled - exact.u3).abs() < 1e-12);
    }
}
