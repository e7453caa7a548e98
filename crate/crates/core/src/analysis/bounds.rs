//! Bound constants and the right-hand sides of the three convergence
//! inequalities.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::ParamMatrix;
use crate::mechanisms::RngStream;
use crate::model::LocalLoss;
use crate::optimizer::{BoxConstraint, EtaRule, Schedules};

/// Which convergence inequality applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// `L`-smooth convex losses.
    Smooth {
        lipschitz: f64,
    },
    Nonsmooth,
    /// `alpha`-strongly convex losses.
    Strong {
        alpha: f64,
    },
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Smooth { .. } => "smooth",
            Regime::Nonsmooth => "nonsmooth",
            Regime::Strong { .. } => "strong",
        }
    }

    /// The proximity schedule the inequality is stated for.
    pub fn eta_rule(&self) -> EtaRule {
        match *self {
            Regime::Smooth { lipschitz } => EtaRule::Smooth { lipschitz },
            Regime::Nonsmooth => EtaRule::Nonsmooth,
            Regime::Strong { alpha } => EtaRule::Strong { alpha },
        }
    }
}

/// Constants entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// Largest (sub)gradient norm over the feasible set.
    pub u1: f64,
    /// Diameter of the feasible set.
    pub u2: f64,
    /// Largest l1 change of a local gradient from one sample; the value used
    /// in the bound.
    pub u3: f64,
    /// Sampled lower estimate of `u3`.
    pub u3_sampled: f64,
    /// `2 H sqrt(JK)`, the Lipschitz-based upper end of the `u3` bracket.
    pub u3_upper: f64,
    /// Lipschitz modulus `H` of the local losses (estimate unless exact).
    pub lipschitz_h: f64,
    /// Number of inequalities describing the box, `2 J K`.
    pub constraint_count: usize,
    pub gamma: f64,
    pub rho1: f64,
    pub rho_max: f64,
    pub lambda1_norm: f64,
    /// True when `u1`/`u3_sampled` come from sampling rather than a closed form.
    pub estimated: bool,
}

impl BoundConstants {
    /// Fills `rho1` and `rho_max` from the schedule over `1..=T`.
    pub fn with_schedule(mut self, s: &Schedules) -> Self {
        self.rho1 = s.rho_at(1);
        self.rho_max = (1..=s.rounds.max(1)).map(|t| s.rho_at(t)).fold(self.rho1, f64::max);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.u1,
            self.u2,
            self.u3,
            self.gamma,
            self.rho1,
            self.rho_max,
            self.lambda1_norm,
        ];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::usage(format!(
                "bound constants must be finite and >= 0: {self:?}"
            )));
        }
        if !(self.rho1 > 0.0) {
            return Err(Error::usage("bound constants need rho1 > 0"));
        }
        Ok(())
    }
}

/// Vertices are enumerated in addition to random points up to this many
/// parameters.
const VERTEX_LIMIT: usize = 10;

/// Estimates `U1`, `U2`, `U3` for a set of agent losses over a box.
///
/// `U2` is exact. `U1` and the sampled `U3` are maxima over the box vertices
/// (for at most ten parameters) and `trials` uniform points, so they are
/// lower estimates. `u3` is set to the upper end of the bracket
/// `[sampled, 2 H sqrt(JK)]`, with `H` the sampled `U1`.
pub fn estimate_bound_constants<L: LocalLoss>(
    losses: &[L],
    feasible: &BoxConstraint,
    trials: usize,
    seed: u64,
) -> Result<BoundConstants> {
    if !feasible.is_bounded() {
        return Err(Error::usage("bound constants need a finite box"));
    }
    let shape = losses
        .first()
        .map(|l| l.dims())
        .ok_or_else(|| Error::usage("bound constants need at least one agent"))?;
    let n = shape.0 * shape.1;
    let b = feasible.bound;

    let mut points = Vec::new();
    if n <= VERTEX_LIMIT {
        for mask in 0u32..(1 << n) {
            let data = (0..n).map(|i| if mask >> i & 1 == 1 { b } else { -b }).collect();
            points.push(ParamMatrix::from_vec(shape.0, shape.1, data)?);
        }
    }
    let mut rng = RngStream::new(seed, 0, 0, 0).rng();
    for _ in 0..trials {
        points.push(ParamMatrix::from_fn(shape.0, shape.1, |_, _| rng.random_range(-b..=b)));
    }
    points.push(ParamMatrix::zeros(shape.0, shape.1));

    let mut u1: f64 = 0.0;
    let mut u3: f64 = 0.0;
    for u in &points {
        for l in losses {
            let (g, s) = l.gradient_with_sensitivity(u);
            u1 = u1.max(g.norm());
            u3 = u3.max(s);
        }
    }
    let upper = 2.0 * u1 * (n as f64).sqrt();
    Ok(BoundConstants {
        u1,
        u2: feasible.diameter(shape),
        u3: upper.max(u3),
        u3_sampled: u3,
        u3_upper: upper,
        lipschitz_h: u1,
        constraint_count: 2 * n,
        gamma: 0.0,
        rho1: 0.0,
        rho_max: 0.0,
        lambda1_norm: 0.0,
        estimated: true,
    })
}

/// Problem sizes entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundDims {
    pub rounds: usize,
    pub local_updates: usize,
    pub agents: usize,
    pub rows: usize,
    pub cols: usize,
}

fn privacy_variance(c: &BoundConstants, d: &BoundDims, eps_bar: f64) -> f64 {
    // 2 J K U3^2 / eps^2, zero without privacy
    if eps_bar.is_infinite() {
        0.0
    } else {
        2.0 * (d.rows * d.cols) as f64 * c.u3 * c.u3 / (eps_bar * eps_bar)
    }
}

/// Right-hand side of the expected-gap inequality for `regime`.
pub fn theorem_rhs(regime: Regime, c: &BoundConstants, d: &BoundDims, eps_bar: f64) -> f64 {
    if d.rounds == 0 {
        return f64::INFINITY;
    }
    let t = d.rounds as f64;
    let e = d.local_updates as f64;
    let p = d.agents as f64;
    let jk = (d.rows * d.cols) as f64;
    let u2sq = c.u2 * c.u2;
    let dual = (c.gamma + c.lambda1_norm).powi(2) / c.rho1;
    match regime {
        Regime::Smooth { lipschitz } => {
            let rs = if eps_bar.is_infinite() {
                0.0
            } else {
                (2.0 * p * jk * c.u3 * c.u3 + u2sq / (2.0 * e)) / (eps_bar * t.sqrt())
            };
            rs + (u2sq * (c.rho_max + lipschitz / e) + dual) / (2.0 * t)
        }
        Regime::Nonsmooth => {
            let rns = (p * privacy_variance(c, d, eps_bar) + p * c.u1 * c.u1 + u2sq / (2.0 * e)) / t.sqrt();
            rns + (u2sq * c.rho_max + dual + 2.0 * c.gamma * c.u2) / (2.0 * t)
        }
        Regime::Strong { alpha } => {
            let bracket = 2.0 * c.u2 * c.gamma
                + u2sq * c.rho_max
                + 4.0 * c.gamma * c.gamma / c.rho1
                + alpha * u2sq / (2.0 * e)
                + 2.0 * p * (c.u1 * c.u1 + privacy_variance(c, d, eps_bar)) / alpha;
            bracket / (t + 1.0)
        }
    }
}

/// The closing display of each derivation. It coincides with
/// [`theorem_rhs`] for the smooth and strong regimes; for the nonsmooth
/// regime the privacy term there carries `1/eps_bar` instead of
/// `1/eps_bar^2`.
pub fn derivation_rhs(regime: Regime, c: &BoundConstants, d: &BoundDims, eps_bar: f64) -> f64 {
    match regime {
        Regime::Nonsmooth if d.rounds > 0 => {
            let t = d.rounds as f64;
            let e = d.local_updates as f64;
            let p = d.agents as f64;
            let jk = (d.rows * d.cols) as f64;
            let u2sq = c.u2 * c.u2;
            let privacy = if eps_bar.is_infinite() {
                0.0
            } else {
                2.0 * p * jk * c.u3 * c.u3 / eps_bar
            };
            let dual = (c.gamma + c.lambda1_norm).powi(2) / c.rho1;
            (u2sq * c.rho_max + dual + 2.0 * c.gamma * c.u2) / (2.0 * t)
                + (privacy + p * c.u1 * c.u1 + u2sq / (2.0 * e)) / t.sqrt()
        }
        _ => theorem_rhs(regime, c, d, eps_bar),
    }
}
