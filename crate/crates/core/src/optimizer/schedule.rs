use crate::error::{Error, Result};

/// Penalty schedule `rho^t = min(cap, c1 * 1.2^floor(t / Tc) + c2 / eps_bar)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoSchedule {
    pub c1: f64,
    pub c2: f64,
    pub tc: usize,
    pub cap: f64,
}

impl RhoSchedule {
    pub const DEFAULT_CAP: f64 = 1e9;

    /// Constants used for MNIST.
    pub fn mnist() -> Self {
        Self::new(2.0, 5.0, 10_000)
    }

    /// Constants used for FEMNIST.
    pub fn femnist() -> Self {
        Self::new(0.005, 0.05, 2_000)
    }

    pub fn new(c1: f64, c2: f64, tc: usize) -> Self {
        Self {
            c1,
            c2,
            tc,
            cap: Self::DEFAULT_CAP,
        }
    }

    /// A schedule that stays at `rho` for any horizon shorter than `usize::MAX`.
    pub fn constant(rho: f64) -> Self {
        Self::new(rho, 0.0, usize::MAX)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) || self.tc == 0 || !(self.cap > 0.0) {
            return Err(Error::usage(format!("invalid rho schedule {self:?}")));
        }
        if self.c1 == 0.0 && self.c2 == 0.0 {
            return Err(Error::usage("rho schedule is identically zero"));
        }
        Ok(())
    }

    pub fn value(&self, t: usize, eps_bar: f64) -> f64 {
        rho_schedule_capped(t, eps_bar, self.c1, self.c2, self.tc, self.cap)
    }
}

/// `rho^t` with the default cap of `1e9`.
pub fn rho_schedule(t: usize, eps_bar: f64, c1: f64, c2: f64, tc: usize) -> f64 {
    rho_schedule_capped(t, eps_bar, c1, c2, tc, RhoSchedule::DEFAULT_CAP)
}

fn rho_schedule_capped(t: usize, eps_bar: f64, c1: f64, c2: f64, tc: usize, cap: f64) -> f64 {
    let growth = 1.2f64.powi(i32::try_from(t / tc).unwrap_or(i32::MAX));
    let privacy = if eps_bar.is_infinite() { 0.0 } else { c2 / eps_bar };
    (c1 * growth + privacy).min(cap)
}

/// Proximity rule for `eta^t`, one per convergence regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaRule {
    /// `1 / (L + sqrt(t) / eps_bar)` for `L`-smooth losses.
    Smooth { lipschitz: f64 },
    /// `1 / sqrt(t)`.
    Nonsmooth,
    /// `2 / (alpha (t + 2))` for `alpha`-strongly convex losses.
    Strong { alpha: f64 },
}

impl EtaRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EtaRule::Smooth { lipschitz } if !(lipschitz >= 0.0) => Err(Error::usage(format!(
                "smoothness constant must be >= 0, got {lipschitz}"
            ))),
            EtaRule::Strong { alpha } if !(alpha > 0.0) => Err(Error::usage(format!(
                "strong convexity modulus must be > 0, got {alpha}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EtaRule::Smooth { .. } => "smooth",
            EtaRule::Nonsmooth => "nonsmooth",
            EtaRule::Strong { .. } => "strong",
        }
    }
}

/// `eta^t`. May be infinite for the smooth rule with `L = 0` and no privacy.
pub fn eta_schedule(t: usize, rule: EtaRule, eps_bar: f64) -> f64 {
    let t = t as f64;
    match rule {
        EtaRule::Smooth { lipschitz } => 1.0 / (lipschitz + t.sqrt() / eps_bar),
        EtaRule::Nonsmooth => 1.0 / t.sqrt(),
        EtaRule::Strong { alpha } => 2.0 / (alpha * (t + 2.0)),
    }
}

/// Per-run hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedules {
    pub rho: RhoSchedule,
    pub eta: EtaRule,
    /// `eps_bar`; `f64::INFINITY` disables noise.
    pub eps_bar: f64,
    /// `E`.
    pub local_updates: usize,
    /// `T`.
    pub rounds: usize,
}

impl Schedules {
    pub fn validate(&self) -> Result<()> {
        self.rho.validate()?;
        self.eta.validate()?;
        if !(self.eps_bar > 0.0) {
            return Err(Error::usage(format!("eps_bar must be > 0, got {}", self.eps_bar)));
        }
        if self.local_updates == 0 {
            return Err(Error::usage("need at least one local update"));
        }
        Ok(())
    }

    pub fn rho_at(&self, t: usize) -> f64 {
        self.rho.value(t, self.eps_bar)
    }

    pub fn eta_at(&self, t: usize) -> f64 {
        eta_schedule(t, self.eta, self.eps_bar)
    }
}
