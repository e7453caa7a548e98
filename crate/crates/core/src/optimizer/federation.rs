//! The federated round machine: server averaging, `E` perturbed local updates
//! per agent, and the mirrored dual updates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::ParamMatrix;
use crate::mechanisms::{sample_gaussian_output_noise, sample_laplace_matrix, GaussianSpec, LaplaceSpec, RngStream};
use crate::model::LocalLoss;

use super::schedule::Schedules;
use super::step::{server_global_update, BoxConstraint, Subproblem};

/// Gaussian output-perturbation settings. `sigma0 = None` calibrates the base
/// deviation from the largest agent sensitivity at the zero initial point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputNoise {
    pub sigma0: Option<f64>,
    pub decay: f64,
    pub delta_bar: f64,
    pub l2_scale: f64,
}

impl Default for OutputNoise {
    fn default() -> Self {
        Self {
            sigma0: None,
            decay: 0.5,
            delta_bar: 1e-6,
            l2_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mechanism {
    NonPrivate,
    /// Laplace noise injected into every local subproblem.
    ObjectivePerturbation,
    /// Plain local steps, Gaussian noise added to the transmitted iterate.
    OutputPerturbation(OutputNoise),
}

impl Mechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::NonPrivate => "nonprivate",
            Mechanism::ObjectivePerturbation => "objective",
            Mechanism::OutputPerturbation(_) => "output",
        }
    }
}

/// What one agent keeps between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// `z_p^t`, the iterate last sent to the server.
    pub z: ParamMatrix,
    /// Agent-held `lambda_p^t`.
    pub lambda: ParamMatrix,
    /// `z_p^{t-1,E+1}`, where the next inner chain starts.
    pub chain: ParamMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationState {
    /// Number of completed rounds.
    pub round: usize,
    pub w: ParamMatrix,
    /// Server-held copies of every `lambda_p`.
    pub server_lambda: Vec<ParamMatrix>,
    pub agents: Vec<AgentState>,
}

impl FederationState {
    /// All-zero start.
    pub fn zeros(num_agents: usize, shape: (usize, usize)) -> Self {
        let zero = ParamMatrix::zeros(shape.0, shape.1);
        Self {
            round: 0,
            w: zero.clone(),
            server_lambda: vec![zero.clone(); num_agents],
            agents: (0..num_agents)
                .map(|_| AgentState {
                    z: zero.clone(),
                    lambda: zero.clone(),
                    chain: zero.clone(),
                })
                .collect(),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w.shape()
    }

    /// `sqrt(sum_p ||w - z_p||^2)`.
    pub fn consensus_residual(&self) -> f64 {
        consensus_residual(&self.w, self.agents.iter().map(|a| &a.z))
    }

    pub fn max_lambda_norm(&self) -> f64 {
        self.server_lambda.iter().map(ParamMatrix::norm).fold(0.0, f64::max)
    }

    /// Norm of the stacked duals `(lambda_1, ..., lambda_P)`.
    pub fn stacked_lambda_norm(&self) -> f64 {
        self.server_lambda.iter().map(ParamMatrix::norm_sq).sum::<f64>().sqrt()
    }
}

/// `||A w - z||` for the stacked consensus constraint.
pub fn consensus_residual<'a>(w: &ParamMatrix, z: impl IntoIterator<Item = &'a ParamMatrix>) -> f64 {
    z.into_iter().map(|zp| w.dist(zp).powi(2)).sum::<f64>().sqrt()
}

/// `lambda + rho (w - z)`. Server and agents both call this, so the two copies
/// agree bit for bit.
pub fn dual_update(lambda: &ParamMatrix, rho: f64, w: &ParamMatrix, z: &ParamMatrix) -> ParamMatrix {
    let mut out = lambda.clone();
    for ((o, &wv), &zv) in out.as_mut_slice().iter_mut().zip(w.as_slice()).zip(z.as_slice()) {
        *o += rho * (wv - zv);
    }
    out
}

/// Per-round inputs shared by every agent.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub t: usize,
    pub rho: f64,
    pub eta: f64,
    pub eps_bar: f64,
    pub local_updates: usize,
    pub feasible: BoxConstraint,
    pub mechanism: Mechanism,
    /// Resolved Gaussian spec when the mechanism is output perturbation.
    pub gaussian: Option<&'a GaussianSpec>,
    pub seed: u64,
}

/// What one agent produced in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    /// `z_p^{t+1}` as transmitted.
    pub z: ParamMatrix,
    pub lambda: ParamMatrix,
    /// `z_p^{t,E+1}`.
    pub chain: ParamMatrix,
    /// `(1/E) sum_{e=1..E} z_p^{t,e}`.
    pub inner_mean_prev: ParamMatrix,
    /// Mean absolute noise entry, averaged over the local updates.
    pub noise_magnitude: f64,
    /// Largest sensitivity seen over the local updates (0 when not computed).
    pub max_sensitivity: f64,
}

fn check_finite(m: &ParamMatrix, t: usize, e: usize, p: usize) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { t, e, p })
    }
}

fn mean_abs(m: &ParamMatrix) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.norm_l1() / m.len() as f64
    }
}

/// Running sum in the same order as [`ParamMatrix::mean_of`].
fn accumulate(acc: &mut Option<ParamMatrix>, m: &ParamMatrix) {
    match acc {
        Some(a) => a.add_assign(m),
        None => *acc = Some(m.clone()),
    }
}

/// The agent side of one round.
pub fn local_round<L: LocalLoss + ?Sized>(
    p: usize,
    agent: &AgentState,
    loss: &L,
    w_next: &ParamMatrix,
    ctx: &RoundContext<'_>,
) -> Result<LocalOutcome> {
    let shape = w_next.shape();
    let e_count = ctx.local_updates;
    if e_count == 0 {
        return Err(Error::usage("need at least one local update"));
    }
    let zero = ParamMatrix::zeros(shape.0, shape.1);
    let mut current = agent.chain.clone();
    let mut sum_next: Option<ParamMatrix> = None;
    let mut sum_prev: Option<ParamMatrix> = None;
    let mut noise_total = 0.0;
    let mut max_sens: f64 = 0.0;

    for e in 1..=e_count {
        accumulate(&mut sum_prev, &current);
        let (grad, xi) = match ctx.mechanism {
            Mechanism::ObjectivePerturbation => {
                let (grad, sens) = loss.gradient_with_sensitivity(&current);
                max_sens = max_sens.max(sens);
                let spec = LaplaceSpec::calibrated(sens, ctx.eps_bar, shape)?;
                let xi = sample_laplace_matrix(&spec, RngStream::new(ctx.seed, p, ctx.t, e));
                (grad, xi)
            }
            Mechanism::NonPrivate | Mechanism::OutputPerturbation(_) => (loss.gradient(&current), zero.clone()),
        };
        check_finite(&grad, ctx.t, e, p)?;
        noise_total += mean_abs(&xi);
        let sub = Subproblem {
            z_prev: &current,
            grad: &grad,
            w: w_next,
            lambda: &agent.lambda,
            xi: &xi,
            rho: ctx.rho,
            eta: ctx.eta,
        };
        sub.check()?;
        let next = sub.solve(&ctx.feasible);
        check_finite(&next, ctx.t, e, p)?;
        accumulate(&mut sum_next, &next);
        current = next;
    }

    let inv_e = 1.0 / e_count as f64;
    let mut z = sum_next.unwrap_or_else(|| zero.clone()).scaled(inv_e);
    let inner_mean_prev = sum_prev.unwrap_or(zero).scaled(inv_e);
    let mut chain = current;
    let mut noise_magnitude = noise_total * inv_e;

    if let (Mechanism::OutputPerturbation(_), Some(spec)) = (ctx.mechanism, ctx.gaussian) {
        if spec.sigma_at(ctx.t) > 0.0 {
            let noise = sample_gaussian_output_noise(spec, ctx.t, RngStream::new(ctx.seed, p, ctx.t, 0));
            z.add_assign(&noise);
            noise_magnitude = mean_abs(&noise);
            chain = z.clone();
        }
    }
    check_finite(&z, ctx.t, e_count, p)?;

    let lambda = dual_update(&agent.lambda, ctx.rho, w_next, &z);
    Ok(LocalOutcome {
        z,
        lambda,
        chain,
        inner_mean_prev,
        noise_magnitude,
        max_sensitivity: max_sens,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    pub schedules: Schedules,
    pub feasible: BoxConstraint,
    pub mechanism: Mechanism,
    pub seed: u64,
    /// Worker threads for the agent loop; 0 picks the rayon default.
    pub threads: usize,
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedules.validate()?;
        if !(self.feasible.bound > 0.0) {
            return Err(Error::usage("box bound must be > 0"));
        }
        if let Mechanism::OutputPerturbation(o) = self.mechanism {
            if let Some(s) = o.sigma0 {
                if !(s >= 0.0) || !s.is_finite() {
                    return Err(Error::usage(format!("sigma0 must be finite and >= 0, got {s}")));
                }
            }
            if !(o.l2_scale >= 0.0) {
                return Err(Error::usage("output noise l2 scale must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Everything an observer sees after round `t`.
#[derive(Debug)]
pub struct RoundReport<'a> {
    pub t: usize,
    pub rho: f64,
    pub eta: f64,
    /// `w^{t+1}`, the global model computed at the start of the round.
    pub w: &'a ParamMatrix,
    pub outcomes: &'a [LocalOutcome],
    pub state: &'a FederationState,
}

impl RoundReport<'_> {
    /// Mean over agents of the per-agent noise magnitude.
    pub fn noise_magnitude(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.outcomes.iter().map(|o| o.noise_magnitude).sum::<f64>() / self.outcomes.len() as f64
    }

    /// `sqrt(sum_p ||w^{t+1} - z_p^{t+1}||^2)`.
    pub fn consensus_residual(&self) -> f64 {
        consensus_residual(self.w, self.outcomes.iter().map(|o| &o.z))
    }
}

/// Drives the federation for `T` rounds.
pub struct Trainer<L: LocalLoss> {
    losses: Vec<L>,
    cfg: TrainerConfig,
    gaussian: Option<GaussianSpec>,
    state: FederationState,
    pool: rayon::ThreadPool,
}

impl<L: LocalLoss> Trainer<L> {
    pub fn new(losses: Vec<L>, cfg: TrainerConfig) -> Result<Self> {
        cfg.validate()?;
        let shape = losses
            .first()
            .map(|l| l.dims())
            .ok_or_else(|| Error::usage("federation needs at least one agent"))?;
        for l in &losses {
            if l.dims() != shape {
                return Err(Error::DimensionMismatch {
                    context: "agent losses",
                    expected: shape,
                    actual: l.dims(),
                });
            }
        }
        let gaussian = match cfg.mechanism {
            Mechanism::OutputPerturbation(o) => Some(resolve_gaussian(&losses, &o, cfg.schedules.eps_bar, shape)?),
            _ => None,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::usage(format!("cannot start worker pool: {e}")))?;
        let state = FederationState::zeros(losses.len(), shape);
        Ok(Self {
            losses,
            cfg,
            gaussian,
            state,
            pool,
        })
    }

    pub fn state(&self) -> &FederationState {
        &self.state
    }

    pub fn into_state(self) -> FederationState {
        self.state
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn losses(&self) -> &[L] {
        &self.losses
    }

    /// The Gaussian spec in use, for output perturbation.
    pub fn gaussian(&self) -> Option<&GaussianSpec> {
        self.gaussian.as_ref()
    }

    /// Runs one round and hands the result to `observer`.
    pub fn step<F>(&mut self, observer: &mut F) -> Result<()>
    where
        F: FnMut(&RoundReport<'_>) -> Result<()>,
    {
        let t = self.state.round + 1;
        let s = &self.cfg.schedules;
        let rho = s.rho_at(t);
        let eta = s.eta_at(t);
        let z_now: Vec<ParamMatrix> = self.state.agents.iter().map(|a| a.z.clone()).collect();
        let w_next = server_global_update(&z_now, &self.state.server_lambda, rho)?;
        check_finite(&w_next, t, 0, 0)?;

        let ctx = RoundContext {
            t,
            rho,
            eta,
            eps_bar: s.eps_bar,
            local_updates: s.local_updates,
            feasible: self.cfg.feasible,
            mechanism: self.cfg.mechanism,
            gaussian: self.gaussian.as_ref(),
            seed: self.cfg.seed,
        };
        let agents = &self.state.agents;
        let losses = &self.losses;
        let outcomes: Vec<LocalOutcome> = self.pool.install(|| {
            agents
                .par_iter()
                .zip(losses.par_iter())
                .enumerate()
                .map(|(p, (agent, loss))| local_round(p, agent, loss, &w_next, &ctx))
                .collect::<Result<Vec<_>>>()
        })?;

        for (p, out) in outcomes.iter().enumerate() {
            let server = dual_update(&self.state.server_lambda[p], rho, &w_next, &out.z);
            if !server.bits_eq(&out.lambda) {
                return Err(Error::DualMismatch { t, p });
            }
            self.state.server_lambda[p] = server;
            let a = &mut self.state.agents[p];
            a.z = out.z.clone();
            a.lambda = out.lambda.clone();
            a.chain = out.chain.clone();
        }
        self.state.w = w_next;
        self.state.round = t;

        let report = RoundReport {
            t,
            rho,
            eta,
            w: &self.state.w,
            outcomes: &outcomes,
            state: &self.state,
        };
        observer(&report)
    }

    /// Runs the remaining rounds up to `T`.
    pub fn run<F>(&mut self, mut observer: F) -> Result<&FederationState>
    where
        F: FnMut(&RoundReport<'_>) -> Result<()>,
    {
        while self.state.round < self.cfg.schedules.rounds {
            self.step(&mut observer)?;
        }
        Ok(&self.state)
    }
}

fn resolve_gaussian<L: LocalLoss>(
    losses: &[L],
    o: &OutputNoise,
    eps_bar: f64,
    shape: (usize, usize),
) -> Result<GaussianSpec> {
    match o.sigma0 {
        Some(sigma0) => {
            let spec = GaussianSpec {
                sigma0,
                decay: o.decay,
                delta_bar: o.delta_bar,
                shape,
            };
            spec.validate()?;
            Ok(spec)
        }
        None => {
            let zero = ParamMatrix::zeros(shape.0, shape.1);
            let sens = losses
                .iter()
                .map(|l| l.gradient_with_sensitivity(&zero).1)
                .fold(0.0, f64::max);
            GaussianSpec::calibrated(sens, o.l2_scale, eps_bar, o.delta_bar, o.decay, shape)
        }
    }
}

/// Builds a [`Trainer`] and runs it to completion.
pub fn run_training<L, F>(losses: Vec<L>, cfg: TrainerConfig, observer: F) -> Result<FederationState>
where
    L: LocalLoss,
    F: FnMut(&RoundReport<'_>) -> Result<()>,
{
    let mut trainer = Trainer::new(losses, cfg)?;
    trainer.run(observer)?;
    Ok(trainer.into_state())
}
