//! The federated optimizer: schedules, the closed-form steps and the round
//! machine that ties them together.

mod federation;
mod schedule;
mod step;

pub use federation::{
    consensus_residual, dual_update, local_round, run_training, AgentState, FederationState, LocalOutcome, Mechanism,
    OutputNoise, RoundContext, RoundReport, Trainer, TrainerConfig,
};
pub use schedule::{eta_schedule, rho_schedule, EtaRule, RhoSchedule, Schedules};
pub use step::{local_subproblem_step, server_global_update, BoxConstraint, Subproblem};
