//! Numerical counterparts of the convergence and privacy analysis: bound
//! constants, right-hand sides, averaged iterates, toy problems with known
//! optima, and the penalized-subproblem and noise-recovery oracles.

mod averaging;
mod bounds;
mod gap;
mod privacy;
mod toy;

pub use averaging::AveragedIterates;
pub use bounds::{derivation_rhs, estimate_bound_constants, theorem_rhs, BoundConstants, BoundDims, Regime};
pub use gap::{
    canonical_toys, expectation_gap_check, write_bound_report, write_bound_report_to, GapCheck, GapCheckConfig,
};
pub use privacy::{box_penalty, noise_recovery, penalized_subproblem_solve, RecoveredNoise, PENALTY_TOLERANCE};
pub use toy::{ToyAgent, ToyKind, ToyProblem};
