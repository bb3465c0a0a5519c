//! Regression Monte Carlo for discrete-time stochastic optimal control.
//!
//! The library prices finite-horizon control problems by backward induction
//! with regression-estimated continuation values. Its pillars:
//!
//! * a truncated (absorbed) state process on a closed box, which removes any
//!   need to extrapolate fitted functions ([`truncation`]);
//! * direct simulation of post-action values from an artificial
//!   distribution, skipping forward path simulation entirely ([`simulate`],
//!   [`solver`]);
//! * shape-preserving sieve regression in a Bernstein basis, solved as an
//!   inequality-constrained least-squares problem ([`sieve`]).
//!
//! A forward-simulation baseline with classic control-randomization rules, a
//! deterministic grid dynamic-programming oracle ([`oracle`]), and a
//! variable-annuity model with guaranteed withdrawals ([`va`]) complete the
//! toolkit.

pub mod error;
pub mod model;
pub mod oracle;
pub mod sieve;
pub mod simulate;
pub mod solver;
pub mod truncation;
pub mod va;

pub use error::{Error, Result};
pub use model::{compose_transition, discounted_path_reward, Action, ControlModel, PostActionValue, State};
pub use sieve::{
    bernstein_basis_eval, fit_sieve, select_basis_count, shape_constraint_matrix, sieve_predict,
    BernsteinBasis, FittedSieve, RegressionSample, SelectionCriterion, ShapeConstraint,
};
pub use simulate::{
    forward_simulate, sample_innovations, sample_post_actions, CrRule, LognormalInnovationSpec,
    RandomStream,
};
pub use solver::{
    bellman_update, bsbu_solve, continuation_query, fsbu_solve, repeat_experiment, BasisChoice,
    Engine, ExperimentResult, RunResult, SolverConfig, StepDiagnostics, SummaryStats,
    ValueEstimate,
};
pub use truncation::{
    absorbing_continuation, auxiliary_transition, boundary_value, project_to_closure,
    truncated_step, truncation_error_bound, TruncatedDomain, TruncationBound,
};
pub use va::VaContract;
