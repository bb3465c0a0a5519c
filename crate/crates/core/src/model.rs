//! The abstract stochastic control problem and the transition decomposition
//! shared by every solver in this crate.
//!
//! A model describes a finite-horizon problem over steps `0..=T`: a state
//! evolves as `x_{t+1} = H(K(x_t, a_t), eps_{t+1})`, where `K` maps a
//! state/action pair to its *post-action value* and `H` applies the random
//! innovation. Rewards accrue at each step and at the horizon, discounted
//! geometrically.

use smallvec::SmallVec;

use crate::error::{ensure_finite, Error, Result};
use crate::simulate::LognormalInnovationSpec;

/// Continuous components of a state, action, or post-action value.
pub type ContinuousVec = SmallVec<[f64; 2]>;
/// Discrete (label) components.
pub type DiscreteVec = SmallVec<[i64; 2]>;

/// A hybrid state: a real vector plus integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub continuous: ContinuousVec,
    pub discrete: DiscreteVec,
}

impl State {
    pub fn new(continuous: &[f64], discrete: &[i64]) -> Self {
        Self {
            continuous: ContinuousVec::from_slice(continuous),
            discrete: DiscreteVec::from_slice(discrete),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for &c in &self.continuous {
            ensure_finite(c, "state coordinate")?;
        }
        Ok(())
    }
}

/// A hybrid action.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub continuous: ContinuousVec,
    pub discrete: DiscreteVec,
}

impl Action {
    pub fn new(continuous: &[f64], discrete: &[i64]) -> Self {
        Self {
            continuous: ContinuousVec::from_slice(continuous),
            discrete: DiscreteVec::from_slice(discrete),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for &c in &self.continuous {
            ensure_finite(c, "action coordinate")?;
        }
        Ok(())
    }
}

/// The intermediate value `K(x, a)` reached after acting but before the
/// innovation lands.
#[derive(Clone, Debug, PartialEq)]
pub struct PostActionValue {
    pub continuous: ContinuousVec,
    pub discrete: DiscreteVec,
}

impl PostActionValue {
    pub fn new(continuous: &[f64], discrete: &[i64]) -> Self {
        Self {
            continuous: ContinuousVec::from_slice(continuous),
            discrete: DiscreteVec::from_slice(discrete),
        }
    }

    /// The `(k1, k2)` view required by the univariate regression machinery:
    /// one continuous coordinate and one discrete label.
    pub fn scalar_parts(&self) -> Result<(f64, i64)> {
        if self.continuous.len() == 1 && self.discrete.len() == 1 {
            Ok((self.continuous[0], self.discrete[0]))
        } else {
            Err(Error::Internal(format!(
                "post-action value is not scalar/label shaped: {} continuous, {} discrete",
                self.continuous.len(),
                self.discrete.len()
            )))
        }
    }
}

/// Ordered feasible action set; finite by construction.
pub type ActionList = SmallVec<[Action; 4]>;

/// A discrete-time stochastic control problem.
///
/// Implementations must be immutable after construction; every method is a
/// pure function of its inputs, so models can be shared freely across
/// concurrent workers.
pub trait ControlModel: Sync {
    /// Number of decision steps `T`; states exist at `0..=T`.
    fn horizon(&self) -> usize;

    /// Per-step discount factor in `(0, 1)`.
    fn discount(&self) -> f64;

    /// The (deterministic) initial state `x_0`.
    fn initial_state(&self) -> State;

    /// Distribution of the innovation term; shared by all steps.
    fn innovation_law(&self) -> LognormalInnovationSpec;

    /// Feasible actions at `(t, x)`, in a deterministic order. Must be
    /// non-empty for `1 <= t <= T-1`; `t = 0` may be a singleton null action.
    fn feasible_actions(&self, t: usize, x: &State) -> ActionList;

    /// The pre-innovation transition `K`.
    fn pre_action(&self, t: usize, x: &State, a: &Action) -> PostActionValue;

    /// The innovation map `H`.
    fn innovate(&self, t: usize, k: &PostActionValue, eps: f64) -> State;

    /// Intermediate reward `f_t(x, a)`.
    fn reward(&self, t: usize, x: &State, a: &Action) -> f64;

    /// Terminal reward `f_T(x)`.
    fn terminal_reward(&self, x: &State) -> f64;

    /// Monolithic one-step transition `S(x, a, eps)`, when the model supplies
    /// one for cross-checking the `H(K(..), ..)` factorization.
    fn monolithic_transition(&self, _t: usize, _x: &State, _a: &Action, _eps: f64) -> Option<State> {
        None
    }
}

fn check_feasible(model: &impl ControlModel, t: usize, x: &State, a: &Action) -> Result<()> {
    let feasible = model.feasible_actions(t, x);
    if feasible.iter().any(|f| f == a) {
        Ok(())
    } else {
        Err(Error::InfeasibleAction {
            step: t,
            detail: format!("action {a:?} not in the feasible set {feasible:?} at state {x:?}"),
        })
    }
}

/// One-step transition via the `H(K(x, a), eps)` factorization.
///
/// Validates that `a` is feasible at `(t, x)` and that all inputs are finite.
pub fn compose_transition(
    model: &impl ControlModel,
    t: usize,
    x: &State,
    a: &Action,
    eps: f64,
) -> Result<State> {
    x.validate()?;
    a.validate()?;
    ensure_finite(eps, "innovation")?;
    check_feasible(model, t, x, a)?;
    let k = model.pre_action(t, x, a);
    Ok(model.innovate(t, &k, eps))
}

/// Total discounted reward of a realized path.
///
/// `path` must hold one `(t, state, action)` entry per step `0..T-1`, in
/// order; the terminal state supplies the `phi^T f_T` term.
pub fn discounted_path_reward(
    model: &impl ControlModel,
    path: &[(usize, State, Action)],
    terminal_state: &State,
) -> Result<f64> {
    let horizon = model.horizon();
    if path.len() != horizon {
        return Err(Error::InvalidInput(format!(
            "path has {} entries but the horizon is {horizon}",
            path.len()
        )));
    }
    let phi = model.discount();
    let mut total = 0.0;
    for (expected_t, (t, x, a)) in path.iter().enumerate() {
        if *t != expected_t {
            return Err(Error::InvalidInput(format!(
                "path entry {expected_t} is labeled with step {t}"
            )));
        }
        check_feasible(model, *t, x, a)?;
        total += phi.powi(*t as i32) * model.reward(*t, x, a);
    }
    total += phi.powi(horizon as i32) * model.terminal_reward(terminal_state);
    Ok(total)
}
