//! Bounded auxiliary state process: projection onto a box, absorbed dynamics,
//! the explicit value of frozen boundary states, and the truncation-error
//! bound.
//!
//! The state space is restricted to a closed box; a step that would exit the
//! interior is projected onto the closure and the process stays there for the
//! rest of the horizon. Boundary states therefore have an explicit value: the
//! discounted sum of per-step reward maxima plus the terminal reward, all
//! evaluated at the frozen state.

use crate::error::{Error, Result};
use crate::model::{ControlModel, PostActionValue, State};

/// Closed box over the continuous state coordinates. Discrete labels pass
/// through untruncated.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedDomain {
    bounds: Vec<(f64, f64)>,
}

impl TruncatedDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidInput(format!(
                    "domain interval [{lo}, {hi}] must be finite with lo < hi"
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// Single continuous coordinate on `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n == self.dim() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{n} continuous coordinates but the domain has {} intervals",
                self.dim()
            )))
        }
    }

    /// Euclidean-nearest point of the closed box: componentwise clamp.
    /// Identity on the closure; lands on the boundary for outside points.
    pub fn project_to_closure(&self, x: &State) -> State {
        let mut projected = x.clone();
        for (c, &(lo, hi)) in projected.continuous.iter_mut().zip(&self.bounds) {
            *c = c.clamp(lo, hi);
        }
        projected
    }

    /// All continuous coordinates strictly inside their intervals.
    pub fn is_interior(&self, x: &State) -> bool {
        x.continuous
            .iter()
            .zip(&self.bounds)
            .all(|(&c, &(lo, hi))| lo < c && c < hi)
    }

    /// Membership in the closed box.
    pub fn contains(&self, x: &State) -> bool {
        x.continuous
            .iter()
            .zip(&self.bounds)
            .all(|(&c, &(lo, hi))| lo <= c && c <= hi)
    }

    /// On the closure but not in the interior.
    pub fn on_boundary(&self, x: &State) -> bool {
        self.contains(x) && !self.is_interior(x)
    }
}

/// Euclidean projection of a state onto the closed box.
pub fn project_to_closure(x: &State, dom: &TruncatedDomain) -> State {
    dom.project_to_closure(x)
}

/// Absorbed one-step map from a post-action value: apply the innovation and
/// project the result onto the closure if it left the interior.
pub fn truncated_step(
    model: &impl ControlModel,
    dom: &TruncatedDomain,
    t: usize,
    k: &PostActionValue,
    eps: f64,
) -> State {
    let next = model.innovate(t, k, eps);
    if dom.is_interior(&next) {
        next
    } else {
        dom.project_to_closure(&next)
    }
}

/// Full one-step transition of the auxiliary process: boundary states stay
/// fixed, interior states move by `truncated_step`.
pub fn auxiliary_transition(
    model: &impl ControlModel,
    dom: &TruncatedDomain,
    t: usize,
    x: &State,
    a: &crate::model::Action,
    eps: f64,
) -> State {
    if dom.on_boundary(x) {
        x.clone()
    } else {
        let k = model.pre_action(t, x, a);
        truncated_step(model, dom, t, &k, eps)
    }
}

/// Value of a state frozen on the boundary from step `t` on: each remaining
/// step collects the reward-maximal feasible action at the frozen state
/// (ties broken by enumeration order), then the terminal reward lands.
pub fn boundary_value(model: &impl ControlModel, t: usize, x: &State) -> Result<f64> {
    let horizon = model.horizon();
    if t > horizon {
        return Err(Error::InvalidInput(format!(
            "step {t} beyond horizon {horizon}"
        )));
    }
    let phi = model.discount();
    let mut total = 0.0;
    let mut discount = 1.0;
    for n in t..horizon {
        let actions = model.feasible_actions(n, x);
        let best = actions
            .iter()
            .map(|a| model.reward(n, x, a))
            .fold(None::<f64>, |acc, r| match acc {
                Some(best) if best >= r => Some(best),
                _ => Some(r),
            })
            .ok_or_else(|| {
                Error::Configuration(format!("empty feasible action set at step {n}"))
            })?;
        total += discount * best;
        discount *= phi;
    }
    total += discount * model.terminal_reward(x);
    Ok(total)
}

/// Continuation value of a post-action value in the absorbing set (every
/// innovation lands the next state on the boundary, at the same point).
///
/// For box domains the absorbing set is characterized by continuous
/// coordinates pinned to an interval endpoint, and the landed state is the
/// post-action value itself read as a state.
pub fn absorbing_continuation(
    model: &impl ControlModel,
    dom: &TruncatedDomain,
    t: usize,
    k: &PostActionValue,
) -> Result<f64> {
    dom.check_dim(k.continuous.len())?;
    for (&c, &(lo, hi)) in k.continuous.iter().zip(dom.bounds()) {
        if c != lo && c != hi {
            return Err(Error::ContractViolation(format!(
                "post-action coordinate {c} is not absorbing in [{lo}, {hi}]"
            )));
        }
    }
    let landed = State::new(&k.continuous, &k.discrete);
    boundary_value(model, t + 1, &landed)
}

/// Ingredients of the truncation-error estimate.
#[derive(Clone, Copy, Debug)]
pub struct TruncationBound {
    /// Number of decision steps `T`.
    pub horizon: usize,
    /// Uniform bound on squared rewards over the truncated domain.
    pub reward_bound: f64,
    /// Uniform moment bound on squared rewards along the untruncated process.
    pub moment_bound: f64,
    /// Upper bound on the probability that the process ever exits the
    /// truncated domain before the horizon.
    pub exit_probability: f64,
}

/// Upper bound `T * sqrt(2 * (xi + zeta) * E)` on the gap between the primal
/// and truncated value functions.
pub fn truncation_error_bound(b: &TruncationBound) -> Result<f64> {
    if b.reward_bound < 0.0 || b.moment_bound < 0.0 {
        return Err(Error::InvalidInput(
            "reward and moment bounds must be non-negative".into(),
        ));
    }
    if !(0.0..=1.0).contains(&b.exit_probability) {
        return Err(Error::InvalidInput(format!(
            "exit probability {} outside [0, 1]",
            b.exit_probability
        )));
    }
    Ok(b.horizon as f64 * (2.0 * (b.reward_bound + b.moment_bound) * b.exit_probability).sqrt())
}
