//! Variable-annuity contract with guaranteed withdrawals.
//!
//! The state is `(W, I)`: the investment account and the first-withdrawal
//! time (0 while no withdrawal has happened). Actions are `(gamma, tau)`: a
//! withdrawal amount and an initiation flag. Withdrawals above the
//! guaranteed amount `G(I) * P0` incur a proportional penalty; the account
//! grows by a lognormal return net of fees; the terminal payoff is the
//! remaining account value.

use crate::error::{Error, Result};
use crate::model::{Action, ActionList, ControlModel, PostActionValue, State};
use crate::simulate::LognormalInnovationSpec;

/// Contract and market parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct VaContract {
    /// Number of withdrawal dates `T`.
    pub horizon: usize,
    /// Year fraction between withdrawal dates.
    pub step_years: f64,
    /// Annual risk-free rate.
    pub risk_free_rate: f64,
    /// Annual insurance fee rate.
    pub fee_rate: f64,
    /// Annual volatility of the underlying fund.
    pub volatility: f64,
    /// Initial purchase payment `W0`.
    pub initial_premium: f64,
    /// Guarantee base `P0`.
    pub guarantee_base: f64,
    /// Penalty rate on withdrawals above the guaranteed amount.
    pub penalty_rate: f64,
    /// Guaranteed payment fraction per first-withdrawal time, indexed by
    /// `I = 0..horizon-1`.
    pub guarantee_schedule: Vec<f64>,
}

impl Default for VaContract {
    /// One-year contract with monthly withdrawals and a stepped guarantee.
    fn default() -> Self {
        let mut schedule = vec![0.03; 4];
        schedule.extend_from_slice(&[0.05; 4]);
        schedule.extend_from_slice(&[0.07; 4]);
        Self {
            horizon: 12,
            step_years: 1.0 / 12.0,
            risk_free_rate: 0.03,
            fee_rate: 0.01,
            volatility: 0.15,
            initial_premium: 1.0,
            guarantee_base: 1.0,
            penalty_rate: 0.8,
            guarantee_schedule: schedule,
        }
    }
}

impl VaContract {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least one step".into()));
        }
        for (name, v) in [
            ("step_years", self.step_years),
            ("risk_free_rate", self.risk_free_rate),
            ("fee_rate", self.fee_rate),
            ("volatility", self.volatility),
            ("initial_premium", self.initial_premium),
            ("guarantee_base", self.guarantee_base),
            ("penalty_rate", self.penalty_rate),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} is not finite")));
            }
        }
        if self.step_years <= 0.0 {
            return Err(Error::InvalidInput("step_years must be positive".into()));
        }
        if self.volatility < 0.0 {
            return Err(Error::InvalidInput("volatility must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.penalty_rate) {
            return Err(Error::InvalidInput("penalty rate must lie in [0, 1]".into()));
        }
        if self.initial_premium < 0.0 || self.guarantee_base < 0.0 {
            return Err(Error::InvalidInput("premium and guarantee base must be non-negative".into()));
        }
        if self.guarantee_schedule.len() != self.horizon {
            return Err(Error::InvalidInput(format!(
                "guarantee schedule has {} entries for horizon {}",
                self.guarantee_schedule.len(),
                self.horizon
            )));
        }
        if self.guarantee_schedule.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::InvalidInput("guarantee fractions must be non-negative".into()));
        }
        Ok(())
    }

    /// Same contract truncated to a shorter horizon.
    pub fn shortened(&self, horizon: usize) -> Self {
        let mut c = self.clone();
        c.horizon = horizon;
        c.guarantee_schedule.truncate(horizon);
        c
    }

    /// Guaranteed payment fraction for first-withdrawal time `i`.
    pub fn guarantee_rate(&self, i: i64) -> Result<f64> {
        if i < 0 || i as usize >= self.horizon {
            return Err(Error::InvalidInput(format!(
                "first-withdrawal time {i} outside 0..{}",
                self.horizon
            )));
        }
        Ok(self.guarantee_schedule[i as usize])
    }

    pub fn innovation_spec(&self) -> LognormalInnovationSpec {
        LognormalInnovationSpec {
            risk_free_rate: self.risk_free_rate,
            fee_rate: self.fee_rate,
            volatility: self.volatility,
            step_years: self.step_years,
        }
    }

    pub fn state(&self, w: f64, i: i64) -> State {
        State::new(&[w], &[i])
    }

    pub fn action(&self, gamma: f64, tau: i64) -> Action {
        Action::new(&[gamma], &[tau])
    }

    fn state_parts(x: &State) -> (f64, i64) {
        (x.continuous[0], x.discrete[0])
    }

    fn action_parts(a: &Action) -> (f64, i64) {
        (a.continuous[0], a.discrete[0])
    }

    /// First-withdrawal-time transition: records `t` on initiation, else
    /// carries the label through.
    fn next_label(t: usize, i: i64, tau: i64) -> i64 {
        if i == 0 && tau == 1 {
            t as i64
        } else {
            i
        }
    }

    /// Reward with an explicit feasibility check.
    pub fn reward_checked(&self, t: usize, x: &State, a: &Action) -> Result<f64> {
        let feasible = self.feasible_actions(t, x);
        if !feasible.iter().any(|f| f == a) {
            return Err(Error::InfeasibleAction {
                step: t,
                detail: format!("action {a:?} infeasible at {x:?}"),
            });
        }
        Ok(self.reward(t, x, a))
    }

    /// Upper bound on the probability that the account ever reaches
    /// `r_bound` before maturity, by the reflection principle for the
    /// running maximum of the driving Brownian motion.
    pub fn tail_probability(&self, r_bound: f64) -> Result<f64> {
        self.validate()?;
        if self.volatility <= 0.0 {
            return Err(Error::InvalidInput(
                "tail probability needs strictly positive volatility".into(),
            ));
        }
        if !(r_bound.is_finite() && r_bound > self.initial_premium) {
            return Err(Error::InvalidInput(format!(
                "truncation bound {r_bound} must exceed the initial premium {}",
                self.initial_premium
            )));
        }
        let sigma = self.volatility;
        let alpha = (self.risk_free_rate - self.fee_rate - 0.5 * sigma * sigma) / sigma;
        let total_years = self.step_years * self.horizon as f64;
        let sqrt_t = total_years.sqrt();
        let b = (r_bound / self.initial_premium).ln() / sigma;
        let upper = normal_survival((b - alpha * total_years) / sqrt_t);
        let reflected = (r_bound / self.initial_premium).powf(2.0 * alpha / sigma)
            * normal_cdf((-b - alpha * total_years) / sqrt_t);
        Ok((upper + reflected).clamp(0.0, 1.0))
    }
}

/// Standard normal CDF via the complementary error function; keeps full
/// relative accuracy in the far tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal survival function `1 - N(x)` without cancellation.
pub fn normal_survival(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

impl ControlModel for VaContract {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn discount(&self) -> f64 {
        (-self.risk_free_rate * self.step_years).exp()
    }

    fn initial_state(&self) -> State {
        self.state(self.initial_premium, 0)
    }

    fn innovation_law(&self) -> LognormalInnovationSpec {
        self.innovation_spec()
    }

    /// Bang-bang feasible set: no withdrawal, the guaranteed amount, full
    /// surrender; duplicates removed preserving order. Withdrawing at
    /// inception is not allowed, so step 0 has only the null action.
    fn feasible_actions(&self, t: usize, x: &State) -> ActionList {
        if t == 0 {
            let mut list = ActionList::new();
            list.push(self.action(0.0, 0));
            return list;
        }
        let (w, i) = Self::state_parts(x);
        let guaranteed = self.guarantee_schedule[i as usize] * self.guarantee_base;
        let first_tau = if i == 0 { 0 } else { 1 };
        let candidates = [
            self.action(0.0, first_tau),
            self.action(guaranteed, 1),
            self.action(w, 1),
        ];
        let mut list = ActionList::new();
        for c in candidates {
            if !list.iter().any(|a| *a == c) {
                list.push(c);
            }
        }
        list
    }

    fn pre_action(&self, t: usize, x: &State, a: &Action) -> PostActionValue {
        let (w, i) = Self::state_parts(x);
        let (gamma, tau) = Self::action_parts(a);
        PostActionValue::new(&[(w - gamma).max(0.0)], &[Self::next_label(t, i, tau)])
    }

    fn innovate(&self, _t: usize, k: &PostActionValue, eps: f64) -> State {
        State::new(&[k.continuous[0] * eps], &[k.discrete[0]])
    }

    /// Withdrawal net of the penalty on the amount above the guarantee.
    fn reward(&self, t: usize, x: &State, a: &Action) -> f64 {
        if t == 0 {
            return 0.0;
        }
        let (_, i) = Self::state_parts(x);
        let (gamma, _) = Self::action_parts(a);
        let guaranteed = self.guarantee_schedule[i as usize] * self.guarantee_base;
        gamma - self.penalty_rate * (gamma - guaranteed).max(0.0)
    }

    fn terminal_reward(&self, x: &State) -> f64 {
        x.continuous[0]
    }

    fn monolithic_transition(&self, t: usize, x: &State, a: &Action, eps: f64) -> Option<State> {
        let (w, i) = Self::state_parts(x);
        let (gamma, tau) = Self::action_parts(a);
        Some(State::new(&[(w - gamma).max(0.0) * eps], &[Self::next_label(t, i, tau)]))
    }
}
