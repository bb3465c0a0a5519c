//! Reproducible random sampling: innovation draws, artificial post-action
//! sampling, and control-randomization forward simulation.
//!
//! All randomness flows through [`RandomStream`], a `(seed, stream id)` pair
//! backed by a counter-based generator. Derived streams are independent of
//! thread scheduling, so parallel repeats reproduce bit-identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{ControlModel, PostActionValue, State};
use crate::truncation::{truncated_step, TruncatedDomain};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A reproducible random stream: identical `(seed, id)` pairs replay the same
/// draw sequence, distinct ids are statistically independent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
    id: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, id: 0 }
    }

    pub fn with_id(seed: u64, id: u64) -> Self {
        Self { seed, id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Child stream for a subtask; derivation order matters, so distinct tag
    /// paths yield distinct streams.
    pub fn derive(&self, tag: u64) -> Self {
        let id = splitmix64(self.id.rotate_left(17) ^ splitmix64(tag));
        Self { seed: self.seed, id }
    }

    /// Instantiate the generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.id);
        rng
    }
}

/// Lognormal one-step return: `log eps ~ Normal((r - q - sigma^2/2) delta,
/// sigma^2 delta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LognormalInnovationSpec {
    /// Annual risk-free rate.
    pub risk_free_rate: f64,
    /// Annual fee rate deducted from the account.
    pub fee_rate: f64,
    /// Annual volatility.
    pub volatility: f64,
    /// Year fraction per step.
    pub step_years: f64,
}

impl LognormalInnovationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.risk_free_rate.is_finite()
            && self.fee_rate.is_finite()
            && self.volatility.is_finite()
            && self.step_years.is_finite())
        {
            return Err(Error::InvalidInput("non-finite innovation parameter".into()));
        }
        if self.volatility < 0.0 {
            return Err(Error::InvalidInput(format!(
                "volatility {} must be non-negative",
                self.volatility
            )));
        }
        if self.step_years <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "step length {} must be positive",
                self.step_years
            )));
        }
        Ok(())
    }

    /// Mean of `log eps`.
    pub fn log_mean(&self) -> f64 {
        (self.risk_free_rate - self.fee_rate - 0.5 * self.volatility * self.volatility)
            * self.step_years
    }

    /// Standard deviation of `log eps`.
    pub fn log_sd(&self) -> f64 {
        self.volatility * self.step_years.sqrt()
    }

    /// `E[eps] = exp((r - q) delta)`.
    pub fn mean(&self) -> f64 {
        ((self.risk_free_rate - self.fee_rate) * self.step_years).exp()
    }
}

/// Draw `count` lognormal innovations.
pub fn sample_innovations(
    spec: &LognormalInnovationSpec,
    count: usize,
    stream: RandomStream,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::InvalidInput("innovation sample size must be positive".into()));
    }
    let mu = spec.log_mean();
    let sd = spec.log_sd();
    let mut rng = stream.rng();
    Ok((0..count)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (mu + sd * z).exp()
        })
        .collect())
}

/// Draw `count` artificial post-action values: the continuous part uniform on
/// the open interval `(0, r_bound)`, the label uniform on `{0, ..., t}`,
/// independently.
pub fn sample_post_actions(
    t: usize,
    r_bound: f64,
    count: usize,
    stream: RandomStream,
) -> Result<Vec<PostActionValue>> {
    if !(r_bound.is_finite() && r_bound > 0.0) {
        return Err(Error::InvalidInput(format!("truncation bound {r_bound} must be positive")));
    }
    if count == 0 {
        return Err(Error::InvalidInput("post-action sample size must be positive".into()));
    }
    let mut rng = stream.rng();
    Ok((0..count)
        .map(|_| {
            let k1 = loop {
                let u: f64 = rng.random_range(0.0..r_bound);
                if u > 0.0 {
                    break u;
                }
            };
            let k2 = rng.random_range(0..=t as i64);
            PostActionValue::new(&[k1], &[k2])
        })
        .collect())
}

/// Control-randomization rule used by the forward-simulation baseline.
///
/// The rules assume the bang-bang action ordering: no withdrawal first, the
/// guaranteed amount second, full surrender last.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrRule {
    /// Point mass at the guaranteed-withdrawal action.
    Cr0,
    /// Uniform over the full feasible set.
    Cr1,
    /// Uniform over the feasible set without full surrender.
    Cr2,
}

/// Forward-simulated paths plus the post-action sample at the target step.
#[derive(Clone, Debug)]
pub struct ForwardSample {
    /// `states[n - 1][m]` is the state of path `m` at time `n`, `n = 1..=t+1`.
    pub states: Vec<Vec<State>>,
    /// `K(X_t, a_t)` for each path.
    pub post_actions: Vec<PostActionValue>,
}

/// Simulate `count` paths from the initial state up to `t + 1`, drawing
/// actions by `rule` at each step, with the absorbed (truncated) dynamics.
pub fn forward_simulate(
    model: &impl ControlModel,
    dom: &TruncatedDomain,
    rule: CrRule,
    t: usize,
    count: usize,
    stream: RandomStream,
) -> Result<ForwardSample> {
    if count == 0 {
        return Err(Error::InvalidInput("path count must be positive".into()));
    }
    if t >= model.horizon() {
        return Err(Error::InvalidInput(format!(
            "target step {t} beyond the last decision step {}",
            model.horizon() - 1
        )));
    }
    let law = model.innovation_law();
    law.validate()?;
    let mu = law.log_mean();
    let sd = law.log_sd();
    let mut rng = stream.rng();

    let mut states: Vec<Vec<State>> = (0..=t).map(|_| Vec::with_capacity(count)).collect();
    let mut post_actions = Vec::with_capacity(count);

    for _ in 0..count {
        let mut x = model.initial_state();
        for n in 0..=t {
            let actions = model.feasible_actions(n, &x);
            if actions.is_empty() {
                return Err(Error::ContractViolation(format!(
                    "empty feasible action set at step {n} during control randomization"
                )));
            }
            let idx = match rule {
                _ if actions.len() == 1 => 0,
                CrRule::Cr0 => 1.min(actions.len() - 1),
                CrRule::Cr1 => rng.random_range(0..actions.len()),
                CrRule::Cr2 => {
                    let support = if actions.len() == 3 { 2 } else { actions.len() };
                    rng.random_range(0..support)
                }
            };
            let k = model.pre_action(n, &x, &actions[idx]);
            let z: f64 = StandardNormal.sample(&mut rng);
            let eps = (mu + sd * z).exp();
            x = truncated_step(model, dom, n, &k, eps);
            states[n].push(x.clone());
            if n == t {
                post_actions.push(k);
            }
        }
    }
    Ok(ForwardSample { states, post_actions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_spec() -> LognormalInnovationSpec {
        LognormalInnovationSpec {
            risk_free_rate: 0.03,
            fee_rate: 0.01,
            volatility: 0.15,
            step_years: 1.0 / 12.0,
        }
    }

    #[test]
    fn zero_volatility_is_degenerate() {
        let spec = LognormalInnovationSpec { volatility: 0.0, ..table_spec() };
        let draws = sample_innovations(&spec, 100, RandomStream::new(1)).unwrap();
        let expect = ((0.03 - 0.01) / 12.0f64).exp();
        for d in draws {
            assert_eq!(d, expect);
        }
    }

    #[test]
    fn log_moments_match_the_law_of_large_numbers() {
        let spec = table_spec();
        let m = 1_000_000;
        let draws = sample_innovations(&spec, m, RandomStream::new(42)).unwrap();
        let mean_log = draws.iter().map(|d| d.ln()).sum::<f64>() / m as f64;
        let expect = spec.log_mean();
        let se = spec.log_sd() / (m as f64).sqrt();
        assert!(
            (mean_log - expect).abs() <= 4.0 * se,
            "sample mean {mean_log} vs {expect} (se {se})"
        );
        assert!(draws.iter().all(|&d| d > 0.0));
    }

    #[test]
    fn identical_streams_replay_bit_identical_draws() {
        let spec = table_spec();
        let a = sample_innovations(&spec, 1000, RandomStream::with_id(7, 3)).unwrap();
        let b = sample_innovations(&spec, 1000, RandomStream::with_id(7, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_stream_ids_are_uncorrelated() {
        let spec = table_spec();
        let m = 100_000;
        let a = sample_innovations(&spec, m, RandomStream::with_id(7, 0)).unwrap();
        let b = sample_innovations(&spec, m, RandomStream::with_id(7, 1)).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(&b) {
            cov += (x - ma) * (y - mb);
            va += (x - ma).powi(2);
            vb += (y - mb).powi(2);
        }
        let corr = cov / (va.sqrt() * vb.sqrt());
        assert!(corr.abs() <= 4.0 / (m as f64).sqrt(), "correlation {corr}");
    }

    #[test]
    fn derived_streams_differ_by_tag_path() {
        let base = RandomStream::new(11);
        assert_ne!(base.derive(0), base.derive(1));
        assert_ne!(base.derive(0).derive(1), base.derive(1).derive(0));
        assert_eq!(base.derive(5).derive(2), base.derive(5).derive(2));
    }

    #[test]
    fn post_actions_live_in_the_open_box() {
        let t = 11;
        let draws = sample_post_actions(t, 4.0, 50_000, RandomStream::new(3)).unwrap();
        for k in &draws {
            let (k1, k2) = k.scalar_parts().unwrap();
            assert!(k1 > 0.0 && k1 < 4.0);
            assert!((0..=t as i64).contains(&k2));
        }
    }

    #[test]
    fn post_action_labels_are_uniform() {
        let t = 11;
        let m = 100_000;
        let draws = sample_post_actions(t, 4.0, m, RandomStream::new(9)).unwrap();
        let p = 1.0 / 12.0;
        let tol = 4.0 * (p * (1.0 - p) / m as f64).sqrt();
        for label in 0..=t as i64 {
            let freq = draws
                .iter()
                .filter(|k| k.scalar_parts().unwrap().1 == label)
                .count() as f64
                / m as f64;
            assert!((freq - p).abs() <= tol, "label {label}: frequency {freq}");
        }
    }

    #[test]
    fn step_zero_labels_are_all_zero() {
        let draws = sample_post_actions(0, 4.0, 1000, RandomStream::new(4)).unwrap();
        assert!(draws.iter().all(|k| k.scalar_parts().unwrap().1 == 0));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = LognormalInnovationSpec { volatility: -0.1, ..table_spec() };
        assert!(sample_innovations(&bad, 10, RandomStream::new(0)).is_err());
        assert!(sample_post_actions(3, 0.0, 10, RandomStream::new(0)).is_err());
        assert!(sample_post_actions(3, 4.0, 0, RandomStream::new(0)).is_err());
    }
}
