//! Regression Monte Carlo engines.
//!
//! The backward-simulation engine draws post-action values directly from an
//! artificial distribution at each step, propagates them one step through
//! the absorbed dynamics, evaluates the next step's value estimate on the
//! landed states, and fits one continuation sieve per discrete slice. The
//! forward-simulation baseline replaces the artificial draws with
//! control-randomized paths restarted independently at every step.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ControlModel, PostActionValue, State};
use crate::sieve::{
    fit_sieve, select_basis_count_on_domain, BernsteinBasis, FittedSieve, RegressionSample,
    SelectionCriterion, ShapeConstraint,
};
use crate::simulate::{
    forward_simulate, sample_innovations, sample_post_actions, CrRule, RandomStream,
};
use crate::truncation::{absorbing_continuation, boundary_value, truncated_step, TruncatedDomain};

/// Fixed basis order, or data-driven selection per slice.
#[derive(Clone, Debug, PartialEq)]
pub enum BasisChoice {
    Fixed(usize),
    Select { candidates: Vec<usize>, criterion: SelectionCriterion },
}

impl BasisChoice {
    pub fn max_order(&self) -> usize {
        match self {
            BasisChoice::Fixed(j) => *j,
            BasisChoice::Select { candidates, .. } => {
                candidates.iter().copied().max().unwrap_or(0)
            }
        }
    }
}

/// Engine parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Post-action sample size per time step.
    pub paths_per_step: usize,
    pub basis: BasisChoice,
    /// Upper edge of the truncated account domain `[0, R]`.
    pub truncation_bound: f64,
    /// Shape restriction on every continuation fit; `None` gives the raw
    /// (unconstrained) sieve estimate.
    pub constraint: ShapeConstraint,
    pub seed: u64,
    /// Number of independent algorithm repeats in an experiment.
    pub repeats: usize,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths_per_step == 0 {
            return Err(Error::InvalidInput("paths_per_step must be positive".into()));
        }
        if let BasisChoice::Select { candidates, .. } = &self.basis {
            if candidates.is_empty() {
                return Err(Error::InvalidInput("empty candidate order list".into()));
            }
        }
        let max_order = self.basis.max_order();
        if self.paths_per_step < max_order + 1 {
            return Err(Error::InvalidInput(format!(
                "paths_per_step {} below the {} coefficients of the largest basis",
                self.paths_per_step,
                max_order + 1
            )));
        }
        if !(self.truncation_bound.is_finite() && self.truncation_bound > 0.0) {
            return Err(Error::InvalidInput(format!(
                "truncation bound {} must be positive",
                self.truncation_bound
            )));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidInput("repeats must be at least one".into()));
        }
        Ok(())
    }
}

/// Which engine drives the post-action sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    /// Backward simulation from the artificial uniform distribution.
    Bsbu,
    /// Forward simulation under a control-randomization rule.
    Fsbu(CrRule),
}

/// Per-slice fit record emitted for diagnostics.
#[derive(Clone, Debug)]
pub struct StepDiagnostics {
    pub step: usize,
    pub slice: i64,
    pub sample_size: usize,
    pub order_used: usize,
    pub ssr: f64,
    pub kkt_residual: f64,
    pub degenerate: bool,
}

/// The numerical value function: one continuation sieve per discrete slice
/// per time step, with boundary states handled in closed form.
#[derive(Clone, Debug)]
pub struct ValueEstimate {
    horizon: usize,
    continuations: Vec<BTreeMap<i64, FittedSieve>>,
    allow_slice_fallback: bool,
}

impl ValueEstimate {
    pub fn new(horizon: usize, allow_slice_fallback: bool) -> Self {
        Self {
            horizon,
            continuations: vec![BTreeMap::new(); horizon],
            allow_slice_fallback,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Continuation slices fitted at step `t`.
    pub fn slices(&self, t: usize) -> &BTreeMap<i64, FittedSieve> {
        &self.continuations[t]
    }

    pub fn set_slice(&mut self, t: usize, label: i64, fit: FittedSieve) {
        self.continuations[t].insert(label, fit);
    }

    fn slice_for(&self, t: usize, label: i64) -> Result<&FittedSieve> {
        let slices = &self.continuations[t];
        if let Some(fit) = slices.get(&label) {
            return Ok(fit);
        }
        if self.allow_slice_fallback {
            let nearest = slices
                .keys()
                .min_by_key(|&&k| ((k - label).abs(), k))
                .copied()
                .ok_or_else(|| {
                    Error::Internal(format!("no continuation slices at step {t}"))
                })?;
            log::debug!("slice {label} missing at step {t}; using nearest slice {nearest}");
            Ok(&slices[&nearest])
        } else {
            Err(Error::Internal(format!(
                "continuation slice {label} missing at step {t}"
            )))
        }
    }
}

/// Frozen boundary values `[t][label]` at the two interval edges, cached once
/// per solve. The engines assume discrete slice labels within `0..horizon`,
/// which the artificial sampler guarantees by construction.
struct FrozenTable {
    lo: Vec<Vec<f64>>,
    hi: Vec<Vec<f64>>,
}

impl FrozenTable {
    fn build(model: &impl ControlModel, dom: &TruncatedDomain) -> Result<Self> {
        let horizon = model.horizon();
        let (lo_w, hi_w) = dom.bounds()[0];
        let mut lo = Vec::with_capacity(horizon + 1);
        let mut hi = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            let mut row_lo = Vec::with_capacity(horizon);
            let mut row_hi = Vec::with_capacity(horizon);
            for label in 0..horizon as i64 {
                row_lo.push(boundary_value(model, t, &State::new(&[lo_w], &[label]))?);
                row_hi.push(boundary_value(model, t, &State::new(&[hi_w], &[label]))?);
            }
            lo.push(row_lo);
            hi.push(row_hi);
        }
        Ok(Self { lo, hi })
    }

    fn get(&self, t: usize, label: i64, upper: bool) -> Result<f64> {
        let row = if upper { &self.hi } else { &self.lo };
        row.get(t)
            .and_then(|r| r.get(label as usize))
            .copied()
            .ok_or_else(|| {
                Error::Internal(format!("frozen value missing at t = {t}, label = {label}"))
            })
    }
}

/// `bellman_update` with cached frozen boundary values; used on the hot
/// response-evaluation path. Must stay equivalent to the public dispatch.
fn bellman_cached(
    est: &ValueEstimate,
    model: &impl ControlModel,
    dom: &TruncatedDomain,
    frozen: &FrozenTable,
    t: usize,
    x: &State,
) -> Result<f64> {
    let horizon = model.horizon();
    if t == horizon {
        return Ok(model.terminal_reward(x));
    }
    let (lo, hi) = dom.bounds()[0];
    let w = x.continuous[0];
    if w == lo || w == hi {
        return frozen.get(t, x.discrete[0], w == hi);
    }
    let actions = model.feasible_actions(t, x);
    if actions.is_empty() {
        return Err(Error::Configuration(format!("empty feasible action set at step {t}")));
    }
    let phi = model.discount();
    let mut best = f64::NEG_INFINITY;
    for a in &actions {
        let k = model.pre_action(t, x, a);
        let (k1, label) = k.scalar_parts()?;
        let cont = if k1 == lo || k1 == hi {
            frozen.get(t + 1, label, k1 == hi)?
        } else if !(lo..=hi).contains(&k1) {
            return Err(Error::OutOfDomain { value: k1, lo, hi });
        } else {
            est.slice_for(t, label)?.predict(k1)?
        };
        let value = model.reward(t, x, a) + phi * cont;
        if value > best {
            best = value;
        }
    }
    Ok(best)
}

/// Continuation value at a post-action value: absorbing values are evaluated
/// in closed form through the boundary recursion, interior values through
/// the fitted slice.
pub fn continuation_query(
    est: &ValueEstimate,
    model: &impl ControlModel,
    dom: &TruncatedDomain,
    t: usize,
    k: &PostActionValue,
) -> Result<f64> {
    let (k1, label) = k.scalar_parts()?;
    let (lo, hi) = dom.bounds()[0];
    if k1 == lo || k1 == hi {
        return absorbing_continuation(model, dom, t, k);
    }
    if !(lo..=hi).contains(&k1) {
        return Err(Error::OutOfDomain { value: k1, lo, hi });
    }
    est.slice_for(t, label)?.predict(k1)
}

/// Value-function estimate at `(t, x)`: the terminal reward at the horizon,
/// the frozen boundary value on the boundary, and the action maximum of
/// reward plus discounted continuation in the interior.
pub fn bellman_update(
    est: &ValueEstimate,
    model: &impl ControlModel,
    dom: &TruncatedDomain,
    t: usize,
    x: &State,
) -> Result<f64> {
    let horizon = model.horizon();
    if t > horizon {
        return Err(Error::InvalidInput(format!("step {t} beyond horizon {horizon}")));
    }
    if !dom.contains(x) {
        return Err(Error::InvalidInput(format!(
            "state {x:?} outside the closed truncated box"
        )));
    }
    if t == horizon {
        return Ok(model.terminal_reward(x));
    }
    if dom.on_boundary(x) {
        return boundary_value(model, t, x);
    }
    let actions = model.feasible_actions(t, x);
    if actions.is_empty() {
        return Err(Error::Configuration(format!("empty feasible action set at step {t}")));
    }
    let phi = model.discount();
    let mut best = f64::NEG_INFINITY;
    for a in &actions {
        let k = model.pre_action(t, x, a);
        let value = model.reward(t, x, a) + phi * continuation_query(est, model, dom, t, &k)?;
        if value > best {
            best = value;
        }
    }
    Ok(best)
}

/// One solved run.
#[derive(Clone, Debug)]
pub struct RunResult {
    /// Value estimate at the initial state.
    pub v0: f64,
    /// The fitted value function (continuation slices for every step).
    pub estimate: ValueEstimate,
    pub diagnostics: Vec<StepDiagnostics>,
    pub wall_seconds: f64,
}

/// Mean / spread over algorithm repeats (unbiased standard deviation).
#[derive(Clone, Debug)]
pub struct SummaryStats {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub values: Vec<f64>,
}

impl SummaryStats {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("no values to summarize".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { mean, sd, min, max, values })
    }
}

/// Results of a repeated experiment: summary plus every run.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub stats: SummaryStats,
    pub runs: Vec<RunResult>,
}

fn check_solver_domain(dom: &TruncatedDomain, config: &SolverConfig) -> Result<(f64, f64)> {
    if dom.dim() != 1 {
        return Err(Error::InvalidInput(
            "the regression engines need a single truncated continuous coordinate".into(),
        ));
    }
    let (lo, hi) = dom.bounds()[0];
    if lo != 0.0 || hi != config.truncation_bound {
        return Err(Error::InvalidInput(format!(
            "domain [{lo}, {hi}] does not match the configured truncation bound [0, {}]",
            config.truncation_bound
        )));
    }
    Ok((lo, hi))
}

fn fit_slice(
    regressors: Vec<f64>,
    responses: Vec<f64>,
    config: &SolverConfig,
    hi: f64,
) -> Result<(FittedSieve, usize)> {
    let n = regressors.len();
    let sample = RegressionSample::new(regressors, responses);
    let target = match &config.basis {
        BasisChoice::Fixed(j) => *j,
        BasisChoice::Select { candidates, criterion } => select_basis_count_on_domain(
            &sample,
            candidates,
            *criterion,
            config.constraint,
            0.0,
            hi,
        )?,
    };
    // Keep the design overdetermined when a slice is starved of samples, and
    // back off the order when a starved slice leaves the constrained solve
    // numerically rank deficient.
    let mut order = target.min(n.saturating_sub(1));
    if order < target {
        log::warn!("slice with {n} samples: basis order reduced from {target} to {order}");
    }
    loop {
        let constraint = if order < config.constraint.min_order() {
            order = 0;
            ShapeConstraint::None
        } else {
            config.constraint
        };
        let basis = BernsteinBasis::new(order, 0.0, hi)?;
        match fit_sieve(&sample, &basis, constraint) {
            Ok(fit) => return Ok((fit, order)),
            Err(Error::SolverFailure { kkt_residual, .. }) if order > 0 => {
                let reduced = (order * 3 / 4).min(order - 1);
                log::warn!(
                    "slice fit at order {order} left KKT residual {kkt_residual:.2e}; retrying at order {reduced}"
                );
                order = reduced;
            }
            Err(err) => return Err(err),
        }
    }
}

fn fit_step_slices(
    est: &mut ValueEstimate,
    diagnostics: &mut Vec<StepDiagnostics>,
    t: usize,
    ks: &[PostActionValue],
    ys: &[f64],
    config: &SolverConfig,
    hi: f64,
) -> Result<()> {
    let mut groups: BTreeMap<i64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (k, &y) in ks.iter().zip(ys) {
        let (k1, label) = k.scalar_parts()?;
        let entry = groups.entry(label).or_default();
        entry.0.push(k1);
        entry.1.push(y);
    }
    if groups.len() < t + 1 {
        log::warn!(
            "step {t}: {} of {} post-action slices populated; queries to missing slices fall back to the nearest fitted slice",
            groups.len(),
            t + 1
        );
    }
    let fits: Vec<(i64, FittedSieve, usize)> = groups
        .into_par_iter()
        .map(|(label, (z, u))| {
            let (fit, order) = fit_slice(z, u, config, hi)?;
            Ok((label, fit, order))
        })
        .collect::<Result<_>>()?;
    for (label, fit, order) in fits {
        let d = fit.diagnostics();
        diagnostics.push(StepDiagnostics {
            step: t,
            slice: label,
            sample_size: d.sample_size,
            order_used: order,
            ssr: d.ssr,
            kkt_residual: d.kkt_residual,
            degenerate: d.degenerate,
        });
        est.set_slice(t, label, fit);
    }
    Ok(())
}

fn evaluate_responses(
    est: &ValueEstimate,
    model: &(impl ControlModel + Sync),
    dom: &TruncatedDomain,
    frozen: &FrozenTable,
    t_next: usize,
    states: &[State],
) -> Result<Vec<f64>> {
    states
        .par_iter()
        .with_min_len(4096)
        .map(|x| bellman_cached(est, model, dom, frozen, t_next, x))
        .collect()
}

fn solve_with_stream(
    model: &(impl ControlModel + Sync),
    dom: &TruncatedDomain,
    config: &SolverConfig,
    engine: Engine,
    stream: RandomStream,
) -> Result<RunResult> {
    config.validate()?;
    let (_lo, hi) = check_solver_domain(dom, config)?;
    let law = model.innovation_law();
    law.validate()?;
    let horizon = model.horizon();
    if horizon == 0 {
        return Err(Error::InvalidInput("model horizon must be positive".into()));
    }
    let start = Instant::now();
    let m = config.paths_per_step;
    let fallback = matches!(engine, Engine::Fsbu(_));
    let frozen = FrozenTable::build(model, dom)?;
    let mut est = ValueEstimate::new(horizon, fallback);
    let mut diagnostics = Vec::new();

    for t in (0..horizon).rev() {
        let (ks, next_states) = match engine {
            Engine::Bsbu => {
                let ks = sample_post_actions(t, hi, m, stream.derive(2 * t as u64))?;
                let eps =
                    sample_innovations(&law, m, stream.derive(2 * t as u64 + 1))?;
                let next: Vec<State> = ks
                    .iter()
                    .zip(&eps)
                    .map(|(k, &e)| truncated_step(model, dom, t, k, e))
                    .collect();
                (ks, next)
            }
            Engine::Fsbu(rule) => {
                let mut sample =
                    forward_simulate(model, dom, rule, t, m, stream.derive(2 * t as u64))?;
                let next = sample.states.pop().expect("simulation reaches t + 1");
                (sample.post_actions, next)
            }
        };
        let ys = evaluate_responses(&est, model, dom, &frozen, t + 1, &next_states)?;
        drop(next_states);
        fit_step_slices(&mut est, &mut diagnostics, t, &ks, &ys, config, hi)?;
    }

    let v0 = bellman_update(&est, model, dom, 0, &model.initial_state())?;
    Ok(RunResult {
        v0,
        estimate: est,
        diagnostics,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Solve by backward simulation from the artificial post-action distribution.
pub fn bsbu_solve(
    model: &(impl ControlModel + Sync),
    dom: &TruncatedDomain,
    config: &SolverConfig,
) -> Result<RunResult> {
    solve_with_stream(model, dom, config, Engine::Bsbu, RandomStream::new(config.seed))
}

/// Solve with the forward-simulation baseline under a control-randomization
/// rule; a fresh independent path sample is simulated at every step.
pub fn fsbu_solve(
    model: &(impl ControlModel + Sync),
    dom: &TruncatedDomain,
    config: &SolverConfig,
    rule: CrRule,
) -> Result<RunResult> {
    solve_with_stream(model, dom, config, Engine::Fsbu(rule), RandomStream::new(config.seed))
}

/// Run the engine `config.repeats` times on independent derived streams.
pub fn repeat_experiment(
    model: &(impl ControlModel + Sync),
    dom: &TruncatedDomain,
    config: &SolverConfig,
    engine: Engine,
) -> Result<ExperimentResult> {
    config.validate()?;
    if config.repeats < 2 {
        return Err(Error::InvalidInput(
            "an experiment needs at least two repeats for a standard deviation".into(),
        ));
    }
    let base = RandomStream::new(config.seed);
    let runs: Vec<RunResult> = (0..config.repeats)
        .into_par_iter()
        .map(|r| solve_with_stream(model, dom, config, engine, base.derive(r as u64)))
        .collect::<Result<_>>()?;
    let stats = SummaryStats::from_values(runs.iter().map(|r| r.v0).collect())?;
    Ok(ExperimentResult { stats, runs })
}
